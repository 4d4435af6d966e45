use image::GrayImage;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::seed::keyed_rng;

/// Grayscale mask with a 1/f amplitude spectrum, stretched to the full
/// 8-bit range. White Gaussian noise is shaped in the frequency domain; the
/// shaping filter is even, so the inverse transform is real.
pub fn pink_noise_mask(seed: u64, width: u32, height: u32) -> GrayImage {
    let (w, h) = (width as usize, height as usize);
    let mut rng = keyed_rng(seed, &[0x6d61_736b]);
    let mut field: Vec<Complex<f64>> = (0..w * h)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    fft2(&mut field, w, h, false);
    for ky in 0..h {
        let fy = signed_freq(ky, h) / h as f64;
        for kx in 0..w {
            let fx = signed_freq(kx, w) / w as f64;
            let f = (fx * fx + fy * fy).sqrt();
            let gain = if f == 0.0 { 0.0 } else { 1.0 / f };
            field[ky * w + kx] *= gain;
        }
    }
    fft2(&mut field, w, h, true);

    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.re), hi.max(c.re)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = field
        .iter()
        .map(|c| ((c.re - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(width, height, pixels).expect("buffer matches dimensions")
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// In-place 2D FFT (rows, then columns). The inverse is unnormalized;
/// the caller rescales anyway.
fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}
