//! Spectral slope by direct summation, without an FFT.

use std::f64::consts::PI;

/// Direct separable DFT magnitude, no FFT involved.
pub fn dft_amplitude(pixels: &[f64], n: usize) -> Vec<f64> {
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = -2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let mut rows = vec![(0.0, 0.0); n * n];
    for y in 0..n {
        for k in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..n {
                let (c, s) = twiddle[(k * x) % n];
                re += pixels[y * n + x] * c;
                im += pixels[y * n + x] * s;
            }
            rows[y * n + k] = (re, im);
        }
    }
    let mut amp = vec![0.0; n * n];
    for kx in 0..n {
        for ky in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..n {
                let (c, s) = twiddle[(ky * y) % n];
                let (a, b) = rows[y * n + kx];
                re += a * c - b * s;
                im += a * s + b * c;
            }
            amp[ky * n + kx] = (re * re + im * im).sqrt();
        }
    }
    amp
}

/// Least-squares slope of log mean amplitude against log radius, over
/// integer radial bins in [lo, hi].
pub fn spectral_slope(img: &image::GrayImage, lo: usize, hi: usize) -> f64 {
    let n = img.width() as usize;
    let pixels: Vec<f64> = img.as_raw().iter().map(|&p| p as f64).collect();
    let amp = dft_amplitude(&pixels, n);
    let mut bins = vec![(0.0, 0usize); n];
    for ky in 0..n {
        for kx in 0..n {
            let fy = if ky <= n / 2 { ky as f64 } else { ky as f64 - n as f64 };
            let fx = if kx <= n / 2 { kx as f64 } else { kx as f64 - n as f64 };
            let r = (fx * fx + fy * fy).sqrt().round() as usize;
            if (lo..=hi).contains(&r) {
                bins[r].0 += amp[ky * n + kx];
                bins[r].1 += 1;
            }
        }
    }
    let pts: Vec<(f64, f64)> = (lo..=hi).map(|r| ((r as f64).ln(), (bins[r].0 / bins[r].1 as f64).ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}
