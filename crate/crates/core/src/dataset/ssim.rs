//! Structural similarity.
//!
//! Mean of the local SSIM map over all positions where an 11x11 Gaussian
//! window (sigma 1.5) fits inside the image, on luma computed with the
//! 0.299/0.587/0.114 weights, dynamic range 255, K1 = 0.01, K2 = 0.03.

use image::RgbImage;

use super::DatasetError;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

/// Luma plane plus its windowed first and second moments, reusable across
/// many comparisons.
#[derive(Debug, Clone)]
pub struct SsimPlane {
    width: usize,
    height: usize,
    luma: Vec<f64>,
    mean: Vec<f64>,
    /// Windowed E[x^2] - mean^2.
    variance: Vec<f64>,
}

pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

pub fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering: output is (w-10) x (h-10).
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * row[x + j];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, kv) in k.iter().enumerate() {
            let src_row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            let dst = &mut out[y * ow..(y + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

impl SsimPlane {
    pub fn new(img: &RgbImage) -> Result<Self, DatasetError> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w < WINDOW || h < WINDOW {
            return Err(DatasetError::ImageTooSmall(w, h));
        }
        let k = gaussian_kernel();
        let luma = luma(img);
        let mean = filter_valid(&luma, w, h, &k);
        let sq: Vec<f64> = luma.iter().map(|v| v * v).collect();
        let second = filter_valid(&sq, w, h, &k);
        let variance = second.iter().zip(&mean).map(|(s, m)| s - m * m).collect();
        Ok(SsimPlane {
            width: w,
            height: h,
            luma,
            mean,
            variance,
        })
    }

    pub fn ssim(&self, other: &SsimPlane) -> Result<f64, DatasetError> {
        if self.width != other.width || self.height != other.height {
            return Err(DatasetError::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        let k = gaussian_kernel();
        let prod: Vec<f64> = self.luma.iter().zip(&other.luma).map(|(a, b)| a * b).collect();
        let cross = filter_valid(&prod, self.width, self.height, &k);
        let c1 = (K1 * DYNAMIC_RANGE).powi(2);
        let c2 = (K2 * DYNAMIC_RANGE).powi(2);
        let mut total = 0.0;
        for i in 0..cross.len() {
            let (mx, my) = (self.mean[i], other.mean[i]);
            let cov = cross[i] - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (self.variance[i] + other.variance[i] + c2);
            total += num / den;
        }
        Ok(total / cross.len() as f64)
    }
}

/// SSIM of two RGB images of equal size.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, DatasetError> {
    if a.dimensions() != b.dimensions() {
        return Err(DatasetError::DimensionMismatch {
            left: (a.width() as usize, a.height() as usize),
            right: (b.width() as usize, b.height() as usize),
        });
    }
    SsimPlane::new(a)?.ssim(&SsimPlane::new(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(v: u8) -> RgbImage {
        RgbImage::from_pixel(32, 32, Rgb([v, v, v]))
    }

    fn noisy(seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(48, 40, |_, _| {
            let v: u8 = rng.random();
            Rgb([v, v.wrapping_mul(3), 255 - v])
        })
    }

    #[test]
    fn identical_is_one() {
        let x = noisy(1);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric() {
        let (x, y) = (noisy(1), noisy(2));
        assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
    }

    #[test]
    fn constant_images_match_scalar_formula() {
        // zero variance and covariance: SSIM = (2ab + C1) / (a^2 + b^2 + C1)
        let c1 = (K1 * 255.0f64).powi(2);
        for (a, b) in [(128u8, 127u8), (60, 195), (0, 255), (10, 10)] {
            let (fa, fb) = (a as f64, b as f64);
            let expected = (2.0 * fa * fb + c1) / (fa * fa + fb * fb + c1);
            let got = ssim(&uniform(a), &uniform(b)).unwrap();
            assert!((got - expected).abs() < 1e-6, "{a} {b}: {got} vs {expected}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            ssim(&uniform(1), &noisy(1)),
            Err(DatasetError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..WINDOW {
            assert_eq!(k[i], k[WINDOW - 1 - i]);
        }
    }
}
