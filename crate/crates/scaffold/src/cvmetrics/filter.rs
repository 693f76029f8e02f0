//! Separable Gaussian blur and Sobel gradients, edge-clamped.

use super::Raster;

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Gaussian blur by separable convolution; boundaries clamp to the edge
/// pixel. Kernel weights sum to one, so flat regions pass through.
pub fn gaussian_blur(raster: &Raster, sigma: f64) -> Raster {
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (raster.width, raster.height);

    let mut horiz = Raster::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * raster.get_clamped(x as i64 + i as i64 - radius, y as i64) as f64;
            }
            horiz.set(x, y, acc as f32);
        }
    }
    let mut out = Raster::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * horiz.get_clamped(x as i64, y as i64 + i as i64 - radius) as f64;
            }
            out.set(x, y, acc as f32);
        }
    }
    out
}

/// Per-pixel signed gradients and magnitude.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: u32,
    pub height: u32,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub magnitude: Vec<f32>,
}

impl GradientField {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> (f32, f32, f32) {
        let i = (y * self.width + x) as usize;
        (self.gx[i], self.gy[i], self.magnitude[i])
    }
}

/// Standard 3x3 Sobel kernels with edge clamp. A unit step edge of height
/// d produces a peak magnitude of 4d.
pub fn sobel_gradients(raster: &Raster) -> GradientField {
    let (w, h) = (raster.width, raster.height);
    let n = (w * h) as usize;
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    let mut magnitude = vec![0.0f32; n];
    for y in 0..h {
        for x in 0..w {
            let s = |dx: i64, dy: i64| raster.get_clamped(x as i64 + dx, y as i64 + dy) as f64;
            let dx = (s(1, -1) + 2.0 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2.0 * s(-1, 0) + s(-1, 1));
            let dy = (s(-1, 1) + 2.0 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2.0 * s(0, -1) + s(1, -1));
            let i = (y * w + x) as usize;
            gx[i] = dx as f32;
            gy[i] = dy as f32;
            magnitude[i] = ((dx * dx + dy * dy) as f32).sqrt();
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_weights_sum_to_one() {
        for sigma in [0.5, 1.0, 1.5, 3.0] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-6, "sigma {sigma}");
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        }
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Raster::new(32, 24, 173.0);
        let out = gaussian_blur(&img, 1.3);
        for v in &out.data {
            assert!((v - 173.0).abs() < 1e-4);
        }
    }

    #[test]
    fn impulse_center_weight_matches_gaussian() {
        let mut img = Raster::new(21, 21, 0.0);
        img.set(10, 10, 1.0);
        let out = gaussian_blur(&img, 1.0);
        // Discrete normalized 2-D kernel at the origin, computed
        // independently of the convolution path.
        let k = gaussian_kernel(1.0);
        let expected = (k[k.len() / 2] * k[k.len() / 2]) as f32;
        assert!((out.get(10, 10) - expected).abs() < 1e-6);
        assert!((expected - 0.1592).abs() < 2e-3);
    }

    #[test]
    fn blur_twice_approximates_wider_blur() {
        // sigma semigroup: g(1) . g(1) ~ g(sqrt(2)).
        let mut img = Raster::new(48, 48, 0.0);
        for y in 0..48 {
            for x in 0..48 {
                let v = 128.0
                    + 90.0 * (x as f32 / 4.5).sin() * (y as f32 / 6.5).cos()
                    + 30.0 * (x as f32 / 11.0).cos();
                img.set(x, y, v);
            }
        }
        let twice = gaussian_blur(&gaussian_blur(&img, 1.0), 1.0);
        let once = gaussian_blur(&img, std::f64::consts::SQRT_2);
        let max_diff = twice
            .data
            .iter()
            .zip(&once.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 1.0, "L-inf {max_diff}");
    }

    #[test]
    fn sobel_vertical_step_edge() {
        let mut img = Raster::new(16, 16, 0.0);
        for y in 0..16 {
            for x in 8..16 {
                img.set(x, y, 200.0);
            }
        }
        let g = sobel_gradients(&img);
        let (gx, gy, mag) = g.at(8, 8);
        assert!(gx.abs() > 0.0);
        assert_eq!(gy, 0.0);
        assert_eq!(mag, gx.abs());
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel_gradients(&Raster::new(8, 8, 55.0));
        assert!(g.magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sobel_diagonal_ramp_is_symmetric() {
        let mut img = Raster::new(16, 16, 0.0);
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, (x + y) as f32);
            }
        }
        let g = sobel_gradients(&img);
        let (gx, gy, _) = g.at(8, 8);
        assert!((gx.abs() - gy.abs()).abs() < 1e-4);
    }
}
