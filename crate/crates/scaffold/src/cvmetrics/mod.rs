//! From-scratch CV scoring for spotting-differences answers: grayscale
//! conversion, separable Gaussian blur, Sobel gradients, a gradient-directed
//! Hough circle transform, and the strict sub-50-pixel matching rule.

mod filter;
mod hough;
mod spotting;

pub use filter::{gaussian_blur, sobel_gradients, GradientField};
pub use hough::{hough_circles, Circle, HoughParams};
pub use spotting::{
    match_predictions, score_spotting, score_spotting_path, spotting_report_json, MatchPair,
    SpottingScore, MATCH_RADIUS_PX,
};

use image::RgbImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("cannot read answer image {path}: {source}")]
    AnswerImageUnreadable {
        path: String,
        source: image::ImageError,
    },
}

/// Row-major single-channel f32 raster on the 0..=255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: u32, height: u32, fill: f32) -> Self {
        Raster {
            width,
            height,
            data: vec![fill; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.data[(y * self.width + x) as usize] = v;
    }

    /// Edge-clamped read.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }
}

/// BT.601 luma, rounded to the integer 0..=255 scale.
pub fn to_grayscale(image: &RgbImage) -> Raster {
    let (width, height) = image.dimensions();
    let mut out = Raster::new(width, height, 0.0);
    for (x, y, p) in image.enumerate_pixels() {
        let luma = 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64;
        out.set(x, y, luma.round().min(255.0) as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn grayscale_examples() {
        let white = RgbImage::from_pixel(2, 2, Rgb([255, 255, 255]));
        assert_eq!(to_grayscale(&white).get(0, 0), 255.0);
        let red = RgbImage::from_pixel(2, 2, Rgb([255, 0, 0]));
        assert_eq!(to_grayscale(&red).get(0, 0), 76.0);
        let gray = RgbImage::from_pixel(2, 2, Rgb([100, 100, 100]));
        assert_eq!(to_grayscale(&gray).get(1, 1), 100.0);
    }
}
