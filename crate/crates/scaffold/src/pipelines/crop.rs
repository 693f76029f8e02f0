//! Cropping around located dots for the second perception pass.

use image::RgbImage;
use serde::Serialize;

use crate::overlay::DotPlacement;

use super::PipelineError;

/// One crop window, half-open bounds `[u0, u1) x [v0, v1)` clamped to the
/// image. `members` lists the logical coordinates whose windows were
/// merged into this one (the first is the requesting dot).
#[derive(Debug, Clone, Serialize)]
pub struct CropWindow {
    pub center: DotPlacement,
    pub half_width_px: u32,
    pub half_height_px: u32,
    pub u0: u32,
    pub v0: u32,
    pub u1: u32,
    pub v1: u32,
    pub members: Vec<(u32, u32)>,
}

impl CropWindow {
    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u0 && u < self.u1 && v >= self.v0 && v < self.v1
    }

    fn area(&self) -> f64 {
        (self.u1 - self.u0) as f64 * (self.v1 - self.v0) as f64
    }

    fn iou(&self, other: &CropWindow) -> f64 {
        let iw = (self.u1.min(other.u1) as f64 - self.u0.max(other.u0) as f64).max(0.0);
        let ih = (self.v1.min(other.v1) as f64 - self.v0.max(other.v0) as f64).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    fn merge(&mut self, other: &CropWindow) {
        self.u0 = self.u0.min(other.u0);
        self.v0 = self.v0.min(other.v0);
        self.u1 = self.u1.max(other.u1);
        self.v1 = self.v1.max(other.v1);
        self.members.extend(other.members.iter().copied());
    }
}

/// Crops a window per requested grid coordinate: half-extent `cells`
/// neighbor spacings per side, clamped to the image, and overlapping
/// windows merged into their bounding box. Output order follows input
/// order.
///
/// The merge gate is IoU > 0.25: windows of side-adjacent dots overlap at
/// exactly IoU 1/3 regardless of spacing, so a 0.5 gate would never merge
/// the adjacent-coordinate pairs merging exists for; diagonal neighbors
/// sit at 1/7 and stay separate.
pub fn crop_regions(
    image: &RgbImage,
    coords: &[(u32, u32)],
    placements: &[DotPlacement],
    cells: u32,
) -> Result<Vec<(CropWindow, RgbImage)>, PipelineError> {
    let (width, height) = image.dimensions();
    let h = placements.iter().map(|p| p.logical.x).max().unwrap_or(1);
    let w = placements.iter().map(|p| p.logical.y).max().unwrap_or(1);
    let half_w = cells as f64 * width as f64 / w as f64;
    let half_h = cells as f64 * height as f64 / h as f64;

    let mut windows: Vec<CropWindow> = Vec::new();
    for &(x, y) in coords {
        let dot = placements
            .iter()
            .find(|p| p.logical.x == x && p.logical.y == y)
            .ok_or(PipelineError::UnknownCoordinate {
                x: x as i64,
                y: y as i64,
            })?;
        let u0 = ((dot.pixel_u as f64 - half_w + 0.5).floor().max(0.0)) as u32;
        let v0 = ((dot.pixel_v as f64 - half_h + 0.5).floor().max(0.0)) as u32;
        let u1 = (((dot.pixel_u as f64 + half_w + 0.5).floor()) as u32).min(width);
        let v1 = (((dot.pixel_v as f64 + half_h + 0.5).floor()) as u32).min(height);
        windows.push(CropWindow {
            center: dot.clone(),
            half_width_px: half_w.round() as u32,
            half_height_px: half_h.round() as u32,
            u0: u0.min(dot.pixel_u),
            v0: v0.min(dot.pixel_v),
            u1: u1.max(dot.pixel_u + 1),
            v1: v1.max(dot.pixel_v + 1),
            members: vec![(x, y)],
        });
    }

    // Merge overlapping windows until stable; merging into the earlier
    // index keeps input order.
    loop {
        let mut merged_any = false;
        'outer: for i in 0..windows.len() {
            for j in (i + 1)..windows.len() {
                if windows[i].iou(&windows[j]) > 0.25 {
                    let other = windows.remove(j);
                    windows[i].merge(&other);
                    merged_any = true;
                    break 'outer;
                }
            }
        }
        if !merged_any {
            break;
        }
    }

    Ok(windows
        .into_iter()
        .map(|win| {
            let crop = image::imageops::crop_imm(
                image,
                win.u0,
                win.v0,
                win.u1 - win.u0,
                win.v1 - win.v0,
            )
            .to_image();
            (win, crop)
        })
        .collect())
}
