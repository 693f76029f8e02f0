//! Raster side of the overlay: filled dots, bitmap-font labels, PNG bytes.

use image::{Rgb, RgbImage};

use super::font;
use super::{DotPlacement, GridSpec, OverlayResult};

/// Top-left corner of the label box for a dot at `(u, v)`.
///
/// The nominal anchor puts the label's lower-left corner at
/// `(u + radius + 2, v - radius - 2)`; the box is shifted inward when it
/// would leave the image.
pub fn label_origin(
    u: u32,
    v: u32,
    radius: u32,
    text_w: u32,
    text_h: u32,
    width: u32,
    height: u32,
) -> (i64, i64) {
    let mut x0 = u as i64 + radius as i64 + 2;
    let mut y0 = v as i64 - radius as i64 - 2 - text_h as i64;
    if x0 + text_w as i64 > width as i64 {
        x0 = width as i64 - text_w as i64;
    }
    if x0 < 0 {
        x0 = 0;
    }
    if y0 + text_h as i64 > height as i64 {
        y0 = height as i64 - text_h as i64;
    }
    if y0 < 0 {
        y0 = 0;
    }
    (x0, y0)
}

fn draw_disk(img: &mut RgbImage, u: u32, v: u32, radius: u32, color: [u8; 3]) {
    let (w, h) = img.dimensions();
    let r = radius as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let x = u as i64 + dx;
            let y = v as i64 + dy;
            if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                img.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }
}

/// Renders dots and labels onto a copy of `image`. The input raster is
/// never mutated and the output has identical dimensions.
pub fn render_overlay(
    image: &RgbImage,
    placements: &[DotPlacement],
    spec: &GridSpec,
) -> OverlayResult {
    let (width, height) = image.dimensions();
    let radius = spec.resolved_dot_radius(width, height);
    let label_px = spec.resolved_label_px(width, height);
    let mut out = image.clone();
    for p in placements {
        let rgb = p.color.rgb();
        draw_disk(&mut out, p.pixel_u, p.pixel_v, radius, rgb);
        let (tw, th) = font::text_size(&p.label, label_px);
        let (x0, y0) = label_origin(p.pixel_u, p.pixel_v, radius, tw, th, width, height);
        font::draw_text(&p.label, x0, y0, label_px, width, height, &mut |x, y| {
            out.put_pixel(x, y, Rgb(rgb));
        });
    }
    OverlayResult {
        original: image.clone(),
        overlaid: out,
        placements: placements.to_vec(),
        original_retained: false,
    }
}

/// Encodes a raster as PNG bytes.
pub fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut bytes = Vec::new();
    image
        .write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .expect("png encode");
    bytes
}
