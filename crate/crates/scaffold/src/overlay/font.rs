//! Built-in 5x7 bitmap font for dot labels.
//!
//! Rendering labels through a TTF rasterizer would pull in font files and
//! hinting state that is hard to keep byte-reproducible. A fixed bitmap font
//! scaled by an integer factor keeps overlays deterministic down to the byte.

/// Glyph column bitmaps, column-major, bit 0 = top row, 7 rows used.
const GLYPH_W: usize = 5;
const GLYPH_H: u32 = 7;

fn glyph(c: char) -> Option<[u8; GLYPH_W]> {
    let g = match c {
        '0' => [0x3E, 0x51, 0x49, 0x45, 0x3E],
        '1' => [0x00, 0x42, 0x7F, 0x40, 0x00],
        '2' => [0x42, 0x61, 0x51, 0x49, 0x46],
        '3' => [0x21, 0x41, 0x45, 0x4B, 0x31],
        '4' => [0x18, 0x14, 0x12, 0x7F, 0x10],
        '5' => [0x27, 0x45, 0x45, 0x45, 0x39],
        '6' => [0x3C, 0x4A, 0x49, 0x49, 0x30],
        '7' => [0x01, 0x71, 0x09, 0x05, 0x03],
        '8' => [0x36, 0x49, 0x49, 0x49, 0x36],
        '9' => [0x06, 0x49, 0x49, 0x29, 0x1E],
        '(' => [0x00, 0x1C, 0x22, 0x41, 0x00],
        ')' => [0x00, 0x41, 0x22, 0x1C, 0x00],
        ',' => [0x00, 0x50, 0x30, 0x00, 0x00],
        '-' => [0x08, 0x08, 0x08, 0x08, 0x08],
        'A' => [0x7E, 0x11, 0x11, 0x11, 0x7E],
        'B' => [0x7F, 0x49, 0x49, 0x49, 0x36],
        'C' => [0x3E, 0x41, 0x41, 0x41, 0x22],
        'D' => [0x7F, 0x41, 0x41, 0x22, 0x1C],
        'E' => [0x7F, 0x49, 0x49, 0x49, 0x41],
        'F' => [0x7F, 0x09, 0x09, 0x09, 0x01],
        'G' => [0x3E, 0x41, 0x49, 0x49, 0x7A],
        'H' => [0x7F, 0x08, 0x08, 0x08, 0x7F],
        'I' => [0x00, 0x41, 0x7F, 0x41, 0x00],
        'J' => [0x20, 0x40, 0x41, 0x3F, 0x01],
        'K' => [0x7F, 0x08, 0x14, 0x22, 0x41],
        'L' => [0x7F, 0x40, 0x40, 0x40, 0x40],
        'M' => [0x7F, 0x02, 0x0C, 0x02, 0x7F],
        'N' => [0x7F, 0x04, 0x08, 0x10, 0x7F],
        'O' => [0x3E, 0x41, 0x41, 0x41, 0x3E],
        'P' => [0x7F, 0x09, 0x09, 0x09, 0x06],
        'Q' => [0x3E, 0x41, 0x51, 0x21, 0x5E],
        'R' => [0x7F, 0x09, 0x19, 0x29, 0x46],
        'S' => [0x46, 0x49, 0x49, 0x49, 0x31],
        'T' => [0x01, 0x01, 0x7F, 0x01, 0x01],
        'U' => [0x3F, 0x40, 0x40, 0x40, 0x3F],
        'V' => [0x1F, 0x20, 0x40, 0x20, 0x1F],
        'W' => [0x3F, 0x40, 0x38, 0x40, 0x3F],
        'X' => [0x63, 0x14, 0x08, 0x14, 0x63],
        'Y' => [0x07, 0x08, 0x70, 0x08, 0x07],
        'Z' => [0x61, 0x51, 0x49, 0x45, 0x43],
        _ => return None,
    };
    Some(g)
}

/// Integer scale factor approximating a target pixel height, half-up.
pub fn scale_for_label_px(label_px: u32) -> u32 {
    (((label_px as f64) / (GLYPH_H as f64)).round() as u32).max(1)
}

/// Rendered size in pixels of `text` at the scale implied by `label_px`.
/// Glyph advance is 6 columns (5 + 1 spacing); the trailing gap is dropped.
pub fn text_size(text: &str, label_px: u32) -> (u32, u32) {
    let s = scale_for_label_px(label_px);
    let n = text.chars().count() as u32;
    if n == 0 {
        return (0, GLYPH_H * s);
    }
    ((6 * n - 1) * s, GLYPH_H * s)
}

/// Paints `text` with its top-left corner at `(x0, y0)`, clipping to the
/// image bounds. `put` receives absolute pixel coordinates.
pub fn draw_text<F: FnMut(u32, u32)>(
    text: &str,
    x0: i64,
    y0: i64,
    label_px: u32,
    width: u32,
    height: u32,
    put: &mut F,
) {
    let s = scale_for_label_px(label_px) as i64;
    let mut pen_x = x0;
    for c in text.chars() {
        let Some(cols) = glyph(c.to_ascii_uppercase()) else {
            pen_x += 6 * s;
            continue;
        };
        for (ci, col) in cols.iter().enumerate() {
            for row in 0..GLYPH_H as i64 {
                if col >> row & 1 == 0 {
                    continue;
                }
                for sx in 0..s {
                    for sy in 0..s {
                        let px = pen_x + ci as i64 * s + sx;
                        let py = y0 + row * s + sy;
                        if px >= 0 && py >= 0 && (px as u32) < width && (py as u32) < height {
                            put(px as u32, py as u32);
                        }
                    }
                }
            }
        }
        pen_x += 6 * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_rounds_half_up() {
        assert_eq!(scale_for_label_px(7), 1);
        assert_eq!(scale_for_label_px(10), 1);
        assert_eq!(scale_for_label_px(11), 2);
        assert_eq!(scale_for_label_px(15), 2);
        assert_eq!(scale_for_label_px(1), 1);
    }

    #[test]
    fn text_size_counts_advance() {
        let (w, h) = text_size("(1,1)", 7);
        assert_eq!(h, 7);
        assert_eq!(w, 6 * 5 - 1);
        assert_eq!(text_size("", 7), (0, 7));
    }

    #[test]
    fn draw_clips_to_bounds() {
        let mut hits = 0u32;
        draw_text("8", -2, -2, 7, 3, 3, &mut |_, _| hits += 1);
        assert!(hits > 0);
        let mut outside = false;
        draw_text("8", -2, -2, 7, 3, 3, &mut |x, y| {
            if x >= 3 || y >= 3 {
                outside = true;
            }
        });
        assert!(!outside);
    }

    #[test]
    fn label_charset_covered() {
        for c in "0123456789(),ABCDEFGHIJKLMNOPQRSTUVWXYZ".chars() {
            assert!(glyph(c).is_some(), "missing glyph {c}");
        }
    }
}
