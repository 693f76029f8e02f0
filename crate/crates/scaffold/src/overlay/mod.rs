//! Dot-grid overlays: geometry, coordinate labels, coloring, perturbation,
//! and rendering for the single / double / sequence settings.
//!
//! The grid is an h-by-w matrix of dots at cell centers. Logical coordinate
//! `x` indexes rows top to bottom (1..=h), `y` indexes columns left to right
//! (1..=w); image pairs and sequences add a leading `t` index. Everything
//! here is pure with respect to its inputs; the perturbation generator is
//! seeded explicitly so identical inputs produce identical overlays.

mod font;
mod render;

pub use render::{encode_png, label_origin, render_overlay};

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use font::text_size;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("image {width}x{height} too small for a {h}x{w} grid of dots with radius {radius}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        h: u32,
        w: u32,
        radius: u32,
    },
    #[error("cartesian3d labels require a sequence index t >= 1")]
    MissingSequenceIndex,
    #[error("{setting} setting expects {expected} image(s), got {got}")]
    ArityMismatch {
        setting: Setting,
        expected: String,
        got: usize,
    },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(&'static str),
}

/// Task delivery setting: how many images one prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Setting {
    Single,
    Double,
    Sequence,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::Single => "single",
            Setting::Double => "double",
            Setting::Sequence => "sequence",
        })
    }
}

/// How dots are labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum CoordinateFormat {
    /// `(x,y)` row/column coordinates.
    Cartesian2d,
    /// `(t,x,y)` with a leading image index.
    Cartesian3d,
    /// Spreadsheet-style letters in row-major order: A..Z, AA, AB, ...
    Alphabetic,
    /// Row-major index 1..=h*w.
    OneDimensional,
    /// `(u,v)` unperturbed pixel centers.
    PixelAbsolute,
}

/// How dot/label colors are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ColorStrategy {
    /// Black or white, whichever contrasts more with the local background.
    Binary,
    UniformBlack,
    UniformWhite,
    /// Per-channel complement of the local background mean.
    Complementary,
}

/// Seeded Gaussian dot displacement. The per-axis standard deviation is
/// `sigma_fraction` times the neighbor spacing on that axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub seed: u64,
    pub sigma_fraction: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            seed: 0,
            sigma_fraction: 0.25,
        }
    }
}

/// Full description of one dot matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: u32,
    pub w: u32,
    pub coordinate_format: CoordinateFormat,
    pub color_strategy: ColorStrategy,
    pub perturbation: Option<PerturbationSpec>,
    /// Dot radius in pixels; `None` resolves to `max(3, round(min(W,H)/200))`.
    pub dot_radius_px: Option<u32>,
    /// Label glyph height in pixels; `None` resolves to `max(10, round(min(W,H)/40))`.
    pub label_px: Option<u32>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(6, 6)
    }
}

impl GridSpec {
    pub fn new(h: u32, w: u32) -> Self {
        GridSpec {
            h,
            w,
            coordinate_format: CoordinateFormat::Cartesian2d,
            color_strategy: ColorStrategy::Binary,
            perturbation: None,
            dot_radius_px: None,
            label_px: None,
        }
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        if self.h < 1 || self.w < 1 {
            return Err(OverlayError::InvalidSpec("h and w must be >= 1"));
        }
        if self.dot_radius_px == Some(0) {
            return Err(OverlayError::InvalidSpec("dot_radius_px must be > 0"));
        }
        if self.label_px == Some(0) {
            return Err(OverlayError::InvalidSpec("label_px must be > 0"));
        }
        if let Some(p) = &self.perturbation {
            if p.sigma_fraction < 0.0 {
                return Err(OverlayError::InvalidSpec("sigma_fraction must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn resolved_dot_radius(&self, width: u32, height: u32) -> u32 {
        self.dot_radius_px
            .unwrap_or_else(|| ((width.min(height) as f64 / 200.0).round() as u32).max(3))
    }

    pub fn resolved_label_px(&self, width: u32, height: u32) -> u32 {
        self.label_px
            .unwrap_or_else(|| ((width.min(height) as f64 / 40.0).round() as u32).max(10))
    }

    /// Neighbor spacing in pixels: `(l_h, l_w)` along the vertical (rows)
    /// and horizontal (columns) axes.
    pub fn spacing(&self, width: u32, height: u32) -> (f64, f64) {
        (height as f64 / self.h as f64, width as f64 / self.w as f64)
    }
}

/// Rendered dot color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DotColor {
    Black,
    White,
    Rgb([u8; 3]),
}

impl DotColor {
    pub fn rgb(&self) -> [u8; 3] {
        match self {
            DotColor::Black => [0, 0, 0],
            DotColor::White => [255, 255, 255],
            DotColor::Rgb(c) => *c,
        }
    }

    /// Sidecar string form: `black`, `white`, or `#rrggbb`.
    pub fn name(&self) -> String {
        match self {
            DotColor::Black => "black".into(),
            DotColor::White => "white".into(),
            DotColor::Rgb([r, g, b]) => format!("#{r:02x}{g:02x}{b:02x}"),
        }
    }
}

/// Logical grid coordinate of a dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalCoord {
    /// Row, 1..=h, increasing top to bottom.
    pub x: u32,
    /// Column, 1..=w, increasing left to right.
    pub y: u32,
    /// Image index for pairs/sequences.
    pub t: Option<u32>,
}

/// One dot: logical coordinate, pixel position, rendering attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotPlacement {
    pub logical: LogicalCoord,
    /// Horizontal pixels from the left edge.
    pub pixel_u: u32,
    /// Vertical pixels from the top edge.
    pub pixel_v: u32,
    pub color: DotColor,
    pub label: String,
}

/// Output of overlaying one image.
#[derive(Debug, Clone)]
pub struct OverlayResult {
    pub original: RgbImage,
    pub overlaid: RgbImage,
    pub placements: Vec<DotPlacement>,
    /// Whether downstream prompt bundles also carry the original image.
    pub original_retained: bool,
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Places the h*w dots at cell centers, row-major.
///
/// Dot `(i,j)` sits at `u = (j - 0.5) * width / w`, `v = (i - 0.5) * height / h`,
/// rounded to the nearest integer.
pub fn compute_grid(
    spec: &GridSpec,
    width_px: u32,
    height_px: u32,
) -> Result<Vec<DotPlacement>, OverlayError> {
    spec.validate()?;
    let radius = spec.resolved_dot_radius(width_px, height_px);
    if width_px < spec.w * 2 * radius || height_px < spec.h * 2 * radius {
        return Err(OverlayError::ImageTooSmall {
            width: width_px,
            height: height_px,
            h: spec.h,
            w: spec.w,
            radius,
        });
    }
    let mut placements = Vec::with_capacity((spec.h * spec.w) as usize);
    for i in 1..=spec.h {
        for j in 1..=spec.w {
            let u = round_half_up((j as f64 - 0.5) * width_px as f64 / spec.w as f64);
            let v = round_half_up((i as f64 - 0.5) * height_px as f64 / spec.h as f64);
            placements.push(DotPlacement {
                logical: LogicalCoord {
                    x: i,
                    y: j,
                    t: None,
                },
                pixel_u: u.clamp(0, width_px as i64 - 1) as u32,
                pixel_v: v.clamp(0, height_px as i64 - 1) as u32,
                color: DotColor::Black,
                label: String::new(),
            });
        }
    }
    Ok(placements)
}

/// Draws `count` Gaussian offset pairs `(dv, du)` in the order perturb
/// consumes them. Vertical offsets use sigma_fraction * l_h, horizontal
/// sigma_fraction * l_w. Exposed so the noise law can be checked without
/// the clamping that perturbation applies afterwards.
pub fn sample_offsets(
    spec: &PerturbationSpec,
    l_h_px: f64,
    l_w_px: f64,
    count: usize,
) -> Vec<(f64, f64)> {
    if spec.sigma_fraction == 0.0 {
        return vec![(0.0, 0.0); count];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vert = Normal::new(0.0, spec.sigma_fraction * l_h_px).expect("sigma > 0");
    let horiz = Normal::new(0.0, spec.sigma_fraction * l_w_px).expect("sigma > 0");
    (0..count)
        .map(|_| (vert.sample(&mut rng), horiz.sample(&mut rng)))
        .collect()
}

/// Displaces dot positions with seeded Gaussian noise, clamped into the
/// image. Logical coordinates and ordering are unchanged.
pub fn perturb(
    placements: &[DotPlacement],
    spec: &PerturbationSpec,
    l_h_px: f64,
    l_w_px: f64,
    width_px: u32,
    height_px: u32,
) -> Vec<DotPlacement> {
    let offsets = sample_offsets(spec, l_h_px, l_w_px, placements.len());
    placements
        .iter()
        .zip(offsets)
        .map(|(p, (dv, du))| {
            let u = round_half_up(p.pixel_u as f64 + du).clamp(0, width_px as i64 - 1);
            let v = round_half_up(p.pixel_v as f64 + dv).clamp(0, height_px as i64 - 1);
            DotPlacement {
                pixel_u: u as u32,
                pixel_v: v as u32,
                ..p.clone()
            }
        })
        .collect()
}

fn luma_bt601(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Mean RGB over a square window of side `2 * window_half` centered at
/// `(u, v)`, clamped to the image.
fn window_mean(image: &RgbImage, u: u32, v: u32, window_half: u32) -> [f64; 3] {
    let (w, h) = image.dimensions();
    let x0 = u.saturating_sub(window_half);
    let x1 = (u + window_half).min(w);
    let y0 = v.saturating_sub(window_half);
    let y1 = (v + window_half).min(h);
    let mut sum = [0.0f64; 3];
    let mut count = 0u64;
    for y in y0..y1.max(y0 + 1) {
        for x in x0..x1.max(x0 + 1) {
            let p = image.get_pixel(x.min(w - 1), y.min(h - 1));
            sum[0] += p.0[0] as f64;
            sum[1] += p.0[1] as f64;
            sum[2] += p.0[2] as f64;
            count += 1;
        }
    }
    [
        sum[0] / count as f64,
        sum[1] / count as f64,
        sum[2] / count as f64,
    ]
}

/// Picks the dot color for one placement.
///
/// `binary` compares mean BT.601 luminance over a window of side
/// `2 * label_px` against 128 (ties go black); `complementary` takes the
/// per-channel complement of the same window mean.
pub fn choose_color(
    image: &RgbImage,
    u: u32,
    v: u32,
    strategy: ColorStrategy,
    label_px: u32,
) -> DotColor {
    match strategy {
        ColorStrategy::UniformBlack => DotColor::Black,
        ColorStrategy::UniformWhite => DotColor::White,
        ColorStrategy::Binary => {
            let m = window_mean(image, u, v, label_px);
            if luma_bt601(m[0].round() as u8, m[1].round() as u8, m[2].round() as u8) >= 128.0 {
                DotColor::Black
            } else {
                DotColor::White
            }
        }
        ColorStrategy::Complementary => {
            let m = window_mean(image, u, v, label_px);
            DotColor::Rgb([
                255 - (m[0].round() as u8),
                255 - (m[1].round() as u8),
                255 - (m[2].round() as u8),
            ])
        }
    }
}

fn alphabetic_label(mut n: u32) -> String {
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Formats the text label for one dot.
///
/// `pixel_absolute` labels always use the unperturbed cell center, so the
/// text stays meaningful even when the dot itself is displaced.
pub fn format_label(
    placement: &DotPlacement,
    spec: &GridSpec,
    t: Option<u32>,
    width_px: u32,
    height_px: u32,
) -> Result<String, OverlayError> {
    let LogicalCoord { x, y, .. } = placement.logical;
    Ok(match spec.coordinate_format {
        CoordinateFormat::Cartesian2d => format!("({x},{y})"),
        CoordinateFormat::Cartesian3d => {
            let t = t.ok_or(OverlayError::MissingSequenceIndex)?;
            format!("({t},{x},{y})")
        }
        CoordinateFormat::OneDimensional => ((x - 1) * spec.w + y).to_string(),
        CoordinateFormat::Alphabetic => alphabetic_label((x - 1) * spec.w + y),
        CoordinateFormat::PixelAbsolute => {
            let u = round_half_up((y as f64 - 0.5) * width_px as f64 / spec.w as f64);
            let v = round_half_up((x as f64 - 0.5) * height_px as f64 / spec.h as f64);
            format!("({u},{v})")
        }
    })
}

/// Effective label format for a setting: the cartesian family switches to
/// three dimensions whenever more than one image is delivered; explicit
/// non-cartesian formats are used verbatim in every setting.
fn effective_format(format: CoordinateFormat, setting: Setting) -> CoordinateFormat {
    match (format, setting) {
        (CoordinateFormat::Cartesian2d | CoordinateFormat::Cartesian3d, Setting::Single) => {
            CoordinateFormat::Cartesian2d
        }
        (CoordinateFormat::Cartesian2d | CoordinateFormat::Cartesian3d, _) => {
            CoordinateFormat::Cartesian3d
        }
        (f, _) => f,
    }
}

/// Runs the full overlay pipeline for one image: grid, optional
/// perturbation, colors, labels, raster.
pub fn overlay_image(
    image: &RgbImage,
    spec: &GridSpec,
    t: Option<u32>,
    original_retained: bool,
) -> Result<OverlayResult, OverlayError> {
    let (width, height) = image.dimensions();
    let mut placements = compute_grid(spec, width, height)?;
    if let Some(p) = &spec.perturbation {
        let (l_h, l_w) = spec.spacing(width, height);
        placements = perturb(&placements, p, l_h, l_w, width, height);
    }
    let label_px = spec.resolved_label_px(width, height);
    for pl in &mut placements {
        pl.logical.t = t;
        pl.label = format_label(pl, spec, t, width, height)?;
        pl.color = choose_color(image, pl.pixel_u, pl.pixel_v, spec.color_strategy, label_px);
    }
    let mut result = render_overlay(image, &placements, spec);
    result.original_retained = original_retained;
    Ok(result)
}

/// Overlays a set of images per the task setting.
///
/// Single-image tasks retain the original (both rasters are delivered
/// downstream); pairs and sequences deliver only overlaid images, labeled
/// with `t` = 1-based position.
pub fn overlay_for_setting(
    images: &[RgbImage],
    spec: &GridSpec,
    setting: Setting,
) -> Result<Vec<OverlayResult>, OverlayError> {
    let arity_ok = match setting {
        Setting::Single => images.len() == 1,
        Setting::Double => images.len() == 2,
        Setting::Sequence => images.len() >= 2,
    };
    if !arity_ok {
        return Err(OverlayError::ArityMismatch {
            setting,
            expected: match setting {
                Setting::Single => "1".into(),
                Setting::Double => "2".into(),
                Setting::Sequence => ">= 2".into(),
            },
            got: images.len(),
        });
    }
    let mut effective = spec.clone();
    effective.coordinate_format = effective_format(spec.coordinate_format, setting);
    match setting {
        Setting::Single => Ok(vec![overlay_image(&images[0], &effective, None, true)?]),
        Setting::Double | Setting::Sequence => images
            .iter()
            .enumerate()
            .map(|(idx, img)| overlay_image(img, &effective, Some(idx as u32 + 1), false))
            .collect(),
    }
}

#[derive(Serialize)]
struct SidecarGrid {
    h: u32,
    w: u32,
}

#[derive(Serialize)]
struct SidecarDot<'a> {
    label: &'a str,
    u: u32,
    v: u32,
    color: String,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    grid: SidecarGrid,
    dots: Vec<SidecarDot<'a>>,
}

/// Sidecar JSON describing one overlay: grid dimensions plus the label,
/// pixel position, and color of every dot. Consumed by the crop pipeline
/// and external tooling.
pub fn sidecar_json(result: &OverlayResult, spec: &GridSpec) -> String {
    let sidecar = Sidecar {
        grid: SidecarGrid {
            h: spec.h,
            w: spec.w,
        },
        dots: result
            .placements
            .iter()
            .map(|p| SidecarDot {
                label: &p.label,
                u: p.pixel_u,
                v: p.pixel_v,
                color: p.color.name(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&sidecar).expect("sidecar serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn solid(w: u32, h: u32, c: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(c))
    }

    #[test]
    fn single_dot_at_center() {
        let spec = GridSpec::new(1, 1);
        let p = compute_grid(&spec, 100, 100).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].pixel_u, p[0].pixel_v), (50, 50));
    }

    #[test]
    fn two_by_two_quarter_centers() {
        let spec = GridSpec::new(2, 2);
        let p = compute_grid(&spec, 100, 100).unwrap();
        let uv: Vec<(u32, u32)> = p.iter().map(|d| (d.pixel_u, d.pixel_v)).collect();
        assert_eq!(uv, vec![(25, 25), (75, 25), (25, 75), (75, 75)]);
    }

    #[test]
    fn six_by_six_cell_centers() {
        let spec = GridSpec::new(6, 6);
        let p = compute_grid(&spec, 600, 600).unwrap();
        assert_eq!(p.len(), 36);
        // Closed-form check over every cell.
        for (k, d) in p.iter().enumerate() {
            let i = k as u32 / 6 + 1;
            let j = k as u32 % 6 + 1;
            assert_eq!(d.logical.x, i);
            assert_eq!(d.logical.y, j);
            assert_eq!(d.pixel_u, j * 100 - 50);
            assert_eq!(d.pixel_v, i * 100 - 50);
        }
        assert_eq!((p[0].pixel_u, p[0].pixel_v), (50, 50));
        assert_eq!((p[35].pixel_u, p[35].pixel_v), (550, 550));
    }

    #[test]
    fn grid_rejects_tiny_images() {
        let spec = GridSpec::new(6, 6);
        let err = compute_grid(&spec, 30, 600).unwrap_err();
        assert!(matches!(err, OverlayError::ImageTooSmall { .. }));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let spec = GridSpec::new(3, 3);
        let p = compute_grid(&spec, 300, 300).unwrap();
        let q = perturb(
            &p,
            &PerturbationSpec {
                seed: 7,
                sigma_fraction: 0.0,
            },
            100.0,
            100.0,
            300,
            300,
        );
        assert_eq!(p, q);
    }

    #[test]
    fn perturb_is_seed_deterministic_and_preserves_logical() {
        let spec = GridSpec::new(6, 6);
        let p = compute_grid(&spec, 600, 600).unwrap();
        let ps = PerturbationSpec {
            seed: 42,
            sigma_fraction: 0.25,
        };
        let a = perturb(&p, &ps, 100.0, 100.0, 600, 600);
        let b = perturb(&p, &ps, 100.0, 100.0, 600, 600);
        assert_eq!(a, b);
        assert_ne!(
            a.iter().map(|d| (d.pixel_u, d.pixel_v)).collect::<Vec<_>>(),
            p.iter().map(|d| (d.pixel_u, d.pixel_v)).collect::<Vec<_>>()
        );
        for (orig, moved) in p.iter().zip(&a) {
            assert_eq!(orig.logical, moved.logical);
            assert!(moved.pixel_u < 600 && moved.pixel_v < 600);
        }
    }

    #[test]
    fn offsets_match_stated_sigma() {
        // 6x6 on 600x600: spacing 100 px, so sigma = 25 px per axis.
        let ps = PerturbationSpec {
            seed: 1,
            sigma_fraction: 0.25,
        };
        let n = 100_000;
        let offs = sample_offsets(&ps, 100.0, 100.0, n);
        let std = |sel: fn(&(f64, f64)) -> f64| {
            let mean = offs.iter().map(sel).sum::<f64>() / n as f64;
            (offs.iter().map(|o| (sel(o) - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let (sv, su) = (std(|o| o.0), std(|o| o.1));
        assert!((sv - 25.0).abs() < 1.25, "vertical std {sv}");
        assert!((su - 25.0).abs() < 1.25, "horizontal std {su}");
    }

    #[test]
    fn binary_color_contrasts_background() {
        let white = solid(64, 64, [255, 255, 255]);
        let black = solid(64, 64, [0, 0, 0]);
        assert_eq!(
            choose_color(&white, 32, 32, ColorStrategy::Binary, 10),
            DotColor::Black
        );
        assert_eq!(
            choose_color(&black, 32, 32, ColorStrategy::Binary, 10),
            DotColor::White
        );
    }

    #[test]
    fn complementary_color_inverts_window_mean() {
        let img = solid(64, 64, [40, 40, 40]);
        assert_eq!(
            choose_color(&img, 32, 32, ColorStrategy::Complementary, 10),
            DotColor::Rgb([215, 215, 215])
        );
    }

    #[test]
    fn binary_color_flips_with_inverted_window() {
        let img = solid(64, 64, [200, 90, 10]);
        let inv = solid(64, 64, [55, 165, 245]);
        let a = choose_color(&img, 32, 32, ColorStrategy::Binary, 8);
        let b = choose_color(&inv, 32, 32, ColorStrategy::Binary, 8);
        assert_ne!(a, b);
    }

    #[test]
    fn label_formats() {
        let spec6 = GridSpec::new(6, 6);
        let mk = |x, y| DotPlacement {
            logical: LogicalCoord { x, y, t: None },
            pixel_u: 0,
            pixel_v: 0,
            color: DotColor::Black,
            label: String::new(),
        };
        let mut spec = spec6.clone();
        assert_eq!(format_label(&mk(3, 5), &spec, None, 600, 600).unwrap(), "(3,5)");
        spec.coordinate_format = CoordinateFormat::Cartesian3d;
        assert_eq!(
            format_label(&mk(3, 3), &spec, Some(2), 600, 600).unwrap(),
            "(2,3,3)"
        );
        assert!(matches!(
            format_label(&mk(3, 3), &spec, None, 600, 600),
            Err(OverlayError::MissingSequenceIndex)
        ));
        spec.coordinate_format = CoordinateFormat::OneDimensional;
        assert_eq!(format_label(&mk(2, 1), &spec, None, 600, 600).unwrap(), "7");
        spec.coordinate_format = CoordinateFormat::Alphabetic;
        assert_eq!(format_label(&mk(1, 2), &spec, None, 600, 600).unwrap(), "B");
        spec.coordinate_format = CoordinateFormat::PixelAbsolute;
        assert_eq!(
            format_label(&mk(1, 1), &spec, None, 600, 600).unwrap(),
            "(50,50)"
        );
    }

    #[test]
    fn alphabetic_rolls_over_past_z() {
        assert_eq!(alphabetic_label(1), "A");
        assert_eq!(alphabetic_label(26), "Z");
        assert_eq!(alphabetic_label(27), "AA");
        assert_eq!(alphabetic_label(28), "AB");
        assert_eq!(alphabetic_label(52), "AZ");
        assert_eq!(alphabetic_label(53), "BA");
    }

    #[test]
    fn setting_arities_and_t_assignment() {
        let img = solid(120, 120, [128, 128, 128]);
        let spec = GridSpec::new(2, 2);

        let single = overlay_for_setting(&[img.clone()], &spec, Setting::Single).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].original_retained);
        assert_eq!(single[0].placements[0].label, "(1,1)");

        let double =
            overlay_for_setting(&[img.clone(), img.clone()], &spec, Setting::Double).unwrap();
        assert_eq!(double.len(), 2);
        assert!(!double[0].original_retained);
        assert_eq!(double[0].placements[0].label, "(1,1,1)");
        assert_eq!(double[1].placements[0].label, "(2,1,1)");

        let seq = overlay_for_setting(
            &vec![img.clone(); 8],
            &spec,
            Setting::Sequence,
        )
        .unwrap();
        assert_eq!(seq.len(), 8);
        assert_eq!(seq[7].placements[0].label, "(8,1,1)");

        assert!(matches!(
            overlay_for_setting(&[img.clone()], &spec, Setting::Double),
            Err(OverlayError::ArityMismatch { .. })
        ));
        assert!(matches!(
            overlay_for_setting(&[img], &spec, Setting::Sequence),
            Err(OverlayError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn sidecar_shape() {
        let img = solid(120, 120, [250, 250, 250]);
        let spec = GridSpec::new(2, 2);
        let res = overlay_for_setting(&[img], &spec, Setting::Single).unwrap();
        let json: serde_json::Value = serde_json::from_str(&sidecar_json(&res[0], &spec)).unwrap();
        assert_eq!(json["grid"]["h"], 2);
        assert_eq!(json["grid"]["w"], 2);
        let dots = json["dots"].as_array().unwrap();
        assert_eq!(dots.len(), 4);
        assert_eq!(dots[0]["label"], "(1,1)");
        assert_eq!(dots[0]["color"], "black");
        assert_eq!(dots[0]["u"], 30);
        assert_eq!(dots[0]["v"], 30);
    }
}
