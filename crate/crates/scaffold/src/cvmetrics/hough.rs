//! Gradient-directed Hough circle transform.
//!
//! Each edge pixel votes for candidate centers at distances r_min..=r_max
//! along both senses of its gradient direction. Center peaks survive
//! non-maximum suppression, get a sub-pixel refinement from the raw
//! accumulator, and then a radius histogram over aligned edge pixels picks
//! the radius and the final support count.

use super::filter::{gaussian_blur, sobel_gradients};
use super::Raster;

/// A detected circle, `votes` = number of supporting edge pixels at the
/// chosen radius.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Circle {
    pub center_u: f32,
    pub center_v: f32,
    pub radius: f32,
    pub votes: u32,
}

/// Detection knobs. `vote_threshold` is the fraction of the estimated
/// perimeter (2 pi r) that must be supported by aligned edge pixels;
/// `edge_threshold` is in raw Sobel magnitude units (a step edge of height
/// d peaks at 4d before blurring spreads it).
#[derive(Debug, Clone, PartialEq)]
pub struct HoughParams {
    pub r_min: u32,
    pub r_max: u32,
    pub edge_threshold: f32,
    pub vote_threshold: f32,
    pub nms_radius: u32,
    pub blur_sigma: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            r_min: 15,
            r_max: 60,
            edge_threshold: 80.0,
            vote_threshold: 0.6,
            nms_radius: 20,
            blur_sigma: 1.5,
        }
    }
}

struct EdgePixel {
    x: f32,
    y: f32,
    // Unit gradient direction.
    dx: f32,
    dy: f32,
}

/// Detects circles with radii in `[r_min, r_max]`, strongest first.
pub fn hough_circles(raster: &Raster, params: &HoughParams) -> Vec<Circle> {
    assert!(
        params.r_min >= 1 && params.r_min <= params.r_max,
        "0 < r_min <= r_max"
    );
    let (w, h) = (raster.width, raster.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let blurred = gaussian_blur(raster, params.blur_sigma);
    let grad = sobel_gradients(&blurred);

    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (gx, gy, mag) = grad.at(x, y);
            if mag >= params.edge_threshold {
                edges.push(EdgePixel {
                    x: x as f32,
                    y: y as f32,
                    dx: gx / mag,
                    dy: gy / mag,
                });
            }
        }
    }
    if edges.is_empty() {
        return Vec::new();
    }

    // Center accumulator over both gradient senses.
    let mut acc = vec![0u32; (w * h) as usize];
    for e in &edges {
        for sign in [1.0f32, -1.0] {
            for r in params.r_min..=params.r_max {
                let cx = (e.x + sign * r as f32 * e.dx).round();
                let cy = (e.y + sign * r as f32 * e.dy).round();
                if cx >= 0.0 && cy >= 0.0 && (cx as u32) < w && (cy as u32) < h {
                    acc[(cy as u32 * w + cx as u32) as usize] += 1;
                }
            }
        }
    }

    // 3x3 box sum absorbs rounding spread before peak picking.
    let boxed: Vec<u32> = (0..(w * h))
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut s = 0u32;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx >= 0 && ny >= 0 && (nx as u32) < w && (ny as u32) < h {
                        s += acc[(ny as u32 * w + nx as u32) as usize];
                    }
                }
            }
            s
        })
        .collect();

    let prefilter = (0.5 * params.vote_threshold * std::f32::consts::TAU * params.r_min as f32)
        .max(8.0) as u32;
    let mut candidates: Vec<(u32, u32, u32)> = boxed
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= prefilter)
        .map(|(i, &v)| (v, i as u32 % w, i as u32 / w))
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let mut kept: Vec<(u32, u32, u32)> = Vec::new();
    let nms_sq = (params.nms_radius * params.nms_radius) as i64;
    for c in candidates {
        let far_enough = kept.iter().all(|k| {
            let dx = k.1 as i64 - c.1 as i64;
            let dy = k.2 as i64 - c.2 as i64;
            dx * dx + dy * dy > nms_sq
        });
        if far_enough {
            kept.push(c);
        }
    }

    let mut circles = Vec::new();
    for (_, px, py) in kept {
        // Sub-pixel center: accumulator centroid over a 5x5 window.
        let (mut sx, mut sy, mut sw) = (0.0f64, 0.0f64, 0.0f64);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let nx = px as i64 + dx;
                let ny = py as i64 + dy;
                if nx >= 0 && ny >= 0 && (nx as u32) < w && (ny as u32) < h {
                    let v = acc[(ny as u32 * w + nx as u32) as usize] as f64;
                    sx += v * nx as f64;
                    sy += v * ny as f64;
                    sw += v;
                }
            }
        }
        if sw == 0.0 {
            continue;
        }
        let cx = (sx / sw) as f32;
        let cy = (sy / sw) as f32;

        if let Some(circle) = estimate_radius(cx, cy, &edges, params) {
            circles.push(circle);
        }
    }
    circles.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.center_v.total_cmp(&b.center_v))
            .then(a.center_u.total_cmp(&b.center_u))
    });
    circles
}

/// Histogram of distances from aligned edge pixels; the smoothed peak
/// gives the radius, raw counts around it give the support. Support must
/// also cover at least half the circle in angle, which kills the satellite
/// peaks an off-center observer sees from two small arcs of a real circle.
fn estimate_radius(cx: f32, cy: f32, edges: &[EdgePixel], params: &HoughParams) -> Option<Circle> {
    const ANGLE_BINS: usize = 24;
    let lo = params.r_min as f32 - 2.0;
    let hi = params.r_max as f32 + 2.0;
    let bins = (hi - lo) as usize + 1;
    let mut hist = vec![0u32; bins];
    let mut angles = vec![[false; ANGLE_BINS]; bins];
    for e in edges {
        let vx = e.x - cx;
        let vy = e.y - cy;
        let d = (vx * vx + vy * vy).sqrt();
        if !(lo..=hi).contains(&d) || d < 1.0 {
            continue;
        }
        // The gradient of a circle boundary is radial.
        let align = (vx / d * e.dx + vy / d * e.dy).abs();
        if align < 0.9 {
            continue;
        }
        let bin = (d - lo).round() as usize;
        hist[bin] += 1;
        let theta = vy.atan2(vx) + std::f32::consts::PI;
        let abin =
            ((theta / std::f32::consts::TAU * ANGLE_BINS as f32) as usize).min(ANGLE_BINS - 1);
        angles[bin][abin] = true;
    }
    let smoothed: Vec<f64> = (0..bins)
        .map(|i| {
            let get = |j: i64| -> f64 {
                if j < 0 || j as usize >= bins {
                    0.0
                } else {
                    hist[j as usize] as f64
                }
            };
            get(i as i64 - 1) + 2.0 * get(i as i64) + get(i as i64 + 1)
        })
        .collect();
    let best = smoothed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?
        .0;
    let b = best as i64;
    let take = |j: i64| -> u32 {
        if j < 0 || j as usize >= bins {
            0
        } else {
            hist[j as usize]
        }
    };
    let support = take(b - 1) + take(b) + take(b + 1);
    let weighted: f64 = (-1..=1)
        .map(|d| take(b + d) as f64 * (lo as f64 + (b + d) as f64))
        .sum();
    if support == 0 {
        return None;
    }
    let radius = (weighted / support as f64) as f32;
    if radius < params.r_min as f32 - 0.5 || radius > params.r_max as f32 + 0.5 {
        return None;
    }
    if (support as f32) < params.vote_threshold * std::f32::consts::TAU * radius {
        return None;
    }
    let mut covered = [false; ANGLE_BINS];
    for d in -1..=1i64 {
        if d + b >= 0 && ((d + b) as usize) < bins {
            for (slot, seen) in covered.iter_mut().zip(&angles[(d + b) as usize]) {
                *slot |= seen;
            }
        }
    }
    if covered.iter().filter(|&&c| c).count() * 2 < ANGLE_BINS {
        return None;
    }
    Some(Circle {
        center_u: cx,
        center_v: cy,
        radius,
        votes: support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(img: &mut Raster, cx: f32, cy: f32, r: f32, value: f32) {
        for y in 0..img.height {
            for x in 0..img.width {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                if dx * dx + dy * dy <= r * r {
                    img.set(x, y, value);
                }
            }
        }
    }

    fn ring(img: &mut Raster, cx: f32, cy: f32, r: f32, width: f32, value: f32) {
        for y in 0..img.height {
            for x in 0..img.width {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                let d = (dx * dx + dy * dy).sqrt();
                if (d - r).abs() <= width / 2.0 {
                    img.set(x, y, value);
                }
            }
        }
    }

    fn params() -> HoughParams {
        HoughParams::default()
    }

    #[test]
    fn detects_single_filled_disk() {
        let mut img = Raster::new(120, 120, 220.0);
        disk(&mut img, 50.0, 50.0, 20.0, 30.0);
        let circles = hough_circles(&img, &params());
        assert_eq!(circles.len(), 1, "{circles:?}");
        let c = circles[0];
        assert!((c.center_u - 50.0).abs() <= 2.0, "{c:?}");
        assert!((c.center_v - 50.0).abs() <= 2.0, "{c:?}");
        assert!((c.radius - 20.0).abs() <= 2.0, "{c:?}");
    }

    #[test]
    fn detects_two_separated_rings() {
        let mut img = Raster::new(300, 150, 230.0);
        ring(&mut img, 70.0, 75.0, 25.0, 4.0, 20.0);
        ring(&mut img, 220.0, 75.0, 40.0, 4.0, 20.0);
        let circles = hough_circles(&img, &params());
        assert_eq!(circles.len(), 2, "{circles:?}");
        let mut xs: Vec<f32> = circles.iter().map(|c| c.center_u).collect();
        xs.sort_by(f32::total_cmp);
        assert!((xs[0] - 70.0).abs() <= 2.0);
        assert!((xs[1] - 220.0).abs() <= 2.0);
    }

    #[test]
    fn blank_image_yields_nothing() {
        let img = Raster::new(100, 100, 128.0);
        assert!(hough_circles(&img, &params()).is_empty());
    }

    #[test]
    fn detection_translates_with_the_circle() {
        let mut a = Raster::new(160, 160, 210.0);
        disk(&mut a, 60.0, 70.0, 18.0, 25.0);
        let mut b = Raster::new(160, 160, 210.0);
        disk(&mut b, 83.0, 41.0, 18.0, 25.0);
        let ca = hough_circles(&a, &params())[0];
        let cb = hough_circles(&b, &params())[0];
        assert!((cb.center_u - ca.center_u - 23.0).abs() <= 1.0);
        assert!((cb.center_v - ca.center_v + 29.0).abs() <= 1.0);
    }
}
