fn main() {
    use scaffold::cvmetrics::{hough_circles, HoughParams, Raster};
    let mut img = Raster::new(300, 150, 230.0);
    for (cx, cy, r) in [(70.0f32, 75.0f32, 25.0f32), (220.0, 75.0, 40.0)] {
        for y in 0..150u32 {
            for x in 0..300u32 {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                let d = (dx * dx + dy * dy).sqrt();
                if (d - r).abs() <= 2.0 {
                    img.set(x, y, 20.0);
                }
            }
        }
    }
    let circles = hough_circles(&img, &HoughParams::default());
    println!("found {} circles", circles.len());
    for c in &circles {
        println!("  u={:.1} v={:.1} r={:.1} votes={}", c.center_u, c.center_v, c.radius, c.votes);
    }
}
