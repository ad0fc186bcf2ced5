//! Planar point and polyline helpers shared by the graph, vectorizer and
//! metric code.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Closest point on segment `a`-`b` to `p`, as (parameter in [0,1], distance).
pub fn project_on_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (0.0, p.dist(a));
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    (t, p.dist(a.lerp(b, t)))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    project_on_segment(p, a, b).1
}

pub fn arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Cumulative arc length at every vertex; first entry is 0.
pub fn cumulative_lengths(points: &[Point]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(points.len());
    out.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(w[1]);
        out.push(acc);
    }
    out
}

/// Polyline through `points` cut at arc length `s`, returning the point and
/// the index of the segment it falls on.
pub fn point_at_length(points: &[Point], cum: &[f64], s: f64) -> (Point, usize) {
    debug_assert!(points.len() >= 2);
    let last = points.len() - 2;
    let seg = match cum.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    };
    let len = cum[seg + 1] - cum[seg];
    let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
    (points[seg].lerp(points[seg + 1], t), seg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps_to_segment() {
        let (t, d) = project_on_segment(Point::new(-3.0, 4.0), Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        assert_eq!(t, 0.0);
        assert_eq!(d, 5.0);
        let (t, d) = project_on_segment(Point::new(4.0, 2.0), Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        assert!((t - 0.4).abs() < 1e-15);
        assert_eq!(d, 2.0);
    }

    #[test]
    fn point_at_length_walks_segments() {
        let pts = [Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(3.0, 4.0)];
        let cum = cumulative_lengths(&pts);
        assert_eq!(cum, vec![0.0, 3.0, 7.0]);
        let (p, seg) = point_at_length(&pts, &cum, 5.0);
        assert_eq!(seg, 1);
        assert_eq!(p, Point::new(3.0, 2.0));
        let (p, _) = point_at_length(&pts, &cum, 7.0);
        assert_eq!(p, Point::new(3.0, 4.0));
    }
}
