use crate::geom::OrientedBox;
use crate::image::Point2;

use super::EvalError;

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Shoelace area; positive for counter-clockwise order in a y-down frame
/// read as math axes, i.e. the order `OrientedBox::corners` uses.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Sutherland-Hodgman clipping of `subject` by the convex polygon `clip`.
/// Both are expected in the same (positive-area) winding.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        let inside = |p: Point2| cross(a, b, p) >= 0.0;
        let intersect = |p: Point2, q: Point2| {
            let (cp, cq) = (cross(a, b, p), cross(a, b, q));
            let t = cp / (cp - cq);
            p + (q - p) * t
        };
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(intersect(prev, cur)),
                (false, true) => {
                    out.push(intersect(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Intersection over union of two oriented boxes, by exact polygon clipping.
pub fn overlap(a: &OrientedBox, b: &OrientedBox) -> Result<f64, EvalError> {
    if !a.is_valid() || !b.is_valid() {
        return Err(EvalError::DegenerateBox);
    }
    let inter = polygon_area(&clip_convex(&a.corners(), &b.corners())).max(0.0);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
