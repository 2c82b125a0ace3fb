use super::SimilarityTransform;
use crate::image::Point2;

/// Rectangle of size `width x height` rotated by `angle` about its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl OrientedBox {
    pub fn new(center: Point2, width: f64, height: f64, angle: f64) -> Self {
        Self {
            center,
            width,
            height,
            angle,
        }
    }

    /// Axis-aligned box from its top-left corner and size.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(Point2::new(x + w / 2.0, y + h / 2.0), w, h, 0.0)
    }

    /// Top-left corner of the unrotated box plus size: `(x, y, w, h)`.
    pub fn to_xywh(&self) -> (f64, f64, f64, f64) {
        (
            self.center.x - self.width / 2.0,
            self.center.y - self.height / 2.0,
            self.width,
            self.height,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0
            && self.height > 0.0
            && self.width.is_finite()
            && self.height.is_finite()
            && self.center.is_finite()
            && self.angle.is_finite()
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Maps normalized box coordinates (`u, v` in `[-0.5, 0.5]`) to the image.
    pub fn local_to_image(&self, u: f64, v: f64) -> Point2 {
        let (sin, cos) = self.angle.sin_cos();
        let lx = u * self.width;
        let ly = v * self.height;
        Point2::new(self.center.x + cos * lx - sin * ly, self.center.y + sin * lx + cos * ly)
    }

    /// Inverse of [`local_to_image`](Self::local_to_image).
    pub fn image_to_local(&self, p: Point2) -> (f64, f64) {
        let (sin, cos) = self.angle.sin_cos();
        let d = p - self.center;
        let lx = cos * d.x + sin * d.y;
        let ly = -sin * d.x + cos * d.y;
        (lx / self.width, ly / self.height)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (u, v) = self.image_to_local(p);
        u.abs() <= 0.5 && v.abs() <= 0.5
    }

    /// Corners in a fixed winding: top-left, top-right, bottom-right,
    /// bottom-left of the unrotated box. The shoelace area is positive.
    pub fn corners(&self) -> [Point2; 4] {
        [
            self.local_to_image(-0.5, -0.5),
            self.local_to_image(0.5, -0.5),
            self.local_to_image(0.5, 0.5),
            self.local_to_image(-0.5, 0.5),
        ]
    }

    /// Axis-aligned hull as `(x, y, w, h)`.
    pub fn aabb(&self) -> (f64, f64, f64, f64) {
        let c = self.corners();
        let (mut x0, mut y0, mut x1, mut y1) = (c[0].x, c[0].y, c[0].x, c[0].y);
        for p in &c[1..] {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        (x0, y0, x1 - x0, y1 - y0)
    }

    /// `T(b)`: moves the center, scales the size and adds the rotation.
    pub fn transform(&self, t: &SimilarityTransform) -> OrientedBox {
        OrientedBox {
            center: t.apply(self.center),
            width: self.width * t.scale,
            height: self.height * t.scale,
            angle: self.angle + t.rotation,
        }
    }

    /// The similarity carrying `self` onto `other`, using the width ratio
    /// for scale.
    pub fn transform_to(&self, other: &OrientedBox) -> SimilarityTransform {
        let scale = other.width / self.width;
        let rotation = other.angle - self.angle;
        let linear = SimilarityTransform::new(scale, rotation, Point2::default());
        let moved = linear.apply(self.center);
        SimilarityTransform::new(scale, rotation, other.center - moved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_keeps_box() {
        let b = OrientedBox::new(Point2::new(3.0, 4.0), 10.0, 6.0, 0.3);
        assert_eq!(b.transform(&SimilarityTransform::identity()), b);
    }

    #[test]
    fn translation_moves_center_only() {
        let b = OrientedBox::new(Point2::new(3.0, 4.0), 10.0, 6.0, 0.3);
        let t = b.transform(&SimilarityTransform::translation(10.0, -5.0));
        assert_eq!(t.center, Point2::new(13.0, -1.0));
        assert_eq!((t.width, t.height, t.angle), (10.0, 6.0, 0.3));
    }

    #[test]
    fn corner_winding_is_positive() {
        let c = OrientedBox::new(Point2::new(0.0, 0.0), 4.0, 2.0, 1.0).corners();
        let area: f64 = (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0;
        assert!((area - 8.0).abs() < 1e-12);
    }

    #[test]
    fn xywh_round_trip() {
        let b = OrientedBox::from_xywh(10.0, 20.0, 30.0, 40.0);
        assert_eq!(b.center, Point2::new(25.0, 40.0));
        assert_eq!(b.to_xywh(), (10.0, 20.0, 30.0, 40.0));
        assert_eq!(b.aabb(), (10.0, 20.0, 30.0, 40.0));
    }

    proptest! {
        #[test]
        fn transformed_corners_are_mapped_corners(
            s in 0.3f64..3.0, r in -3.0f64..3.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0,
            cx in -20.0f64..20.0, cy in -20.0f64..20.0, w in 1.0f64..60.0, h in 1.0f64..60.0,
            a in -3.0f64..3.0,
        ) {
            let t = SimilarityTransform::new(s, r, Point2::new(tx, ty));
            let b = OrientedBox::new(Point2::new(cx, cy), w, h, a);
            let moved = b.transform(&t).corners();
            for (got, orig) in moved.iter().zip(b.corners()) {
                prop_assert!(got.distance(t.apply(orig)) < 1e-9);
            }
        }

        #[test]
        fn transform_to_carries_box(
            cx in -20.0f64..20.0, cy in -20.0f64..20.0, w in 1.0f64..60.0, h in 1.0f64..60.0,
            a in -3.0f64..3.0, s in 0.3f64..3.0, r in -3.0f64..3.0, tx in -9.0f64..9.0,
        ) {
            let b = OrientedBox::new(Point2::new(cx, cy), w, h, a);
            let target = b.transform(&SimilarityTransform::new(s, r, Point2::new(tx, -tx)));
            let t = b.transform_to(&target);
            for (got, want) in b.transform(&t).corners().iter().zip(target.corners()) {
                prop_assert!(got.distance(want) < 1e-9);
            }
        }
    }
}
