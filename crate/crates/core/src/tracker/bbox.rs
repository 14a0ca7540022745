use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

/// Pixel bounding box in center form, serialized as `[cx, cy, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// Builds a box from its top-left and bottom-right corners.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Filter measurement `(cx, cy, aspect = w/h, h)`.
    pub fn to_measurement(&self) -> Vector4<f64> {
        Vector4::new(self.cx, self.cy, self.w / self.h, self.h)
    }

    pub fn from_measurement(z: &Vector4<f64>) -> Self {
        Self::new(z[0], z[1], z[2] * z[3], z[3])
    }
}

/// Intersection over union of two boxes with positive extents.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = BBox::new(10.0, 10.0, 4.0, 6.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(100.0, 10.0, 4.0, 6.0)), 0.0);
        let c = iou(&BBox::from_corners(0.0, 0.0, 2.0, 2.0), &BBox::from_corners(1.0, 0.0, 3.0, 2.0));
        assert!((c - 1.0 / 3.0).abs() < 1e-12);
        // touching edges share no area
        assert_eq!(iou(&BBox::from_corners(0.0, 0.0, 1.0, 1.0), &BBox::from_corners(1.0, 0.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn measurement_round_trip() {
        let b = BBox::new(320.0, 240.0, 60.0, 150.0);
        assert_eq!(BBox::from_measurement(&b.to_measurement()), b);
    }
}
