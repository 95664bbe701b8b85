//! Normalized boxes from the locator and the pixel points the device receives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate {name}={value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("inverted box: {lo_name}={lo} > {hi_name}={hi}")]
    Inverted { lo_name: &'static str, lo: f64, hi_name: &'static str, hi: f64 },
    #[error("point ({x}, {y}) outside {w}x{h} screen")]
    PointOutside { x: u32, y: u32, w: u32, h: u32 },
    #[error("screen dimensions must be positive")]
    EmptyScreen,
}

/// Normalized box, `0 <= x1 <= x2 <= 1` and `0 <= y1 <= y2 <= 1`.
/// Zero-area boxes are valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

// Construction rejects NaN, so equality is total.
impl Eq for BoundingBox {}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = GeometryError;
    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        BoundingBox::new(r.x1, r.y1, r.x2, r.y2)
    }
}

impl From<BoundingBox> for RawBox {
    fn from(b: BoundingBox) -> Self {
        RawBox { x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 }
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        for (name, value) in [("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)] {
            // NaN fails this check too
            if !(0.0..=1.0).contains(&value) {
                return Err(GeometryError::OutOfRange { name, value });
            }
        }
        if x1 > x2 {
            return Err(GeometryError::Inverted { lo_name: "x1", lo: x1, hi_name: "x2", hi: x2 });
        }
        if y1 > y2 {
            return Err(GeometryError::Inverted { lo_name: "y1", lo: y1, hi_name: "y2", hi: y2 });
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x1..=self.x2).contains(&x) && (self.y1..=self.y2).contains(&y)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Pixel position on a screen of known size, `x < screen_w`, `y < screen_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct Point {
    x: u32,
    y: u32,
    screen_w: u32,
    screen_h: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    x: u32,
    y: u32,
    screen_w: u32,
    screen_h: u32,
}

impl TryFrom<RawPoint> for Point {
    type Error = GeometryError;
    fn try_from(r: RawPoint) -> Result<Self, Self::Error> {
        Point::new(r.x, r.y, r.screen_w, r.screen_h)
    }
}

impl From<Point> for RawPoint {
    fn from(p: Point) -> Self {
        RawPoint { x: p.x, y: p.y, screen_w: p.screen_w, screen_h: p.screen_h }
    }
}

impl Point {
    pub fn new(x: u32, y: u32, screen_w: u32, screen_h: u32) -> Result<Self, GeometryError> {
        if screen_w == 0 || screen_h == 0 {
            return Err(GeometryError::EmptyScreen);
        }
        if x >= screen_w || y >= screen_h {
            return Err(GeometryError::PointOutside { x, y, w: screen_w, h: screen_h });
        }
        Ok(Point { x, y, screen_w, screen_h })
    }

    pub fn x(&self) -> u32 {
        self.x
    }
    pub fn y(&self) -> u32 {
        self.y
    }
    pub fn screen_w(&self) -> u32 {
        self.screen_w
    }
    pub fn screen_h(&self) -> u32 {
        self.screen_h
    }

    /// Position as a fraction of the screen, for hit-testing against normalized boxes.
    pub fn normalized(&self) -> (f64, f64) {
        (self.x as f64 / self.screen_w as f64, self.y as f64 / self.screen_h as f64)
    }
}

fn scale_clamped(fraction: f64, dim: u32) -> u32 {
    let px = (fraction * dim as f64).round();
    px.clamp(0.0, (dim - 1) as f64) as u32
}

/// Reduces a locator box to the pixel midpoint, clamped onto the screen.
pub fn bbox_center(b: &BoundingBox, screen_w: u32, screen_h: u32) -> Result<Point, GeometryError> {
    if screen_w == 0 || screen_h == 0 {
        return Err(GeometryError::EmptyScreen);
    }
    let (cx, cy) = b.center();
    Point::new(scale_clamped(cx, screen_w), scale_clamped(cy, screen_h), screen_w, screen_h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn center_examples() {
        let p = bbox_center(&bx(0.25, 0.5, 0.75, 0.7), 1080, 1920).unwrap();
        assert_eq!((p.x(), p.y()), (540, 1152));
        let p = bbox_center(&bx(0.5, 0.5, 0.5, 0.5), 1080, 1920).unwrap();
        assert_eq!((p.x(), p.y()), (540, 960));
        let p = bbox_center(&bx(0.0, 0.0, 1.0, 1.0), 1080, 1920).unwrap();
        assert_eq!((p.x(), p.y()), (540, 960));
    }

    #[test]
    fn corner_box_is_clamped() {
        let p = bbox_center(&bx(1.0, 1.0, 1.0, 1.0), 1080, 1920).unwrap();
        assert_eq!((p.x(), p.y()), (1079, 1919));
        let p = bbox_center(&bx(0.0, 0.0, 1.0, 1.0), 1, 1).unwrap();
        assert_eq!((p.x(), p.y()), (0, 0));
    }

    #[test]
    fn box_validation() {
        assert!(matches!(BoundingBox::new(1.2, 0.0, 1.3, 0.1), Err(GeometryError::OutOfRange { name: "x1", .. })));
        assert!(matches!(BoundingBox::new(0.5, 0.0, 0.4, 0.1), Err(GeometryError::Inverted { .. })));
        assert!(BoundingBox::new(f64::NAN, 0.0, 0.4, 0.1).is_err());
        let json = r#"{"x1":0.1,"y1":0.9,"x2":0.2,"y2":0.3}"#;
        assert!(serde_json::from_str::<BoundingBox>(json).is_err());
    }

    #[test]
    fn point_validation() {
        assert!(Point::new(1080, 0, 1080, 1920).is_err());
        assert!(Point::new(0, 0, 0, 10).is_err());
        assert!(serde_json::from_str::<Point>(r#"{"x":5,"y":5,"screen_w":4,"screen_h":10}"#).is_err());
    }
}
