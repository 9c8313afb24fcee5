//! Box geometry and the document types shared across the toolkit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite, negative or inverted coordinates.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    /// Rectangle hull of a set of corner points (quadrilateral flattening).
    pub fn hull(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("bounding hull"));
        }
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::invalid(format!("non-finite corner ({x}, {y})")));
            }
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BBox::new(x0, y0, x1, y1)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate in {self:?}")));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::invalid(format!("negative coordinate in {self:?}")));
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(Error::invalid(format!("inverted box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Fraction of `self`'s area covered by `other`. Zero-area targets yield 0.
    pub fn coverage_by(&self, other: &BBox) -> f64 {
        let area = self.area();
        if area <= 0.0 {
            return 0.0;
        }
        (self.intersection_area(other) / area).clamp(0.0, 1.0)
    }

    pub fn scaled(&self, s: f64) -> BBox {
        BBox {
            x0: self.x0 * s,
            y0: self.y0 * s,
            x1: self.x1 * s,
            y1: self.y1 * s,
        }
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    a.intersection_area(b)
}

pub fn coverage_fraction(target: &BBox, other: &BBox) -> f64 {
    target.coverage_by(other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrBox {
    pub id: String,
    pub bbox: BBox,
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub id: String,
    pub bbox: BBox,
    pub text: String,
    /// Reading-order rank from the annotation.
    pub order_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub ocr_boxes: Vec<OcrBox>,
    pub gt_boxes: Vec<GtBox>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            ..Default::default()
        }
    }

    /// Checks box validity, confidence range and id / order uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.ocr_boxes {
            b.bbox.validate()?;
            if !(0.0..=1.0).contains(&b.confidence) {
                return Err(Error::invalid(format!(
                    "confidence {} of OCR box {} outside [0,1]",
                    b.confidence, b.id
                )));
            }
            if !seen.insert(b.id.as_str()) {
                return Err(Error::invalid(format!("duplicate OCR box id {}", b.id)));
            }
        }
        seen.clear();
        let mut orders = std::collections::HashSet::new();
        for b in &self.gt_boxes {
            b.bbox.validate()?;
            if !seen.insert(b.id.as_str()) {
                return Err(Error::invalid(format!("duplicate GT box id {}", b.id)));
            }
            if !orders.insert(b.order_index) {
                return Err(Error::invalid(format!(
                    "duplicate GT order index {}",
                    b.order_index
                )));
            }
        }
        Ok(())
    }
}
