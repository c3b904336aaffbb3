//! Boxes, frame intervals and the overlap measures built on them.

use core::cmp::Ordering;

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::model::Detection;
use crate::{Error, Result};

/// A point in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle in continuous corner coordinates.
///
/// Always has finite coordinates and positive area. Serialized as
/// `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "[f64; 4]", into = "[f64; 4]")
)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite();
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Box of the given size centred on `center`.
    pub fn from_center(center: Point, width: f64, height: f64) -> Result<Self> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Strict containment: points on the border are outside.
    pub fn contains(&self, p: Point) -> bool {
        p.x > self.x_min && p.x < self.x_max && p.y > self.y_min && p.y < self.y_max
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection with `other`, or `None` when the overlap has no area.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        BoundingBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    /// Scales both axes independently around the origin.
    pub fn scale(&self, sx: f64, sy: f64) -> Result<Self> {
        Self::new(
            self.x_min * sx,
            self.y_min * sy,
            self.x_max * sx,
            self.y_max * sy,
        )
    }

    /// Lexicographic order on `(x_min, y_min, x_max, y_max)`.
    pub fn coord_cmp(&self, other: &BoundingBox) -> Ordering {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Half-open range of frame indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "[usize; 2]", into = "[usize; 2]")
)]
pub struct FrameInterval {
    start: usize,
    end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Always false; intervals hold at least one frame.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start && frame < self.end
    }

    pub fn intersection(&self, other: &FrameInterval) -> Option<FrameInterval> {
        FrameInterval::new(self.start.max(other.start), self.end.min(other.end)).ok()
    }

    pub fn frames(&self) -> core::ops::Range<usize> {
        self.start..self.end
    }
}

impl TryFrom<[usize; 2]> for FrameInterval {
    type Error = Error;

    fn try_from(v: [usize; 2]) -> Result<Self> {
        FrameInterval::new(v[0], v[1])
    }
}

impl From<FrameInterval> for [usize; 2] {
    fn from(i: FrameInterval) -> Self {
        [i.start, i.end]
    }
}

/// Intersection over union of two boxes; 0 when they are disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over union of two frame ranges, counted in frames.
pub fn temporal_iou(a: &FrameInterval, b: &FrameInterval) -> f64 {
    let inter = match a.intersection(b) {
        Some(i) => i.len(),
        None => return 0.0,
    };
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Ranking used wherever detections compete: higher score first, then
/// larger area, then lexicographically smaller coordinates.
pub fn rank_cmp(score_a: f64, box_a: &BoundingBox, score_b: f64, box_b: &BoundingBox) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| box_b.area().total_cmp(&box_a.area()))
        .then_with(|| box_a.coord_cmp(box_b))
}

/// Greedy non-maximum suppression on the scores of `class`.
///
/// Detections are visited best-first under [`rank_cmp`]; a detection is
/// dropped when its IOU with an already kept one exceeds `threshold`. The
/// survivors come back in rank order. All detections are expected to share
/// one frame.
pub fn nms(detections: &[Detection], class: usize, threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| rank_cmp(a.score(class), &a.bbox, b.score(class), &b.bbox));

    let mut kept: Vec<Detection> = Vec::with_capacity(order.len());
    for det in order {
        if kept.iter().all(|k| iou(&k.bbox, &det.bbox) <= threshold) {
            kept.push(det.clone());
        }
    }
    kept
}
