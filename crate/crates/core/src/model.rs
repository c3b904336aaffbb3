//! Domain values shared by every stage: detections, proposals and tubes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, temporal_iou, BoundingBox, FrameInterval};
use crate::scoring::ClipScoreSequence;
use crate::{Error, Result};

/// Index into the configured list of action classes.
pub type ClassId = usize;

/// Where a per-frame region came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Source {
    Static,
    Flow,
    EarlyFusion,
    LateFusion,
    Merged,
    Tracked,
}

/// Anything that sits on one frame inside a box.
pub trait Located {
    fn frame_index(&self) -> usize;
    fn bbox(&self) -> &BoundingBox;
}

/// A scored action region on one frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub class_scores: Vec<f64>,
    pub source: Source,
}

impl Detection {
    pub fn new(frame_index: usize, bbox: BoundingBox, class_scores: Vec<f64>, source: Source) -> Self {
        Self {
            frame_index,
            bbox,
            class_scores,
            source,
        }
    }

    /// Score for `class`, or 0 when the class is out of range.
    pub fn score(&self, class: ClassId) -> f64 {
        self.class_scores.get(class).copied().unwrap_or(0.0)
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn top_class(&self) -> (ClassId, f64) {
        argmax(&self.class_scores).unwrap_or((0, 0.0))
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.class_scores.len() != num_classes {
            return Err(Error::DimensionMismatch {
                what: "detection class scores",
                expected: num_classes,
                found: self.class_scores.len(),
            });
        }
        if self.class_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("class_scores", "scores must be finite"));
        }
        Ok(())
    }
}

impl Located for Detection {
    fn frame_index(&self) -> usize {
        self.frame_index
    }
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
}

/// Class-agnostic candidate region from a proposal network.
///
/// `class_scores` optionally carries the detector's per-class score for the
/// proposal; trackers use it to rank candidate continuations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Proposal {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub objectness: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub class_scores: Option<Vec<f64>>,
}

impl Proposal {
    pub fn new(frame_index: usize, bbox: BoundingBox, objectness: f64) -> Self {
        Self {
            frame_index,
            bbox,
            objectness,
            class_scores: None,
        }
    }

    pub fn with_class_scores(mut self, scores: Vec<f64>) -> Self {
        self.class_scores = Some(scores);
        self
    }
}

impl Located for Proposal {
    fn frame_index(&self) -> usize {
        self.frame_index
    }
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
}

/// Index and value of the maximum; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Something with a per-frame box over a contiguous frame range.
pub trait SpatioTemporal {
    fn video_id(&self) -> &str;
    fn extent(&self) -> FrameInterval;
    fn box_at(&self, frame: usize) -> Option<BoundingBox>;
}

/// A candidate or final action tube.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Tube {
    pub video_id: String,
    entries: Vec<Detection>,
    pub label: Option<ClassId>,
    pub tube_score: Option<f64>,
    pub clip_scores: Option<ClipScoreSequence>,
}

impl Tube {
    pub fn new(video_id: impl Into<String>, entries: Vec<Detection>) -> Result<Self> {
        check_contiguous(entries.iter().map(|e| e.frame_index))?;
        Ok(Self {
            video_id: video_id.into(),
            entries,
            label: None,
            tube_score: None,
            clip_scores: None,
        })
    }

    pub fn with_label(mut self, label: ClassId) -> Self {
        self.label = Some(label);
        self
    }

    pub fn entries(&self) -> &[Detection] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Detection> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false; tubes hold at least one entry.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> usize {
        self.entries[0].frame_index
    }

    pub fn entry_at(&self, frame: usize) -> Option<&Detection> {
        frame
            .checked_sub(self.start())
            .and_then(|i| self.entries.get(i))
    }

    /// Restricts the tube to `range`, which must lie inside its extent.
    pub fn trimmed(&self, range: FrameInterval) -> Result<Tube> {
        let ext = self.extent();
        if range.start() < ext.start() || range.end() > ext.end() {
            return Err(Error::param("range", format!("{range:?} outside tube extent {ext:?}")));
        }
        let lo = range.start() - ext.start();
        let hi = range.end() - ext.start();
        Ok(Tube {
            video_id: self.video_id.clone(),
            entries: self.entries[lo..hi].to_vec(),
            label: self.label,
            tube_score: self.tube_score,
            clip_scores: None,
        })
    }

    /// Mean of the entry boxes, coordinate by coordinate.
    pub fn mean_box(&self) -> BoundingBox {
        let n = self.entries.len() as f64;
        let mut acc = [0.0; 4];
        for e in &self.entries {
            for (a, v) in acc.iter_mut().zip(e.bbox.to_array()) {
                *a += v;
            }
        }
        // The mean of boxes with positive extent has positive extent.
        BoundingBox::new(acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n)
            .unwrap_or(self.entries[0].bbox)
    }

    /// Checks the gap-free invariant and, if set, the label range.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        check_contiguous(self.entries.iter().map(|e| e.frame_index))?;
        if let Some(l) = self.label {
            if l >= num_classes {
                return Err(Error::param("label", format!("class {l} out of range")));
            }
        }
        for e in &self.entries {
            e.validate(num_classes)?;
        }
        Ok(())
    }
}

impl SpatioTemporal for Tube {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn extent(&self) -> FrameInterval {
        let start = self.start();
        FrameInterval::new(start, start + self.entries.len()).expect("tube is non-empty")
    }
    fn box_at(&self, frame: usize) -> Option<BoundingBox> {
        self.entry_at(frame).map(|e| e.bbox)
    }
}

/// Annotated action instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GroundTruthTube {
    pub video_id: String,
    pub label: ClassId,
    entries: Vec<(usize, BoundingBox)>,
}

impl GroundTruthTube {
    pub fn new(video_id: impl Into<String>, label: ClassId, entries: Vec<(usize, BoundingBox)>) -> Result<Self> {
        check_contiguous(entries.iter().map(|e| e.0))?;
        Ok(Self {
            video_id: video_id.into(),
            label,
            entries,
        })
    }

    pub fn entries(&self) -> &[(usize, BoundingBox)] {
        &self.entries
    }
}

impl SpatioTemporal for GroundTruthTube {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn extent(&self) -> FrameInterval {
        let start = self.entries[0].0;
        FrameInterval::new(start, start + self.entries.len()).expect("tube is non-empty")
    }
    fn box_at(&self, frame: usize) -> Option<BoundingBox> {
        frame
            .checked_sub(self.entries[0].0)
            .and_then(|i| self.entries.get(i))
            .map(|e| e.1)
    }
}

fn check_contiguous(mut frames: impl Iterator<Item = usize>) -> Result<()> {
    let mut prev = match frames.next() {
        Some(f) => f,
        None => return Err(Error::BrokenTube("no entries".into())),
    };
    for f in frames {
        if f != prev + 1 {
            return Err(Error::BrokenTube(format!("frame {f} follows frame {prev}")));
        }
        prev = f;
    }
    Ok(())
}

/// Spatio-temporal IOU: temporal IOU of the extents times the mean spatial
/// IOU over the frames both cover. Zero across videos or without overlap.
pub fn st_iou<A: SpatioTemporal + ?Sized, B: SpatioTemporal + ?Sized>(a: &A, b: &B) -> f64 {
    if a.video_id() != b.video_id() {
        return 0.0;
    }
    let (ea, eb) = (a.extent(), b.extent());
    let common = match ea.intersection(&eb) {
        Some(c) => c,
        None => return 0.0,
    };
    let mut sum = 0.0;
    for f in common.frames() {
        if let (Some(ba), Some(bb)) = (a.box_at(f), b.box_at(f)) {
            sum += iou(&ba, &bb);
        }
    }
    temporal_iou(&ea, &eb) * (sum / common.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn tube_of(start: usize, boxes: &[BoundingBox]) -> Tube {
        let entries = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| Detection::new(start + i, *b, vec![1.0], Source::Static))
            .collect();
        Tube::new("v", entries).unwrap()
    }

    #[test]
    fn tube_rejects_gaps_and_empty() {
        let d = |f| Detection::new(f, bb(0.0, 0.0, 1.0, 1.0), vec![1.0], Source::Static);
        assert!(Tube::new("v", vec![]).is_err());
        assert!(Tube::new("v", vec![d(0), d(2)]).is_err());
        assert!(Tube::new("v", vec![d(1), d(0)]).is_err());
        assert!(Tube::new("v", vec![d(4), d(5)]).is_ok());
    }

    #[test]
    fn st_iou_examples() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let t = tube_of(0, &[b; 10]);
        assert_eq!(st_iou(&t, &t), 1.0);

        let late = tube_of(10, &[b; 5]);
        assert_eq!(st_iou(&t, &late), 0.0);

        // constant spatial IOU 0.6 on the shared frames: boxes 10 wide, shifted by 2.5
        let shifted = bb(2.5, 0.0, 12.5, 10.0);
        assert!((iou(&b, &shifted) - 0.6).abs() < 1e-12);
        let u = tube_of(5, &[shifted; 10]);
        assert!((st_iou(&t, &u) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn st_iou_is_zero_across_videos() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let t = tube_of(0, &[b; 3]);
        let mut u = t.clone();
        u.video_id = "other".into();
        assert_eq!(st_iou(&t, &u), 0.0);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), Some((1, 0.5)));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn trimmed_keeps_range() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let t = tube_of(3, &[b; 6]);
        let r = t.trimmed(FrameInterval::new(4, 7).unwrap()).unwrap();
        assert_eq!(r.extent(), FrameInterval::new(4, 7).unwrap());
        assert!(t.trimmed(FrameInterval::new(0, 4).unwrap()).is_err());
    }
}
