//! Merging of static-stream, flow-stream and early-fusion detections, and
//! motion-saliency pruning of regions that sit on motionless pixels.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{nms, rank_cmp};
use crate::model::{Detection, Located, Source};
use crate::{Error, Result};

/// Optical-flow magnitudes for one frame on a regular grid.
///
/// Grid cell `(col, row)` covers pixels `[col*cell_size, (col+1)*cell_size)`
/// horizontally and likewise vertically; `cell_size == 1` is a full
/// resolution magnitude image.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FlowMagnitudeGrid {
    pub frame_index: usize,
    width: usize,
    height: usize,
    cell_size: f64,
    values: Vec<f32>,
}

impl FlowMagnitudeGrid {
    pub fn new(frame_index: usize, width: usize, height: usize, cell_size: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "flow grid values",
                expected: width * height,
                found: values.len(),
            });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::param("cell_size", "must be positive"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("values", "flow magnitudes must be finite and non-negative"));
        }
        Ok(Self {
            frame_index,
            width,
            height,
            cell_size,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Mean magnitude over the cells whose centres lie strictly inside the
    /// box. `None` when no cell centre does.
    pub fn mean_inside(&self, bbox: &crate::BoundingBox) -> Option<f64> {
        let cs = self.cell_size;
        // centre of cell i is (i + 0.5) * cs; candidates bracket the box
        let span = |lo: f64, hi: f64, n: usize| {
            let first = libm::floor(lo / cs - 0.5).max(0.0) as usize;
            let last = (libm::ceil(hi / cs - 0.5).max(0.0) as usize).min(n);
            first..last.max(first)
        };
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for row in span(bbox.y_min(), bbox.y_max(), self.height) {
            let cy = (row as f64 + 0.5) * cs;
            if !(cy > bbox.y_min() && cy < bbox.y_max()) {
                continue;
            }
            let base = row * self.width;
            for col in span(bbox.x_min(), bbox.x_max(), self.width) {
                let cx = (col as f64 + 0.5) * cs;
                if cx > bbox.x_min() && cx < bbox.x_max() {
                    sum += f64::from(self.values[base + col]);
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Keeps the regions whose mean flow magnitude reaches `min_mean_magnitude`.
///
/// A threshold of zero disables pruning. With a positive threshold, regions
/// covering no grid cell (e.g. entirely off-grid) are removed.
pub fn saliency_prune<T: Located + Clone>(regions: &[T], flow: &FlowMagnitudeGrid, min_mean_magnitude: f64) -> Result<Vec<T>> {
    if !(min_mean_magnitude >= 0.0) {
        return Err(Error::param("min_mean_magnitude", "must be non-negative"));
    }
    if let Some(r) = regions.iter().find(|r| r.frame_index() != flow.frame_index) {
        return Err(Error::FrameMismatch {
            expected: flow.frame_index,
            found: r.frame_index(),
        });
    }
    if min_mean_magnitude == 0.0 {
        return Ok(regions.to_vec());
    }
    Ok(regions
        .iter()
        .filter(|r| {
            flow.mean_inside(r.bbox())
                .is_some_and(|m| m >= min_mean_magnitude)
        })
        .cloned()
        .collect())
}

/// Class-wise NMS: detections are grouped by their top class and suppressed
/// within the group. Output is in rank order of the top-class score.
pub fn classwise_nms(detections: &[Detection], threshold: f64, tag: Source) -> Vec<Detection> {
    let mut by_class: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_class.entry(d.top_class().0).or_default().push(d.clone());
    }
    let mut out: Vec<Detection> = by_class
        .iter()
        .flat_map(|(&class, group)| nms(group, class, threshold))
        .map(|mut d| {
            d.source = tag;
            d
        })
        .collect();
    out.sort_by(|a, b| rank_cmp(a.top_class().1, &a.bbox, b.top_class().1, &b.bbox));
    out
}

fn check_same_frame<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> Result<()> {
    let mut frame = None;
    for d in dets {
        match frame {
            None => frame = Some(d.frame_index),
            Some(f) if f != d.frame_index => {
                return Err(Error::FrameMismatch {
                    expected: f,
                    found: d.frame_index,
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Late fusion of the two streams of one frame.
pub fn late_fuse(static_dets: &[Detection], flow_dets: &[Detection], nms_threshold: f64) -> Result<Vec<Detection>> {
    check_same_frame(static_dets.iter().chain(flow_dets))?;
    let all: Vec<Detection> = static_dets.iter().chain(flow_dets).cloned().collect();
    Ok(classwise_nms(&all, nms_threshold, Source::LateFusion))
}

/// Integrates early-fusion and late-fusion detections of one frame.
pub fn merge_early_late(early: &[Detection], late: &[Detection], nms_threshold: f64) -> Result<Vec<Detection>> {
    check_same_frame(early.iter().chain(late))?;
    let all: Vec<Detection> = early.iter().chain(late).cloned().collect();
    Ok(classwise_nms(&all, nms_threshold, Source::Merged))
}
