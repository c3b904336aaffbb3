//! Temporal trimming of tubes from their clip score sequence.

use core::ops::Range;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::FrameInterval;
use crate::model::{ClassId, SpatioTemporal, Tube};
use crate::scoring::ClipScoreSequence;
use crate::{Error, Result};

/// Default score threshold.
pub const DEFAULT_TAU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum TrimMode {
    /// Drop low-scoring clips from both ends.
    #[default]
    Trim,
    /// Keep the span from the first to the last low-scoring clip, inclusive.
    /// A sequence without low clips is kept whole.
    Literal,
}

/// Range of clips that survives. `None` means the whole tube goes.
pub fn surviving_clips(scores: &[f64], tau: f64, mode: TrimMode) -> Option<Range<usize>> {
    let low = |s: &f64| *s < tau;
    match mode {
        TrimMode::Trim => {
            let first = scores.iter().position(|s| !low(s))?;
            let last = scores.iter().rposition(|s| !low(s))?;
            Some(first..last + 1)
        }
        TrimMode::Literal => {
            if scores.is_empty() {
                return None;
            }
            match (scores.iter().position(low), scores.iter().rposition(low)) {
                (Some(a), Some(b)) => Some(a..b + 1),
                _ => Some(0..scores.len()),
            }
        }
    }
}

/// Trims `tube` to the frames of its surviving clips, judged by the score of
/// `class`. The returned tube carries the matching slice of clip scores.
pub fn localize(tube: &Tube, class: ClassId, clip_scores: &ClipScoreSequence, clips: &[FrameInterval], tau: f64, mode: TrimMode) -> Result<Option<Tube>> {
    if clips.len() != clip_scores.len() {
        return Err(Error::DimensionMismatch {
            what: "clip intervals",
            expected: clip_scores.len(),
            found: clips.len(),
        });
    }
    let track = clip_scores.class_track(class);
    let range = match surviving_clips(&track, tau, mode) {
        Some(r) => r,
        None => return Ok(None),
    };
    let frames = FrameInterval::new(clips[range.start].start(), clips[range.end - 1].end())?;
    let mut out = if frames == tube.extent() {
        let mut t = tube.clone();
        t.clip_scores = None;
        t
    } else {
        tube.trimmed(frames)?
    };
    out.clip_scores = Some(ClipScoreSequence {
        clip_length: clip_scores.clip_length,
        scores: clip_scores.scores[range].to_vec(),
    });
    Ok(Some(out))
}
