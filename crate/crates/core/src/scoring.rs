//! Clip slicing, the recurrent clip scorer, tube scores and the removal of
//! overlapping tubes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BoundingBox, FrameInterval};
use crate::linalg::{softmax, Matrix};
use crate::model::{argmax, st_iou, ClassId, SpatioTemporal, Tube};
use crate::{Error, Result};

/// Per-clip class distributions of one tube, in clip order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClipScoreSequence {
    pub clip_length: usize,
    pub scores: Vec<Vec<f64>>,
}

impl ClipScoreSequence {
    pub fn new(clip_length: usize, scores: Vec<Vec<f64>>) -> Result<Self> {
        let seq = Self { clip_length, scores };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::param("scores", "at least one clip is required"));
        }
        let k = self.scores[0].len();
        for s in &self.scores {
            if s.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "clip score vector",
                    expected: k,
                    found: s.len(),
                });
            }
            let total: f64 = s.iter().sum();
            if (total - 1.0).abs() > 1e-6 || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::param("scores", format!("clip scores must form a distribution (sum {total})")));
            }
        }
        Ok(())
    }

    /// Score of `class` in every clip.
    pub fn class_track(&self, class: ClassId) -> Vec<f64> {
        self.scores.iter().map(|s| s.get(class).copied().unwrap_or(0.0)).collect()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Cuts `extent` into consecutive clips of `clip_length` frames.
///
/// A trailing remainder of at least half a clip becomes its own clip; a
/// shorter one is folded into the previous clip. Extents shorter than one
/// clip give a single clip covering them.
pub fn slice_clips(extent: &FrameInterval, clip_length: usize) -> Result<Vec<FrameInterval>> {
    if clip_length == 0 {
        return Err(Error::param("clip_length", "must be at least 1"));
    }
    let full = extent.len() / clip_length;
    let rest = extent.len() % clip_length;
    if full == 0 {
        return Ok(vec![*extent]);
    }
    let mut clips: Vec<FrameInterval> = (0..full)
        .map(|i| {
            let s = extent.start() + i * clip_length;
            FrameInterval::new(s, s + clip_length)
        })
        .collect::<Result<_>>()?;
    if rest > 0 {
        let last_end = extent.end();
        if 2 * rest >= clip_length {
            clips.push(FrameInterval::new(last_end - rest, last_end)?);
        } else {
            let prev = clips.pop().expect("at least one full clip");
            clips.push(FrameInterval::new(prev.start(), last_end)?);
        }
    }
    Ok(clips)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Activation {
    Tanh,
    Relu,
    Logistic,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(v),
            Activation::Relu => v.max(0.0),
            Activation::Logistic => 1.0 / (1.0 + libm::exp(-v)),
        }
    }
}

/// Weights of the recurrent fully-connected layer and its classifier.
///
/// The layer computes `y_t = act(W_io x_t + W_hh y_{t-1} + b_y)` with
/// `y_0 = 0`; the classifier maps each `y_t` to class logits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RecurrentScorerWeights {
    pub input_to_output: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub classifier: Matrix,
    pub classifier_bias: Vec<f64>,
}

impl RecurrentScorerWeights {
    pub fn input_dim(&self) -> usize {
        self.input_to_output.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.input_to_output.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d_out = self.output_dim();
        let checks = [
            ("recurrent rows", d_out, self.recurrent.rows()),
            ("recurrent cols", d_out, self.recurrent.cols()),
            ("bias", d_out, self.bias.len()),
            ("classifier cols", d_out, self.classifier.cols()),
            ("classifier bias", self.classifier.rows(), self.classifier_bias.len()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        if self.classifier.rows() == 0 {
            return Err(Error::param("classifier", "needs at least one class"));
        }
        Ok(())
    }

    /// Runs the recurrence and returns every `y_t`.
    pub fn hidden_states(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let d_out = self.output_dim();
        let mut prev = vec![0.0; d_out];
        let mut states = Vec::with_capacity(features.len());
        for x in features {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    what: "clip feature",
                    expected: self.input_dim(),
                    found: x.len(),
                });
            }
            let mut pre = self.bias.clone();
            self.input_to_output.mul_vec_add(x, &mut pre);
            self.recurrent.mul_vec_add(&prev, &mut pre);
            let y: Vec<f64> = pre.into_iter().map(|v| self.activation.apply(v)).collect();
            prev.clone_from(&y);
            states.push(y);
        }
        Ok(states)
    }

    /// Class distribution for one output vector.
    pub fn classify(&self, y: &[f64]) -> Vec<f64> {
        let mut logits = self.classifier_bias.clone();
        self.classifier.mul_vec_add(y, &mut logits);
        softmax(&logits)
    }
}

/// Scores a tube's clips with the recurrent layer; one distribution per clip.
pub fn recurrent_forward(features: &[Vec<f64>], weights: &RecurrentScorerWeights, clip_length: usize) -> Result<ClipScoreSequence> {
    if features.is_empty() {
        return Err(Error::param("features", "at least one clip is required"));
    }
    let states = weights.hidden_states(features)?;
    Ok(ClipScoreSequence {
        clip_length,
        scores: states.iter().map(|y| weights.classify(y)).collect(),
    })
}

/// How frame-level and clip-level averages combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ScoreFusion {
    #[default]
    Add,
    Multiply,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TubeScore {
    pub avg_cnn: Vec<f64>,
    pub avg_rnn: Vec<f64>,
    pub traj: Vec<f64>,
    pub label: ClassId,
    pub score: f64,
}

/// Combines the mean detector score and the mean clip score per class.
pub fn score_tube(tube: &Tube, clip_scores: &ClipScoreSequence, fusion: ScoreFusion) -> Result<TubeScore> {
    if clip_scores.is_empty() {
        return Err(Error::param("clip_scores", "at least one clip is required"));
    }
    let k = tube.entries()[0].class_scores.len();
    let avg_cnn = mean_vectors(tube.entries().iter().map(|e| e.class_scores.as_slice()), k, "frame class scores")?;
    let avg_rnn = mean_vectors(clip_scores.scores.iter().map(Vec::as_slice), k, "clip class scores")?;
    let traj: Vec<f64> = avg_cnn
        .iter()
        .zip(&avg_rnn)
        .map(|(a, b)| match fusion {
            ScoreFusion::Add => a + b,
            ScoreFusion::Multiply => a * b,
        })
        .collect();
    let (label, score) = argmax(&traj).ok_or_else(|| Error::param("class_scores", "no classes"))?;
    Ok(TubeScore {
        avg_cnn,
        avg_rnn,
        traj,
        label,
        score,
    })
}

fn mean_vectors<'a>(rows: impl Iterator<Item = &'a [f64]>, k: usize, what: &'static str) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; k];
    let mut n = 0usize;
    for r in rows {
        if r.len() != k {
            return Err(Error::DimensionMismatch {
                what,
                expected: k,
                found: r.len(),
            });
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

/// A tube together with its score.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScoredTube {
    pub tube: Tube,
    pub score: TubeScore,
}

impl ScoredTube {
    /// Attaches `score`, copying label and final score onto the tube.
    pub fn new(mut tube: Tube, score: TubeScore) -> Self {
        tube.label = Some(score.label);
        tube.tube_score = Some(score.score);
        Self { tube, score }
    }
}

/// Total order for competing tubes: higher score, longer, earlier, then
/// by first box.
pub fn tube_rank_cmp(a: &ScoredTube, b: &ScoredTube) -> Ordering {
    b.score
        .score
        .total_cmp(&a.score.score)
        .then_with(|| b.tube.len().cmp(&a.tube.len()))
        .then_with(|| a.tube.start().cmp(&b.tube.start()))
        .then_with(|| a.tube.entries()[0].bbox.coord_cmp(&b.tube.entries()[0].bbox))
        .then_with(|| a.score.label.cmp(&b.score.label))
}

/// Greedy class-agnostic removal of overlapping tubes within one video: a
/// tube goes when its st-IOU with a better tube already kept exceeds
/// `st_threshold`.
pub fn prune_overlapped(mut tubes: Vec<ScoredTube>, st_threshold: f64) -> Vec<ScoredTube> {
    tubes.sort_by(tube_rank_cmp);
    let mut kept: Vec<ScoredTube> = Vec::with_capacity(tubes.len());
    for t in tubes {
        if kept.iter().all(|k| st_iou(&k.tube, &t.tube) <= st_threshold) {
            kept.push(t);
        }
    }
    kept
}

/// Supplies one feature vector per clip of a tube.
pub trait ClipFeatureSource {
    fn clip_features(&self, tube: &Tube, clips: &[FrameInterval]) -> Result<Vec<Vec<f64>>>;
}

/// Per-frame features anchored to regions.
///
/// A clip's feature is the mean, over its frames, of the feature of the
/// region best overlapping the tube box (IOU of at least `min_iou`); frames
/// without such a region contribute the zero vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionFeatureField {
    dim: usize,
    min_iou: f64,
    frames: BTreeMap<usize, Vec<(BoundingBox, Vec<f64>)>>,
}

impl RegionFeatureField {
    pub fn new(dim: usize, min_iou: f64) -> Self {
        Self {
            dim,
            min_iou,
            frames: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_iou(&self) -> f64 {
        self.min_iou
    }

    pub fn insert(&mut self, frame: usize, region: BoundingBox, feature: Vec<f64>) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "region feature",
                expected: self.dim,
                found: feature.len(),
            });
        }
        self.frames.entry(frame).or_default().push((region, feature));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BoundingBox, &[f64])> {
        self.frames
            .iter()
            .flat_map(|(f, v)| v.iter().map(move |(b, x)| (*f, b, x.as_slice())))
    }

    fn feature_at(&self, frame: usize, bbox: &BoundingBox) -> Option<&[f64]> {
        self.frames
            .get(&frame)?
            .iter()
            .map(|(b, x)| (iou(b, bbox), x))
            .filter(|(o, _)| *o >= self.min_iou && *o > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, x)| x.as_slice())
    }
}

impl ClipFeatureSource for RegionFeatureField {
    fn clip_features(&self, tube: &Tube, clips: &[FrameInterval]) -> Result<Vec<Vec<f64>>> {
        clips
            .iter()
            .map(|clip| {
                let mut acc = vec![0.0; self.dim];
                for f in clip.frames() {
                    let bbox = tube
                        .box_at(f)
                        .ok_or_else(|| Error::param("clips", format!("frame {f} outside the tube")))?;
                    if let Some(x) = self.feature_at(f, &bbox) {
                        acc.iter_mut().zip(x).for_each(|(a, v)| *a += v);
                    }
                }
                let n = clip.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                Ok(acc)
            })
            .collect()
    }
}
