//! The end-to-end chain for one video: fuse, track, score, prune, localize.
//! Each stage is a separate function so callers can persist intermediate
//! results and resume from them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::eval::{self, EvalConfig, EvalReport};
use crate::footprint::{build_footprint_map, prune_drifted, FootprintMap, Projection};
use crate::fusion::{late_fuse, merge_early_late, saliency_prune, FlowMagnitudeGrid};
use crate::geometry::rank_cmp;
use crate::localize::{localize, TrimMode};
use crate::model::{Detection, GroundTruthTube, SpatioTemporal, Tube};
use crate::scoring::{prune_overlapped, recurrent_forward, score_tube, slice_clips, ClipFeatureSource, RecurrentScorerWeights, RegionFeatureField, ScoreFusion, ScoredTube};
use crate::tracker::{build_tubes_with, Association, DenseMatchTable, DetectorScores, PointMatcher, TrackOutcome, TrackerConfig};
use crate::{Error, Result};

/// All inputs of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub video_id: String,
    pub num_frames: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub ground_truth: Vec<GroundTruthTube>,
    pub static_detections: Vec<Detection>,
    pub flow_detections: Vec<Detection>,
    pub early_detections: Vec<Detection>,
    pub proposals: Vec<crate::Proposal>,
    pub matches: DenseMatchTable,
    pub flow: Vec<FlowMagnitudeGrid>,
    pub features: RegionFeatureField,
    /// Fabricated off-actor tubes, added to the candidates when enabled.
    pub drifted: Vec<Tube>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct FusionConfig {
    pub nms_threshold: f64,
    /// Minimum mean flow magnitude of a flow-stream detection; 0 disables.
    pub saliency_min_magnitude: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            nms_threshold: 0.3,
            saliency_min_magnitude: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
#[derive(Default)]
pub struct TrackingConfig {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub tracker: TrackerConfig,
    /// Use the centre-distance baseline with this radius instead of point
    /// matching.
    pub neighborhood_radius: Option<f64>,
}


#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct ScoringConfig {
    pub clip_length: usize,
    pub fusion: ScoreFusion,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            clip_length: 16,
            fusion: ScoreFusion::Add,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct PruneConfig {
    pub overlap_threshold: f64,
    pub footprint: bool,
    pub map_side: usize,
    pub projection: Projection,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.3,
            footprint: true,
            map_side: 7,
            projection: Projection::MeanBox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct LocalizeConfig {
    pub enabled: bool,
    pub tau: f64,
    pub mode: TrimMode,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tau: crate::localize::DEFAULT_TAU,
            mode: TrimMode::Trim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub tracking: TrackingConfig,
    pub scoring: ScoringConfig,
    pub prune: PruneConfig,
    pub localize: LocalizeConfig,
    pub eval: EvalConfig,
    /// Add each video's fabricated drifted tubes to its candidates.
    pub include_drifted: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.fusion.nms_threshold) {
            return Err(Error::param("fusion.nms_threshold", "must lie in [0, 1]"));
        }
        if !(self.fusion.saliency_min_magnitude >= 0.0) {
            return Err(Error::param("fusion.saliency_min_magnitude", "must be non-negative"));
        }
        self.tracking.tracker.validate()?;
        if let Some(r) = self.tracking.neighborhood_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param("tracking.neighborhood_radius", "must be non-negative"));
            }
        }
        if self.scoring.clip_length == 0 {
            return Err(Error::param("scoring.clip_length", "must be at least 1"));
        }
        if !unit(self.prune.overlap_threshold) {
            return Err(Error::param("prune.overlap_threshold", "must lie in [0, 1]"));
        }
        if self.prune.map_side == 0 {
            return Err(Error::param("prune.map_side", "must be at least 1"));
        }
        if !unit(self.localize.tau) {
            return Err(Error::param("localize.tau", "must lie in [0, 1]"));
        }
        self.eval.validate()
    }
}

fn by_frame(dets: &[Detection]) -> BTreeMap<usize, Vec<Detection>> {
    let mut m: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        m.entry(d.frame_index).or_default().push(d.clone());
    }
    m
}

/// Saliency-prunes the flow stream, late-fuses it with the static stream and
/// merges the result with the early-fusion stream, frame by frame.
///
/// Output is ordered by frame, then by rank.
pub fn fuse_video(static_dets: &[Detection], flow_dets: &[Detection], early_dets: &[Detection], flow: &[FlowMagnitudeGrid], cfg: &FusionConfig) -> Result<Vec<Detection>> {
    let grids: BTreeMap<usize, &FlowMagnitudeGrid> = flow.iter().map(|g| (g.frame_index, g)).collect();
    let (s, f, e) = (by_frame(static_dets), by_frame(flow_dets), by_frame(early_dets));
    let frames: alloc::collections::BTreeSet<usize> = s.keys().chain(f.keys()).chain(e.keys()).copied().collect();
    let empty = Vec::new();
    let mut out = Vec::new();
    for frame in frames {
        let flow_here = f.get(&frame).unwrap_or(&empty);
        let salient = if cfg.saliency_min_magnitude > 0.0 && !flow_here.is_empty() {
            let grid = grids
                .get(&frame)
                .ok_or_else(|| Error::Missing(alloc::format!("flow magnitudes for frame {frame}")))?;
            saliency_prune(flow_here, grid, cfg.saliency_min_magnitude)?
        } else {
            flow_here.clone()
        };
        let late = late_fuse(s.get(&frame).unwrap_or(&empty), &salient, cfg.nms_threshold)?;
        let mut merged = merge_early_late(e.get(&frame).unwrap_or(&empty), &late, cfg.nms_threshold)?;
        merged.sort_by(|a, b| rank_cmp(a.top_class().1, &a.bbox, b.top_class().1, &b.bbox));
        out.extend(merged);
    }
    Ok(out)
}

/// Builds candidate tubes from fused detections.
pub fn track_video<M: PointMatcher + ?Sized>(video_id: &str, num_frames: usize, fused: Vec<Detection>, proposals: Vec<crate::Proposal>, matcher: &M, cfg: &TrackingConfig) -> Result<TrackOutcome> {
    let regions = crate::tracker::VideoRegions::new(video_id, num_frames, fused, proposals)?;
    let association = match cfg.neighborhood_radius {
        Some(radius) => Association::Neighborhood { radius },
        None => Association::PointMatching,
    };
    build_tubes_with(&regions, association, matcher, &DetectorScores, &cfg.tracker)
}

/// Scores every tube with the recurrent clip scorer and the detector scores.
pub fn score_video<F: ClipFeatureSource + ?Sized>(tubes: Vec<Tube>, features: &F, weights: &RecurrentScorerWeights, cfg: &ScoringConfig) -> Result<Vec<ScoredTube>> {
    tubes
        .into_iter()
        .map(|mut tube| {
            let clips = slice_clips(&tube.extent(), cfg.clip_length)?;
            let x = features.clip_features(&tube, &clips)?;
            let seq = recurrent_forward(&x, weights, cfg.clip_length)?;
            let score = score_tube(&tube, &seq, cfg.fusion)?;
            tube.clip_scores = Some(seq);
            Ok(ScoredTube::new(tube, score))
        })
        .collect()
}

/// Removes overlapped tubes, then drifted ones when a map is given.
pub fn prune_video(scored: Vec<ScoredTube>, map: Option<&FootprintMap>, frame_size: (f64, f64), cfg: &PruneConfig) -> Result<Vec<ScoredTube>> {
    let kept = prune_overlapped(scored, cfg.overlap_threshold);
    match map {
        Some(m) if cfg.footprint => prune_drifted(kept, m, frame_size, cfg.projection),
        _ => Ok(kept),
    }
}

/// Trims every tube to its confident clips; fully unconfident tubes go.
pub fn localize_video(tubes: &[Tube], clip_length: usize, cfg: &LocalizeConfig) -> Result<Vec<Tube>> {
    if !cfg.enabled {
        return Ok(tubes.to_vec());
    }
    let mut out = Vec::with_capacity(tubes.len());
    for t in tubes {
        let label = t.label.ok_or_else(|| Error::Missing(alloc::format!("label of a tube in video {}", t.video_id)))?;
        let seq = t
            .clip_scores
            .as_ref()
            .ok_or_else(|| Error::Missing(alloc::format!("clip scores of a tube in video {}", t.video_id)))?;
        let clips = slice_clips(&t.extent(), clip_length)?;
        if let Some(trimmed) = localize(t, label, seq, &clips, cfg.tau, cfg.mode)? {
            out.push(trimmed);
        }
    }
    Ok(out)
}

/// Intermediate and final results of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoResult {
    pub video_id: String,
    pub fused: Vec<Detection>,
    pub candidates: Vec<Tube>,
    pub aborted: usize,
    pub scored: Vec<ScoredTube>,
    pub pruned: Vec<ScoredTube>,
    pub tubes: Vec<Tube>,
}

/// Shared, video-independent inputs.
#[derive(Debug, Clone)]
pub struct Models {
    pub num_classes: usize,
    pub weights: RecurrentScorerWeights,
    pub footprint: Option<FootprintMap>,
}

impl Models {
    pub fn new(num_classes: usize, weights: RecurrentScorerWeights, footprint_alpha: Option<Vec<Vec<f64>>>, cfg: &PipelineConfig) -> Result<Self> {
        weights.validate()?;
        if weights.num_classes() != num_classes {
            return Err(Error::DimensionMismatch {
                what: "scorer classes",
                expected: num_classes,
                found: weights.num_classes(),
            });
        }
        let footprint = footprint_alpha
            .map(|a| build_footprint_map(a, cfg.prune.map_side))
            .transpose()?;
        if let Some(m) = &footprint {
            if m.num_classes() != num_classes {
                return Err(Error::DimensionMismatch {
                    what: "footprint classes",
                    expected: num_classes,
                    found: m.num_classes(),
                });
            }
        }
        Ok(Self {
            num_classes,
            weights,
            footprint,
        })
    }
}

pub fn run_video(video: &VideoData, models: &Models, cfg: &PipelineConfig) -> Result<VideoResult> {
    let fused = fuse_video(&video.static_detections, &video.flow_detections, &video.early_detections, &video.flow, &cfg.fusion)?;
    let outcome = track_video(&video.video_id, video.num_frames, fused.clone(), video.proposals.clone(), &video.matches, &cfg.tracking)?;
    let mut candidates = outcome.tubes;
    if cfg.include_drifted {
        candidates.extend(video.drifted.iter().cloned());
    }
    let scored = score_video(candidates.clone(), &video.features, &models.weights, &cfg.scoring)?;
    let pruned = prune_video(scored.clone(), models.footprint.as_ref(), (video.frame_width, video.frame_height), &cfg.prune)?;
    let survivors: Vec<Tube> = pruned.iter().map(|s| s.tube.clone()).collect();
    let mut tubes = localize_video(&survivors, cfg.scoring.clip_length, &cfg.localize)?;
    tubes.sort_by(eval::canonical_cmp);
    Ok(VideoResult {
        video_id: video.video_id.clone(),
        fused,
        candidates,
        aborted: outcome.aborted.len(),
        scored,
        pruned,
        tubes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Recall-track of the candidate tubes, before scoring and pruning.
    pub tracking_recall: f64,
    pub eval: EvalReport,
}

/// Evaluates pipeline results against the videos' ground truth.
pub fn report(results: &[VideoResult], ground_truth: &[GroundTruthTube], num_classes: usize, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let finals: Vec<Tube> = results.iter().flat_map(|r| r.tubes.iter().cloned()).collect();
    let candidates: Vec<Tube> = results.iter().flat_map(|r| r.candidates.iter().cloned()).collect();
    Ok(PipelineReport {
        tracking_recall: eval::recall_track(&candidates, ground_truth, cfg.eval.recall_track_iou),
        eval: eval::evaluate(&finals, ground_truth, num_classes, &cfg.eval)?,
    })
}

/// Runs every video in order and evaluates the outcome.
pub fn run_all(videos: &[VideoData], models: &Models, cfg: &PipelineConfig) -> Result<(Vec<VideoResult>, PipelineReport)> {
    cfg.validate()?;
    let results = videos
        .iter()
        .map(|v| run_video(v, models, cfg))
        .collect::<Result<Vec<_>>>()?;
    let gt: Vec<GroundTruthTube> = videos.iter().flat_map(|v| v.ground_truth.iter().cloned()).collect();
    let report = report(&results, &gt, models.num_classes, cfg)?;
    Ok((results, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, ScenarioConfig};

    #[test]
    fn noiseless_scenario_is_recovered_exactly() {
        let cfg = ScenarioConfig {
            video_count: 4,
            frames_per_video: 40,
            ..ScenarioConfig::noiseless()
        };
        let bundle = generate(&cfg).unwrap();
        let pcfg = PipelineConfig::default();
        let models = Models::new(3, bundle.scorer_weights.clone(), Some(bundle.footprint_alpha.clone()), &pcfg).unwrap();
        let (results, rep) = run_all(&bundle.videos, &models, &pcfg).unwrap();
        assert_eq!(rep.tracking_recall, 1.0);
        assert_eq!(rep.eval.video_map(0.5), Some(1.0));
        assert_eq!(rep.eval.frame_map(0.5), Some(1.0));
        assert_eq!(rep.eval.taxonomy.total_false(), 0);
        let gt_count: usize = bundle.videos.iter().map(|v| v.ground_truth.len()).sum();
        let tubes: usize = results.iter().map(|r| r.tubes.len()).sum();
        assert_eq!(tubes, gt_count);
    }

    #[test]
    fn stages_are_deterministic() {
        let cfg = ScenarioConfig {
            video_count: 2,
            frames_per_video: 30,
            ..ScenarioConfig::default()
        };
        let bundle = generate(&cfg).unwrap();
        let pcfg = PipelineConfig::default();
        let models = Models::new(3, bundle.scorer_weights.clone(), Some(bundle.footprint_alpha.clone()), &pcfg).unwrap();
        let a = run_video(&bundle.videos[1], &models, &pcfg).unwrap();
        let b = run_video(&bundle.videos[1], &models, &pcfg).unwrap();
        assert_eq!(a, b);
    }
}
