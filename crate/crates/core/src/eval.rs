//! Detection metrics: greedy matching, average precision, ROC area,
//! recall-track and the breakdown of false detections.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BoundingBox};
use crate::model::{st_iou, ClassId, GroundTruthTube, SpatioTemporal, Tube};
use crate::{Error, Result};

/// Something that can be matched against ground truth.
///
/// Only instances in the same group (video, and frame for frame-level
/// evaluation) are ever compared.
pub trait Instance {
    fn group(&self) -> (&str, Option<usize>);
    fn label(&self) -> ClassId;
    fn score(&self) -> f64;
    fn overlap(&self, other: &Self) -> f64;
}

/// A labelled box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBox<'a> {
    pub video_id: &'a str,
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub label: ClassId,
    pub score: f64,
}

impl Instance for FrameBox<'_> {
    fn group(&self) -> (&str, Option<usize>) {
        (self.video_id, Some(self.frame_index))
    }
    fn label(&self) -> ClassId {
        self.label
    }
    fn score(&self) -> f64 {
        self.score
    }
    fn overlap(&self, other: &Self) -> f64 {
        iou(&self.bbox, &other.bbox)
    }
}

/// A labelled tube.
#[derive(Clone, Copy)]
pub struct TubeInstance<'a> {
    pub tube: &'a dyn SpatioTemporal,
    pub label: ClassId,
    pub score: f64,
}

impl Instance for TubeInstance<'_> {
    fn group(&self) -> (&str, Option<usize>) {
        (self.tube.video_id(), None)
    }
    fn label(&self) -> ClassId {
        self.label
    }
    fn score(&self) -> f64 {
        self.score
    }
    fn overlap(&self, other: &Self) -> f64 {
        st_iou(self.tube, other.tube)
    }
}

fn tube_label(t: &Tube) -> Result<(ClassId, f64)> {
    let label = t
        .label
        .ok_or_else(|| Error::Missing(alloc::format!("label of a tube in video {}", t.video_id)))?;
    Ok((label, t.tube_score.unwrap_or(0.0)))
}

/// Tube-level instances of predicted tubes; every tube needs a label.
pub fn tube_instances(tubes: &[Tube]) -> Result<Vec<TubeInstance<'_>>> {
    tubes
        .iter()
        .map(|t| {
            let (label, score) = tube_label(t)?;
            Ok(TubeInstance { tube: t, label, score })
        })
        .collect()
}

pub fn gt_tube_instances(gts: &[GroundTruthTube]) -> Vec<TubeInstance<'_>> {
    gts.iter()
        .map(|g| TubeInstance {
            tube: g,
            label: g.label,
            score: 1.0,
        })
        .collect()
}

/// One box per tube entry, carrying the tube's label and score.
pub fn frame_instances(tubes: &[Tube]) -> Result<Vec<FrameBox<'_>>> {
    let mut out = Vec::new();
    for t in tubes {
        let (label, score) = tube_label(t)?;
        out.extend(t.entries().iter().map(|e| FrameBox {
            video_id: &t.video_id,
            frame_index: e.frame_index,
            bbox: e.bbox,
            label,
            score,
        }));
    }
    Ok(out)
}

pub fn gt_frame_instances(gts: &[GroundTruthTube]) -> Vec<FrameBox<'_>> {
    gts.iter()
        .flat_map(|g| {
            g.entries().iter().map(move |(f, b)| FrameBox {
                video_id: &g.video_id,
                frame_index: *f,
                bbox: *b,
                label: g.label,
                score: 1.0,
            })
        })
        .collect()
}

/// Outcome of greedy matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Prediction indices by descending score; ties keep input order.
    pub ranked: Vec<usize>,
    /// Per prediction (input order): whether it is a true positive.
    pub is_tp: Vec<bool>,
    /// Per ground truth: whether some prediction claimed it.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.is_tp.iter().filter(|t| **t).count()
    }

    /// TP flags in rank order.
    pub fn ranked_outcomes(&self) -> Vec<bool> {
        self.ranked.iter().map(|i| self.is_tp[*i]).collect()
    }
}

/// Indices of `items` by descending score, ties by index.
pub fn rank_by_score<I: Instance>(items: &[I]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|a, b| items[*b].score().total_cmp(&items[*a].score()).then(a.cmp(b)));
    order
}

fn group_index<I: Instance>(gts: &[I]) -> BTreeMap<(&str, Option<usize>), Vec<usize>> {
    let mut groups: BTreeMap<(&str, Option<usize>), Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        groups.entry(g.group()).or_default().push(i);
    }
    groups
}

/// Greedy one-to-one matching in score order. A prediction claims the
/// unclaimed ground truth of its label with the highest overlap, provided
/// that overlap exceeds `sigma`.
pub fn match_and_label<I: Instance>(predictions: &[I], ground_truth: &[I], sigma: f64) -> MatchResult {
    let groups = group_index(ground_truth);
    let ranked = rank_by_score(predictions);
    let mut is_tp = vec![false; predictions.len()];
    let mut gt_matched = vec![false; ground_truth.len()];
    for &p in &ranked {
        let pred = &predictions[p];
        let Some(members) = groups.get(&pred.group()) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in members {
            let gt = &ground_truth[g];
            if gt_matched[g] || gt.label() != pred.label() {
                continue;
            }
            let o = pred.overlap(gt);
            if o > sigma && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            is_tp[p] = true;
        }
    }
    MatchResult {
        ranked,
        is_tp,
        gt_matched,
    }
}

/// All-point interpolated average precision of a ranked TP/FP sequence.
///
/// Zero when there is no ground truth.
pub fn average_precision(ranked_outcomes: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(ranked_outcomes.len());
    let mut tp = 0usize;
    for (i, hit) in ranked_outcomes.iter().enumerate() {
        tp += usize::from(*hit);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    ranked_outcomes
        .iter()
        .zip(&precision)
        .filter(|(hit, _)| **hit)
        .map(|(_, p)| p)
        .sum::<f64>()
        / num_gt as f64
}

/// Per-class AP; `None` for classes without ground truth.
pub fn per_class_ap<I: Instance>(predictions: &[I], ground_truth: &[I], matched: &MatchResult, num_classes: usize) -> Vec<Option<f64>> {
    let mut gt_count = vec![0usize; num_classes];
    for g in ground_truth {
        if let Some(c) = gt_count.get_mut(g.label()) {
            *c += 1;
        }
    }
    let mut outcomes: Vec<Vec<bool>> = vec![Vec::new(); num_classes];
    for &p in &matched.ranked {
        if let Some(o) = outcomes.get_mut(predictions[p].label()) {
            o.push(matched.is_tp[p]);
        }
    }
    (0..num_classes)
        .map(|c| (gt_count[c] > 0).then(|| average_precision(&outcomes[c], gt_count[c])))
        .collect()
}

/// Mean over classes that have ground truth; zero if none do.
pub fn mean_ap(per_class: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// ROC points `(fpr, tpr)` as the score threshold sweeps down.
///
/// A prediction counts at threshold `t` when its score is at least `t`.
/// `thresholds` defaults to every distinct prediction score. FPR is the
/// share of all false positives admitted so far.
pub fn roc_points(scores: &[f64], is_tp: &[bool], num_gt: usize, thresholds: Option<&[f64]>) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let total_fp = is_tp.iter().filter(|t| !**t).count();
    let mut cuts: Vec<f64> = match thresholds {
        Some(t) => t.to_vec(),
        None => order.iter().map(|i| scores[*i]).collect(),
    };
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();

    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp, mut next) = (0usize, 0usize, 0usize);
    for t in cuts {
        while next < order.len() && scores[order[next]] >= t {
            if is_tp[order[next]] {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        points.push((rate(fp, total_fp), rate(tp, num_gt)));
    }
    points
}

/// Area under the ROC curve for FPR in `[0, max_fpr]`, divided by
/// `max_fpr`. Without false positives the curve never leaves FPR 0 and the
/// area is the final TPR.
pub fn auc(points: &[(f64, f64)], max_fpr: f64) -> f64 {
    let Some(&(last_fpr, last_tpr)) = points.last() else {
        return 0.0;
    };
    if last_fpr == 0.0 {
        return last_tpr;
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= max_fpr {
            break;
        }
        if x1 <= max_fpr {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0);
            area += (max_fpr - x0) * (y0 + y) / 2.0;
        }
    }
    area / max_fpr
}

/// Pooled-over-classes ROC area at overlap `sigma`.
pub fn auc_at<I: Instance>(predictions: &[I], ground_truth: &[I], sigma: f64, thresholds: Option<&[f64]>, max_fpr: f64) -> f64 {
    let m = match_and_label(predictions, ground_truth, sigma);
    let scores: Vec<f64> = predictions.iter().map(Instance::score).collect();
    auc(&roc_points(&scores, &m.is_tp, ground_truth.len(), thresholds), max_fpr)
}

/// Share of ground-truth tubes covered by a same-label tube with st-IOU of at
/// least `sigma`. Unlabelled tubes cover nothing; with no ground truth the
/// recall is 1.
pub fn recall_track(tubes: &[Tube], ground_truth: &[GroundTruthTube], sigma: f64) -> f64 {
    if ground_truth.is_empty() {
        return 1.0;
    }
    let mut by_video: BTreeMap<&str, Vec<&Tube>> = BTreeMap::new();
    for t in tubes {
        by_video.entry(t.video_id.as_str()).or_default().push(t);
    }
    let covered = ground_truth
        .iter()
        .filter(|g| {
            by_video.get(g.video_id.as_str()).is_some_and(|ts| {
                ts.iter()
                    .any(|t| t.label == Some(g.label) && st_iou(*t, *g) >= sigma)
            })
        })
        .count();
    covered as f64 / ground_truth.len() as f64
}

/// Breakdown of errors at a fixed overlap.
///
/// Every prediction is a true positive, a `false_cls` (it overlaps a ground
/// truth of another label by at least the overlap threshold) or a
/// `false_bbox` (anything else, including duplicates). `false_neg` counts
/// ground truth that no prediction of any label touches with IOU at least
/// the floor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FalseTaxonomy {
    pub true_positives: usize,
    pub false_cls: usize,
    pub false_bbox: usize,
    pub false_neg: usize,
    pub missed: usize,
}

impl FalseTaxonomy {
    pub fn total_false(&self) -> usize {
        self.false_cls + self.false_bbox + self.false_neg
    }
}

pub fn false_taxonomy<I: Instance>(predictions: &[I], ground_truth: &[I], sigma: f64, neg_floor: f64) -> FalseTaxonomy {
    let m = match_and_label(predictions, ground_truth, sigma);
    let groups = group_index(ground_truth);
    let mut out = FalseTaxonomy {
        true_positives: m.true_positives(),
        missed: m.gt_matched.iter().filter(|g| !**g).count(),
        ..FalseTaxonomy::default()
    };
    let mut touched = vec![false; ground_truth.len()];
    for (p, pred) in predictions.iter().enumerate() {
        let members = groups.get(&pred.group()).map_or(&[][..], Vec::as_slice);
        let mut wrong_label_hit = false;
        for &g in members {
            let o = pred.overlap(&ground_truth[g]);
            if o >= neg_floor {
                touched[g] = true;
            }
            if o >= sigma && ground_truth[g].label() != pred.label() {
                wrong_label_hit = true;
            }
        }
        if !m.is_tp[p] {
            if wrong_label_hit {
                out.false_cls += 1;
            } else {
                out.false_bbox += 1;
            }
        }
    }
    out.false_neg = touched.iter().filter(|t| !**t).count();
    out
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Score cut points for the ROC sweep; every distinct score when unset.
    pub score_thresholds: Option<Vec<f64>>,
    pub auc_max_fpr: f64,
    pub recall_track_iou: f64,
    pub taxonomy_iou: f64,
    pub false_neg_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.05, 0.1, 0.2, 0.3, 0.5],
            score_thresholds: None,
            auc_max_fpr: 0.6,
            recall_track_iou: 0.5,
            taxonomy_iou: 0.5,
            false_neg_floor: 0.1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.iou_thresholds.is_empty() || !self.iou_thresholds.iter().all(|v| unit(*v)) {
            return Err(Error::param("iou_thresholds", "need one or more values in (0, 1]"));
        }
        if !unit(self.auc_max_fpr) {
            return Err(Error::param("auc_max_fpr", "must lie in (0, 1]"));
        }
        for (field, v) in [
            ("recall_track_iou", self.recall_track_iou),
            ("taxonomy_iou", self.taxonomy_iou),
            ("false_neg_floor", self.false_neg_floor),
        ] {
            if !unit(v) {
                return Err(Error::param(field, "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ThresholdReport {
    pub iou_threshold: f64,
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalReport {
    pub num_classes: usize,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
    pub frame: Vec<ThresholdReport>,
    pub video: Vec<ThresholdReport>,
    pub recall_track: f64,
    pub taxonomy: FalseTaxonomy,
}

impl EvalReport {
    fn find(rows: &[ThresholdReport], sigma: f64) -> Option<&ThresholdReport> {
        rows.iter().find(|r| (r.iou_threshold - sigma).abs() < 1e-12)
    }

    pub fn video_map(&self, sigma: f64) -> Option<f64> {
        Self::find(&self.video, sigma).map(|r| r.map)
    }

    pub fn frame_map(&self, sigma: f64) -> Option<f64> {
        Self::find(&self.frame, sigma).map(|r| r.map)
    }

    /// Plain-text table: one row per overlap threshold.
    pub fn table(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "{:>8} {:>10} {:>10} {:>10} {:>10}", "sigma", "video-mAP", "video-AUC", "frame-mAP", "frame-AUC");
        for (v, f) in self.video.iter().zip(&self.frame) {
            let _ = writeln!(
                s,
                "{:>8.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
                v.iou_threshold,
                100.0 * v.map,
                100.0 * v.auc,
                100.0 * f.map,
                100.0 * f.auc
            );
        }
        let _ = writeln!(s, "recall-track {:.4}", self.recall_track);
        let t = &self.taxonomy;
        let _ = writeln!(s, "false_cls {} false_bbox {} false_neg {}", t.false_cls, t.false_bbox, t.false_neg);
        s
    }
}

fn threshold_rows<I: Instance>(preds: &[I], gts: &[I], num_classes: usize, cfg: &EvalConfig) -> Vec<ThresholdReport> {
    cfg.iou_thresholds
        .iter()
        .map(|&sigma| {
            let m = match_and_label(preds, gts, sigma);
            let per_class_ap = per_class_ap(preds, gts, &m, num_classes);
            let scores: Vec<f64> = preds.iter().map(Instance::score).collect();
            let points = roc_points(&scores, &m.is_tp, gts.len(), cfg.score_thresholds.as_deref());
            ThresholdReport {
                iou_threshold: sigma,
                map: mean_ap(&per_class_ap),
                per_class_ap,
                auc: auc(&points, cfg.auc_max_fpr),
            }
        })
        .collect()
}

/// Full report for labelled, scored tubes against ground truth.
pub fn evaluate(predictions: &[Tube], ground_truth: &[GroundTruthTube], num_classes: usize, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if let Some(g) = ground_truth.iter().find(|g| g.label >= num_classes) {
        return Err(Error::param("label", alloc::format!("ground-truth class {} out of range", g.label)));
    }
    let tube_preds = tube_instances(predictions)?;
    let tube_gts = gt_tube_instances(ground_truth);
    let frame_preds = frame_instances(predictions)?;
    let frame_gts = gt_frame_instances(ground_truth);
    Ok(EvalReport {
        num_classes,
        num_predictions: predictions.len(),
        num_ground_truth: ground_truth.len(),
        video: threshold_rows(&tube_preds, &tube_gts, num_classes, cfg),
        frame: threshold_rows(&frame_preds, &frame_gts, num_classes, cfg),
        recall_track: recall_track(predictions, ground_truth, cfg.recall_track_iou),
        taxonomy: false_taxonomy(&frame_preds, &frame_gts, cfg.taxonomy_iou, cfg.false_neg_floor),
    })
}

/// Orders instances the way reports list them.
pub fn canonical_cmp(a: &Tube, b: &Tube) -> Ordering {
    a.video_id
        .cmp(&b.video_id)
        .then(a.start().cmp(&b.start()))
        .then(b.tube_score.unwrap_or(0.0).total_cmp(&a.tube_score.unwrap_or(0.0)))
        .then(a.label.cmp(&b.label))
        .then_with(|| a.entries()[0].bbox.coord_cmp(&b.entries()[0].bbox))
}
