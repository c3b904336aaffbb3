//! Tracking by point matching.
//!
//! Every detection seeds a tube unless an earlier tube already absorbed it.
//! A tube grows one frame at a time: points matched out of the current
//! region vote for region proposals on the neighbouring frame, the proposals
//! that hold enough of the matched points and still overlap the current
//! region form the candidate pool, and the best-scoring candidate becomes
//! the next region. When a not-yet-tracked detection of the same class
//! overlaps that candidate, the detection replaces it and leaves the pool.
//! Growth runs forward to the last frame, then backward to the first.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{iou, rank_cmp, BoundingBox, Point};
use crate::model::{ClassId, Detection, Proposal, Source, Tube};
use crate::{Error, Result};

/// Point correspondences between two adjacent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatchSet {
    pub from_frame: usize,
    pub to_frame: usize,
    pub pairs: Vec<(Point, Point)>,
}

impl PointMatchSet {
    pub fn new(from_frame: usize, to_frame: usize, pairs: Vec<(Point, Point)>) -> Result<Self> {
        if from_frame.abs_diff(to_frame) != 1 {
            return Err(Error::param("to_frame", "matches must link adjacent frames"));
        }
        if pairs
            .iter()
            .any(|(a, b)| !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()))
        {
            return Err(Error::param("pairs", "match coordinates must be finite"));
        }
        Ok(Self {
            from_frame,
            to_frame,
            pairs,
        })
    }

    pub fn empty(from_frame: usize, to_frame: usize) -> Self {
        Self {
            from_frame,
            to_frame,
            pairs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Produces correspondences for the points of a region on `from_frame`.
///
/// Implementations must only return pairs whose from-point lies inside
/// `region`.
pub trait PointMatcher {
    fn match_points(&self, from_frame: usize, to_frame: usize, region: &BoundingBox) -> Result<PointMatchSet>;
}

impl<M: PointMatcher + ?Sized> PointMatcher for &M {
    fn match_points(&self, from_frame: usize, to_frame: usize, region: &BoundingBox) -> Result<PointMatchSet> {
        (**self).match_points(from_frame, to_frame, region)
    }
}

/// Precomputed frame-to-frame correspondences for a whole video.
///
/// Stores forward pairs `t -> t+1`; backward queries reuse them reversed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseMatchTable {
    forward: BTreeMap<usize, Vec<(Point, Point)>>,
}

impl DenseMatchTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair from frame `from_frame` to frame `from_frame + 1`.
    pub fn insert(&mut self, from_frame: usize, from: Point, to: Point) {
        self.forward.entry(from_frame).or_default().push((from, to));
    }

    pub fn forward_pairs(&self) -> impl Iterator<Item = (usize, &(Point, Point))> {
        self.forward
            .iter()
            .flat_map(|(f, pairs)| pairs.iter().map(move |p| (*f, p)))
    }
}

impl PointMatcher for DenseMatchTable {
    fn match_points(&self, from_frame: usize, to_frame: usize, region: &BoundingBox) -> Result<PointMatchSet> {
        let pairs = if to_frame == from_frame + 1 {
            self.forward
                .get(&from_frame)
                .map(|v| v.iter().filter(|(a, _)| region.contains(*a)).copied().collect())
                .unwrap_or_default()
        } else if to_frame + 1 == from_frame {
            self.forward
                .get(&to_frame)
                .map(|v| {
                    v.iter()
                        .filter(|(_, b)| region.contains(*b))
                        .map(|(a, b)| (*b, *a))
                        .collect()
                })
                .unwrap_or_default()
        } else {
            return Err(Error::param("to_frame", "matches must link adjacent frames"));
        };
        PointMatchSet::new(from_frame, to_frame, pairs)
    }
}

/// Class score of a candidate region, `S_cnn(class, region)`.
pub trait RegionScorer {
    fn score(&self, class: ClassId, proposal: &Proposal) -> Result<f64>;
}

impl<F> RegionScorer for F
where
    F: Fn(ClassId, &Proposal) -> Result<f64>,
{
    fn score(&self, class: ClassId, proposal: &Proposal) -> Result<f64> {
        self(class, proposal)
    }
}

/// Reads the detector's per-class proposal scores; falls back to
/// objectness for proposals that carry none.
#[derive(Debug, Clone, Copy, Default)]
pub struct DetectorScores;

impl RegionScorer for DetectorScores {
    fn score(&self, class: ClassId, proposal: &Proposal) -> Result<f64> {
        match &proposal.class_scores {
            Some(s) => s.get(class).copied().ok_or_else(|| Error::Scorer("proposal has no score for class".to_string())),
            None => Ok(proposal.objectness),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct TrackerConfig {
    /// Minimum fraction of matched points a proposal must contain.
    pub min_match_ratio: f64,
    /// Minimum IOU between a proposal and the current region.
    pub min_prev_overlap: f64,
    /// IOU at which an untracked detection replaces the predicted region.
    pub consume_overlap: f64,
    /// Longest run of consecutive predicted (non-detected) regions.
    pub max_predicted_run: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            min_match_ratio: 0.5,
            min_prev_overlap: 0.2,
            consume_overlap: 0.5,
            max_predicted_run: 8,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_match_ratio", self.min_match_ratio),
            ("min_prev_overlap", self.min_prev_overlap),
            ("consume_overlap", self.consume_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        if self.max_predicted_run == 0 {
            return Err(Error::param("max_predicted_run", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub id: usize,
    pub detection: Detection,
}

/// Detections of one video that no tube has absorbed yet.
#[derive(Debug, Clone, Default)]
pub struct UntrackedPool {
    frames: BTreeMap<usize, Vec<PoolEntry>>,
    seed_order: Vec<(usize, usize)>,
    cursor: usize,
    len: usize,
}

impl UntrackedPool {
    /// Builds the pool; ids follow input order.
    pub fn new(detections: impl IntoIterator<Item = Detection>) -> Self {
        let mut frames: BTreeMap<usize, Vec<PoolEntry>> = BTreeMap::new();
        let mut all = Vec::new();
        for (id, d) in detections.into_iter().enumerate() {
            all.push((d.top_class().1, d.bbox, d.frame_index, id));
            frames.entry(d.frame_index).or_default().push(PoolEntry { id, detection: d });
        }
        all.sort_by(|a, b| {
            rank_cmp(a.0, &a.1, b.0, &b.1)
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let len = all.len();
        Self {
            frames,
            seed_order: all.into_iter().map(|(_, _, f, id)| (f, id)).collect(),
            cursor: 0,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn at_frame(&self, frame: usize) -> &[PoolEntry] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    fn remove(&mut self, frame: usize, id: usize) -> Option<PoolEntry> {
        let v = self.frames.get_mut(&frame)?;
        let pos = v.iter().position(|e| e.id == id)?;
        self.len -= 1;
        Some(v.remove(pos))
    }

    /// Removes and returns the best remaining detection.
    pub fn pop_seed(&mut self) -> Option<PoolEntry> {
        while self.cursor < self.seed_order.len() {
            let (frame, id) = self.seed_order[self.cursor];
            self.cursor += 1;
            if let Some(e) = self.remove(frame, id) {
                return Some(e);
            }
        }
        None
    }

    /// Removes the detection of `class` on `frame` that overlaps `bbox` the
    /// most, provided the overlap reaches `min_iou`.
    pub fn take_overlapping(&mut self, frame: usize, class: ClassId, bbox: &BoundingBox, min_iou: f64) -> Option<PoolEntry> {
        let best = self
            .at_frame(frame)
            .iter()
            .filter(|e| e.detection.top_class().0 == class)
            .map(|e| (iou(&e.detection.bbox, bbox), e))
            .filter(|(o, _)| *o >= min_iou)
            .max_by(|(oa, a), (ob, b)| {
                oa.total_cmp(ob).then_with(|| {
                    rank_cmp(
                        a.detection.score(class),
                        &a.detection.bbox,
                        b.detection.score(class),
                        &b.detection.bbox,
                    )
                    .then(a.id.cmp(&b.id))
                    .reverse()
                })
            })
            .map(|(_, e)| e.id)?;
        self.remove(frame, best)
    }

    /// Puts an entry back (used when a tube is abandoned).
    pub fn restore(&mut self, entry: PoolEntry) {
        let v = self.frames.entry(entry.detection.frame_index).or_default();
        let pos = v.iter().position(|e| e.id > entry.id).unwrap_or(v.len());
        v.insert(pos, entry);
        self.len += 1;
    }
}

/// Outcome of one propagation step.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Continue(Detection),
    Terminate,
}

/// Fraction of matched to-points inside the proposal box; 0 without matches.
pub fn match_ratio(proposal: &Proposal, matches: &PointMatchSet) -> f64 {
    debug_assert_eq!(matches.to_frame, proposal.frame_index);
    if matches.pairs.is_empty() {
        return 0.0;
    }
    let inside = matches
        .pairs
        .iter()
        .filter(|(_, to)| proposal.bbox.contains(*to))
        .count();
    inside as f64 / matches.pairs.len() as f64
}

fn check_proposal_frames(proposals: &[Proposal], frame: usize) -> Result<()> {
    match proposals.iter().find(|p| p.frame_index != frame) {
        Some(p) => Err(Error::FrameMismatch {
            expected: frame,
            found: p.frame_index,
        }),
        None => Ok(()),
    }
}

/// Picks the best-scoring candidate and resolves it against the pool.
fn choose_and_resolve<S: RegionScorer + ?Sized>(
    candidates: &[&Proposal],
    region: &Detection,
    class: ClassId,
    to_frame: usize,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
) -> Result<(Step, Option<PoolEntry>)> {
    let mut best: Option<(f64, &Proposal)> = None;
    for &p in candidates {
        let s = scorer.score(class, p)?;
        let better = match best {
            None => true,
            Some((bs, bp)) => rank_cmp(s, &p.bbox, bs, &bp.bbox) == Ordering::Less,
        };
        if better {
            best = Some((s, p));
        }
    }
    let Some((_, chosen)) = best else {
        return Ok((Step::Terminate, None));
    };

    if let Some(hit) = pool.take_overlapping(to_frame, class, &chosen.bbox, cfg.consume_overlap) {
        let d = &hit.detection;
        let next = Detection::new(to_frame, d.bbox, d.class_scores.clone(), Source::Merged);
        return Ok((Step::Continue(next), Some(hit)));
    }
    let scores = (0..region.class_scores.len())
        .map(|c| scorer.score(c, chosen))
        .collect::<Result<Vec<f64>>>()?;
    Ok((
        Step::Continue(Detection::new(to_frame, chosen.bbox, scores, Source::Tracked)),
        None,
    ))
}

/// Propagates `region` onto the frame of `matches`.
///
/// The untracked detections of the target frame are read from `pool`.
pub fn track_step<S: RegionScorer + ?Sized>(
    region: &Detection,
    class: ClassId,
    proposals_next: &[Proposal],
    matches: &PointMatchSet,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
) -> Result<Step> {
    point_match_step(region, class, proposals_next, matches, scorer, cfg, pool).map(|(s, _)| s)
}

fn point_match_step<S: RegionScorer + ?Sized>(
    region: &Detection,
    class: ClassId,
    proposals_next: &[Proposal],
    matches: &PointMatchSet,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
) -> Result<(Step, Option<PoolEntry>)> {
    if matches.from_frame != region.frame_index {
        return Err(Error::FrameMismatch {
            expected: region.frame_index,
            found: matches.from_frame,
        });
    }
    check_proposal_frames(proposals_next, matches.to_frame)?;
    if matches.is_empty() {
        return Ok((Step::Terminate, None));
    }
    let candidates: Vec<&Proposal> = proposals_next
        .iter()
        .filter(|p| match_ratio(p, matches) >= cfg.min_match_ratio && iou(&p.bbox, &region.bbox) >= cfg.min_prev_overlap)
        .collect();
    if candidates.is_empty() {
        return Ok((Step::Terminate, None));
    }
    choose_and_resolve(&candidates, region, class, matches.to_frame, scorer, cfg, pool)
}

/// Baseline step: the candidates are the proposals whose centre lies within
/// `radius` pixels of the current region's centre.
#[allow(clippy::too_many_arguments)]
pub fn neighborhood_step<S: RegionScorer + ?Sized>(
    region: &Detection,
    class: ClassId,
    to_frame: usize,
    proposals_next: &[Proposal],
    radius: f64,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
) -> Result<Step> {
    neighbor_step(region, class, to_frame, proposals_next, radius, scorer, cfg, pool).map(|(s, _)| s)
}

#[allow(clippy::too_many_arguments)]
fn neighbor_step<S: RegionScorer + ?Sized>(
    region: &Detection,
    class: ClassId,
    to_frame: usize,
    proposals_next: &[Proposal],
    radius: f64,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
) -> Result<(Step, Option<PoolEntry>)> {
    check_proposal_frames(proposals_next, to_frame)?;
    let c = region.bbox.center();
    let candidates: Vec<&Proposal> = proposals_next
        .iter()
        .filter(|p| {
            let pc = p.bbox.center();
            libm::hypot(pc.x - c.x, pc.y - c.y) <= radius
        })
        .collect();
    choose_and_resolve(&candidates, region, class, to_frame, scorer, cfg, pool)
}

/// Detections and proposals of one video, bucketed by frame.
#[derive(Debug, Clone, Default)]
pub struct VideoRegions {
    pub video_id: String,
    pub num_frames: usize,
    pub detections: Vec<Detection>,
    proposals: Vec<Vec<Proposal>>,
}

impl VideoRegions {
    pub fn new(video_id: impl Into<String>, num_frames: usize, detections: Vec<Detection>, proposals: Vec<Proposal>) -> Result<Self> {
        let mut buckets: Vec<Vec<Proposal>> = (0..num_frames).map(|_| Vec::new()).collect();
        for d in &detections {
            if d.frame_index >= num_frames {
                return Err(Error::param("frame_index", "detection beyond the last frame"));
            }
        }
        for p in proposals {
            let f = p.frame_index;
            buckets
                .get_mut(f)
                .ok_or_else(|| Error::param("frame_index", "proposal beyond the last frame"))?
                .push(p);
        }
        Ok(Self {
            video_id: video_id.into(),
            num_frames,
            detections,
            proposals: buckets,
        })
    }

    pub fn proposals_at(&self, frame: usize) -> &[Proposal] {
        self.proposals.get(frame).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A seed whose tube could not be built.
#[derive(Debug, Clone, PartialEq)]
pub struct AbortedSeed {
    pub seed: Detection,
    pub error: Error,
}

#[derive(Debug, Clone, Default)]
pub struct TrackOutcome {
    pub tubes: Vec<Tube>,
    pub aborted: Vec<AbortedSeed>,
}

/// How a tube is propagated from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Association {
    PointMatching,
    /// Neighbourhood-constrained baseline with a centre search radius in pixels.
    Neighborhood { radius: f64 },
}

/// Builds candidate tubes for one video by tracking by point matching.
pub fn build_tubes<M: PointMatcher + ?Sized, S: RegionScorer + ?Sized>(
    video: &VideoRegions,
    matcher: &M,
    scorer: &S,
    cfg: &TrackerConfig,
) -> Result<TrackOutcome> {
    build_tubes_with(video, Association::PointMatching, matcher, scorer, cfg)
}

pub fn build_tubes_with<M: PointMatcher + ?Sized, S: RegionScorer + ?Sized>(
    video: &VideoRegions,
    association: Association,
    matcher: &M,
    scorer: &S,
    cfg: &TrackerConfig,
) -> Result<TrackOutcome> {
    cfg.validate()?;
    let mut pool = UntrackedPool::new(video.detections.iter().cloned());
    let mut outcome = TrackOutcome::default();

    while let Some(seed) = pool.pop_seed() {
        let class = seed.detection.top_class().0;
        let mut consumed: Vec<PoolEntry> = Vec::new();
        let grown = grow(video, association, matcher, scorer, cfg, &mut pool, &seed.detection, class, true, &mut consumed)
            .and_then(|fwd| {
                grow(video, association, matcher, scorer, cfg, &mut pool, &seed.detection, class, false, &mut consumed)
                    .map(|bwd| (fwd, bwd))
            });
        match grown {
            Ok((forward, mut backward)) => {
                backward.reverse();
                backward.push(seed.detection);
                backward.extend(forward);
                let tube = Tube::new(video.video_id.clone(), backward)?.with_label(class);
                outcome.tubes.push(tube);
            }
            Err(error) => {
                for e in consumed {
                    pool.restore(e);
                }
                outcome.aborted.push(AbortedSeed {
                    seed: seed.detection,
                    error,
                });
            }
        }
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn grow<M: PointMatcher + ?Sized, S: RegionScorer + ?Sized>(
    video: &VideoRegions,
    association: Association,
    matcher: &M,
    scorer: &S,
    cfg: &TrackerConfig,
    pool: &mut UntrackedPool,
    seed: &Detection,
    class: ClassId,
    forward: bool,
    consumed: &mut Vec<PoolEntry>,
) -> Result<Vec<Detection>> {
    let mut out: Vec<Detection> = Vec::new();
    let mut predicted_run = 0usize;
    let mut current = seed.clone();
    loop {
        let from = current.frame_index;
        let to = if forward {
            if from + 1 >= video.num_frames {
                break;
            }
            from + 1
        } else {
            match from.checked_sub(1) {
                Some(t) => t,
                None => break,
            }
        };
        let proposals = video.proposals_at(to);
        let (step, taken) = match association {
            Association::PointMatching => {
                let matches = matcher.match_points(from, to, &current.bbox)?;
                point_match_step(&current, class, proposals, &matches, scorer, cfg, pool)?
            }
            Association::Neighborhood { radius } => {
                neighbor_step(&current, class, to, proposals, radius, scorer, cfg, pool)?
            }
        };
        consumed.extend(taken);
        match step {
            Step::Terminate => break,
            Step::Continue(next) => {
                if next.source == Source::Tracked {
                    predicted_run += 1;
                    if predicted_run > cfg.max_predicted_run {
                        break;
                    }
                } else {
                    predicted_run = 0;
                }
                out.push(next.clone());
                current = next;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn matches_into(from: usize, to: usize, pts: &[(f64, f64)]) -> PointMatchSet {
        PointMatchSet::new(
            from,
            to,
            pts.iter().map(|&(x, y)| (Point::new(x, y), Point::new(x, y))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn match_ratio_examples() {
        let p = Proposal::new(1, bb(0.0, 0.0, 10.0, 10.0), 1.0);
        let inside: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + i as f64 * 0.5, 5.0)).collect();
        assert_eq!(match_ratio(&p, &matches_into(0, 1, &inside)), 1.0);
        assert_eq!(match_ratio(&p, &matches_into(0, 1, &[(20.0, 20.0), (30.0, 1.0)])), 0.0);
        let m = matches_into(0, 1, &[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (15.0, 3.0)]);
        assert_eq!(match_ratio(&p, &m), 0.75);
        assert_eq!(match_ratio(&p, &PointMatchSet::empty(0, 1)), 0.0);
    }

    #[test]
    fn rejects_non_adjacent_matches() {
        assert!(PointMatchSet::new(0, 2, vec![]).is_err());
        assert!(PointMatchSet::new(3, 2, vec![]).is_ok());
    }

    fn region() -> Detection {
        Detection::new(0, bb(0.0, 0.0, 10.0, 10.0), vec![0.9, 0.1], Source::Static)
    }

    #[test]
    fn terminates_without_evidence() {
        let mut pool = UntrackedPool::new(vec![]);
        let cfg = TrackerConfig::default();
        let props = vec![Proposal::new(1, bb(0.0, 0.0, 10.0, 10.0), 1.0)];
        let step = track_step(&region(), 0, &props, &PointMatchSet::empty(0, 1), &DetectorScores, &cfg, &mut pool).unwrap();
        assert_eq!(step, Step::Terminate);
        let m = matches_into(0, 1, &[(5.0, 5.0)]);
        let step = track_step(&region(), 0, &[], &m, &DetectorScores, &cfg, &mut pool).unwrap();
        assert_eq!(step, Step::Terminate);
    }

    #[test]
    fn consumes_overlapping_detection() {
        let cfg = TrackerConfig::default();
        let next_det = Detection::new(1, bb(1.0, 0.0, 11.0, 10.0), vec![0.8, 0.2], Source::Merged);
        let wrong_class = Detection::new(1, bb(1.0, 0.0, 11.0, 10.0), vec![0.1, 0.9], Source::Merged);
        let mut pool = UntrackedPool::new(vec![next_det.clone(), wrong_class]);
        let props = vec![Proposal::new(1, bb(1.0, 0.0, 11.0, 10.0), 1.0)];
        let m = matches_into(0, 1, &[(5.0, 5.0), (6.0, 6.0)]);
        let step = track_step(&region(), 0, &props, &m, &DetectorScores, &cfg, &mut pool).unwrap();
        match step {
            Step::Continue(d) => {
                assert_eq!(d.source, Source::Merged);
                assert_eq!(d.bbox, next_det.bbox);
                assert_eq!(d.class_scores, next_det.class_scores);
            }
            Step::Terminate => panic!("expected continuation"),
        }
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.at_frame(1)[0].detection.top_class().0, 1);
    }

    #[test]
    fn tracked_region_uses_scorer_for_all_classes() {
        let cfg = TrackerConfig::default();
        let mut pool = UntrackedPool::new(vec![]);
        let props = vec![
            Proposal::new(1, bb(0.0, 0.0, 10.0, 10.0), 0.3).with_class_scores(vec![0.4, 0.1]),
            Proposal::new(1, bb(1.0, 1.0, 9.0, 9.0), 0.9).with_class_scores(vec![0.7, 0.2]),
        ];
        let m = matches_into(0, 1, &[(5.0, 5.0)]);
        let step = track_step(&region(), 0, &props, &m, &DetectorScores, &cfg, &mut pool).unwrap();
        assert_eq!(
            step,
            Step::Continue(Detection::new(1, bb(1.0, 1.0, 9.0, 9.0), vec![0.7, 0.2], Source::Tracked))
        );
    }

    #[test]
    fn scorer_failure_propagates() {
        let cfg = TrackerConfig::default();
        let mut pool = UntrackedPool::new(vec![]);
        let props = vec![Proposal::new(1, bb(0.0, 0.0, 10.0, 10.0), 0.3)];
        let m = matches_into(0, 1, &[(5.0, 5.0)]);
        let failing = |_: ClassId, _: &Proposal| -> Result<f64> { Err(Error::Scorer("offline".into())) };
        assert!(track_step(&region(), 0, &props, &m, &failing, &cfg, &mut pool).is_err());
    }

    #[test]
    fn pool_pops_best_first_and_restores() {
        let a = Detection::new(0, bb(0.0, 0.0, 1.0, 1.0), vec![0.5], Source::Merged);
        let b = Detection::new(2, bb(0.0, 0.0, 1.0, 1.0), vec![0.9], Source::Merged);
        let mut pool = UntrackedPool::new(vec![a.clone(), b.clone()]);
        let first = pool.pop_seed().unwrap();
        assert_eq!(first.detection, b);
        let second = pool.pop_seed().unwrap();
        assert_eq!(second.detection, a);
        assert!(pool.is_empty());
        pool.restore(second);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn dense_table_answers_both_directions() {
        let mut t = DenseMatchTable::new();
        t.insert(0, Point::new(5.0, 5.0), Point::new(25.0, 5.0));
        t.insert(0, Point::new(50.0, 50.0), Point::new(50.0, 50.0));
        let fwd = t.match_points(0, 1, &bb(0.0, 0.0, 10.0, 10.0)).unwrap();
        assert_eq!(fwd.pairs, vec![(Point::new(5.0, 5.0), Point::new(25.0, 5.0))]);
        let bwd = t.match_points(1, 0, &bb(20.0, 0.0, 30.0, 10.0)).unwrap();
        assert_eq!(bwd.pairs, vec![(Point::new(25.0, 5.0), Point::new(5.0, 5.0))]);
        assert!(t.match_points(0, 1, &bb(100.0, 100.0, 110.0, 110.0)).unwrap().is_empty());
    }

    #[test]
    fn zero_detections_yield_zero_tubes() {
        let video = VideoRegions::new("v", 10, vec![], vec![]).unwrap();
        let out = build_tubes(&video, &DenseMatchTable::new(), &DetectorScores, &TrackerConfig::default()).unwrap();
        assert!(out.tubes.is_empty());
    }
}
