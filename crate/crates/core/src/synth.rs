//! Seeded synthetic scenarios.
//!
//! The frame is split into a one-cell margin ring and a central stage (cells
//! of a 7x7 layout). The stage is cut into one horizontal band per class and
//! every actor stays inside the band of its class, so actors never overlap.
//! Fabricated drifted tubes live in the margin ring, where no actor goes.
//!
//! Every random draw comes from a ChaCha8 stream seeded from the scenario
//! seed mixed with a purpose tag and an index, so each video can be generated
//! independently and in any order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::footprint::{aggregate_cells, cell_accuracies, CellLayout, FeatureGridSequence, GaussianMixture};
use crate::fusion::FlowMagnitudeGrid;
use crate::geometry::{iou, BoundingBox, FrameInterval, Point};
use crate::linalg::Matrix;
use crate::model::{ClassId, Detection, GroundTruthTube, Proposal, Source, Tube};
use crate::pipeline::VideoData;
use crate::scoring::{Activation, RecurrentScorerWeights, RegionFeatureField};
use crate::tracker::DenseMatchTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case", tag = "kind"))]
pub enum MotionModel {
    /// Horizontal motion at constant speed, bouncing off the stage edges.
    Linear,
    /// Horizontal bounce plus a vertical sine inside the band.
    Sinusoidal { amplitude: f64, period: f64 },
    /// Constant speed with a heading that wanders by `turn_sigma` radians
    /// per frame.
    RandomWalk { turn_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct ActorConfig {
    pub width: f64,
    pub height: f64,
    /// Pixels per frame.
    pub speed: f64,
    pub motion: MotionModel,
    /// Shortest presence as a fraction of the video length.
    pub min_presence: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            width: 64.0,
            height: 64.0,
            speed: 4.0,
            motion: MotionModel::Linear,
            min_presence: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct NoiseConfig {
    /// Std-dev of each detection and tight-proposal coordinate, pixels.
    pub box_jitter: f64,
    /// Probability that an actor goes undetected on a frame, in every stream.
    pub miss_rate: f64,
    /// Per frame and stream probability of one spurious detection.
    pub false_positive_rate: f64,
    /// Per detection probability of a wrong top class.
    pub label_confusion_rate: f64,
    /// Std-dev of matched point positions, pixels.
    pub match_noise: f64,
    /// Probability that the tight proposal of an actor exists on a frame.
    pub proposal_recall: f64,
    /// Extra proposals per actor and frame with coarse localization.
    pub loose_proposals: usize,
    /// Coordinate std-dev of loose proposals, as a fraction of actor size.
    pub loose_jitter: f64,
    /// Random actor-sized proposals per frame.
    pub background_proposals: usize,
    /// True-class detection scores are drawn from `[1 - score_noise, 1]`.
    pub score_noise: f64,
    /// Std-dev of background flow magnitude.
    pub flow_noise: f64,
    /// Std-dev added to region features.
    pub feature_noise: f64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            box_jitter: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            label_confusion_rate: 0.0,
            match_noise: 0.0,
            proposal_recall: 1.0,
            loose_proposals: 0,
            loose_jitter: 0.0,
            background_proposals: 0,
            score_noise: 0.0,
            flow_noise: 0.0,
            feature_noise: 0.0,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            box_jitter: 3.0,
            miss_rate: 0.2,
            false_positive_rate: 0.0,
            label_confusion_rate: 0.0,
            match_noise: 1.0,
            proposal_recall: 0.9,
            loose_proposals: 3,
            loose_jitter: 0.1,
            background_proposals: 2,
            score_noise: 0.2,
            flow_noise: 0.2,
            feature_noise: 0.2,
        }
    }
}

/// Synthetic convolutional feature grids used to learn footprint accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct FootprintSynthConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub clips_per_sample: usize,
    pub grid_side: usize,
    pub cell_side: usize,
    pub depth: usize,
    /// Codebook size. With a single Gaussian every class blob sits off the
    /// component mean and shows up in the mean gradients; a component
    /// centred on a blob would make that blob's gradients zero-mean.
    pub components: usize,
    pub blob_gain: f64,
    pub noise: f64,
}

impl Default for FootprintSynthConfig {
    fn default() -> Self {
        Self {
            train_per_class: 12,
            test_per_class: 20,
            clips_per_sample: 8,
            grid_side: 14,
            cell_side: 2,
            depth: 8,
            components: 1,
            blob_gain: 3.0,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields, default))]
pub struct ScenarioConfig {
    pub seed: u64,
    pub video_count: usize,
    pub frames_per_video: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub num_classes: usize,
    /// At most `num_classes`; each actor takes a distinct class.
    pub actors_per_video: usize,
    pub actor: ActorConfig,
    pub noise: NoiseConfig,
    /// Drifted tubes to fabricate, as a fraction of the ground-truth tubes.
    pub drift_rate: f64,
    /// Matched points per actor are a `n x n` grid.
    pub actor_point_grid: usize,
    /// Spacing of static background points, pixels.
    pub background_point_stride: f64,
    pub flow_cell_size: f64,
    pub feature_gain: f64,
    pub footprint: FootprintSynthConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            video_count: 20,
            frames_per_video: 80,
            frame_width: 448.0,
            frame_height: 336.0,
            num_classes: 3,
            actors_per_video: 3,
            actor: ActorConfig::default(),
            noise: NoiseConfig::default(),
            drift_rate: 0.0,
            actor_point_grid: 6,
            background_point_stride: 32.0,
            flow_cell_size: 16.0,
            feature_gain: 1.0,
            footprint: FootprintSynthConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// A scenario whose detections are exactly the ground truth.
    pub fn noiseless() -> Self {
        Self {
            noise: NoiseConfig::noiseless(),
            ..Self::default()
        }
    }

    pub fn frame_size(&self) -> (f64, f64) {
        (self.frame_width, self.frame_height)
    }

    fn margin(&self) -> (f64, f64) {
        (self.frame_width / 7.0, self.frame_height / 7.0)
    }

    /// Vertical band `[top, bottom)` of a class inside the stage.
    pub fn band(&self, class: ClassId) -> (f64, f64) {
        let (_, my) = self.margin();
        let h = (self.frame_height - 2.0 * my) / self.num_classes as f64;
        (my + class as f64 * h, my + (class + 1) as f64 * h)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let n = &self.noise;
        for (field, v) in [
            ("noise.miss_rate", n.miss_rate),
            ("noise.false_positive_rate", n.false_positive_rate),
            ("noise.label_confusion_rate", n.label_confusion_rate),
            ("noise.proposal_recall", n.proposal_recall),
            ("noise.score_noise", n.score_noise),
            ("drift_rate", self.drift_rate),
            ("actor.min_presence", self.actor.min_presence),
        ] {
            if !unit(v) {
                return Err(Error::param(field, "must lie in [0, 1]"));
            }
        }
        for (field, v) in [
            ("noise.box_jitter", n.box_jitter),
            ("noise.match_noise", n.match_noise),
            ("noise.loose_jitter", n.loose_jitter),
            ("noise.flow_noise", n.flow_noise),
            ("noise.feature_noise", n.feature_noise),
            ("actor.speed", self.actor.speed),
            ("feature_gain", self.feature_gain),
            ("footprint.noise", self.footprint.noise),
            ("footprint.blob_gain", self.footprint.blob_gain),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(field, "must be finite and non-negative"));
            }
        }
        if self.num_classes == 0 || self.actors_per_video > self.num_classes {
            return Err(Error::param("actors_per_video", "need 1 <= num_classes and actors_per_video <= num_classes"));
        }
        if self.frames_per_video < 2 {
            return Err(Error::param("frames_per_video", "need at least two frames"));
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return Err(Error::param("frame_width", "frame size must be positive"));
        }
        let (mx, _) = self.margin();
        let (top, bottom) = self.band(0);
        if !(self.actor.width > 0.0 && self.actor.width < self.frame_width - 2.0 * mx) {
            return Err(Error::param("actor.width", "actor must fit the stage"));
        }
        if !(self.actor.height > 0.0 && self.actor.height <= bottom - top) {
            return Err(Error::param("actor.height", format!("actor must fit a class band of {:.1} px", bottom - top)));
        }
        if self.actor_point_grid == 0 {
            return Err(Error::param("actor_point_grid", "must be positive"));
        }
        for (field, v) in [
            ("background_point_stride", self.background_point_stride),
            ("flow_cell_size", self.flow_cell_size),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(field, "must be positive"));
            }
        }
        match self.actor.motion {
            MotionModel::Sinusoidal { amplitude, period } if !(amplitude >= 0.0 && period > 0.0) => {
                return Err(Error::param("actor.motion", "sinusoid needs amplitude >= 0 and period > 0"));
            }
            MotionModel::RandomWalk { turn_sigma } if !(turn_sigma >= 0.0) => {
                return Err(Error::param("actor.motion", "turn_sigma must be non-negative"));
            }
            _ => {}
        }
        let f = &self.footprint;
        CellLayout::new(f.grid_side, f.cell_side)?;
        if f.train_per_class == 0 || f.test_per_class == 0 || f.clips_per_sample == 0 || f.components == 0 {
            return Err(Error::param("footprint", "sample counts and components must be positive"));
        }
        if f.depth < self.num_classes {
            return Err(Error::param("footprint.depth", "need one descriptor dimension per class"));
        }
        Ok(())
    }
}

/// Everything generated for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub videos: Vec<VideoData>,
    /// Footprint accuracies `alpha[class][cell]` over a 7x7 map.
    pub footprint_alpha: Vec<Vec<f64>>,
    pub scorer_weights: RecurrentScorerWeights,
}

impl ScenarioBundle {
    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthTube> {
        self.videos.iter().flat_map(|v| v.ground_truth.iter().cloned()).collect()
    }

    pub fn drifted(&self) -> Vec<Tube> {
        self.videos.iter().flat_map(|v| v.drifted.iter().cloned()).collect()
    }
}

const STREAM_VIDEO: u64 = 0x5649_4445_4f00_0000;
const STREAM_FOOTPRINT: u64 = 0x464f_4f54_0000_0000;
const STREAM_DRIFT: u64 = 0x4452_4946_5400_0000;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the `index`-th item of a stream, independent of any other.
pub fn derived_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ stream).wrapping_add(index)))
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
}

/// Adds independent noise to each coordinate, keeping at least one pixel of
/// extent.
fn jitter_box(rng: &mut ChaCha8Rng, b: &BoundingBox, sx: f64, sy: f64) -> BoundingBox {
    if sx == 0.0 && sy == 0.0 {
        return *b;
    }
    let mut c = [
        b.x_min() + normal(rng, sx),
        b.y_min() + normal(rng, sy),
        b.x_max() + normal(rng, sx),
        b.y_max() + normal(rng, sy),
    ];
    for (lo, hi) in [(0, 2), (1, 3)] {
        if c[hi] - c[lo] < 1.0 {
            let mid = (c[hi] + c[lo]) / 2.0;
            c[lo] = mid - 0.5;
            c[hi] = mid + 0.5;
        }
    }
    BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap_or(*b)
}

/// One actor's ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorTrack {
    pub class: ClassId,
    pub presence: FrameInterval,
    pub boxes: Vec<BoundingBox>,
}

impl ActorTrack {
    pub fn box_at(&self, frame: usize) -> Option<&BoundingBox> {
        frame.checked_sub(self.presence.start()).and_then(|i| self.boxes.get(i))
    }
}

fn reflect(v: f64, lo: f64, hi: f64, dir: &mut f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let mut v = v;
    for _ in 0..8 {
        if v > hi {
            v = 2.0 * hi - v;
            *dir = -*dir;
        } else if v < lo {
            v = 2.0 * lo - v;
            *dir = -*dir;
        } else {
            break;
        }
    }
    v.clamp(lo, hi)
}

fn actor_tracks(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<ActorTrack> {
    let n = cfg.frames_per_video;
    let (mx, _) = cfg.margin();
    let a = &cfg.actor;
    let mut classes: Vec<ClassId> = (0..cfg.num_classes).collect();
    for i in (1..classes.len()).rev() {
        let j = rng.random_range(0..=i);
        classes.swap(i, j);
    }
    classes.truncate(cfg.actors_per_video);
    classes.sort_unstable();

    let mut tracks = Vec::with_capacity(classes.len());
    for class in classes {
        let min_len = (libm::ceil(a.min_presence * n as f64) as usize).clamp(2, n);
        let len = rng.random_range(min_len..=n);
        let start = rng.random_range(0..=n - len);
        let (top, bottom) = cfg.band(class);
        let (x_lo, x_hi) = (mx, cfg.frame_width - mx - a.width);
        let (y_lo, y_hi) = (top, bottom - a.height);
        let mut x = rng.random_range(x_lo..=x_hi.max(x_lo));
        let y_mid = (y_lo + y_hi) / 2.0;
        let mut y = y_mid;
        let mut dir_x = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut heading = rng.random_range(0.0..2.0 * PI);
        let phase = rng.random_range(0.0..2.0 * PI);
        let mut boxes = Vec::with_capacity(len);
        for k in 0..len {
            if k > 0 {
                match a.motion {
                    MotionModel::Linear => {
                        x = reflect(x + dir_x * a.speed, x_lo, x_hi, &mut dir_x);
                    }
                    MotionModel::Sinusoidal { amplitude, period } => {
                        x = reflect(x + dir_x * a.speed, x_lo, x_hi, &mut dir_x);
                        let amp = amplitude.min((y_hi - y_lo) / 2.0);
                        y = y_mid + amp * libm::sin(2.0 * PI * k as f64 / period + phase);
                    }
                    MotionModel::RandomWalk { turn_sigma } => {
                        heading += normal(rng, turn_sigma);
                        let mut dx = libm::cos(heading);
                        let mut dy = libm::sin(heading);
                        x = reflect(x + dx * a.speed, x_lo, x_hi, &mut dx);
                        y = reflect(y + dy * a.speed, y_lo, y_hi, &mut dy);
                        heading = libm::atan2(dy, dx);
                    }
                }
            }
            boxes.push(BoundingBox::new(x, y, x + a.width, y + a.height).expect("actor box has positive size"));
        }
        let presence = FrameInterval::new(start, start + len).expect("presence is non-empty");
        tracks.push(ActorTrack { class, presence, boxes });
    }
    tracks
}

fn detection_scores(rng: &mut ChaCha8Rng, class: ClassId, num_classes: usize, score_noise: f64, confusion: f64) -> Vec<f64> {
    let mut top = class;
    if num_classes > 1 && confusion > 0.0 && rng.random_bool(confusion) {
        let other = rng.random_range(0..num_classes - 1);
        top = if other >= class { other + 1 } else { other };
    }
    let s = if score_noise > 0.0 {
        1.0 - rng.random_range(0.0..=score_noise)
    } else {
        1.0
    };
    let mut scores = vec![0.0; num_classes];
    if num_classes == 1 {
        scores[0] = s;
    } else {
        let rest = (1.0 - s) / (num_classes - 1) as f64;
        scores.iter_mut().for_each(|v| *v = rest);
        scores[top] = s;
    }
    scores
}

fn random_box(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> BoundingBox {
    let (w, h) = (cfg.actor.width, cfg.actor.height);
    let x = rng.random_range(0.0..=(cfg.frame_width - w).max(0.0));
    let y = rng.random_range(0.0..=(cfg.frame_height - h).max(0.0));
    BoundingBox::new(x, y, x + w, y + h).expect("actor size is positive")
}

/// Generates video `index` of the scenario, without drifted tubes.
pub fn generate_video(cfg: &ScenarioConfig, index: usize) -> Result<VideoData> {
    cfg.validate()?;
    let mut rng = derived_rng(cfg.seed, STREAM_VIDEO, index as u64);
    let n = cfg.frames_per_video;
    let c = cfg.num_classes;
    let noise = &cfg.noise;
    let video_id = video_id(index);
    let tracks = actor_tracks(cfg, &mut rng);

    let ground_truth = tracks
        .iter()
        .map(|t| GroundTruthTube::new(video_id.clone(), t.class, t.presence.frames().zip(t.boxes.iter().copied()).collect()))
        .collect::<Result<Vec<_>>>()?;

    let mut streams: [Vec<Detection>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let sources = [Source::Static, Source::Flow, Source::EarlyFusion];
    let mut proposals = Vec::new();
    let mut features = RegionFeatureField::new(c, 0.3);
    for f in 0..n {
        for t in &tracks {
            let Some(b) = t.box_at(f) else { continue };
            let missed = noise.miss_rate > 0.0 && rng.random_bool(noise.miss_rate);
            if !missed {
                for (stream, source) in streams.iter_mut().zip(sources) {
                    let bb = jitter_box(&mut rng, b, noise.box_jitter, noise.box_jitter);
                    let scores = detection_scores(&mut rng, t.class, c, noise.score_noise, noise.label_confusion_rate);
                    stream.push(Detection::new(f, bb, scores, source));
                }
            }
            if rng.random_bool(noise.proposal_recall) {
                proposals.push(Proposal::new(f, jitter_box(&mut rng, b, noise.box_jitter, noise.box_jitter), 0.0));
            }
            for _ in 0..noise.loose_proposals {
                let (sx, sy) = (noise.loose_jitter * b.width(), noise.loose_jitter * b.height());
                proposals.push(Proposal::new(f, jitter_box(&mut rng, b, sx, sy), 0.0));
            }
            let mut x = vec![0.0; c];
            x[t.class] = cfg.feature_gain;
            x.iter_mut().for_each(|v| *v += normal(&mut rng, noise.feature_noise));
            features.insert(f, *b, x)?;
        }
        for _ in 0..noise.background_proposals {
            proposals.push(Proposal::new(f, random_box(&mut rng, cfg), 0.0));
        }
        for (stream, source) in streams.iter_mut().zip(sources) {
            if noise.false_positive_rate > 0.0 && rng.random_bool(noise.false_positive_rate) {
                let class = rng.random_range(0..c);
                let mut scores = detection_scores(&mut rng, class, c, noise.score_noise.max(0.2), 0.0);
                let s = rng.random_range(0.3..0.9);
                scores.iter_mut().for_each(|v| *v *= s);
                stream.push(Detection::new(f, random_box(&mut rng, cfg), scores, source));
            }
        }
    }

    // detector view of a proposal: overlap with the actor of each class
    for p in proposals.iter_mut() {
        let mut scores = vec![0.0f64; c];
        for t in &tracks {
            if let Some(b) = t.box_at(p.frame_index) {
                scores[t.class] = scores[t.class].max(iou(b, &p.bbox));
            }
        }
        p.objectness = scores.iter().copied().fold(0.0, f64::max);
        p.class_scores = Some(scores);
    }

    let matches = point_matches(cfg, &tracks, &mut rng);
    let flow = flow_grids(cfg, &tracks, &mut rng)?;
    let [static_detections, flow_detections, early_detections] = streams;
    Ok(VideoData {
        video_id,
        num_frames: n,
        frame_width: cfg.frame_width,
        frame_height: cfg.frame_height,
        ground_truth,
        static_detections,
        flow_detections,
        early_detections,
        proposals,
        matches,
        flow,
        features,
        drifted: Vec::new(),
    })
}

fn point_matches(cfg: &ScenarioConfig, tracks: &[ActorTrack], rng: &mut ChaCha8Rng) -> DenseMatchTable {
    let mut table = DenseMatchTable::new();
    let g = cfg.actor_point_grid;
    let s = cfg.background_point_stride;
    let sigma = cfg.noise.match_noise;
    let covered = |f: usize, p: Point| tracks.iter().any(|t| t.box_at(f).is_some_and(|b| b.contains(p)));
    for f in 0..cfg.frames_per_video - 1 {
        for t in tracks {
            let (Some(a), Some(b)) = (t.box_at(f), t.box_at(f + 1)) else {
                continue;
            };
            for i in 0..g {
                for j in 0..g {
                    let (u, v) = ((i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64);
                    let from = Point::new(a.x_min() + u * a.width(), a.y_min() + v * a.height());
                    let to = Point::new(
                        b.x_min() + u * b.width() + normal(rng, sigma),
                        b.y_min() + v * b.height() + normal(rng, sigma),
                    );
                    table.insert(f, from, to);
                }
            }
        }
        let mut y = s / 2.0;
        while y < cfg.frame_height {
            let mut x = s / 2.0;
            while x < cfg.frame_width {
                let p = Point::new(x, y);
                if !covered(f, p) && !covered(f + 1, p) {
                    table.insert(f, p, Point::new(x + normal(rng, sigma), y + normal(rng, sigma)));
                }
                x += s;
            }
            y += s;
        }
    }
    table
}

fn flow_grids(cfg: &ScenarioConfig, tracks: &[ActorTrack], rng: &mut ChaCha8Rng) -> Result<Vec<FlowMagnitudeGrid>> {
    let cs = cfg.flow_cell_size;
    let w = libm::ceil(cfg.frame_width / cs) as usize;
    let h = libm::ceil(cfg.frame_height / cs) as usize;
    let n = cfg.frames_per_video;
    (0..n)
        .map(|f| {
            let moving: Vec<(BoundingBox, f64)> = tracks
                .iter()
                .filter_map(|t| {
                    let b = t.box_at(f)?;
                    let other = t.box_at(f + 1).or_else(|| f.checked_sub(1).and_then(|p| t.box_at(p)));
                    let speed = other.map_or(0.0, |o| {
                        let (c0, c1) = (b.center(), o.center());
                        libm::hypot(c1.x - c0.x, c1.y - c0.y)
                    });
                    Some((*b, speed))
                })
                .collect();
            let mut values = Vec::with_capacity(w * h);
            for r in 0..h {
                for col in 0..w {
                    let p = Point::new((col as f64 + 0.5) * cs, (r as f64 + 0.5) * cs);
                    let v = match moving.iter().find(|(b, _)| b.contains(p)) {
                        Some((_, speed)) => *speed,
                        None => normal(rng, cfg.noise.flow_noise).abs(),
                    };
                    values.push(v as f32);
                }
            }
            FlowMagnitudeGrid::new(f, w, h, cs, values)
        })
        .collect()
}

/// Scorer weights that read class evidence straight off the region
/// features: identity input map, mild recurrence, a sharp classifier.
pub fn scorer_weights(num_classes: usize) -> RecurrentScorerWeights {
    RecurrentScorerWeights {
        input_to_output: Matrix::identity(num_classes),
        recurrent: Matrix::identity(num_classes).scaled(0.25),
        bias: vec![0.0; num_classes],
        activation: Activation::Tanh,
        classifier: Matrix::identity(num_classes).scaled(6.0),
        classifier_bias: vec![0.0; num_classes],
    }
}

fn feature_grid(cfg: &ScenarioConfig, class: ClassId, rng: &mut ChaCha8Rng) -> Result<FeatureGridSequence> {
    let f = &cfg.footprint;
    let (mx, _) = cfg.margin();
    let (top, bottom) = cfg.band(class);
    let (cw, ch) = (cfg.frame_width / f.grid_side as f64, cfg.frame_height / f.grid_side as f64);
    let mut clips = Vec::with_capacity(f.clips_per_sample);
    for _ in 0..f.clips_per_sample {
        let x = rng.random_range(mx..=(cfg.frame_width - mx - cfg.actor.width).max(mx));
        let y = rng.random_range(top..=(bottom - cfg.actor.height).max(top));
        let actor = BoundingBox::new(x, y, x + cfg.actor.width, y + cfg.actor.height)?;
        let mut values = Vec::with_capacity(f.grid_side * f.grid_side * f.depth);
        for r in 0..f.grid_side {
            for col in 0..f.grid_side {
                let inside = actor.contains(Point::new((col as f64 + 0.5) * cw, (r as f64 + 0.5) * ch));
                for k in 0..f.depth {
                    let base = if inside && k == class { f.blob_gain } else { 0.0 };
                    values.push(base + normal(rng, f.noise));
                }
            }
        }
        clips.push(values);
    }
    FeatureGridSequence::new(f.grid_side, f.depth, clips)
}

/// Per-class, per-cell accuracies of Fisher-vector cell classifiers trained
/// on synthetic single-actor feature grids.
pub fn footprint_alpha(cfg: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let f = &cfg.footprint;
    let layout = CellLayout::new(f.grid_side, f.cell_side)?;
    let mut rng = derived_rng(cfg.seed, STREAM_FOOTPRINT, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..cfg.num_classes {
        for _ in 0..f.train_per_class {
            train.push((feature_grid(cfg, class, &mut rng)?, class));
        }
        for _ in 0..f.test_per_class {
            test.push((feature_grid(cfg, class, &mut rng)?, class));
        }
    }
    let descriptors: Vec<Vec<f64>> = train
        .iter()
        .flat_map(|(g, _)| g.clips().iter().flat_map(|c| c.chunks_exact(f.depth).map(<[f64]>::to_vec)))
        .collect();
    let gmm = GaussianMixture::fit(&descriptors, f.components, rng.random(), 100, 1e-6)?;
    let encode = |set: &[(FeatureGridSequence, ClassId)]| -> Result<Vec<(Vec<Vec<f64>>, ClassId)>> {
        set.iter()
            .map(|(g, l)| Ok((aggregate_cells(g, &layout, &gmm)?, *l)))
            .collect()
    };
    cell_accuracies(&encode(&train)?, &encode(&test)?, cfg.num_classes)
}

/// Fabricates `round(rate * ground-truth tubes)` drifted tubes, spread over
/// the videos round-robin. Each lies in the margin ring, so it has zero
/// overlap with every ground-truth box. Returns how many were added.
pub fn inject_drift(bundle: &mut ScenarioBundle, rate: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::param("drift_rate", "must lie in [0, 1]"));
    }
    let total: usize = bundle.videos.iter().map(|v| v.ground_truth.len()).sum();
    let count = libm::round(rate * total as f64) as usize;
    if count == 0 || bundle.videos.is_empty() {
        return Ok(0);
    }
    let cfg = &bundle.config;
    let videos = bundle.videos.len();
    for k in 0..count {
        let mut rng = derived_rng(cfg.seed, STREAM_DRIFT, k as u64);
        let tube = drifted_tube(cfg, &bundle.videos[k % videos].video_id, &mut rng)?;
        bundle.videos[k % videos].drifted.push(tube);
    }
    Ok(count)
}

fn drifted_tube(cfg: &ScenarioConfig, video_id: &str, rng: &mut ChaCha8Rng) -> Result<Tube> {
    let (w, h) = cfg.frame_size();
    let (mx, my) = cfg.margin();
    let bw = cfg.actor.width.min(0.8 * mx);
    let bh = cfg.actor.height.min(0.8 * my);
    let n = cfg.frames_per_video;
    // strip as (x range, y range) for the box's top-left corner
    let strips = [
        ((0.0, w - bw), (0.0, my - bh)),
        ((0.0, w - bw), (h - my, h - bh)),
        ((0.0, mx - bw), (0.0, h - bh)),
        ((w - mx, w - bw), (0.0, h - bh)),
    ];
    let ((x0, x1), (y0, y1)) = strips[rng.random_range(0..strips.len())];
    let label = rng.random_range(0..cfg.num_classes);
    let len = rng.random_range((n / 4).max(1)..=(n / 2).max(1));
    let start = rng.random_range(0..=n - len);
    let mut x = rng.random_range(x0..=x1);
    let mut y = rng.random_range(y0..=y1);
    let (mut dx, mut dy) = (1.0, 1.0);
    let mut scores = vec![0.4 / cfg.num_classes.max(2) as f64; cfg.num_classes];
    scores[label] = 0.6;
    let mut entries = Vec::with_capacity(len);
    for f in start..start + len {
        x = reflect(x + dx * rng.random_range(0.0..1.0), x0, x1, &mut dx);
        y = reflect(y + dy * rng.random_range(0.0..1.0), y0, y1, &mut dy);
        entries.push(Detection::new(f, BoundingBox::new(x, y, x + bw, y + bh)?, scores.clone(), Source::Tracked));
    }
    Ok(Tube::new(video_id, entries)?.with_label(label))
}

/// Generates the whole scenario, including drifted tubes at `drift_rate`.
pub fn generate(cfg: &ScenarioConfig) -> Result<ScenarioBundle> {
    let videos = (0..cfg.video_count)
        .map(|i| generate_video(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    assemble(cfg, videos)
}

/// Adds the scenario-wide parts to independently generated videos.
pub fn assemble(cfg: &ScenarioConfig, videos: Vec<VideoData>) -> Result<ScenarioBundle> {
    let mut bundle = ScenarioBundle {
        config: cfg.clone(),
        videos,
        footprint_alpha: footprint_alpha(cfg)?,
        scorer_weights: scorer_weights(cfg.num_classes),
    };
    inject_drift(&mut bundle, cfg.drift_rate)?;
    Ok(bundle)
}

/// Mean IOU between detections and the ground-truth box of their frame.
pub fn mean_detection_iou(video: &VideoData) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for d in video
        .static_detections
        .iter()
        .chain(&video.flow_detections)
        .chain(&video.early_detections)
    {
        let best = video
            .ground_truth
            .iter()
            .filter_map(|g| g.entries().iter().find(|e| e.0 == d.frame_index))
            .map(|e| iou(&e.1, &d.bbox))
            .fold(0.0, f64::max);
        sum += best;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Video ids are zero-padded so that lexical order is generation order.
pub fn video_id(index: usize) -> String {
    format!("video_{index:04}")
}
