use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use actube_core::eval::{self, EvalReport};
use actube_core::pipeline::{self, Models, PipelineConfig, VideoData, VideoResult};
use actube_core::scoring::ScoredTube;
use actube_core::synth;
use actube_core::{Detection, Tube};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bundle::{self, Bundle};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::jsonl::{self, DetectionRecord, TubeRecord};

pub const FUSED: &str = "fused.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const SCORED: &str = "scored.jsonl";
pub const PRUNED: &str = "pruned.jsonl";
pub const TUBES: &str = "tubes.jsonl";
pub const REPORT: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "actube", version, about = "Action tube construction, pruning and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `synth.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Dotted `key=value` config override; repeatable.
    #[arg(long = "stage-override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Directory holding earlier stage outputs. Defaults to `--out`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset directory written by `synth`. Defaults to the input directory.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset bundle.
    Synth,
    /// Fuse the detection streams of every frame.
    Fuse(Inputs),
    /// Link fused detections into candidate tubes.
    Track(Inputs),
    /// Score candidate tubes.
    Score(Inputs),
    /// Remove overlapped and drifted tubes.
    Prune(Inputs),
    /// Trim tubes to their confident clips.
    Localize(Inputs),
    /// Evaluate tubes against the bundle's ground truth.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// Tube file to evaluate. Defaults to `tubes.jsonl` in the input
        /// directory.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run every stage and evaluate.
    Pipeline(Inputs),
}

struct Ctx {
    cfg: Config,
    pool: rayon::ThreadPool,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> CliResult<Self> {
        let mut cfg = Config::load(common.config.as_deref(), &common.overrides)?;
        if let Some(seed) = common.seed {
            cfg.synth.seed = seed;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
        fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
        Ok(Self {
            cfg,
            pool,
            out: common.out.clone(),
        })
    }

    fn input_dir(&self, inputs: &Inputs) -> PathBuf {
        inputs.input.clone().unwrap_or_else(|| self.out.clone())
    }

    fn bundle(&self, inputs: &Inputs) -> CliResult<Bundle> {
        let dir = inputs.bundle.clone().unwrap_or_else(|| self.input_dir(inputs));
        bundle::read(&dir)
    }

    fn models(&self, b: &Bundle) -> CliResult<Models> {
        Models::new(b.num_classes(), b.weights.clone(), b.footprint_alpha.clone(), &self.cfg.pipeline()).map_err(|e| CliError::processing("models", e))
    }

    /// Applies `f` to every video on the pool, keeping video order.
    fn per_video<T: Send, F>(&self, videos: &[VideoData], stage: &str, f: F) -> CliResult<Vec<T>>
    where
        F: Fn(usize, &VideoData) -> actube_core::Result<T> + Sync,
    {
        self.pool.install(|| {
            videos
                .par_iter()
                .enumerate()
                .map(|(i, v)| f(i, v).map_err(|e| CliError::processing(format!("{stage}: video {}", v.video_id), e)))
                .collect()
        })
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let ctx = Ctx::new(&cli.common)?;
    let pcfg = ctx.cfg.pipeline();
    match &cli.command {
        Command::Synth => {
            let cfg = &ctx.cfg.synth;
            let videos = ctx.pool.install(|| {
                (0..cfg.video_count)
                    .into_par_iter()
                    .map(|i| synth::generate_video(cfg, i))
                    .collect::<actube_core::Result<Vec<_>>>()
            });
            let videos = videos.map_err(|e| CliError::processing("synth", e))?;
            let b = synth::assemble(cfg, videos).map_err(|e| CliError::processing("synth", e))?;
            bundle::write(&ctx.out, &Bundle::from(b))
        }
        Command::Fuse(inputs) => {
            let b = ctx.bundle(inputs)?;
            let fused = ctx.per_video(&b.videos, "fuse", |_, v| {
                pipeline::fuse_video(&v.static_detections, &v.flow_detections, &v.early_detections, &v.flow, &pcfg.fusion)
            })?;
            write_detections(&ctx.out.join(FUSED), &b.videos, &fused)
        }
        Command::Track(inputs) => {
            let b = ctx.bundle(inputs)?;
            let fused = read_detections(&ctx.input_dir(inputs).join(FUSED), &b, "fuse")?;
            let tubes = ctx.per_video(&b.videos, "track", |i, v| {
                let out = pipeline::track_video(&v.video_id, v.num_frames, fused[i].clone(), v.proposals.clone(), &v.matches, &pcfg.tracking)?;
                Ok(candidates(out.tubes, v, &pcfg))
            })?;
            write_tubes(&ctx.out.join(CANDIDATES), tubes.iter().flatten().map(|t| (t, None)))
        }
        Command::Score(inputs) => {
            let b = ctx.bundle(inputs)?;
            let tubes = read_plain_tubes(&ctx.input_dir(inputs).join(CANDIDATES), &b, "track")?;
            let scored = ctx.per_video(&b.videos, "score", |i, v| {
                pipeline::score_video(tubes[i].clone(), &v.features, &b.weights, &pcfg.scoring)
            })?;
            write_scored(&ctx.out.join(SCORED), &scored)
        }
        Command::Prune(inputs) => {
            let b = ctx.bundle(inputs)?;
            let models = ctx.models(&b)?;
            let path = ctx.input_dir(inputs).join(SCORED);
            let scored = read_scored(&path, &b, "score")?;
            let pruned = ctx.per_video(&b.videos, "prune", |i, v| {
                pipeline::prune_video(scored[i].clone(), models.footprint.as_ref(), (v.frame_width, v.frame_height), &pcfg.prune)
            })?;
            write_scored(&ctx.out.join(PRUNED), &pruned)
        }
        Command::Localize(inputs) => {
            let b = ctx.bundle(inputs)?;
            let pruned = read_plain_tubes(&ctx.input_dir(inputs).join(PRUNED), &b, "prune")?;
            let tubes = ctx.per_video(&b.videos, "localize", |i, _| localized(&pruned[i], &pcfg))?;
            write_tubes(&ctx.out.join(TUBES), tubes.iter().flatten().map(|t| (t, None)))
        }
        Command::Evaluate { inputs, predictions } => {
            let b = ctx.bundle(inputs)?;
            let path = predictions.clone().unwrap_or_else(|| ctx.input_dir(inputs).join(TUBES));
            let preds: Vec<Tube> = read_plain_tubes(&path, &b, "localize")?.into_iter().flatten().collect();
            let report = eval::evaluate(&preds, &b.ground_truth(), b.num_classes(), &pcfg.eval).map_err(|e| CliError::processing("evaluate", e))?;
            write_report(&ctx.out, &report)
        }
        Command::Pipeline(inputs) => {
            let b = ctx.bundle(inputs)?;
            let models = ctx.models(&b)?;
            pcfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let results = ctx.per_video(&b.videos, "pipeline", |_, v| pipeline::run_video(v, &models, &pcfg))?;
            let fused: Vec<Vec<Detection>> = results.iter().map(|r| r.fused.clone()).collect();
            write_detections(&ctx.out.join(FUSED), &b.videos, &fused)?;
            write_tubes(&ctx.out.join(CANDIDATES), results.iter().flat_map(|r| r.candidates.iter().map(|t| (t, None))))?;
            let scored: Vec<Vec<ScoredTube>> = results.iter().map(|r| r.scored.clone()).collect();
            write_scored(&ctx.out.join(SCORED), &scored)?;
            let pruned: Vec<Vec<ScoredTube>> = results.iter().map(|r| r.pruned.clone()).collect();
            write_scored(&ctx.out.join(PRUNED), &pruned)?;
            write_tubes(&ctx.out.join(TUBES), results.iter().flat_map(|r| r.tubes.iter().map(|t| (t, None))))?;
            let rep = pipeline::report(&results, &b.ground_truth(), b.num_classes(), &pcfg).map_err(|e| CliError::processing("evaluate", e))?;
            eprintln!("tracking recall {:.4}, aborted seeds {}", rep.tracking_recall, results.iter().map(|r: &VideoResult| r.aborted).sum::<usize>());
            write_report(&ctx.out, &rep.eval)
        }
    }
}

fn candidates(mut tubes: Vec<Tube>, v: &VideoData, cfg: &PipelineConfig) -> Vec<Tube> {
    if cfg.include_drifted {
        tubes.extend(v.drifted.iter().cloned());
    }
    tubes
}

fn localized(tubes: &[Tube], cfg: &PipelineConfig) -> actube_core::Result<Vec<Tube>> {
    let mut out = pipeline::localize_video(tubes, cfg.scoring.clip_length, &cfg.localize)?;
    out.sort_by(eval::canonical_cmp);
    Ok(out)
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    let path = dir.join(REPORT);
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    print!("{}", report.table());
    Ok(())
}

fn write_detections(path: &Path, videos: &[VideoData], per_video: &[Vec<Detection>]) -> CliResult<()> {
    let records: Vec<DetectionRecord> = videos
        .iter()
        .zip(per_video)
        .flat_map(|(v, dets)| dets.iter().map(|d| DetectionRecord::new(&v.video_id, d)))
        .collect();
    jsonl::write(path, &records)
}

fn write_tubes<'a>(path: &Path, items: impl IntoIterator<Item = (&'a Tube, Option<&'a actube_core::scoring::TubeScore>)>) -> CliResult<()> {
    jsonl::write(path, &jsonl::encode_tubes(items))
}

fn write_scored(path: &Path, per_video: &[Vec<ScoredTube>]) -> CliResult<()> {
    write_tubes(path, per_video.iter().flatten().map(|s| (&s.tube, Some(&s.score))))
}

fn video_index(b: &Bundle) -> BTreeMap<&str, usize> {
    b.videos.iter().enumerate().map(|(i, v)| (v.video_id.as_str(), i)).collect()
}

fn unknown_video(path: &Path, line: usize, id: &str) -> CliError {
    CliError::schema(path, line, "video_id", format!("video {id:?} is not in the bundle"))
}

fn read_detections(path: &Path, b: &Bundle, producer: &'static str) -> CliResult<Vec<Vec<Detection>>> {
    let idx = video_index(b);
    let mut out = vec![Vec::new(); b.videos.len()];
    for (line, r) in jsonl::read::<DetectionRecord>(path, producer)? {
        let i = *idx.get(r.video_id.as_str()).ok_or_else(|| unknown_video(path, line, &r.video_id))?;
        out[i].push(r.detection());
    }
    Ok(out)
}

fn read_tubes(path: &Path, b: &Bundle, producer: &'static str) -> CliResult<Vec<Vec<(usize, jsonl::TubeItem)>>> {
    let idx = video_index(b);
    let records = jsonl::read::<TubeRecord>(path, producer)?;
    let mut out = vec![Vec::new(); b.videos.len()];
    for (line, item) in jsonl::decode_tubes(records, path)? {
        let i = *idx.get(item.0.video_id.as_str()).ok_or_else(|| unknown_video(path, line, &item.0.video_id))?;
        item.0
            .validate(b.num_classes())
            .map_err(|e| CliError::schema(path, line, "tube", e))?;
        out[i].push((line, item));
    }
    Ok(out)
}

fn read_plain_tubes(path: &Path, b: &Bundle, producer: &'static str) -> CliResult<Vec<Vec<Tube>>> {
    Ok(read_tubes(path, b, producer)?
        .into_iter()
        .map(|v| v.into_iter().map(|(_, (t, _))| t).collect())
        .collect())
}

fn read_scored(path: &Path, b: &Bundle, producer: &'static str) -> CliResult<Vec<Vec<ScoredTube>>> {
    read_tubes(path, b, producer)?
        .into_iter()
        .map(|tubes| {
            tubes
                .into_iter()
                .map(|(line, (tube, score))| {
                    let score = score.ok_or_else(|| CliError::schema(path, line, "score", "scored tube expected"))?;
                    Ok(ScoredTube { tube, score })
                })
                .collect()
        })
        .collect()
}
