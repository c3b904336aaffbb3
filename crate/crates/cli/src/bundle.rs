//! A dataset directory: the inputs of every video plus the shared models.
//!
//! ```text
//! bundle.json         manifest
//! videos.jsonl        actube.videos
//! ground_truth.jsonl  actube.ground_truth
//! detections.jsonl    actube.detections (source static, flow or early_fusion)
//! proposals.jsonl     actube.proposals
//! matches.jsonl       actube.matches
//! drifted.jsonl       actube.tubes
//! flow.atb            flow magnitude grids
//! features.atb        region features
//! weights.atb         recurrent scorer weights
//! footprint.atb       footprint accuracies (optional)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use actube_core::fusion::FlowMagnitudeGrid;
use actube_core::linalg::Matrix;
use actube_core::pipeline::VideoData;
use actube_core::scoring::{Activation, RecurrentScorerWeights, RegionFeatureField};
use actube_core::synth::{ScenarioBundle, ScenarioConfig};
use actube_core::tracker::DenseMatchTable;
use actube_core::{BoundingBox, GroundTruthTube, Point, Source};
use serde::{Deserialize, Serialize};

use crate::atb::{Container, TensorData};
use crate::error::{CliError, CliResult};
use crate::jsonl::{self, DetectionRecord, GroundTruthRecord, MatchRecord, ProposalRecord, TubeRecord, VideoRecord};

pub const MANIFEST_SCHEMA: &str = "actube.bundle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub num_classes: usize,
    /// Scenario the bundle was generated from, if synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub videos: Vec<VideoData>,
    pub weights: RecurrentScorerWeights,
    pub footprint_alpha: Option<Vec<Vec<f64>>>,
}

impl From<ScenarioBundle> for Bundle {
    fn from(b: ScenarioBundle) -> Self {
        Bundle {
            manifest: Manifest {
                schema: MANIFEST_SCHEMA.to_string(),
                version: 1,
                num_classes: b.config.num_classes,
                scenario: Some(b.config),
            },
            videos: b.videos,
            weights: b.scorer_weights,
            footprint_alpha: Some(b.footprint_alpha),
        }
    }
}

impl Bundle {
    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthTube> {
        self.videos.iter().flat_map(|v| v.ground_truth.iter().cloned()).collect()
    }

    pub fn frame_size(&self, video: usize) -> (f64, f64) {
        (self.videos[video].frame_width, self.videos[video].frame_height)
    }
}

fn activation_code(a: Activation) -> u64 {
    match a {
        Activation::Tanh => 0,
        Activation::Relu => 1,
        Activation::Logistic => 2,
    }
}

pub fn write(dir: &Path, b: &Bundle) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let manifest = serde_json::to_string_pretty(&b.manifest).expect("manifest serializes");
    let path = dir.join("bundle.json");
    fs::write(&path, manifest + "\n").map_err(|e| CliError::io(&path, e))?;

    let vids: Vec<VideoRecord> = b
        .videos
        .iter()
        .map(|v| VideoRecord {
            video_id: v.video_id.clone(),
            num_frames: v.num_frames,
            frame_width: v.frame_width,
            frame_height: v.frame_height,
        })
        .collect();
    jsonl::write(&dir.join("videos.jsonl"), &vids)?;

    let mut gt = Vec::new();
    let mut dets = Vec::new();
    let mut props = Vec::new();
    let mut matches = Vec::new();
    let mut flow = Container::default();
    let mut feats = Container::default();
    let dim = b.videos.first().map_or(0, |v| v.features.dim());
    let min_iou = b.videos.first().map_or(0.0, |v| v.features.min_iou());
    feats.push("dim", vec![1], TensorData::U64(vec![dim as u64]));
    feats.push("min_iou", vec![1], TensorData::F64(vec![min_iou]));
    for v in &b.videos {
        for g in &v.ground_truth {
            let id = gt.last().map_or(0, |r: &GroundTruthRecord| r.tube + 1);
            gt.extend(g.entries().iter().map(|(f, bbox)| GroundTruthRecord {
                video_id: v.video_id.clone(),
                tube: id,
                label: g.label,
                frame: *f,
                bbox: *bbox,
            }));
        }
        for stream in [&v.static_detections, &v.flow_detections, &v.early_detections] {
            dets.extend(stream.iter().map(|d| DetectionRecord::new(&v.video_id, d)));
        }
        props.extend(v.proposals.iter().map(|p| ProposalRecord::new(&v.video_id, p)));
        matches.extend(v.matches.forward_pairs().map(|(f, (a, c))| MatchRecord {
            video_id: v.video_id.clone(),
            frame: f,
            from: [a.x, a.y],
            to: [c.x, c.y],
        }));

        let id = &v.video_id;
        let n = v.flow.len();
        flow.push(format!("{id}/frames"), vec![n], TensorData::U64(v.flow.iter().map(|g| g.frame_index as u64).collect()));
        flow.push(
            format!("{id}/dims"),
            vec![n, 2],
            TensorData::U64(v.flow.iter().flat_map(|g| [g.width() as u64, g.height() as u64]).collect()),
        );
        flow.push(format!("{id}/cell_size"), vec![n], TensorData::F64(v.flow.iter().map(|g| g.cell_size()).collect()));
        let values: Vec<f32> = v.flow.iter().flat_map(|g| g.values().iter().copied()).collect();
        flow.push(format!("{id}/values"), vec![values.len()], TensorData::F32(values));

        let rows: Vec<_> = v.features.iter().collect();
        feats.push(format!("{id}/frames"), vec![rows.len()], TensorData::U64(rows.iter().map(|r| r.0 as u64).collect()));
        feats.push(
            format!("{id}/boxes"),
            vec![rows.len(), 4],
            TensorData::F64(rows.iter().flat_map(|r| r.1.to_array()).collect()),
        );
        feats.push(
            format!("{id}/features"),
            vec![rows.len(), dim],
            TensorData::F64(rows.iter().flat_map(|r| r.2.iter().copied()).collect()),
        );
    }
    jsonl::write(&dir.join("ground_truth.jsonl"), &gt)?;
    jsonl::write(&dir.join("detections.jsonl"), &dets)?;
    jsonl::write(&dir.join("proposals.jsonl"), &props)?;
    jsonl::write(&dir.join("matches.jsonl"), &matches)?;
    let drifted = jsonl::encode_tubes(b.videos.iter().flat_map(|v| v.drifted.iter().map(|t| (t, None))));
    jsonl::write(&dir.join("drifted.jsonl"), &drifted)?;
    flow.save(&dir.join("flow.atb"))?;
    feats.save(&dir.join("features.atb"))?;
    weights_container(&b.weights).save(&dir.join("weights.atb"))?;
    if let Some(alpha) = &b.footprint_alpha {
        let cells = alpha.first().map_or(0, Vec::len);
        let mut c = Container::default();
        c.push("alpha", vec![alpha.len(), cells], TensorData::F64(alpha.concat()));
        c.save(&dir.join("footprint.atb"))?;
    }
    Ok(())
}

pub fn weights_container(w: &RecurrentScorerWeights) -> Container {
    let mut c = Container::default();
    let mut mat = |name: &str, m: &Matrix| c.push(name, vec![m.rows(), m.cols()], TensorData::F64(m.as_slice().to_vec()));
    mat("input_to_output", &w.input_to_output);
    mat("recurrent", &w.recurrent);
    mat("classifier", &w.classifier);
    c.push("bias", vec![w.bias.len()], TensorData::F64(w.bias.clone()));
    c.push("classifier_bias", vec![w.classifier_bias.len()], TensorData::F64(w.classifier_bias.clone()));
    c.push("activation", vec![1], TensorData::U64(vec![activation_code(w.activation)]));
    c
}

pub fn weights_from(c: &Container, file: &Path) -> CliResult<RecurrentScorerWeights> {
    let mat = |name: &str| -> CliResult<Matrix> {
        let v = c.f64(file, name)?;
        match v.shape {
            [r, k] => Matrix::from_row_major(*r, *k, v.data.to_vec()).map_err(|e| CliError::schema(file, 0, name, e)),
            _ => Err(CliError::schema(file, 0, name, "expected a rank-2 tensor")),
        }
    };
    let activation = match c.u64(file, "activation")?.data {
        [0] => Activation::Tanh,
        [1] => Activation::Relu,
        [2] => Activation::Logistic,
        other => return Err(CliError::schema(file, 0, "activation", format!("unknown activation code {other:?}"))),
    };
    let w = RecurrentScorerWeights {
        input_to_output: mat("input_to_output")?,
        recurrent: mat("recurrent")?,
        bias: c.f64(file, "bias")?.data.to_vec(),
        activation,
        classifier: mat("classifier")?,
        classifier_bias: c.f64(file, "classifier_bias")?.data.to_vec(),
    };
    w.validate().map_err(|e| CliError::schema(file, 0, "weights", e))?;
    Ok(w)
}

fn index_of<'a>(ids: &'a BTreeMap<String, usize>, file: &Path, line: usize) -> impl Fn(&str) -> CliResult<usize> + 'a {
    let file = file.to_path_buf();
    move |id: &str| {
        ids.get(id)
            .copied()
            .ok_or_else(|| CliError::schema(&file, line, "video_id", format!("unknown video {id:?}")))
    }
}

pub fn read(dir: &Path) -> CliResult<Bundle> {
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput {
            file: path.clone(),
            producer: "synth",
        },
        _ => CliError::io(&path, e),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::schema(&path, e.line(), "manifest", e))?;
    if manifest.schema != MANIFEST_SCHEMA || manifest.version != 1 {
        return Err(CliError::schema(&path, 1, "schema", format!("expected {MANIFEST_SCHEMA} version 1")));
    }

    let mut videos = Vec::new();
    let mut ids = BTreeMap::new();
    let p = dir.join("videos.jsonl");
    let feat_path = dir.join("features.atb");
    let feats = Container::load(&feat_path, "synth")?;
    let dim = feats.u64(&feat_path, "dim")?.data.first().copied().unwrap_or(0) as usize;
    let min_iou = feats.f64(&feat_path, "min_iou")?.data.first().copied().unwrap_or(0.0);
    for (line, v) in jsonl::read::<VideoRecord>(&p, "synth")? {
        if ids.insert(v.video_id.clone(), videos.len()).is_some() {
            return Err(CliError::schema(&p, line, "video_id", format!("duplicate video {:?}", v.video_id)));
        }
        videos.push(VideoData {
            video_id: v.video_id,
            num_frames: v.num_frames,
            frame_width: v.frame_width,
            frame_height: v.frame_height,
            ground_truth: Vec::new(),
            static_detections: Vec::new(),
            flow_detections: Vec::new(),
            early_detections: Vec::new(),
            proposals: Vec::new(),
            matches: DenseMatchTable::new(),
            flow: Vec::new(),
            features: RegionFeatureField::new(dim, min_iou),
            drifted: Vec::new(),
        });
    }

    let p = dir.join("ground_truth.jsonl");
    let mut tubes: Vec<(usize, usize, usize, Vec<(usize, BoundingBox)>)> = Vec::new();
    for (line, r) in jsonl::read::<GroundTruthRecord>(&p, "synth")? {
        let v = index_of(&ids, &p, line)(&r.video_id)?;
        match tubes.last_mut() {
            Some((id, vv, label, entries)) if *id == r.tube => {
                if *vv != v || *label != r.label {
                    return Err(CliError::schema(&p, line, "tube", "boxes of one tube must share video and label"));
                }
                entries.push((r.frame, r.bbox));
            }
            _ => tubes.push((r.tube, v, r.label, vec![(r.frame, r.bbox)])),
        }
        if r.label >= manifest.num_classes {
            return Err(CliError::schema(&p, line, "label", "class out of range"));
        }
    }
    for (id, v, label, entries) in tubes {
        let g = GroundTruthTube::new(videos[v].video_id.clone(), label, entries).map_err(|e| CliError::schema(&p, 0, "frame", format!("tube {id}: {e}")))?;
        videos[v].ground_truth.push(g);
    }

    let p = dir.join("detections.jsonl");
    for (line, r) in jsonl::read::<DetectionRecord>(&p, "synth")? {
        let v = &mut videos[index_of(&ids, &p, line)(&r.video_id)?];
        let d = r.detection();
        match r.source {
            Source::Static => v.static_detections.push(d),
            Source::Flow => v.flow_detections.push(d),
            Source::EarlyFusion => v.early_detections.push(d),
            _ => return Err(CliError::schema(&p, line, "source", "expected static, flow or early_fusion")),
        }
    }

    let p = dir.join("proposals.jsonl");
    for (line, r) in jsonl::read::<ProposalRecord>(&p, "synth")? {
        let v = index_of(&ids, &p, line)(&r.video_id)?;
        videos[v].proposals.push(r.proposal());
    }

    let p = dir.join("matches.jsonl");
    for (line, r) in jsonl::read::<MatchRecord>(&p, "synth")? {
        let v = index_of(&ids, &p, line)(&r.video_id)?;
        let (a, c) = (Point::new(r.from[0], r.from[1]), Point::new(r.to[0], r.to[1]));
        videos[v].matches.insert(r.frame, a, c);
    }

    let p = dir.join("drifted.jsonl");
    let records = jsonl::read::<TubeRecord>(&p, "synth")?;
    for (line, (t, _)) in jsonl::decode_tubes(records, &p)? {
        let v = index_of(&ids, &p, line)(&t.video_id)?;
        videos[v].drifted.push(t);
    }

    let p = dir.join("flow.atb");
    let flow = Container::load(&p, "synth")?;
    for v in videos.iter_mut() {
        let id = &v.video_id;
        let frames = flow.u64(&p, &format!("{id}/frames"))?;
        let dims = flow.u64(&p, &format!("{id}/dims"))?;
        let cells = flow.f64(&p, &format!("{id}/cell_size"))?;
        let values = flow.f32(&p, &format!("{id}/values"))?;
        let n = frames.data.len();
        if dims.data.len() != 2 * n || cells.data.len() != n {
            return Err(CliError::schema(&p, 0, format!("{id}/dims"), "one entry per frame expected"));
        }
        let mut offset = 0;
        for i in 0..n {
            let (w, h) = (dims.data[2 * i] as usize, dims.data[2 * i + 1] as usize);
            let end = offset + w * h;
            let slice = values
                .data
                .get(offset..end)
                .ok_or_else(|| CliError::schema(&p, 0, format!("{id}/values"), "fewer values than the grid dims require"))?;
            let g = FlowMagnitudeGrid::new(frames.data[i] as usize, w, h, cells.data[i], slice.to_vec()).map_err(|e| CliError::schema(&p, 0, format!("{id}/values"), e))?;
            v.flow.push(g);
            offset = end;
        }
        if offset != values.data.len() {
            return Err(CliError::schema(&p, 0, format!("{id}/values"), "more values than the grid dims require"));
        }

        let frames = feats.u64(&feat_path, &format!("{id}/frames"))?;
        let boxes = feats.f64(&feat_path, &format!("{id}/boxes"))?;
        let fv = feats.f64(&feat_path, &format!("{id}/features"))?;
        let rows = frames.data.len();
        if boxes.data.len() != 4 * rows || fv.data.len() != dim * rows {
            return Err(CliError::schema(&feat_path, 0, format!("{id}/features"), "row counts disagree"));
        }
        for i in 0..rows {
            let b = &boxes.data[4 * i..4 * i + 4];
            let bbox = BoundingBox::new(b[0], b[1], b[2], b[3]).map_err(|e| CliError::schema(&feat_path, 0, format!("{id}/boxes"), e))?;
            v.features
                .insert(frames.data[i] as usize, bbox, fv.data[dim * i..dim * (i + 1)].to_vec())
                .map_err(|e| CliError::schema(&feat_path, 0, format!("{id}/features"), e))?;
        }
    }

    let p = dir.join("weights.atb");
    let weights = weights_from(&Container::load(&p, "synth")?, &p)?;

    let p = dir.join("footprint.atb");
    let footprint_alpha = if p.exists() {
        let c = Container::load(&p, "synth")?;
        let a = c.f64(&p, "alpha")?;
        match a.shape {
            [rows, cols] => Some((0..*rows).map(|r| a.data[r * cols..(r + 1) * cols].to_vec()).collect()),
            _ => return Err(CliError::schema(&p, 0, "alpha", "expected a rank-2 tensor")),
        }
    } else {
        None
    };

    Ok(Bundle {
        manifest,
        videos,
        weights,
        footprint_alpha,
    })
}
