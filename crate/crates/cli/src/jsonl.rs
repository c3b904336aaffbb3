//! Line-delimited JSON records behind a schema header line.
//!
//! The first line of every file is `{"schema":"<name>","version":<n>}`;
//! each following line is one record.

use std::fs;
use std::path::Path;

use actube_core::scoring::{ClipScoreSequence, TubeScore};
use actube_core::{BoundingBox, ClassId, Detection, Proposal, Source, Tube};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub trait Record: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const VERSION: u32 = 1;
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub num_frames: usize,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Record for VideoRecord {
    const SCHEMA: &'static str = "actube.videos";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub video_id: String,
    /// File-wide id of the annotated tube this box belongs to.
    pub tube: usize,
    pub label: ClassId,
    pub frame: usize,
    pub bbox: BoundingBox,
}

impl Record for GroundTruthRecord {
    const SCHEMA: &'static str = "actube.ground_truth";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame: usize,
    pub bbox: BoundingBox,
    pub scores: Vec<f64>,
    pub source: Source,
}

impl Record for DetectionRecord {
    const SCHEMA: &'static str = "actube.detections";
}

impl DetectionRecord {
    pub fn new(video_id: &str, d: &Detection) -> Self {
        Self {
            video_id: video_id.to_string(),
            frame: d.frame_index,
            bbox: d.bbox,
            scores: d.class_scores.clone(),
            source: d.source,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection::new(self.frame, self.bbox, self.scores.clone(), self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub video_id: String,
    pub frame: usize,
    pub bbox: BoundingBox,
    pub objectness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_scores: Option<Vec<f64>>,
}

impl Record for ProposalRecord {
    const SCHEMA: &'static str = "actube.proposals";
}

impl ProposalRecord {
    pub fn new(video_id: &str, p: &Proposal) -> Self {
        Self {
            video_id: video_id.to_string(),
            frame: p.frame_index,
            bbox: p.bbox,
            objectness: p.objectness,
            class_scores: p.class_scores.clone(),
        }
    }

    pub fn proposal(&self) -> Proposal {
        let mut p = Proposal::new(self.frame, self.bbox, self.objectness);
        p.class_scores = self.class_scores.clone();
        p
    }
}

/// One point correspondence from `frame` to `frame + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub video_id: String,
    pub frame: usize,
    pub from: [f64; 2],
    pub to: [f64; 2],
}

impl Record for MatchRecord {
    const SCHEMA: &'static str = "actube.matches";
}

/// A tube is a `tube` record followed by one `entry` record per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TubeRecord {
    Tube {
        video_id: String,
        tube: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<ClassId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tube_score: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<TubeScore>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip_scores: Option<ClipScoreSequence>,
    },
    Entry {
        tube: usize,
        frame: usize,
        bbox: BoundingBox,
        scores: Vec<f64>,
        source: Source,
    },
}

impl Record for TubeRecord {
    const SCHEMA: &'static str = "actube.tubes";
}

/// A tube with the score it was ranked by, if any.
pub type TubeItem = (Tube, Option<TubeScore>);

pub fn encode_tubes<'a>(items: impl IntoIterator<Item = (&'a Tube, Option<&'a TubeScore>)>) -> Vec<TubeRecord> {
    let mut out = Vec::new();
    for (id, (t, score)) in items.into_iter().enumerate() {
        out.push(TubeRecord::Tube {
            video_id: t.video_id.clone(),
            tube: id,
            label: t.label,
            tube_score: t.tube_score,
            score: score.cloned(),
            clip_scores: t.clip_scores.clone(),
        });
        out.extend(t.entries().iter().map(|e| TubeRecord::Entry {
            tube: id,
            frame: e.frame_index,
            bbox: e.bbox,
            scores: e.class_scores.clone(),
            source: e.source,
        }));
    }
    out
}

/// Rebuilds tubes, each paired with the line of its `tube` record.
pub fn decode_tubes(records: Vec<(usize, TubeRecord)>, file: &Path) -> CliResult<Vec<(usize, TubeItem)>> {
    struct Open {
        line: usize,
        id: usize,
        video_id: String,
        label: Option<ClassId>,
        tube_score: Option<f64>,
        score: Option<TubeScore>,
        clip_scores: Option<ClipScoreSequence>,
        entries: Vec<Detection>,
    }
    let close = |o: Open| -> CliResult<(usize, TubeItem)> {
        if o.entries.is_empty() {
            return Err(CliError::schema(file, o.line, "tube", format!("tube {} has no entries", o.id)));
        }
        let mut t = Tube::new(o.video_id, o.entries).map_err(|e| CliError::schema(file, o.line, "frame", e))?;
        t.label = o.label;
        t.tube_score = o.tube_score;
        t.clip_scores = o.clip_scores;
        Ok((o.line, (t, o.score)))
    };
    let mut out = Vec::new();
    let mut open: Option<Open> = None;
    for (line, r) in records {
        match r {
            TubeRecord::Tube {
                video_id,
                tube,
                label,
                tube_score,
                score,
                clip_scores,
            } => {
                if let Some(o) = open.take() {
                    out.push(close(o)?);
                }
                open = Some(Open {
                    line,
                    id: tube,
                    video_id,
                    label,
                    tube_score,
                    score,
                    clip_scores,
                    entries: Vec::new(),
                });
            }
            TubeRecord::Entry {
                tube,
                frame,
                bbox,
                scores,
                source,
            } => match open.as_mut() {
                Some(o) if o.id == tube => o.entries.push(Detection::new(frame, bbox, scores, source)),
                _ => return Err(CliError::schema(file, line, "tube", format!("entry of tube {tube} does not follow its tube record"))),
            },
        }
    }
    if let Some(o) = open.take() {
        out.push(close(o)?);
    }
    Ok(out)
}

pub fn to_string<R: Record>(records: &[R]) -> String {
    let header = Header {
        schema: R::SCHEMA.to_string(),
        version: R::VERSION,
    };
    let mut s = serde_json::to_string(&header).expect("header serializes");
    s.push('\n');
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn write<R: Record>(path: &Path, records: &[R]) -> CliResult<()> {
    fs::write(path, to_string(records)).map_err(|e| CliError::io(path, e))
}

/// Parses records, each paired with its 1-based line number.
pub fn parse<R: Record>(text: &str, file: &Path) -> CliResult<Vec<(usize, R)>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .ok_or_else(|| CliError::schema(file, 1, "schema", "missing header line"))?;
    let header: Header = parse_line(first, file, 1)?;
    if header.schema != R::SCHEMA {
        return Err(CliError::schema(file, 1, "schema", format!("expected {}, found {}", R::SCHEMA, header.schema)));
    }
    if header.version != R::VERSION {
        return Err(CliError::schema(file, 1, "version", format!("unsupported version {} (this build reads {})", header.version, R::VERSION)));
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_line(l, file, n).map(|r| (n, r)))
        .collect()
}

fn parse_line<T: DeserializeOwned>(line: &str, file: &Path, n: usize) -> CliResult<T> {
    let mut de = serde_json::Deserializer::from_str(line);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "record".to_string() } else { path };
        CliError::schema(file, n, field, e.into_inner())
    })?;
    de.end().map_err(|e| CliError::schema(file, n, "record", e))?;
    Ok(value)
}

pub fn read<R: Record>(path: &Path, producer: &'static str) -> CliResult<Vec<(usize, R)>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput {
            file: path.to_path_buf(),
            producer,
        },
        _ => CliError::io(path, e),
    })?;
    parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_checked() {
        let p = Path::new("d.jsonl");
        let ok = "{\"schema\":\"actube.videos\",\"version\":1}\n{\"video_id\":\"a\",\"num_frames\":3,\"frame_width\":10.0,\"frame_height\":5.0}\n";
        assert_eq!(parse::<VideoRecord>(ok, p).unwrap().len(), 1);
        let wrong = ok.replace("actube.videos", "actube.tubes");
        assert!(parse::<VideoRecord>(&wrong, p).unwrap_err().to_string().contains("schema"));
        let v2 = ok.replace("\"version\":1", "\"version\":2");
        assert!(parse::<VideoRecord>(&v2, p).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn errors_name_line_and_field() {
        let p = Path::new("d.jsonl");
        let text = "{\"schema\":\"actube.detections\",\"version\":1}\n{\"video_id\":\"a\",\"frame\":0,\"bbox\":[5,0,1,1],\"scores\":[1.0],\"source\":\"static\"}\n";
        let e = parse::<DetectionRecord>(text, p).unwrap_err();
        let msg = e.to_string();
        assert!(msg.starts_with("d.jsonl:2: bbox:"), "{msg}");
        assert_eq!(e.exit_code(), 65);

        let unknown = "{\"schema\":\"actube.videos\",\"version\":1}\n{\"video_id\":\"a\",\"num_frames\":3,\"frame_width\":10.0,\"frame_height\":5.0,\"fps\":3}\n";
        assert!(parse::<VideoRecord>(unknown, p).unwrap_err().to_string().contains("fps"));
    }

    #[test]
    fn tube_entries_must_follow_their_header() {
        let p = Path::new("t.jsonl");
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let recs = vec![(
            2,
            TubeRecord::Entry {
                tube: 0,
                frame: 0,
                bbox: b,
                scores: vec![1.0],
                source: Source::Tracked,
            },
        )];
        assert!(decode_tubes(recs, p).is_err());
    }
}
