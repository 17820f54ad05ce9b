//! JSONL scene records: one frame per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mapforge::assign::ScoredElement;
use mapforge::eval::Prediction;
use mapforge::{EgoPose, MapElement};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub element: MapElement,
    pub confidence: f64,
    /// Per-class scores in `ped_crossing, divider, boundary, centerline`
    /// order; defaults to `confidence` on the element's own class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<[f64; 4]>,
}

impl PredictionRecord {
    pub fn to_prediction(&self) -> mapforge::Result<Prediction> {
        Prediction::new(self.element.clone(), self.confidence)
    }

    pub fn to_scored(&self) -> ScoredElement {
        match self.scores {
            Some(scores) => ScoredElement {
                element: self.element.clone(),
                scores,
            },
            None => ScoredElement::one_hot(self.element.clone(), self.confidence),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub frame_id: String,
    pub ego_pose: EgoPose,
    pub elements: Vec<MapElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<PredictionRecord>>,
}

impl SceneRecord {
    pub fn key(&self) -> (String, String) {
        (self.scene_id.clone(), self.frame_id.clone())
    }

    fn validate(&self) -> Result<()> {
        if self.scene_id.is_empty() || self.frame_id.is_empty() {
            bail!("scene_id and frame_id must be nonempty");
        }
        for p in self.predictions.iter().flatten() {
            p.to_prediction()?;
        }
        Ok(())
    }
}

/// Reads a JSONL file of scene records; blank lines are skipped.
pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: read error at line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line)
            .map_err(anyhow::Error::from)
            .and_then(|r: SceneRecord| r.validate().map(|_| r))
            .with_context(|| format!("{}: malformed record at line {}", path.display(), i + 1))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Pairs every ground-truth frame with its prediction frame by
/// `(scene_id, frame_id)`, in ground-truth order.
pub fn pair_frames<'a>(
    gt: &'a [SceneRecord],
    pred: &'a [SceneRecord],
) -> Result<Vec<(&'a SceneRecord, &'a SceneRecord)>> {
    let index: HashMap<(String, String), &SceneRecord> = pred.iter().map(|r| (r.key(), r)).collect();
    let gt_keys: std::collections::HashSet<(String, String)> = gt.iter().map(SceneRecord::key).collect();
    let missing_pred: Vec<String> = gt
        .iter()
        .filter(|r| !index.contains_key(&r.key()))
        .map(|r| format!("{}/{}", r.scene_id, r.frame_id))
        .collect();
    let missing_gt: Vec<String> = pred
        .iter()
        .filter(|r| !gt_keys.contains(&r.key()))
        .map(|r| format!("{}/{}", r.scene_id, r.frame_id))
        .collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = String::from("frame keys differ between ground truth and predictions");
        if !missing_pred.is_empty() {
            msg += &format!("; missing from predictions: {}", missing_pred.join(", "));
        }
        if !missing_gt.is_empty() {
            msg += &format!("; missing from ground truth: {}", missing_gt.join(", "));
        }
        bail!(msg);
    }
    Ok(gt.iter().map(|g| (g, index[&g.key()])).collect())
}

/// Prediction list of a frame, empty when the record carries none.
pub fn predictions_of(r: &SceneRecord) -> &[PredictionRecord] {
    r.predictions.as_deref().unwrap_or(&[])
}
