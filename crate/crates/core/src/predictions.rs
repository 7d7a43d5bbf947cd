//! Prediction files: JSON lines of `{"work_id": ..., "labels": [names]}`, shared by every system.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::labels::LabelVector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub work_id: String,
    pub labels: LabelVector,
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in predictions {
        serde_json::to_writer(&mut out, p).expect("prediction serializes");
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Pair predictions with a labeled corpus by id, in corpus order.
///
/// Every corpus document needs a prediction; extra predictions are an error too.
pub fn align_with_truth(
    predictions: &[Prediction],
    truth: &Corpus,
) -> Result<(Vec<LabelVector>, Vec<LabelVector>)> {
    let by_id: HashMap<&str, LabelVector> = predictions
        .iter()
        .map(|p| (p.work_id.as_str(), p.labels))
        .collect();
    if by_id.len() != truth.len() {
        return Err(Error::LengthMismatch(by_id.len(), truth.len()));
    }
    let mut preds = Vec::with_capacity(truth.len());
    let mut gold = Vec::with_capacity(truth.len());
    for doc in truth.iter() {
        let p = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| Error::Misaligned(format!("no prediction for `{}`", doc.id)))?;
        preds.push(*p);
        gold.push(doc.labels.ok_or_else(|| Error::MissingLabels(doc.id.clone()))?);
    }
    Ok((preds, gold))
}
