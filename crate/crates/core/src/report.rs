//! CSV artifacts: per-epoch metrics, per-sample predictions, confusion matrix.
//!
//! Reals are written with exactly six decimals and lines end in `\n`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{EpochMetrics, History};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";
pub const PREDICTIONS_HEADER: &str = "sample,true,predicted,confidence,correct";

/// One row of the actual-vs-predicted report.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sample_path: String,
    pub true_label: String,
    pub predicted_label: String,
    pub confidence: f64,
    pub correct: bool,
}

impl PredictionRecord {
    pub fn new(
        sample_path: String,
        true_label: String,
        predicted_label: String,
        confidence: f64,
    ) -> Self {
        let correct = true_label == predicted_label;
        PredictionRecord {
            sample_path,
            true_label,
            predicted_label,
            confidence,
            correct,
        }
    }
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn metrics_csv(history: &History) -> Result<String> {
    if history.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot write an empty history".into(),
        ));
    }
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in &history.epochs {
        let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch,
            fmt6(m.train_loss),
            fmt6(m.train_acc),
            opt(m.val_loss),
            opt(m.val_acc)
        ));
    }
    Ok(out)
}

pub fn write_metrics_csv(history: &History, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(history)?).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse '{field}'")))
}

pub fn parse_metrics_csv(text: &str) -> Result<History> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("missing metrics header".into()));
    }
    let mut history = History::default();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Format(format!("line {}: expected 5 fields", i + 2)));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_field(s, i + 2).map(Some)
            }
        };
        history.epochs.push(EpochMetrics {
            epoch: parse_field(f[0], i + 2)?,
            train_loss: parse_field(f[1], i + 2)?,
            train_acc: parse_field(f[2], i + 2)?,
            val_loss: opt(f[3])?,
            val_acc: opt(f[4])?,
        });
    }
    Ok(history)
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<History> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn predictions_csv(records: &[PredictionRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(PREDICTIONS_HEADER.split(','))
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.sample_path.as_str(),
            &r.true_label,
            &r.predicted_label,
            &fmt6(r.confidence),
            if r.correct { "true" } else { "false" },
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_prediction_report(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, predictions_csv(records)?).map_err(|e| Error::io(path, e))
}

pub fn parse_prediction_report(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != PREDICTIONS_HEADER {
        return Err(Error::Format(format!("unexpected header '{header}'")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let correct = match &rec[4] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Format(format!(
                    "row {}: bad correct flag '{other}'",
                    i + 1
                )))
            }
        };
        out.push(PredictionRecord {
            sample_path: rec[0].to_string(),
            true_label: rec[1].to_string(),
            predicted_label: rec[2].to_string(),
            confidence: parse_field(&rec[3], i + 2)?,
            correct,
        });
    }
    Ok(out)
}

/// Header row `true\predicted,<classes>`, then one row per true class.
pub fn confusion_csv(confusion: &[Vec<usize>], class_names: &[String]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(class_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (name, row) in class_names.iter().zip(confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
