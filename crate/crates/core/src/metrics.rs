//! Evaluation and diagnostics: test accuracy of the assembled global
//! model, gradient-dissimilarity measurement, and structured metric
//! emission (CSV and JSON-lines, fixed column order).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, DenseLayer};
use crate::split::{server_loss_and_grads, ActivationBatch};

pub const CSV_HEADER: &str =
    "aggregation_index,sim_time,server_update_count,test_accuracy,grad_dissim_pre,grad_dissim_post,act_buffer_rows,model_buffer_len";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub aggregation_index: u64,
    pub sim_time: f64,
    pub server_update_count: u64,
    pub test_accuracy: f64,
    pub grad_dissim_pre: Option<f64>,
    pub grad_dissim_post: Option<f64>,
    pub act_buffer_rows: usize,
    pub model_buffer_len: usize,
}

/// One pre/post gradient-dissimilarity measurement taken immediately
/// before a server update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimSample {
    pub server_update_index: u64,
    pub sim_time: f64,
    /// Dissimilarity of the raw buffered rows against the reference.
    pub pre_generation: f64,
    /// Dissimilarity of the post-concatenation batch against the reference.
    pub post_generation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    pub dissim: Vec<DissimSample>,
}

impl MetricsLog {
    pub fn push_row(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.aggregation_index <= last.aggregation_index {
                return Err(Error::ValidationError(
                    "metrics: aggregation_index must be strictly increasing".into(),
                ));
            }
            if row.sim_time < last.sim_time {
                return Err(Error::ValidationError(
                    "metrics: sim_time must be nondecreasing".into(),
                ));
            }
        }
        self.rows.push(row);
        Ok(())
    }
}

/// Argmax-logit accuracy of the assembled (client + server) model over
/// the full test set.
pub fn evaluate_accuracy(
    client_layers: &[DenseLayer],
    server_layers: &[DenseLayer],
    test_set: &Dataset,
) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::EmptyInput("evaluate_accuracy"));
    }
    let (cut, _) = nn::mlp_forward(client_layers, &test_set.features)?;
    let (logits, _) = nn::mlp_forward(server_layers, &cut)?;
    let mut correct = 0usize;
    for r in 0..logits.rows() {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..logits.cols() {
            let v = logits.at(r, c);
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        if best == test_set.labels[r] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_set.len() as f64)
}

/// Squared L2 distance between the server-parameter gradients computed on
/// two activation batches.
pub fn gradient_dissimilarity(
    server_layers: &[DenseLayer],
    batch: &ActivationBatch,
    reference: &ActivationBatch,
) -> Result<f64> {
    if batch.rows() == 0 || reference.rows() == 0 {
        return Err(Error::EmptyInput("gradient_dissimilarity"));
    }
    if batch.activations.cols() != reference.activations.cols() {
        return Err(Error::ShapeMismatch(format!(
            "gradient_dissimilarity: dims {} vs {}",
            batch.activations.cols(),
            reference.activations.cols()
        )));
    }
    let (_, g1, _) = server_loss_and_grads(server_layers, batch)?;
    let (_, g2, _) = server_loss_and_grads(server_layers, reference)?;
    let mut sq = 0.0;
    for ((aw, ab), (bw, bb)) in g1.iter().zip(g2.iter()) {
        for (x, y) in aw
            .data()
            .iter()
            .chain(ab.data().iter())
            .zip(bw.data().iter().chain(bb.data().iter()))
        {
            let d = x - y;
            sq += d * d;
        }
    }
    Ok(sq)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Write the log as CSV with a fixed header, flushing per row.
pub fn emit_csv<W: Write>(log: &MetricsLog, sink: &mut W) -> Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in &log.rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.aggregation_index,
            r.sim_time,
            r.server_update_count,
            r.test_accuracy,
            fmt_opt(r.grad_dissim_pre),
            fmt_opt(r.grad_dissim_post),
            r.act_buffer_rows,
            r.model_buffer_len
        )?;
        sink.flush()?;
    }
    Ok(())
}

/// Write the log as JSON-lines, one row object per line, flushing per row.
pub fn emit_jsonl<W: Write>(log: &MetricsLog, sink: &mut W) -> Result<()> {
    for r in &log.rows {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::ValidationError(format!("jsonl encode: {e}")))?;
        writeln!(sink, "{line}")?;
        sink.flush()?;
    }
    Ok(())
}

/// Parse a CSV produced by `emit_csv` back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::ValidationError("metrics csv: empty".into()))?;
    if header != CSV_HEADER {
        return Err(Error::ValidationError("metrics csv: bad header".into()));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::ParseError {
                line: ln + 2,
                msg: format!("expected 8 fields, got {}", parts.len()),
            });
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| Error::ParseError {
                    line: ln + 2,
                    msg: e.to_string(),
                })
            }
        };
        let err = |e: String| Error::ParseError { line: ln + 2, msg: e };
        rows.push(MetricsRow {
            aggregation_index: parts[0].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            sim_time: parts[1].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            server_update_count: parts[2].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            test_accuracy: parts[3].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            grad_dissim_pre: opt(parts[4])?,
            grad_dissim_post: opt(parts[5])?,
            act_buffer_rows: parts[6].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            model_buffer_len: parts[7].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
        });
    }
    Ok(rows)
}
