//! Server-side activation and model buffers: asynchronous FIFO storage,
//! drain-and-concatenate for server updates, and data-size-weighted
//! aggregation of client-side models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseLayer;
use crate::split::{label_histogram, ActivationBatch};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferStatus {
    NotFull,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationBuffer {
    entries: Vec<ActivationBatch>,
    capacity_rows: usize, // Q_s * B
    current_rows: usize,  // q_s
}

impl ActivationBuffer {
    pub fn new(capacity_rows: usize) -> Result<Self> {
        if capacity_rows == 0 {
            return Err(Error::ValidationError(
                "activation buffer capacity must be positive".into(),
            ));
        }
        Ok(ActivationBuffer {
            entries: Vec::new(),
            capacity_rows,
            current_rows: 0,
        })
    }

    pub fn current_rows(&self) -> usize {
        self.current_rows
    }

    pub fn capacity_rows(&self) -> usize {
        self.capacity_rows
    }

    pub fn entries(&self) -> &[ActivationBatch] {
        &self.entries
    }

    /// Per-label row counts currently buffered.
    pub fn label_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; num_classes];
        for e in &self.entries {
            for &y in &e.labels {
                counts[y] += 1;
            }
        }
        counts
    }

    pub fn store_activation(&mut self, batch: ActivationBatch) -> Result<BufferStatus> {
        let rows = batch.rows();
        if self.current_rows + rows > self.capacity_rows {
            return Err(Error::Overflow(format!(
                "activation buffer: {} + {} rows exceeds capacity {}",
                self.current_rows, rows, self.capacity_rows
            )));
        }
        self.current_rows += rows;
        self.entries.push(batch);
        if self.current_rows == self.capacity_rows {
            Ok(BufferStatus::Full)
        } else {
            Ok(BufferStatus::NotFull)
        }
    }

    /// Concatenate the buffered batches (FIFO order) with the generated
    /// rows appended last, then empty the buffer. The result's label
    /// distribution is the empirical distribution of its own labels.
    pub fn drain_concat(
        &mut self,
        generated: Option<ActivationBatch>,
        num_classes: usize,
    ) -> Result<ActivationBatch> {
        if self.current_rows != self.capacity_rows {
            return Err(Error::NotFull {
                have: self.current_rows,
                want: self.capacity_rows,
            });
        }
        let mut tensors: Vec<&Tensor> = self.entries.iter().map(|e| &e.activations).collect();
        let mut labels: Vec<usize> = self
            .entries
            .iter()
            .flat_map(|e| e.labels.iter().copied())
            .collect();
        let max_stamp = self
            .entries
            .iter()
            .map(|e| e.progress_stamp)
            .max()
            .unwrap_or(0);
        if let Some(g) = &generated {
            if g.rows() > 0 {
                tensors.push(&g.activations);
                labels.extend(g.labels.iter().copied());
            }
        }
        let activations = Tensor::vstack(&tensors)?;
        let label_dist = label_histogram(&labels, num_classes);
        self.entries.clear();
        self.current_rows = 0;
        Ok(ActivationBatch {
            activations,
            labels,
            client_id: usize::MAX, // concat batch has no single source
            progress_stamp: max_stamp,
            label_dist,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub client_id: usize,
    pub params: Vec<DenseLayer>,
    pub data_size: usize,
    pub staleness: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBuffer {
    entries: Vec<ModelEntry>,
    capacity: usize, // Q_c
}

impl ModelBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::ValidationError(
                "model buffer capacity must be positive".into(),
            ));
        }
        Ok(ModelBuffer {
            entries: Vec::new(),
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn store_model(
        &mut self,
        client_id: usize,
        params: Vec<DenseLayer>,
        data_size: usize,
        staleness: u64,
    ) -> Result<BufferStatus> {
        if data_size == 0 {
            return Err(Error::ValidationError(
                "model buffer: data_size must be positive".into(),
            ));
        }
        if self.entries.len() >= self.capacity {
            return Err(Error::Overflow(format!(
                "model buffer already holds {} entries",
                self.entries.len()
            )));
        }
        self.entries.push(ModelEntry {
            client_id,
            params,
            data_size,
            staleness,
        });
        if self.entries.len() == self.capacity {
            Ok(BufferStatus::Full)
        } else {
            Ok(BufferStatus::NotFull)
        }
    }

    /// Data-size-weighted parameter mean over the buffered models,
    /// summed in ascending (client_id, arrival) order. Empties the buffer.
    pub fn aggregate_models(&mut self) -> Result<Vec<DenseLayer>> {
        if self.entries.len() != self.capacity {
            return Err(Error::NotFull {
                have: self.entries.len(),
                want: self.capacity,
            });
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&i| (self.entries[i].client_id, i));

        let total_weight: f64 = order
            .iter()
            .map(|&i| self.entries[i].data_size as f64)
            .sum();
        let template = &self.entries[order[0]].params;
        let mut agg: Vec<DenseLayer> = template
            .iter()
            .map(|l| DenseLayer {
                weights: Tensor::zeros(l.weights.shape()),
                bias: Tensor::zeros(l.bias.shape()),
                activation: l.activation,
            })
            .collect();
        for &i in &order {
            let w = self.entries[i].data_size as f64;
            let params = &self.entries[i].params;
            if params.len() != agg.len() {
                return Err(Error::ShapeMismatch(
                    "aggregate_models: layer count mismatch".into(),
                ));
            }
            for (a, p) in agg.iter_mut().zip(params.iter()) {
                for (av, pv) in a.weights.data_mut().iter_mut().zip(p.weights.data().iter()) {
                    *av += w * pv;
                }
                for (av, pv) in a.bias.data_mut().iter_mut().zip(p.bias.data().iter()) {
                    *av += w * pv;
                }
            }
        }
        for a in &mut agg {
            for v in a.weights.data_mut() {
                *v /= total_weight;
            }
            for v in a.bias.data_mut() {
                *v /= total_weight;
            }
        }
        self.entries.clear();
        Ok(agg)
    }
}
