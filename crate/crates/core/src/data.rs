//! Dataset ingestion (IDX binary format, synthetic Gaussian generator)
//! and non-IID partitioning (shard-based and Dirichlet label skew).

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Dirichlet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Tensor, // [N x d_in]
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows and labels at the given indices, in index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.feature_dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features: Tensor::from_vec(&[indices.len(), d], data).unwrap(),
            labels,
            num_classes: self.num_classes,
        }
    }
}

/// Per-client index lists into a dataset. Lists are disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }
}

fn read_u32_be(buf: &[u8], off: usize, path: &Path) -> Result<u32> {
    let bytes: [u8; 4] = buf
        .get(off..off + 4)
        .ok_or_else(|| Error::TruncatedFile(path.display().to_string()))?
        .try_into()
        .unwrap();
    Ok(u32::from_be_bytes(bytes))
}

/// Load an IDX image/label file pair. Big-endian headers, magic 2051 for
/// images and 2049 for labels; pixels scaled from u8 to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img_buf = Vec::new();
    File::open(images_path)?.read_to_end(&mut img_buf)?;
    let magic = read_u32_be(&img_buf, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let n = read_u32_be(&img_buf, 4, images_path)? as usize;
    let rows = read_u32_be(&img_buf, 8, images_path)? as usize;
    let cols = read_u32_be(&img_buf, 12, images_path)? as usize;
    let d = rows * cols;
    if img_buf.len() < 16 + n * d {
        return Err(Error::TruncatedFile(images_path.display().to_string()));
    }

    let mut lbl_buf = Vec::new();
    File::open(labels_path)?.read_to_end(&mut lbl_buf)?;
    let magic = read_u32_be(&lbl_buf, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let n_labels = read_u32_be(&lbl_buf, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    if lbl_buf.len() < 8 + n {
        return Err(Error::TruncatedFile(labels_path.display().to_string()));
    }

    let data: Vec<f64> = img_buf[16..16 + n * d]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = lbl_buf[8..8 + n].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    Ok(Dataset {
        features: Tensor::from_vec(&[n, d], data)?,
        labels,
        num_classes,
    })
}

/// Write a dataset as an IDX image/label file pair (u8 pixels, values
/// quantized from [0, 1]). The counterpart of `load_idx`.
pub fn save_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    use std::io::Write;
    let n = dataset.len();
    let d = dataset.feature_dim();
    // Store as n x d x 1 "images" unless d is a perfect square.
    let side = (d as f64).sqrt() as usize;
    let (rows, cols) = if side * side == d { (side, side) } else { (d, 1) };
    let mut img = Vec::with_capacity(16 + n * d);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for v in dataset.features.data() {
        img.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    let mut lbl = Vec::with_capacity(8 + n);
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(n as u32).to_be_bytes());
    for &y in &dataset.labels {
        lbl.push(y as u8);
    }
    File::create(images_path)?.write_all(&img)?;
    File::create(labels_path)?.write_all(&lbl)?;
    Ok(())
}

/// Shard-based label skew: sort by label, cut into K*s shards aligned to
/// label boundaries when possible, hand each client s shards.
pub fn shard_partition<R: Rng>(
    dataset: &Dataset,
    num_clients: usize,
    shards_per_client: usize,
    rng: &mut R,
) -> Result<Partition> {
    let total_shards = num_clients * shards_per_client;
    if total_shards == 0 || dataset.len() < total_shards {
        return Err(Error::TooFewSamples(format!(
            "{} samples cannot form {} shards",
            dataset.len(),
            total_shards
        )));
    }
    let mut by_label: Vec<usize> = (0..dataset.len()).collect();
    by_label.sort_by_key(|&i| (dataset.labels[i], i));

    // Try to align shard boundaries to label boundaries: give each label
    // block a shard count proportional to its size, then cut each block
    // into equal contiguous sub-shards.
    let mut shards: Vec<Vec<usize>> = Vec::with_capacity(total_shards);
    let m = dataset.num_classes;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &i in &by_label {
        blocks[dataset.labels[i]].push(i);
    }
    let aligned = total_shards % m == 0 && blocks.iter().all(|b| b.len() >= total_shards / m);
    if aligned {
        let per_label = total_shards / m;
        for block in &blocks {
            let base = block.len() / per_label;
            let mut start = 0;
            for s in 0..per_label {
                // Remainder goes to the last shard of the block.
                let end = if s == per_label - 1 {
                    block.len()
                } else {
                    start + base
                };
                shards.push(block[start..end].to_vec());
                start = end;
            }
        }
    } else {
        let base = by_label.len() / total_shards;
        let mut start = 0;
        for s in 0..total_shards {
            let end = if s == total_shards - 1 {
                by_label.len()
            } else {
                start + base
            };
            shards.push(by_label[start..end].to_vec());
            start = end;
        }
    }

    let mut shard_ids: Vec<usize> = (0..total_shards).collect();
    shard_ids.shuffle(rng);
    let mut client_indices = vec![Vec::new(); num_clients];
    for (pos, &sid) in shard_ids.iter().enumerate() {
        client_indices[pos / shards_per_client].extend_from_slice(&shards[sid]);
    }
    for c in &mut client_indices {
        c.sort_unstable();
        if c.is_empty() {
            return Err(Error::TooFewSamples("empty client after sharding".into()));
        }
    }
    Ok(Partition { client_indices })
}

/// Distribution-based label skew: per class, a Dir(alpha) draw splits
/// that class's samples proportionally across clients. Empty clients are
/// repaired by moving one sample from the largest client.
pub fn dirichlet_partition<R: Rng>(
    dataset: &Dataset,
    num_clients: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Partition> {
    if alpha <= 0.0 {
        return Err(Error::ValidationError("dirichlet alpha must be > 0".into()));
    }
    if dataset.len() < num_clients {
        return Err(Error::TooFewSamples(format!(
            "{} samples for {} clients",
            dataset.len(),
            num_clients
        )));
    }
    let mut client_indices: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for class in 0..dataset.num_classes {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let proportions: Vec<f64> = if num_clients == 1 {
            vec![1.0]
        } else {
            Dirichlet::new_with_size(alpha, num_clients)
                .map_err(|e| Error::ValidationError(format!("dirichlet: {e}")))?
                .sample(rng)
        };
        // Cumulative rounding keeps the counts summing to members.len().
        let mut cum = 0.0;
        let mut assigned = 0;
        for (c, p) in proportions.iter().enumerate() {
            cum += p;
            let upto = if c == num_clients - 1 {
                members.len()
            } else {
                (cum * members.len() as f64).round() as usize
            };
            let upto = upto.min(members.len()).max(assigned);
            client_indices[c].extend_from_slice(&members[assigned..upto]);
            assigned = upto;
        }
    }
    // Repair empty clients by donating one sample from the largest.
    for c in 0..num_clients {
        if client_indices[c].is_empty() {
            let donor = (0..num_clients)
                .max_by_key(|&i| client_indices[i].len())
                .unwrap();
            if client_indices[donor].len() <= 1 {
                return Err(Error::TooFewSamples(
                    "cannot repair empty client in dirichlet partition".into(),
                ));
            }
            let sample = client_indices[donor].pop().unwrap();
            client_indices[c].push(sample);
        }
    }
    for c in &mut client_indices {
        c.sort_unstable();
    }
    Ok(Partition { client_indices })
}

/// Desk-scale stand-in for image corpora: class y drawn from N(c_y, I)
/// with centers at mutual distance `class_sep`.
pub fn synthetic_gaussian_dataset<R: Rng>(
    num_classes: usize,
    per_class: usize,
    feature_dim: usize,
    class_sep: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || feature_dim == 0 {
        return Err(Error::ValidationError(
            "synthetic dataset: all parameters must be positive".into(),
        ));
    }
    if num_classes > feature_dim {
        return Err(Error::ValidationError(format!(
            "synthetic dataset: {num_classes} classes need feature_dim >= {num_classes}"
        )));
    }
    // c_y = (sep / sqrt(2)) * e_y gives pairwise center distance `sep`.
    let offset = class_sep / 2f64.sqrt();
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * feature_dim);
    let mut labels = Vec::with_capacity(n);
    for y in 0..num_classes {
        for _ in 0..per_class {
            for i in 0..feature_dim {
                let center = if i == y { offset } else { 0.0 };
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                data.push(center + z);
            }
            labels.push(y);
        }
    }
    Ok(Dataset {
        features: Tensor::from_vec(&[n, feature_dim], data)?,
        labels,
        num_classes,
    })
}

use rand_distr::Distribution as _;
