//! Dataset ingestion, synthetic mixtures, and the KDE brute-force oracle.
//!
//! Loaders are deterministic and byte-driven; synthetic generators are
//! seed-driven. The kernel density estimator lives here as an independent
//! ground-truth instrument for validating learned density rankings - it is
//! never part of the product path.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{Mat, Tensor};

/// Spatial interpretation of flat item vectors: interleaved row-major
/// `[height][width][channel]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl RasterShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A labeled collection of equal-dimension vectors with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<i64>,
    dim: usize,
    provenance: String,
    raster: Option<RasterShape>,
}

impl Dataset {
    pub fn new(
        values: Vec<f64>,
        labels: Vec<i64>,
        dim: usize,
        provenance: impl Into<String>,
        raster: Option<RasterShape>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("dataset dimension must be >= 1"));
        }
        if values.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "{} values cannot hold {} items of dim {dim}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(r) = raster {
            if r.len() != dim {
                return Err(Error::shape(format!(
                    "raster {}x{}x{} does not flatten to dim {dim}",
                    r.height, r.width, r.channels
                )));
            }
        }
        Ok(Dataset {
            values,
            labels,
            dim,
            provenance: provenance.into(),
            raster,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn raster(&self) -> Option<RasterShape> {
        self.raster
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> i64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], i64)> {
        self.values.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// Copy the vectors into a `[count, dim]` training tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(vec![self.len(), self.dim], self.values.clone())
    }

    /// New dataset holding the selected items, in the given order.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Result<Dataset> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::data(format!(
                    "subset index {i} out of range for {} items",
                    self.len()
                )));
            }
            values.extend_from_slice(self.item(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(values, labels, self.dim, provenance, self.raster)
    }
}

/// Deterministic shuffled split into (train, test) with `test_count` items
/// held out.
pub fn split_train_test(ds: &Dataset, test_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if test_count >= ds.len() {
        return Err(Error::config(format!(
            "cannot hold out {test_count} of {} items",
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let (test_idx, train_idx) = indices.split_at(test_count);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train = ds.subset(&train_idx, format!("{} [train split]", ds.provenance))?;
    let test = ds.subset(&test_idx, format!("{} [test split]", ds.provenance))?;
    Ok((train, test))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset.checked_add(4).filter(|&e| e <= bytes.len());
    match end {
        Some(e) => Ok(u32::from_be_bytes(bytes[offset..e].try_into().unwrap())),
        None => Err(Error::Parse {
            offset,
            what: format!("unexpected end of file while reading {what}"),
        }),
    }
}

/// Load the classic big-endian IDX image/label file pair.
///
/// Pixel bytes map linearly onto `[-1, 1]` (`0 -> -1`, `255 -> 1`).
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path)?;
    let lab = fs::read(labels_path)?;

    let magic = read_be_u32(&img, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            what: format!("bad image magic {magic:#010x}, want {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_be_u32(&img, 4, "image count")? as usize;
    let rows = read_be_u32(&img, 8, "row count")? as usize;
    let cols = read_be_u32(&img, 12, "column count")? as usize;
    let pixel_bytes = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Parse {
            offset: 4,
            what: "image dimensions overflow".into(),
        })?;
    if img.len() != 16 + pixel_bytes {
        return Err(Error::Parse {
            offset: img.len().min(16 + pixel_bytes),
            what: format!(
                "image payload is {} bytes, header promises {pixel_bytes}",
                img.len().saturating_sub(16)
            ),
        });
    }

    let lmagic = read_be_u32(&lab, 0, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            what: format!("bad label magic {lmagic:#010x}, want {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = read_be_u32(&lab, 4, "label count")? as usize;
    if lab.len() != 8 + lcount {
        return Err(Error::Parse {
            offset: lab.len().min(8 + lcount),
            what: format!(
                "label payload is {} bytes, header promises {lcount}",
                lab.len().saturating_sub(8)
            ),
        });
    }
    if lcount != count {
        return Err(Error::data(format!(
            "{count} images but {lcount} labels"
        )));
    }

    let values: Vec<f64> = img[16..].iter().map(|&b| b as f64 / 127.5 - 1.0).collect();
    let labels: Vec<i64> = lab[8..].iter().map(|&b| b as i64).collect();
    Dataset::new(
        values,
        labels,
        rows * cols,
        format!("idx:{}", images_path.display()),
        Some(RasterShape {
            height: rows,
            width: cols,
            channels: 1,
        }),
    )
}

const CIFAR_RECORD: usize = 3073; // 1 label byte + 32*32*3 planar pixels

/// Load one or more standard binary batches (per record: label byte, then
/// 1024 R, 1024 G, 1024 B planar pixels).
///
/// Pixels are re-interleaved to `[h][w][c]` and mapped onto `[-1, 1]`. An
/// empty file contributes zero items.
pub fn load_cifar_binary(paths: &[&Path]) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = fs::read(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Parse {
                offset: bytes.len() - bytes.len() % CIFAR_RECORD,
                what: format!(
                    "file length {} is not a multiple of the {CIFAR_RECORD}-byte record",
                    bytes.len()
                ),
            });
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            labels.push(rec[0] as i64);
            let pix = &rec[1..];
            for y in 0..32 {
                for x in 0..32 {
                    for c in 0..3 {
                        let b = pix[c * 1024 + y * 32 + x];
                        values.push(b as f64 / 127.5 - 1.0);
                    }
                }
            }
        }
    }
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    Dataset::new(
        values,
        labels,
        3072,
        format!("cifar:{}", names.join(",")),
        Some(RasterShape {
            height: 32,
            width: 32,
            channels: 3,
        }),
    )
}

/// Nearest-neighbor raster resample, with grayscale-to-color channel
/// replication. Deterministic: output pixel `(y, x)` reads source pixel
/// `(floor(y*sh/th), floor(x*sw/tw))`.
pub fn rescale(ds: &Dataset, target_h: usize, target_w: usize, target_c: usize) -> Result<Dataset> {
    let src = ds.raster.ok_or_else(|| {
        Error::data("rescale requires a raster dataset (no spatial shape recorded)")
    })?;
    if target_h == 0 || target_w == 0 || target_c == 0 {
        return Err(Error::config("rescale target dims must be >= 1"));
    }
    if !(src.channels == target_c || (src.channels == 1 && target_c == 3)) {
        return Err(Error::config(format!(
            "unsupported channel conversion {} -> {target_c}",
            src.channels
        )));
    }
    let out_shape = RasterShape {
        height: target_h,
        width: target_w,
        channels: target_c,
    };
    let mut values = Vec::with_capacity(ds.len() * out_shape.len());
    for i in 0..ds.len() {
        let item = ds.item(i);
        for y in 0..target_h {
            let sy = y * src.height / target_h;
            for x in 0..target_w {
                let sx = x * src.width / target_w;
                for c in 0..target_c {
                    let sc = if src.channels == 1 { 0 } else { c };
                    values.push(item[(sy * src.width + sx) * src.channels + sc]);
                }
            }
        }
    }
    Dataset::new(
        values,
        ds.labels.clone(),
        out_shape.len(),
        format!(
            "{} [rescaled {}x{}x{}]",
            ds.provenance, target_h, target_w, target_c
        ),
        Some(out_shape),
    )
}

/// Drop every item whose class label is excluded; returns the filtered
/// dataset and the number of removed items.
pub fn holdout_filter(ds: &Dataset, excluded: &BTreeSet<i64>) -> Result<(Dataset, usize)> {
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| !excluded.contains(&ds.labels[i]))
        .collect();
    let removed = ds.len() - keep.len();
    let tags: Vec<String> = excluded.iter().map(|l| l.to_string()).collect();
    let filtered = ds.subset(
        &keep,
        format!("{} [holdout -{{{}}}]", ds.provenance, tags.join(",")),
    )?;
    Ok((filtered, removed))
}

/// One isotropic Gaussian mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Standard deviation of the isotropic covariance (`scale^2 * I`).
    pub scale: f64,
    pub weight: f64,
}

/// Isotropic-Gaussian mixture over `R^d`, optionally embedded into a
/// higher-dimensional ambient space by a seeded orthonormal linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMixtureSpec {
    pub components: Vec<MixtureComponent>,
    pub embedding: Option<EmbeddingSpec>,
}

/// Orthonormal embedding `R^d -> R^target_dim` generated deterministically
/// from `seed` (isometric, so mixture geometry is preserved exactly).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingSpec {
    pub target_dim: usize,
    pub seed: u64,
}

impl SyntheticMixtureSpec {
    pub fn validate(&self) -> Result<usize> {
        if self.components.is_empty() {
            return Err(Error::config("mixture needs at least one component"));
        }
        let d = self.components[0].mean.len();
        if d == 0 {
            return Err(Error::config("mixture dimension must be >= 1"));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d {
                return Err(Error::config(format!(
                    "component {i} has dim {} but component 0 has dim {d}",
                    c.mean.len()
                )));
            }
            if !(c.scale.is_finite() && c.scale > 0.0) {
                return Err(Error::config(format!(
                    "component {i} covariance scale must be positive, got {}",
                    c.scale
                )));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::config(format!(
                    "component {i} weight must be >= 0, got {}",
                    c.weight
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "mixture weights sum to {total}, must sum to 1"
            )));
        }
        if let Some(e) = self.embedding {
            if e.target_dim < d {
                return Err(Error::config(format!(
                    "embedding target dim {} must be >= mixture dim {d}",
                    e.target_dim
                )));
            }
        }
        Ok(d)
    }

    /// Output dimension after optional embedding.
    pub fn ambient_dim(&self) -> Result<usize> {
        let d = self.validate()?;
        Ok(self.embedding.map_or(d, |e| e.target_dim))
    }
}

/// Columns-orthonormal matrix (`target x d`, Q^T Q = I) from Gram-Schmidt
/// on a seeded Gaussian matrix.
pub fn orthonormal_embedding(d: usize, target: usize, seed: u64) -> Result<Mat> {
    if target < d || d == 0 {
        return Err(Error::config(format!(
            "embedding must not reduce dimension ({d} -> {target})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Build columns, orthonormalize, retry draw on (measure-zero) collapse.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..target).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c.iter()) {
                *vi -= dot * ci;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            cols.push(v);
        }
    }
    let mut q = Mat::zeros(target, d);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            q.set(i, j, *v);
        }
    }
    Ok(q)
}

/// Draw `count` i.i.d. mixture samples; the component index becomes the
/// class label. Fully determined by `(spec, count, seed)`.
pub fn synth_mixture(spec: &SyntheticMixtureSpec, count: usize, seed: u64) -> Result<Dataset> {
    let d = spec.validate()?;
    let embedding = match spec.embedding {
        Some(e) => Some(orthonormal_embedding(d, e.target_dim, e.seed)?),
        None => None,
    };
    let out_dim = embedding.as_ref().map_or(d, |q| q.rows());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(count * out_dim);
    let mut labels = Vec::with_capacity(count);
    let mut point = vec![0.0f64; d];
    for _ in 0..count {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = spec.components.len() - 1;
        for (i, c) in spec.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        let comp = &spec.components[idx];
        for (p, m) in point.iter_mut().zip(comp.mean.iter()) {
            let e: f64 = rng.sample(StandardNormal);
            *p = m + comp.scale * e;
        }
        match &embedding {
            Some(q) => {
                for i in 0..q.rows() {
                    let mut s = 0.0;
                    for (j, p) in point.iter().enumerate() {
                        s += q.get(i, j) * p;
                    }
                    values.push(s);
                }
            }
            None => values.extend_from_slice(&point),
        }
        labels.push(idx as i64);
    }
    Dataset::new(
        values,
        labels,
        out_dim,
        format!(
            "synthetic mixture ({} components, dim {d}{})",
            spec.components.len(),
            if out_dim != d {
                format!(" embedded in {out_dim}")
            } else {
                String::new()
            }
        ),
        None,
    )
}

/// Gaussian-kernel density estimate `log (1/N) sum_i K_h(q - r_i)`,
/// accumulated in log-sum-exp form with sorted terms so the result is
/// bit-identical under any permutation of the reference set.
pub fn kde_log_density(reference: &Tensor, bandwidth: f64, query: &[f64]) -> Result<f64> {
    if reference.rank() != 2 || reference.batch_len() == 0 {
        return Err(Error::shape(format!(
            "KDE reference must be a non-empty [count, dim] tensor, got {:?}",
            reference.shape()
        )));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::config(format!(
            "KDE bandwidth must be positive, got {bandwidth}"
        )));
    }
    let d = reference.feature_dim();
    if query.len() != d {
        return Err(Error::shape(format!(
            "query dim {} does not match reference dim {d}",
            query.len()
        )));
    }
    let n = reference.shape()[0];
    let h2 = bandwidth * bandwidth;
    let mut exponents = Vec::with_capacity(n);
    for i in 0..n {
        let r = reference.row(i);
        let sq: f64 = query.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        exponents.push(-sq / (2.0 * h2));
    }
    exponents.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = *exponents.last().unwrap();
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = exponents.iter().map(|e| (e - m).exp()).sum();
    Ok(m + sum.ln() - (n as f64).ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * h2).ln())
}

/// Bandwidth by the classic plug-in rule: mean per-dimension sample
/// standard deviation times `(4 / ((d + 2) n))^(1 / (d + 4))`.
pub fn silverman_bandwidth(samples: &Tensor) -> Result<f64> {
    if samples.rank() != 2 || samples.shape()[0] < 2 {
        return Err(Error::shape(
            "bandwidth rule needs a [count >= 2, dim] sample tensor",
        ));
    }
    let n = samples.shape()[0];
    let d = samples.feature_dim();
    let mut sigma_sum = 0.0;
    for j in 0..d {
        let mut mean = 0.0;
        for i in 0..n {
            mean += samples.row(i)[j];
        }
        mean /= n as f64;
        let mut var = 0.0;
        for i in 0..n {
            let diff = samples.row(i)[j] - mean;
            var += diff * diff;
        }
        var /= (n - 1) as f64;
        sigma_sum += var.sqrt();
    }
    let sigma = sigma_sum / d as f64;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::numerical(format!(
            "degenerate sample spread {sigma} - cannot pick a bandwidth"
        )));
    }
    let df = d as f64;
    Ok(sigma * (4.0 / ((df + 2.0) * n as f64)).powf(1.0 / (df + 4.0)))
}

pub const DATASET_MAGIC: &[u8; 8] = b"GPDATST1";
pub const DATASET_VERSION: u32 = 1;

/// Versioned binary cache (all integers and floats little-endian): magic,
/// version, count u64, dim u32, raster flag u8 (+ h, w, c u32 when set),
/// provenance (u32 length + UTF-8), labels i64, values f64. Bit-exact.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + ds.values.len() * 8 + ds.labels.len() * 8);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    match ds.raster {
        Some(r) => {
            out.push(1);
            out.extend_from_slice(&(r.height as u32).to_le_bytes());
            out.extend_from_slice(&(r.width as u32).to_le_bytes());
            out.extend_from_slice(&(r.channels as u32).to_le_bytes());
        }
        None => out.push(0),
    }
    out.extend_from_slice(&(ds.provenance.len() as u32).to_le_bytes());
    out.extend_from_slice(ds.provenance.as_bytes());
    for l in &ds.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for v in &ds.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - *pos < n {
            return Err(Error::Parse {
                offset: *pos,
                what: format!("unexpected end of data while reading {what}"),
            });
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 8, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            what: "bad magic, not a dataset cache".into(),
        });
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::Parse {
            offset: pos,
            what: format!("unsupported dataset cache version {version}"),
        });
    }
    let count = u64::from_le_bytes(take(&mut pos, 8, "count")?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(&mut pos, 4, "dim")?.try_into().unwrap()) as usize;
    let raster = match take(&mut pos, 1, "raster flag")?[0] {
        0 => None,
        1 => {
            let h = u32::from_le_bytes(take(&mut pos, 4, "raster height")?.try_into().unwrap());
            let w = u32::from_le_bytes(take(&mut pos, 4, "raster width")?.try_into().unwrap());
            let c = u32::from_le_bytes(take(&mut pos, 4, "raster channels")?.try_into().unwrap());
            Some(RasterShape {
                height: h as usize,
                width: w as usize,
                channels: c as usize,
            })
        }
        other => {
            return Err(Error::Parse {
                offset: pos - 1,
                what: format!("invalid raster flag {other}"),
            })
        }
    };
    let plen = u32::from_le_bytes(take(&mut pos, 4, "provenance length")?.try_into().unwrap());
    let pstart = pos;
    let pbytes = take(&mut pos, plen as usize, "provenance")?;
    let provenance = String::from_utf8(pbytes.to_vec()).map_err(|_| Error::Parse {
        offset: pstart,
        what: "provenance is not UTF-8".into(),
    })?;
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(i64::from_le_bytes(take(&mut pos, 8, "label")?.try_into().unwrap()));
    }
    let mut values = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        values.push(f64::from_le_bytes(take(&mut pos, 8, "value")?.try_into().unwrap()));
    }
    if pos != bytes.len() {
        return Err(Error::Parse {
            offset: pos,
            what: format!("{} trailing bytes after dataset payload", bytes.len() - pos),
        });
    }
    Dataset::new(values, labels, dim, provenance, raster)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

/// Map a value from `[-1, 1]` to a display byte, clamping out-of-range
/// values instead of wrapping.
pub fn to_display_byte(v: f64) -> u8 {
    let scaled = (v + 1.0) * 127.5;
    scaled.round().clamp(0.0, 255.0) as u8
}

/// Encode one raster item as binary PGM (1 channel) or PPM (3 channels).
pub fn encode_image(item: &[f64], shape: RasterShape) -> Result<Vec<u8>> {
    if item.len() != shape.len() {
        return Err(Error::shape(format!(
            "item has {} values, raster {}x{}x{} needs {}",
            item.len(),
            shape.height,
            shape.width,
            shape.channels,
            shape.len()
        )));
    }
    let tag = match shape.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::config(format!(
                "image export supports 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{tag}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(item.iter().map(|&v| to_display_byte(v)));
    Ok(out)
}

pub fn write_image(path: &Path, item: &[f64], shape: RasterShape) -> Result<()> {
    fs::write(path, encode_image(item, shape)?)?;
    Ok(())
}
