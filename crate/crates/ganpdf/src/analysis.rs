//! Evaluation layer: histograms, rankings, class composition, and
//! cross-dataset density reports, exported as CSV / structured summaries /
//! image mosaics.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;

use crate::data::{encode_image, Dataset, RasterShape};
use crate::error::{Error, Result};
use crate::models::Regressor;

/// Equal-width histogram over `[min, max]` with raw (unnormalized) counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Histogram with the range taken from the data itself.
pub fn histogram(values: &[f64], bin_count: usize) -> Result<Histogram> {
    let (min, max) = value_range(values)?;
    histogram_with_range(values, bin_count, min, max)
}

/// Histogram over an externally fixed range (for comparing several sets on
/// shared bins). Values are clamped into the edge bins; a zero-width range
/// puts everything in bin 0.
pub fn histogram_with_range(
    values: &[f64],
    bin_count: usize,
    min: f64,
    max: f64,
) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    if values.is_empty() {
        return Err(Error::data("histogram input is empty"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite histogram value {v}")));
    }
    let width = (max - min) / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for &v in values {
        let bin = if width > 0.0 {
            (((v - min) / width) as usize).min(bin_count - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    Ok(Histogram { counts, min, max })
}

fn value_range(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::data("empty value set has no range"));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::data(format!("non-finite value {v}")));
        }
        min = min.min(v);
        max = max.max(v);
    }
    Ok((min, max))
}

/// Exact two-sample Kolmogorov-Smirnov statistic: the sup-difference of
/// the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("KS statistic needs two non-empty samples"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut ks = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let t = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        ks = ks.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(ks)
}

/// One scored item in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub id: usize,
    pub tag: String,
    pub label: i64,
    pub log_density: f64,
}

/// Per-tag summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    let (min, max) = value_range(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(SummaryStats {
        count: values.len(),
        mean,
        std: var.sqrt(),
        min,
        max,
        median,
    })
}

/// Scored items plus joint and per-tag histograms on a shared bin range,
/// per-tag summary stats, and (for exactly two tags) the KS statistic
/// between the tags' log-density samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub entries: Vec<ReportEntry>,
    pub histogram: Histogram,
    pub per_tag_histograms: BTreeMap<String, Histogram>,
    pub stats: BTreeMap<String, SummaryStats>,
    pub ks_between_tags: Option<f64>,
}

/// Assemble a report from already-scored entries.
pub fn density_report(entries: Vec<ReportEntry>, bin_count: usize) -> Result<DensityReport> {
    if entries.is_empty() {
        return Err(Error::data("density report needs at least one entry"));
    }
    let all: Vec<f64> = entries.iter().map(|e| e.log_density).collect();
    let (min, max) = value_range(&all)?;
    let joint = histogram_with_range(&all, bin_count, min, max)?;
    let mut by_tag: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in &entries {
        by_tag.entry(e.tag.clone()).or_default().push(e.log_density);
    }
    let mut per_tag_histograms = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for (tag, vals) in &by_tag {
        per_tag_histograms.insert(
            tag.clone(),
            histogram_with_range(vals, bin_count, min, max)?,
        );
        stats.insert(tag.clone(), summary_stats(vals)?);
    }
    let ks_between_tags = if by_tag.len() == 2 {
        let two: Vec<&Vec<f64>> = by_tag.values().collect();
        Some(ks_statistic(two[0], two[1])?)
    } else {
        None
    };
    Ok(DensityReport {
        entries,
        histogram: joint,
        per_tag_histograms,
        stats,
        ks_between_tags,
    })
}

/// Score one dataset with a regressor. Entry ids are the dataset indices.
pub fn evaluate_dataset(
    reg: &Regressor,
    ds: &Dataset,
    tag: &str,
    bin_count: usize,
) -> Result<DensityReport> {
    if ds.is_empty() {
        return Err(Error::data("cannot evaluate an empty dataset"));
    }
    if ds.dim() != reg.input_dim() {
        return Err(Error::shape(format!(
            "dataset dim {} does not match regressor input dim {}",
            ds.dim(),
            reg.input_dim()
        )));
    }
    let preds = reg.predict_batch(&ds.to_tensor()?)?;
    let entries = preds
        .into_iter()
        .enumerate()
        .map(|(id, log_density)| ReportEntry {
            id,
            tag: tag.to_string(),
            label: ds.label(id),
            log_density,
        })
        .collect();
    density_report(entries, bin_count)
}

/// Score two datasets with one regressor into a single report with a
/// joint ranking and shared-range histograms. Ids are joint: dataset `a`
/// keeps its indices, dataset `b` is offset by `a.len()`.
pub fn cross_dataset_report(
    reg: &Regressor,
    ds_a: &Dataset,
    tag_a: &str,
    ds_b: &Dataset,
    tag_b: &str,
    bin_count: usize,
) -> Result<DensityReport> {
    if ds_a.dim() != ds_b.dim() {
        return Err(Error::shape(format!(
            "datasets disagree on dimension: {} vs {}",
            ds_a.dim(),
            ds_b.dim()
        )));
    }
    if tag_a == tag_b {
        return Err(Error::config("cross-dataset tags must differ"));
    }
    if ds_a.is_empty() || ds_b.is_empty() {
        return Err(Error::data("cross-dataset report needs non-empty datasets"));
    }
    if ds_a.dim() != reg.input_dim() {
        return Err(Error::shape(format!(
            "dataset dim {} does not match regressor input dim {}",
            ds_a.dim(),
            reg.input_dim()
        )));
    }
    let preds_a = reg.predict_batch(&ds_a.to_tensor()?)?;
    let preds_b = reg.predict_batch(&ds_b.to_tensor()?)?;
    let mut entries = Vec::with_capacity(preds_a.len() + preds_b.len());
    for (id, p) in preds_a.into_iter().enumerate() {
        entries.push(ReportEntry {
            id,
            tag: tag_a.to_string(),
            label: ds_a.label(id),
            log_density: p,
        });
    }
    let offset = ds_a.len();
    for (i, p) in preds_b.into_iter().enumerate() {
        entries.push(ReportEntry {
            id: offset + i,
            tag: tag_b.to_string(),
            label: ds_b.label(i),
            log_density: p,
        });
    }
    density_report(entries, bin_count)
}

/// Ids of the `k` highest- and `k` lowest-density entries. Total order:
/// log-density, ties broken by id ascending - reproducible under any
/// input permutation.
pub fn rank_extremes(report: &DensityReport, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if k > report.entries.len() {
        return Err(Error::config(format!(
            "k = {k} exceeds {} report entries",
            report.entries.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = report
        .entries
        .iter()
        .map(|e| (e.log_density, e.id))
        .collect();
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite log-densities")
            .then(a.1.cmp(&b.1))
    });
    let top: Vec<usize> = order[..k].iter().map(|&(_, id)| id).collect();
    // Worst-first for the bottom list, with the same id tie-break.
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite log-densities")
            .then(a.1.cmp(&b.1))
    });
    let bottom: Vec<usize> = order[..k].iter().map(|&(_, id)| id).collect();
    Ok((top, bottom))
}

/// Fraction of each class among the first `k` of a ranked id list.
/// `labels[id]` gives the class of entry `id`.
pub fn class_composition(
    ranked_ids: &[usize],
    labels: &[i64],
    k: usize,
) -> Result<BTreeMap<i64, f64>> {
    if k > ranked_ids.len() {
        return Err(Error::config(format!(
            "k = {k} exceeds {} ranked ids",
            ranked_ids.len()
        )));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &id in &ranked_ids[..k] {
        let label = *labels.get(id).ok_or_else(|| {
            Error::data(format!("ranked id {id} has no label (only {})", labels.len()))
        })?;
        *counts.entry(label).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(l, c)| (l, c as f64 / k.max(1) as f64))
        .collect())
}

/// Spearman rank correlation. Ranks are assigned by sorting with ties
/// broken by index, which is exact for continuous (tie-free) scores.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::data(format!(
            "Spearman needs two equal-length samples of >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).expect("finite").then(i.cmp(&j)));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..ra.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::numerical("rank variance is zero"));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// CSV export: one row per entry (`id,tag,label,log_density`).
pub fn write_report_csv<W: IoWrite>(mut w: W, report: &DensityReport) -> Result<()> {
    writeln!(w, "id,tag,label,log_density")?;
    for e in &report.entries {
        writeln!(w, "{},{},{},{:.17e}", e.id, e.tag, e.label, e.log_density)?;
    }
    Ok(())
}

/// Structured summary (JSON): per-tag stats, histograms, and KS.
pub fn summary_json(report: &DensityReport) -> serde_json::Value {
    let stats: serde_json::Map<String, serde_json::Value> = report
        .stats
        .iter()
        .map(|(tag, s)| {
            (
                tag.clone(),
                serde_json::json!({
                    "count": s.count,
                    "mean": s.mean,
                    "std": s.std,
                    "min": s.min,
                    "max": s.max,
                    "median": s.median,
                }),
            )
        })
        .collect();
    let hists: serde_json::Map<String, serde_json::Value> = report
        .per_tag_histograms
        .iter()
        .map(|(tag, h)| (tag.clone(), serde_json::json!(h.counts)))
        .collect();
    serde_json::json!({
        "bin_range": [report.histogram.min, report.histogram.max],
        "bins": report.histogram.counts,
        "per_tag_bins": hists,
        "stats": stats,
        "ks_between_tags": report.ks_between_tags,
    })
}

pub fn write_summary(path: &Path, report: &DensityReport) -> Result<()> {
    let text = serde_json::to_string_pretty(&summary_json(report))
        .map_err(|e| Error::data(format!("summary serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Render selected raster items as one PGM/PPM mosaic, row-major with
/// `grid_cols` columns; unfilled cells are black. Deterministic bytes.
pub fn image_grid_dump(
    ds: &Dataset,
    ids: &[usize],
    path: &Path,
    grid_cols: usize,
) -> Result<()> {
    let shape = ds
        .raster()
        .ok_or_else(|| Error::data("image grid needs a raster dataset"))?;
    if grid_cols == 0 || ids.is_empty() {
        return Err(Error::config("image grid needs >= 1 column and >= 1 item"));
    }
    let rows = ids.len().div_ceil(grid_cols);
    let canvas = RasterShape {
        height: rows * shape.height,
        width: grid_cols * shape.width,
        channels: shape.channels,
    };
    let mut values = vec![-1.0f64; canvas.len()];
    for (cell, &id) in ids.iter().enumerate() {
        if id >= ds.len() {
            return Err(Error::data(format!(
                "grid id {id} out of range for {} items",
                ds.len()
            )));
        }
        let item = ds.item(id);
        let (gy, gx) = (cell / grid_cols, cell % grid_cols);
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    let src = (y * shape.width + x) * shape.channels + c;
                    let dy = gy * shape.height + y;
                    let dx = gx * shape.width + x;
                    let dst = (dy * canvas.width + dx) * canvas.channels + c;
                    values[dst] = item[src];
                }
            }
        }
    }
    fs::write(path, encode_image(&values, canvas)?)?;
    Ok(())
}
