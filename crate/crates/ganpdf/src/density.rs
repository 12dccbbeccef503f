//! Per-point log-density of generated samples.
//!
//! For `G: R^n -> R^m` (m >= n) with full-rank Jacobian `J`, the density of
//! `x = G(z)` with respect to the n-dimensional volume measure on the image
//! manifold is
//!
//! ```text
//! log p(x) = log p(z) - (1/2) log det(J^T J) = log p(z) - sum_i log |r_ii|
//! ```
//!
//! with `r_ii` the diagonal of the thin-QR factor of `J`. The QR route
//! never forms `J^T J`, so it avoids squaring the condition number; the
//! log-domain sum avoids over/underflow of the raw determinant product.
//! For square maps the classical change of variables (`log p(z) -
//! log |det J|`) is implemented separately via LU as a cross-check: the two
//! must agree because `det(J^T J) = (det J)^2`.

use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{householder_r_diag, lu_log_abs_det};
use crate::models::{Generator, LatentPrior};
use crate::net::encode_network;
use crate::Mat;

/// Default threshold on `min |r_ii|` below which a Jacobian is considered
/// rank-deficient. The formula assumes an injective, differentiable map;
/// points that violate it get flagged rather than silently mislabeled.
pub const DEFAULT_DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Rank-deficiency audit record attached to every density evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyFlag {
    pub rank_deficient: bool,
    pub min_abs_rii: f64,
    pub threshold: f64,
}

impl DegeneracyFlag {
    fn new(min_abs_rii: f64, threshold: f64) -> Self {
        DegeneracyFlag {
            rank_deficient: min_abs_rii < threshold,
            min_abs_rii,
            threshold,
        }
    }
}

/// One `(z, G(z), log p(G(z)))` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTriplet {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub log_px: f64,
    pub flag: DegeneracyFlag,
}

/// `sum_i log |r_ii|` of the thin QR of `J`, i.e. `(1/2) log det(J^T J)`,
/// plus the degeneracy flag.
///
/// The decomposition uses column-pivot-free Householder reflections: with
/// no pivoting the result is deterministic, and for full-rank `J` the
/// `|r_ii|` are pivot-order independent in exact arithmetic anyway. A
/// wide matrix (m < n) is a structural error - `J^T J` is singular by
/// construction. An exactly zero `r_ii` yields `-inf` with the flag set.
pub fn log_det_metric(j: &Mat, threshold: f64) -> Result<(f64, DegeneracyFlag)> {
    if j.rows() < j.cols() {
        return Err(Error::shape(format!(
            "Jacobian is {}x{}: a map into fewer dimensions than its domain \
             has a singular metric tensor",
            j.rows(),
            j.cols()
        )));
    }
    if !j.all_finite() {
        return Err(Error::numerical("Jacobian contains non-finite entries"));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::config(format!(
            "degeneracy threshold must be finite and >= 0, got {threshold}"
        )));
    }
    let diag = householder_r_diag(j)?;
    let mut log_det = 0.0;
    let mut min_abs = f64::INFINITY;
    for r in &diag {
        let a = r.abs();
        min_abs = min_abs.min(a);
        log_det += a.ln();
    }
    Ok((log_det, DegeneracyFlag::new(min_abs, threshold)))
}

/// `log p(G(z))` on the image manifold: prior log-density minus the QR
/// log-determinant of the analytic Jacobian.
///
/// A rank-deficient Jacobian is not an error: the value (possibly `+inf`)
/// comes back with the flag set and the caller decides. Non-finite model
/// outputs are a hard error.
pub fn manifold_log_density(
    gen: &Generator,
    z: &[f64],
    threshold: f64,
) -> Result<(f64, DegeneracyFlag)> {
    let prior = LatentPrior::new(gen.latent_dim())?;
    let log_pz = prior.log_density(z)?;
    let jac = gen.jacobian(z)?;
    let (log_det, flag) = log_det_metric(&jac, threshold)?;
    if !log_pz.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite prior log-density {log_pz}"
        )));
    }
    Ok((log_pz - log_det, flag))
}

/// Classical change of variables for square maps: `log p(z) - log |det J|`
/// via LU with partial pivoting.
///
/// This exists solely to cross-validate the metric-tensor route on
/// bijective generators - it shares no decomposition code with
/// [`manifold_log_density`].
pub fn bijective_log_density(gen: &Generator, z: &[f64]) -> Result<f64> {
    if gen.latent_dim() != gen.output_dim() {
        return Err(Error::shape(format!(
            "bijective route needs a square map, got {} -> {}",
            gen.latent_dim(),
            gen.output_dim()
        )));
    }
    let prior = LatentPrior::new(gen.latent_dim())?;
    let log_pz = prior.log_density(z)?;
    let jac = gen.jacobian(z)?;
    let log_det = lu_log_abs_det(&jac)?;
    Ok(log_pz - log_det)
}

/// Draw `count` triplets `(z, G(z), log p(G(z)))` deterministically.
///
/// Triplet `i` uses ChaCha8 stream `i` of `seed`, so the result is a pure
/// function of `(G, count, seed, threshold)` no matter how many threads
/// participate; results are ordered by index. Degenerate samples are data,
/// not failures - they come back flagged so consumers can exclude them.
pub fn sample_triplets(
    gen: &Generator,
    count: usize,
    seed: u64,
    threshold: f64,
) -> Result<Vec<DensityTriplet>> {
    if count == 0 {
        return Err(Error::config("triplet count must be >= 1"));
    }
    let prior = LatentPrior::new(gen.latent_dim())?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z = prior.sample(&mut rng);
            let x = gen.generate(&z)?;
            let (log_px, flag) = manifold_log_density(gen, &z, threshold)?;
            Ok(DensityTriplet { z, x, log_px, flag })
        })
        .collect()
}

/// Split triplets into clean and degenerate-flagged subsets; regressor
/// training must only ever see the clean ones.
pub fn partition_clean(triplets: Vec<DensityTriplet>) -> (Vec<DensityTriplet>, usize) {
    let mut clean = Vec::with_capacity(triplets.len());
    let mut flagged = 0usize;
    for t in triplets {
        if t.flag.rank_deficient || !t.log_px.is_finite() {
            flagged += 1;
        } else {
            clean.push(t);
        }
    }
    (clean, flagged)
}

/// SHA-256 of the generator's serialized checkpoint, stored in triplet
/// files so stale triplets can be detected against a retrained generator.
pub fn generator_hash(gen: &Generator) -> Result<[u8; 32]> {
    let bytes = encode_network(gen.spec(), gen.params(), "generator", 0)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.into())
}

pub const TRIPLET_MAGIC: &[u8; 8] = b"GPTRIPL1";
pub const TRIPLET_VERSION: u32 = 1;

/// A decoded triplet file: the samples plus the provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletFile {
    pub latent_dim: usize,
    pub output_dim: usize,
    pub threshold: f64,
    pub generator_hash: [u8; 32],
    pub triplets: Vec<DensityTriplet>,
}

/// Binary triplet container (integers and floats little-endian):
/// magic, version u32, n u32, m u32, count u64, threshold f64,
/// generator hash (32 bytes), then per record
/// `z (n f64), x (m f64), log_px f64, rank_deficient u8, min_abs_rii f64`.
/// Floats round-trip bit-exactly.
pub fn encode_triplets(
    triplets: &[DensityTriplet],
    latent_dim: usize,
    output_dim: usize,
    threshold: f64,
    generator_hash: &[u8; 32],
) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64 + triplets.len() * (latent_dim + output_dim + 2) * 8);
    out.extend_from_slice(TRIPLET_MAGIC);
    out.extend_from_slice(&TRIPLET_VERSION.to_le_bytes());
    out.extend_from_slice(&(latent_dim as u32).to_le_bytes());
    out.extend_from_slice(&(output_dim as u32).to_le_bytes());
    out.extend_from_slice(&(triplets.len() as u64).to_le_bytes());
    out.extend_from_slice(&threshold.to_le_bytes());
    out.extend_from_slice(generator_hash);
    for t in triplets {
        if t.z.len() != latent_dim || t.x.len() != output_dim {
            return Err(Error::shape(format!(
                "triplet dims ({}, {}) do not match header ({latent_dim}, {output_dim})",
                t.z.len(),
                t.x.len()
            )));
        }
        for v in t.z.iter().chain(t.x.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&t.log_px.to_le_bytes());
        out.push(u8::from(t.flag.rank_deficient));
        out.extend_from_slice(&t.flag.min_abs_rii.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_triplets(bytes: &[u8]) -> Result<TripletFile> {
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
    if magic != TRIPLET_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            what: "bad magic, not a triplet file".into(),
        });
    }
    let u32_at = |pos: &mut usize, what: &str| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4, what)?.try_into().unwrap()))
    };
    let f64_at = |pos: &mut usize, what: &str| -> Result<f64> {
        Ok(f64::from_le_bytes(take(pos, 8, what)?.try_into().unwrap()))
    };
    let version = u32_at(&mut pos, "version")?;
    if version != TRIPLET_VERSION {
        return Err(Error::Parse {
            offset: pos,
            what: format!("unsupported triplet file version {version}"),
        });
    }
    let n = u32_at(&mut pos, "latent dim")? as usize;
    let m = u32_at(&mut pos, "output dim")? as usize;
    let count = u64::from_le_bytes(take(&mut pos, 8, "count")?.try_into().unwrap()) as usize;
    let threshold = f64_at(&mut pos, "threshold")?;
    let mut generator_hash = [0u8; 32];
    generator_hash.copy_from_slice(take(&mut pos, 32, "generator hash")?);

    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            z.push(f64_at(&mut pos, "z value")?);
        }
        let mut x = Vec::with_capacity(m);
        for _ in 0..m {
            x.push(f64_at(&mut pos, "x value")?);
        }
        let log_px = f64_at(&mut pos, "log_px")?;
        let rank_deficient = take(&mut pos, 1, "flag")?[0] != 0;
        let min_abs_rii = f64_at(&mut pos, "min |r_ii|")?;
        triplets.push(DensityTriplet {
            z,
            x,
            log_px,
            flag: DegeneracyFlag {
                rank_deficient,
                min_abs_rii,
                threshold,
            },
        });
    }
    if pos != bytes.len() {
        return Err(Error::Parse {
            offset: pos,
            what: format!("{} trailing bytes after triplet payload", bytes.len() - pos),
        });
    }
    Ok(TripletFile {
        latent_dim: n,
        output_dim: m,
        threshold,
        generator_hash,
        triplets,
    })
}

pub fn save_triplets(
    path: &Path,
    triplets: &[DensityTriplet],
    gen: &Generator,
    threshold: f64,
) -> Result<()> {
    let hash = generator_hash(gen)?;
    let bytes = encode_triplets(
        triplets,
        gen.latent_dim(),
        gen.output_dim(),
        threshold,
        &hash,
    )?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_triplets(path: &Path) -> Result<TripletFile> {
    decode_triplets(&fs::read(path)?)
}

/// Check a loaded triplet file against the generator it claims to come from.
pub fn verify_generator_hash(file: &TripletFile, gen: &Generator) -> Result<()> {
    let hash = generator_hash(gen)?;
    if file.generator_hash != hash {
        return Err(Error::data(
            "triplet file was sampled from a different generator checkpoint",
        ));
    }
    Ok(())
}

/// Human-readable CSV dump of triplets, for inspection only (binary files
/// remain the source of truth).
pub fn write_triplets_csv<W: IoWrite>(mut w: W, triplets: &[DensityTriplet]) -> Result<()> {
    let (n, m) = triplets
        .first()
        .map(|t| (t.z.len(), t.x.len()))
        .unwrap_or((0, 0));
    let mut header = Vec::new();
    for i in 0..n {
        header.push(format!("z{i}"));
    }
    for i in 0..m {
        header.push(format!("x{i}"));
    }
    header.push("log_px".into());
    header.push("rank_deficient".into());
    header.push("min_abs_rii".into());
    writeln!(w, "{}", header.join(","))?;
    for t in triplets {
        let mut row = Vec::with_capacity(n + m + 3);
        for v in t.z.iter().chain(t.x.iter()) {
            row.push(format!("{v:.17e}"));
        }
        row.push(format!("{:.17e}", t.log_px));
        row.push(u8::from(t.flag.rank_deficient).to_string());
        row.push(format!("{:.17e}", t.flag.min_abs_rii));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
