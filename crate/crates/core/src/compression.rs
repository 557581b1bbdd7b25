//! PCA compression of sentence embeddings.
//!
//! A `CompressionMap` is fitted on training embeddings only and projects
//! `p`-dimensional vectors onto the top `p_bar` principal directions of the
//! centered sample covariance. Rows are orthonormal, variance-ordered, and
//! sign-fixed (largest-magnitude entry positive) so fits are reproducible.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{Cohort, InputMode, Patient, ReportEvent, ReportPayload};

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error("need at least p_bar+1 = {needed} training vectors, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("p_bar = {p_bar} exceeds embedding dimension p = {p}")]
    TooManyComponents { p_bar: usize, p: usize },
    #[error("training embeddings have zero variance")]
    ZeroVariance,
    #[error("vector has dimension {got}, map expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("training vector {index} has dimension {got}, expected {expected}")]
    RaggedInput {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value in training embeddings")]
    NonFinite,
    #[error("cohort is not in vector mode")]
    NotVectorMode,
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("model file checksum mismatch (file corrupted or edited)")]
    ChecksumMismatch,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CompressionError>;

/// Centering vector plus an orthonormal `p_bar x p` projection.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionMap {
    pub mean: Vec<f64>,
    /// `p_bar x p`, orthonormal rows, variance-ordered.
    pub components: Array2<f64>,
    /// Top `p_bar` eigenvalues of the sample covariance, non-increasing.
    pub explained_variance: Vec<f64>,
    pub p: usize,
    pub p_bar: usize,
}

/// Fit the projection on training embeddings.
pub fn fit_pca(train_embeddings: &[&[f64]], p_bar: usize) -> Result<CompressionMap> {
    let n = train_embeddings.len();
    if n == 0 {
        return Err(CompressionError::InsufficientSamples {
            needed: p_bar + 1,
            got: 0,
        });
    }
    let p = train_embeddings[0].len();
    if p_bar == 0 || p_bar > p {
        return Err(CompressionError::TooManyComponents { p_bar, p });
    }
    if n < p_bar + 1 {
        return Err(CompressionError::InsufficientSamples {
            needed: p_bar + 1,
            got: n,
        });
    }
    for (index, v) in train_embeddings.iter().enumerate() {
        if v.len() != p {
            return Err(CompressionError::RaggedInput {
                index,
                got: v.len(),
                expected: p,
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CompressionError::NonFinite);
        }
    }

    let mut mean = vec![0.0f64; p];
    for v in train_embeddings {
        for (m, &x) in mean.iter_mut().zip(*v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Sample covariance with divisor n-1.
    let mut cov = DMatrix::<f64>::zeros(p, p);
    let mut centered = vec![0.0f64; p];
    for v in train_embeddings {
        for ((c, &x), &m) in centered.iter_mut().zip(*v).zip(&mean) {
            *c = x - m;
        }
        for i in 0..p {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..p {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    if cov.trace() <= 1e-300 {
        return Err(CompressionError::ZeroVariance);
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::<f64>::zeros((p_bar, p));
    let mut explained = Vec::with_capacity(p_bar);
    for (row, &k) in order.iter().take(p_bar).enumerate() {
        explained.push(eig.eigenvalues[k].max(0.0));
        let col: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        // Sign convention: the largest-magnitude entry is positive; ties go
        // to the lowest index.
        let mut best = 0usize;
        for i in 1..p {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            components[(row, i)] = flip * col[i];
        }
    }

    Ok(CompressionMap {
        mean,
        components,
        explained_variance: explained,
        p,
        p_bar,
    })
}

impl CompressionMap {
    /// `components * (v - mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.p {
            return Err(CompressionError::DimensionMismatch {
                got: v.len(),
                expected: self.p,
            });
        }
        let centered = Array1::from_iter(v.iter().zip(&self.mean).map(|(&x, &m)| x - m));
        Ok(self.components.dot(&centered).to_vec())
    }

    /// Project every report embedding; metadata is untouched.
    pub fn project_cohort(&self, cohort: &Cohort) -> Result<Cohort> {
        if cohort.mode != InputMode::Vector {
            return Err(CompressionError::NotVectorMode);
        }
        let mut patients = Vec::with_capacity(cohort.patients.len());
        for p in &cohort.patients {
            let mut reports = Vec::with_capacity(p.reports.len());
            for r in &p.reports {
                let v = r.embedding().ok_or(CompressionError::NotVectorMode)?;
                reports.push(ReportEvent {
                    t: r.t,
                    payload: ReportPayload::Embedding(self.project(v)?),
                });
            }
            patients.push(Patient {
                outcome: p.outcome.clone(),
                reports,
            });
        }
        Ok(Cohort {
            patients,
            embedding_dim: self.p_bar,
            mode: InputMode::Vector,
        })
    }

    /// Largest row-orthonormality defect `|<r_i, r_j> - delta_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.p_bar {
            for j in i..self.p_bar {
                let dot: f64 = (0..self.p)
                    .map(|k| self.components[(i, k)] * self.components[(j, k)])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn payload_text(&self) -> String {
        let fmt_row = |row: &[f64]| {
            row.iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        let _ = writeln!(s, "mean {}", fmt_row(&self.mean));
        let _ = writeln!(s, "variance {}", fmt_row(&self.explained_variance));
        for row in self.components.rows() {
            let _ = writeln!(s, "component {}", fmt_row(row.as_slice().unwrap()));
        }
        s
    }

    /// Serialize as a versioned text file with an integrity checksum.
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = self.payload_text();
        let checksum = hex_digest(payload.as_bytes());
        let text = format!(
            "sigsurv-pca v1\np={} p_bar={} checksum={}\n{}",
            self.p, self.p_bar, checksum, payload
        );
        crate::ingest::write_atomic(path, text.as_bytes()).map_err(|e| match e {
            crate::ingest::IngestError::Io { path, source } => {
                CompressionError::Io { path, source }
            }
            other => CompressionError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: other.to_string(),
            },
        })
    }

    pub fn load(path: &Path) -> Result<CompressionMap> {
        let text = std::fs::read_to_string(path).map_err(|source| CompressionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let malformed = |line: usize, reason: &str| CompressionError::Malformed {
            path: path.display().to_string(),
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
        if magic != "sigsurv-pca v1" {
            return Err(malformed(1, "expected `sigsurv-pca v1`"));
        }
        let header = lines.next().ok_or_else(|| malformed(2, "missing header"))?;
        let mut p = None;
        let mut p_bar = None;
        let mut checksum = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("p", v)) => p = v.parse::<usize>().ok(),
                Some(("p_bar", v)) => p_bar = v.parse::<usize>().ok(),
                Some(("checksum", v)) => checksum = Some(v.to_string()),
                _ => return Err(malformed(2, "unrecognized header field")),
            }
        }
        let (p, p_bar, checksum) = match (p, p_bar, checksum) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(malformed(2, "header must carry p=, p_bar=, checksum=")),
        };

        let payload: String = text
            .splitn(3, '\n')
            .nth(2)
            .ok_or_else(|| malformed(3, "missing payload"))?
            .to_string();
        if hex_digest(payload.as_bytes()) != checksum {
            return Err(CompressionError::ChecksumMismatch);
        }

        let parse_row = |line: &str, lineno: usize, tag: &str| -> Result<Vec<f64>> {
            let rest = line
                .strip_prefix(tag)
                .ok_or_else(|| malformed(lineno, &format!("expected `{tag}` line")))?;
            rest.split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| malformed(lineno, "bad float")))
                .collect()
        };

        let mut payload_lines = payload.lines();
        let mean = parse_row(
            payload_lines
                .next()
                .ok_or_else(|| malformed(3, "missing mean"))?,
            3,
            "mean ",
        )?;
        let explained = parse_row(
            payload_lines
                .next()
                .ok_or_else(|| malformed(4, "missing variance"))?,
            4,
            "variance ",
        )?;
        let mut components = Array2::<f64>::zeros((p_bar, p));
        for row in 0..p_bar {
            let line = payload_lines
                .next()
                .ok_or_else(|| malformed(5 + row, "missing component row"))?;
            let vals = parse_row(line, 5 + row, "component ")?;
            if vals.len() != p {
                return Err(malformed(5 + row, "component row has wrong length"));
            }
            for (i, v) in vals.into_iter().enumerate() {
                components[(row, i)] = v;
            }
        }
        if mean.len() != p || explained.len() != p_bar {
            return Err(malformed(3, "dimension mismatch in payload"));
        }
        Ok(CompressionMap {
            mean,
            components,
            explained_variance: explained,
            p,
            p_bar,
        })
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn exact_low_rank_data_is_lossless() {
        // Points in an affine 2-plane inside R^4.
        let mut rng = crate::rng::substream(11, "pca-test");
        let b1 = [1.0, 0.0, 1.0, 0.0].map(|x: f64| x / 2.0f64.sqrt());
        let b2 = [0.0, 1.0, 0.0, -1.0].map(|x: f64| x / 2.0f64.sqrt());
        let offset = [5.0, -3.0, 2.0, 0.5];
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let a: f64 = rng.random_range(-2.0..2.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                (0..4).map(|i| offset[i] + a * b1[i] + b * b2[i]).collect()
            })
            .collect();
        let map = fit_pca(&refs(&rows), 2).unwrap();
        // Reconstruction through the 2 components loses nothing.
        for row in &rows {
            let proj = map.project(row).unwrap();
            let mut recon = map.mean.clone();
            for (k, &c) in proj.iter().enumerate() {
                for i in 0..4 {
                    recon[i] += c * map.components[(k, i)];
                }
            }
            for (a, b) in row.iter().zip(&recon) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "reconstruction error {}",
                    (a - b).abs()
                );
            }
        }
        // Rank-2 data: a 3rd component would capture ~0 variance.
        let map3 = fit_pca(&refs(&rows), 3).unwrap();
        assert!(map3.explained_variance[2] < 1e-18);
    }

    #[test]
    fn recovers_known_diagonal_covariance() {
        // Gaussian draws with covariance diag(4, 1, 0.25); the fitted
        // explained variance must match the eigenvalues of the sample
        // covariance computed by an independent solver (see the Jacobi
        // cross-check in tests/pca_oracle.rs); here we check against the
        // generating spectrum within sampling tolerance.
        let mut rng = crate::rng::substream(42, "pca-gauss");
        let n = 4000;
        let sds = [2.0, 1.0, 0.5];
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| sds.iter().map(|&s| s * normal.sample(&mut rng)).collect())
            .collect();
        let map = fit_pca(&refs(&rows), 3).unwrap();
        for (got, want) in map.explained_variance.iter().zip([4.0, 1.0, 0.25]) {
            assert_relative_eq!(*got, want, max_relative = 0.15);
        }
        assert!(map.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn projection_centering_and_orthonormality() {
        let mut rng = crate::rng::substream(3, "pca-proj");
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let map = fit_pca(&refs(&rows), 3).unwrap();

        // v = mean -> zero vector
        let zero = map.project(&map.mean.clone()).unwrap();
        for z in zero {
            assert!(z.abs() < 1e-12);
        }

        // v = mean + row_k -> e_k
        for k in 0..3 {
            let v: Vec<f64> = (0..5)
                .map(|i| map.mean[i] + map.components[(k, i)])
                .collect();
            let proj = map.project(&v).unwrap();
            for (j, &c) in proj.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-10);
            }
        }

        // arbitrary v -> naive dot-product loop agrees
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let proj = map.project(&v).unwrap();
        for k in 0..3 {
            let naive: f64 = (0..5)
                .map(|i| map.components[(k, i)] * (v[i] - map.mean[i]))
                .sum();
            assert_relative_eq!(proj[k], naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn norm_non_expansion_and_variance_monotonicity() {
        let mut rng = crate::rng::substream(5, "pca-norm");
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let map = fit_pca(&refs(&rows), 4).unwrap();
        for row in &rows {
            let centered_norm: f64 = row
                .iter()
                .zip(&map.mean)
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum::<f64>()
                .sqrt();
            let proj = map.project(row).unwrap();
            let proj_norm: f64 = proj.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(proj_norm <= centered_norm + 1e-12);
        }
        // explained variance sorted non-increasing
        for w in map.explained_variance.windows(2) {
            assert!(w[0] >= w[1] - 1e-15);
        }
    }

    #[test]
    fn errors_on_degenerate_inputs() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert!(matches!(
            fit_pca(&refs(&rows), 1).unwrap_err(),
            CompressionError::ZeroVariance
        ));
        let tiny = vec![vec![1.0, 2.0]];
        assert!(matches!(
            fit_pca(&refs(&tiny), 1).unwrap_err(),
            CompressionError::InsufficientSamples { .. }
        ));
        let rows = vec![vec![1.0, 2.0], vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(
            fit_pca(&refs(&rows), 3).unwrap_err(),
            CompressionError::TooManyComponents { .. }
        ));
        let map = fit_pca(&refs(&rows), 1).unwrap();
        assert!(matches!(
            map.project(&[1.0, 2.0, 3.0]).unwrap_err(),
            CompressionError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn save_load_round_trip_and_checksum_guard() {
        let mut rng = crate::rng::substream(9, "pca-io");
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let map = fit_pca(&refs(&rows), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.txt");
        map.save(&path).unwrap();
        let loaded = CompressionMap::load(&path).unwrap();
        assert_eq!(map, loaded);

        // A flipped byte in the payload must be caught.
        let mut text = std::fs::read_to_string(&path).unwrap();
        let pos = text.rfind("component ").unwrap() + 10;
        text.replace_range(
            pos..pos + 1,
            if &text[pos..pos + 1] == "1" { "2" } else { "1" },
        );
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            CompressionMap::load(&path).unwrap_err(),
            CompressionError::ChecksumMismatch
        ));
    }

    #[test]
    fn fit_twice_identical_and_test_independent() {
        let mut rng = crate::rng::substream(13, "pca-det");
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let m1 = fit_pca(&refs(&rows), 2).unwrap();
        let m2 = fit_pca(&refs(&rows), 2).unwrap();
        assert_eq!(m1, m2);
        // projecting twice yields identical outputs
        let p1 = m1.project(&rows[0]).unwrap();
        let p2 = m1.project(&rows[0]).unwrap();
        assert_eq!(p1, p2);
    }
}
