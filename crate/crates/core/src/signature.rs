//! Truncated path signatures of time-augmented embedding trajectories.
//!
//! Patients' report sequences are treated as piecewise-linear paths in
//! `R^(p_bar+1)` (channel 0 is a monotone time coordinate). The signature
//! truncated at level `L` collects all iterated integrals indexed by words
//! of length `<= L` over the channels. For a linear segment with increment
//! `delta`, the level-k block is `delta^{tensor k} / k!`; segments combine
//! through the tensor-algebra (Chen) product, which is exact for
//! piecewise-linear paths and linear in the number of segments.
//!
//! Coefficient layout is level-major with lexicographic words inside each
//! level; that ordering is part of the serialized feature contract. The
//! word `(i1,...,ik)` is named `S_i1.i2.....ik` in feature headers.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{Cohort, InputMode};

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("coefficient count for d={d}, level={level} overflows u64")]
    CountOverflow { d: usize, level: usize },
    #[error("channel count must be >= 1, got {0}")]
    BadChannels(usize),
    #[error("truncation level must be >= 1, got {0}")]
    BadLevel(usize),
    #[error("a path needs at least one report, got {0}")]
    TooFewPoints(usize),
    #[error("times must be strictly increasing (offender at index {0})")]
    BadTimes(usize),
    #[error("tensor shapes differ: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("cohort is not in vector mode")]
    NotVectorMode,
    #[error("signature extraction failed for {} patient(s): {}", .0.len(), summarize_failures(.0))]
    PatientFailures(Vec<(String, String)>),
}

fn summarize_failures(failures: &[(String, String)]) -> String {
    let mut s = String::new();
    for (id, reason) in failures.iter().take(3) {
        let _ = write!(s, "[{id}: {reason}] ");
    }
    if failures.len() > 3 {
        let _ = write!(s, "...");
    }
    s
}

type Result<T> = std::result::Result<T, SignatureError>;

/// Number of coefficients of a level-`L` truncated signature over `d`
/// channels, including the level-0 constant: `(d^(L+1) - 1) / (d - 1)`.
pub fn count_coefficients(d: usize, level: usize) -> Result<u64> {
    if d < 1 {
        return Err(SignatureError::BadChannels(d));
    }
    if level < 1 {
        return Err(SignatureError::BadLevel(level));
    }
    if d == 1 {
        return Ok(level as u64 + 1);
    }
    let mut total: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..=level {
        total = total
            .checked_add(power)
            .ok_or(SignatureError::CountOverflow { d, level })?;
        power = power
            .checked_mul(d as u128)
            .ok_or(SignatureError::CountOverflow { d, level })?;
    }
    u64::try_from(total).map_err(|_| SignatureError::CountOverflow { d, level })
}

fn tensor_len(d: usize, level: usize) -> usize {
    let mut total = 0usize;
    let mut power = 1usize;
    for _ in 0..=level {
        total += power;
        power *= d;
    }
    total
}

/// Offset of the level-`k` block in the flat layout.
fn level_offset(d: usize, k: usize) -> usize {
    if k == 0 {
        0
    } else {
        tensor_len(d, k - 1)
    }
}

/// How the time channel is scaled before augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScale {
    /// Map each patient's timestamps affinely onto [0, 1].
    #[default]
    UnitInterval,
    /// Keep raw day values.
    Days,
}

impl std::str::FromStr for TimeScale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unit_interval" => Ok(TimeScale::UnitInterval),
            "days" => Ok(TimeScale::Days),
            other => Err(format!(
                "unknown time scale `{other}` (expected unit_interval|days)"
            )),
        }
    }
}

/// A time-augmented piecewise-linear path: channel 0 carries the (rescaled)
/// timestamps, channels 1.. carry the embedding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath {
    pub times: Vec<f64>,
    /// `N x d` with `d = p_bar + 1`; column 0 equals `times`.
    pub points: Array2<f64>,
}

impl AugmentedPath {
    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn channels(&self) -> usize {
        self.points.ncols()
    }
}

/// Prepend the monotone time channel to a series of timestamped vectors.
///
/// A single-report patient is represented by duplicating the lone point one
/// day apart, which yields a pure-time segment after augmentation (only the
/// monotone channel is informative for such patients).
pub fn augment_path(series: &[(f64, &[f64])], time_scale: TimeScale) -> Result<AugmentedPath> {
    if series.is_empty() {
        return Err(SignatureError::TooFewPoints(0));
    }
    let mut times: Vec<f64> = series.iter().map(|(t, _)| *t).collect();
    let mut values: Vec<&[f64]> = series.iter().map(|(_, v)| *v).collect();
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(SignatureError::BadTimes(i + 1));
        }
    }
    if times.len() == 1 {
        times.push(times[0] + 1.0);
        values.push(values[0]);
    }
    let n = times.len();
    let span = times[n - 1] - times[0];
    let scaled: Vec<f64> = match time_scale {
        TimeScale::UnitInterval => times.iter().map(|&t| (t - times[0]) / span).collect(),
        TimeScale::Days => times.clone(),
    };
    let d = values[0].len() + 1;
    let mut points = Array2::<f64>::zeros((n, d));
    for (row, (&t, v)) in scaled.iter().zip(&values).enumerate() {
        points[(row, 0)] = t;
        for (col, &x) in v.iter().enumerate() {
            points[(row, col + 1)] = x;
        }
    }
    Ok(AugmentedPath {
        times: scaled,
        points,
    })
}

/// A truncated-signature element of the tensor algebra, stored flat:
/// level-major, lexicographic words within a level, `coeffs[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureTensor {
    pub d: usize,
    pub level: usize,
    pub coeffs: Vec<f64>,
}

impl SignatureTensor {
    /// The identity element (signature of a constant path).
    pub fn trivial(d: usize, level: usize) -> Self {
        let mut coeffs = vec![0.0; tensor_len(d, level)];
        coeffs[0] = 1.0;
        Self { d, level, coeffs }
    }

    /// Slice holding the level-`k` block (`d^k` entries).
    pub fn level_block(&self, k: usize) -> &[f64] {
        let start = level_offset(self.d, k);
        let len = self.d.pow(k as u32);
        &self.coeffs[start..start + len]
    }

    /// Coefficient for a word of channel indices (each in `0..d`).
    pub fn coeff(&self, word: &[usize]) -> f64 {
        let mut idx = 0usize;
        for &c in word {
            debug_assert!(c < self.d);
            idx = idx * self.d + c;
        }
        self.coeffs[level_offset(self.d, word.len()) + idx]
    }

    pub fn sup_distance(&self, other: &SignatureTensor) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Signature of a single linear segment with increment `delta`:
/// level-k block is `delta^{tensor k} / k!`.
pub fn segment_signature(delta: &[f64], level: usize) -> SignatureTensor {
    let d = delta.len();
    let mut sig = SignatureTensor::trivial(d, level);
    let mut prev_start = 0usize;
    let mut prev_len = 1usize;
    for k in 1..=level {
        let start = prev_start + prev_len;
        let inv_k = 1.0 / k as f64;
        for u in 0..prev_len {
            let base = sig.coeffs[prev_start + u] * inv_k;
            for (j, &dj) in delta.iter().enumerate() {
                sig.coeffs[start + u * d + j] = base * dj;
            }
        }
        prev_start = start;
        prev_len *= d;
    }
    sig
}

/// Truncated tensor-algebra product: the level-k block of the output is
/// `sum_{a+b=k} lhs_a (x) rhs_b`.
pub fn chen_product(lhs: &SignatureTensor, rhs: &SignatureTensor) -> Result<SignatureTensor> {
    if lhs.d != rhs.d || lhs.level != rhs.level {
        return Err(SignatureError::ShapeMismatch(
            lhs.d, lhs.level, rhs.d, rhs.level,
        ));
    }
    let d = lhs.d;
    let level = lhs.level;
    let mut out = SignatureTensor {
        d,
        level,
        coeffs: vec![0.0; tensor_len(d, level)],
    };
    for k in 0..=level {
        let out_start = level_offset(d, k);
        for a in 0..=k {
            let b = k - a;
            let la = level_offset(d, a);
            let lb = level_offset(d, b);
            let len_a = d.pow(a as u32);
            let len_b = d.pow(b as u32);
            for u in 0..len_a {
                let lhs_coeff = lhs.coeffs[la + u];
                if lhs_coeff == 0.0 {
                    continue;
                }
                let row = out_start + u * len_b;
                for v in 0..len_b {
                    out.coeffs[row + v] += lhs_coeff * rhs.coeffs[lb + v];
                }
            }
        }
    }
    Ok(out)
}

/// Signature of a piecewise-linear path: fold of `chen_product` over the
/// per-segment tensor exponentials.
pub fn path_signature(path: &AugmentedPath, level: usize) -> Result<SignatureTensor> {
    if level < 1 {
        return Err(SignatureError::BadLevel(level));
    }
    let n = path.n_points();
    if n < 2 {
        return Err(SignatureError::TooFewPoints(n));
    }
    let d = path.channels();
    let mut sig = SignatureTensor::trivial(d, level);
    let mut delta = vec![0.0f64; d];
    for row in 1..n {
        for c in 0..d {
            delta[c] = path.points[(row, c)] - path.points[(row - 1, c)];
        }
        sig = chen_product(&sig, &segment_signature(&delta, level))?;
    }
    Ok(sig)
}

/// One row of signature covariates per patient; the level-0 constant is
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub patient_ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    /// Serialize as delimited text with a header of index-word column names.
    pub fn save(&self, path: &Path) -> std::result::Result<(), crate::ingest::IngestError> {
        let mut text = String::from("patient_id");
        for c in &self.columns {
            text.push(',');
            text.push_str(c);
        }
        text.push('\n');
        for (i, id) in self.patient_ids.iter().enumerate() {
            text.push_str(id);
            for j in 0..self.values.ncols() {
                let _ = write!(text, ",{}", self.values[(i, j)]);
            }
            text.push('\n');
        }
        crate::ingest::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> std::result::Result<FeatureMatrix, crate::ingest::IngestError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| crate::ingest::IngestError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let malformed = |line: usize, reason: String| crate::ingest::IngestError::Malformed {
            path: path.display().to_string(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "empty feature file".into()))?;
        let mut cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"patient_id") {
            return Err(malformed(1, "header must start with patient_id".into()));
        }
        cols.remove(0);
        let columns: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
        let mut patient_ids = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() + 1 {
                return Err(malformed(
                    idx + 1,
                    format!(
                        "expected {} fields, got {}",
                        columns.len() + 1,
                        fields.len()
                    ),
                ));
            }
            patient_ids.push(fields[0].to_string());
            for f in &fields[1..] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| malformed(idx + 1, format!("bad float `{f}`")))?,
                );
            }
        }
        let values = Array2::from_shape_vec((patient_ids.len(), columns.len()), data)
            .map_err(|e| malformed(0, e.to_string()))?;
        Ok(FeatureMatrix {
            patient_ids,
            columns,
            values,
        })
    }
}

/// Decode the word of a flat within-level index (lexicographic layout).
fn decode_word(idx: usize, d: usize, k: usize) -> Vec<usize> {
    let mut word = vec![0usize; k];
    let mut rem = idx;
    for pos in (0..k).rev() {
        word[pos] = rem % d;
        rem /= d;
    }
    word
}

/// Column names for levels 1..=L over `d` channels, in layout order.
pub fn feature_column_names(d: usize, level: usize, drop_time_words: bool) -> Vec<String> {
    let mut names = Vec::new();
    for k in 1..=level {
        for idx in 0..d.pow(k as u32) {
            let word = decode_word(idx, d, k);
            if drop_time_words && word.contains(&0) {
                continue;
            }
            let mut name = String::from("S_");
            for (i, c) in word.iter().enumerate() {
                if i > 0 {
                    name.push('.');
                }
                let _ = write!(name, "{c}");
            }
            names.push(name);
        }
    }
    names
}

/// Options for [`signature_features`].
#[derive(Debug, Clone)]
pub struct SignatureConfig {
    pub level: usize,
    pub time_scale: TimeScale,
    /// Exclude words touching the time channel from the exported features.
    pub drop_time_words: bool,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        Self {
            level: 3,
            time_scale: TimeScale::UnitInterval,
            drop_time_words: false,
        }
    }
}

/// Signature covariates for every patient of a projected (vector-mode)
/// cohort. Rows follow cohort order; extraction is parallel per patient
/// with a deterministic merge.
pub fn signature_features(cohort: &Cohort, cfg: &SignatureConfig) -> Result<FeatureMatrix> {
    if cohort.mode != InputMode::Vector {
        return Err(SignatureError::NotVectorMode);
    }
    let d = cohort.embedding_dim + 1;
    let level = cfg.level;
    if level < 1 {
        return Err(SignatureError::BadLevel(level));
    }
    let full_len = tensor_len(d, level) - 1;

    let keep: Vec<usize> = if cfg.drop_time_words {
        kept_indices(d, level)
    } else {
        (0..full_len).collect()
    };

    let rows: Vec<std::result::Result<Vec<f64>, (String, String)>> = cohort
        .patients
        .par_iter()
        .map(|p| {
            let series: Vec<(f64, &[f64])> = p
                .reports
                .iter()
                .map(|r| (r.t, r.embedding().expect("vector mode")))
                .collect();
            let fail = |e: SignatureError| (p.outcome.patient_id.clone(), e.to_string());
            let path = augment_path(&series, cfg.time_scale).map_err(fail)?;
            let sig = path_signature(&path, level).map_err(fail)?;
            let row: Vec<f64> = keep.iter().map(|&j| sig.coeffs[j + 1]).collect();
            if row.iter().any(|x| !x.is_finite()) {
                return Err((
                    p.outcome.patient_id.clone(),
                    "non-finite signature coefficient".to_string(),
                ));
            }
            Ok(row)
        })
        .collect();

    let mut failures = Vec::new();
    let mut data = Vec::with_capacity(cohort.patients.len() * keep.len());
    for row in rows {
        match row {
            Ok(r) => data.extend(r),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(SignatureError::PatientFailures(failures));
    }

    let values = Array2::from_shape_vec((cohort.patients.len(), keep.len()), data)
        .expect("row lengths are uniform");
    Ok(FeatureMatrix {
        patient_ids: cohort.patient_ids(),
        columns: feature_column_names(d, level, cfg.drop_time_words),
        values,
    })
}

/// Flat indices (level-1 onward, 0-based after dropping level 0) of words
/// that avoid channel 0.
fn kept_indices(d: usize, level: usize) -> Vec<usize> {
    let mut keep = Vec::new();
    let mut flat = 0usize;
    for k in 1..=level {
        let len = d.pow(k as u32);
        for idx in 0..len {
            if !decode_word(idx, d, k).contains(&0) {
                keep.push(flat + idx);
            }
        }
        flat += len;
    }
    keep
}
