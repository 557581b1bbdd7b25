//! Smooth-inverse-frequency sentence embeddings.
//!
//! Each report's bag of tokens is collapsed into one vector:
//! `v_s = (1/|s|) * sum_w a/(f(w)+a) * v_w`, summing over token occurrences
//! with `|s|` the occurrence count. Rare words get weight near 1, frequent
//! words are damped towards `a/f(w)`.

use thiserror::Error;

use crate::ingest::{Cohort, FreqTable, InputMode, Patient, ReportEvent, ReportPayload, WordTable};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("report is empty after vocabulary filtering")]
    EmptyReport,
    #[error("token `{0}` missing from the word-embedding table")]
    MissingToken(String),
    #[error("token `{0}` has no corpus frequency")]
    MissingFrequency(String),
    #[error("patient `{patient_id}` report at t={t}: {source}")]
    InReport {
        patient_id: String,
        t: f64,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("cohort is not in token mode")]
    NotTokenMode,
    #[error("smoothing parameter must be > 0, got {0}")]
    BadSmoothing(f64),
}

type Result<T> = std::result::Result<T, EmbedError>;

/// What to do with tokens outside the word-embedding table (or without a
/// corpus frequency).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Drop the token and log a warning (realistic corpora always have OOV).
    #[default]
    SkipWithWarning,
    /// Fail the embedding with an error naming the token.
    Fail,
}

#[derive(Debug, Clone)]
pub struct SifConfig {
    /// Smoothing parameter `a`.
    pub smoothing: f64,
    /// Remove the projection on the corpus' first principal direction after
    /// embedding (the original method's extra step; the printed formula here
    /// omits it, so it is off by default).
    pub remove_first_pc: bool,
    /// Iterate unique tokens instead of occurrences (then `|s|` counts
    /// distinct tokens and counts are ignored).
    pub unique_tokens: bool,
    pub oov: OovPolicy,
}

impl Default for SifConfig {
    fn default() -> Self {
        Self {
            smoothing: 1e-3,
            remove_first_pc: false,
            unique_tokens: false,
            oov: OovPolicy::SkipWithWarning,
        }
    }
}

/// Embed one report's token bag.
pub fn sif_embed(
    tokens: &[(String, u32)],
    table: &WordTable,
    freqs: &FreqTable,
    cfg: &SifConfig,
) -> Result<Vec<f64>> {
    if !(cfg.smoothing > 0.0) {
        return Err(EmbedError::BadSmoothing(cfg.smoothing));
    }
    let a = cfg.smoothing;
    let mut acc = vec![0.0f64; table.dim];
    let mut total = 0.0f64;
    for (token, count) in tokens {
        let mult = if cfg.unique_tokens {
            1.0
        } else {
            f64::from(*count)
        };
        let vector = match table.get(token) {
            Some(v) => v,
            None => match cfg.oov {
                OovPolicy::SkipWithWarning => {
                    log::warn!("token `{token}` not in word table; skipped");
                    continue;
                }
                OovPolicy::Fail => return Err(EmbedError::MissingToken(token.clone())),
            },
        };
        let freq = match freqs.get(token) {
            Some(f) => f,
            None => match cfg.oov {
                OovPolicy::SkipWithWarning => {
                    log::warn!("token `{token}` has no corpus frequency; skipped");
                    continue;
                }
                OovPolicy::Fail => return Err(EmbedError::MissingFrequency(token.clone())),
            },
        };
        let weight = mult * a / (freq + a);
        for (slot, &coord) in acc.iter_mut().zip(vector) {
            *slot += weight * coord;
        }
        total += mult;
    }
    if total == 0.0 {
        return Err(EmbedError::EmptyReport);
    }
    for slot in &mut acc {
        *slot /= total;
    }
    Ok(acc)
}

/// Embed every report of a token-mode cohort, producing a vector-mode cohort
/// with the same timestamps and ordering.
pub fn embed_cohort(
    cohort: &Cohort,
    table: &WordTable,
    freqs: &FreqTable,
    cfg: &SifConfig,
) -> Result<Cohort> {
    if cohort.mode != InputMode::Token {
        return Err(EmbedError::NotTokenMode);
    }
    let mut patients = Vec::with_capacity(cohort.patients.len());
    for p in &cohort.patients {
        let mut reports = Vec::with_capacity(p.reports.len());
        for r in &p.reports {
            let tokens = match &r.payload {
                ReportPayload::Tokens(t) => t,
                ReportPayload::Embedding(_) => return Err(EmbedError::NotTokenMode),
            };
            let v =
                sif_embed(tokens, table, freqs, cfg).map_err(|source| EmbedError::InReport {
                    patient_id: p.outcome.patient_id.clone(),
                    t: r.t,
                    source: Box::new(source),
                })?;
            reports.push(ReportEvent {
                t: r.t,
                payload: ReportPayload::Embedding(v),
            });
        }
        patients.push(Patient {
            outcome: p.outcome.clone(),
            reports,
        });
    }
    let mut out = Cohort {
        patients,
        embedding_dim: table.dim,
        mode: InputMode::Vector,
    };
    if cfg.remove_first_pc {
        remove_first_principal_component(&mut out);
    }
    Ok(out)
}

/// Subtract each embedding's projection onto the corpus' dominant singular
/// direction (computed over all report embeddings, uncentered, by power
/// iteration).
fn remove_first_principal_component(cohort: &mut Cohort) {
    let dim = cohort.embedding_dim;
    let rows: Vec<Vec<f64>> = cohort
        .patients
        .iter()
        .flat_map(|p| p.reports.iter())
        .map(|r| r.embedding().expect("vector mode").to_vec())
        .collect();
    if rows.len() < 2 {
        return;
    }
    // Power iteration on X^T X with a fixed start.
    let mut u = vec![1.0 / (dim as f64).sqrt(); dim];
    for _ in 0..200 {
        let mut next = vec![0.0; dim];
        for row in &rows {
            let proj: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
            for (n, &x) in next.iter_mut().zip(row) {
                *n += proj * x;
            }
        }
        let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return; // all-zero corpus, nothing to remove
        }
        let mut delta = 0.0f64;
        for (n, old) in next.iter_mut().zip(&u) {
            *n /= norm;
            delta = delta.max((*n - old).abs().min((*n + old).abs()));
        }
        u = next;
        if delta < 1e-13 {
            break;
        }
    }
    for p in &mut cohort.patients {
        for r in &mut p.reports {
            if let ReportPayload::Embedding(v) = &mut r.payload {
                let proj: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
                for (slot, &dir) in v.iter_mut().zip(&u) {
                    *slot -= proj * dir;
                }
            }
        }
    }
}
