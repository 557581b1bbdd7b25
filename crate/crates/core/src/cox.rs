//! LASSO-penalized Cox proportional hazards.
//!
//! The fitted objective is the negative partial log-likelihood plus an
//! un-normalized L1 penalty:
//!
//! `l(beta) = -sum_{i: event} [x_i.beta - log sum_{j: T_j >= T_i} exp(x_j.beta)] + lambda * |beta|_1`
//!
//! solved by proximal gradient descent (soft-thresholding prox) with
//! backtracking line search from a zero start. Ties use the Breslow
//! convention, matching the Breslow cumulative baseline estimator.
//! Columns are standardized internally by default; coefficients are
//! reported in original feature units.

use ndarray::{Array1, ArrayView2};
use thiserror::Error;

use crate::signature::FeatureMatrix;
use crate::stepfn::StepFunction;

#[derive(Debug, Error)]
pub enum CoxError {
    #[error("lengths disagree: {0} feature rows, {1} durations, {2} event flags")]
    LengthMismatch(usize, usize, usize),
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("durations must be positive (offender at index {0})")]
    NonPositiveDuration(usize),
    #[error("features contain a non-finite value")]
    NonFiniteFeatures,
    #[error("no events in the data; the partial likelihood is undefined")]
    NoEvents,
    #[error("feature row has {got} entries, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("design is degenerate: every column has zero variance")]
    DegenerateDesign,
    #[error(
        "did not converge in {iterations} iterations (KKT violation {kkt_residual:.3e} > {kkt_tol:.1e})"
    )]
    NonConvergence {
        iterations: usize,
        kkt_residual: f64,
        kkt_tol: f64,
    },
    #[error("objective became non-finite during optimization")]
    NumericalFailure,
    #[error("penalty must be >= 0, got {0}")]
    BadLambda(f64),
}

type Result<T> = std::result::Result<T, CoxError>;

#[derive(Debug, Clone)]
pub struct CoxFitConfig {
    /// L1 penalty weight, applied un-normalized (no 1/n factor).
    pub lambda: f64,
    pub max_iters: usize,
    /// Stall threshold on the relative objective change.
    pub tol: f64,
    /// Standardize columns to zero mean / unit variance internally.
    pub standardize: bool,
    /// KKT residual below which the solution is accepted.
    pub kkt_tol: f64,
}

impl Default for CoxFitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iters: 10_000,
            tol: 1e-9,
            standardize: true,
            kkt_tol: 1e-6,
        }
    }
}

impl CoxFitConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

/// A fitted model. `beta` is in original (unstandardized) feature units;
/// `baseline` is the Breslow cumulative baseline hazard (starts empty,
/// attach via [`breslow_baseline`]).
#[derive(Debug, Clone)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub baseline: StepFunction,
    /// Per-column (mean, scale) used internally when standardizing;
    /// dropped zero-variance columns carry scale 0.
    pub standardization: Option<Vec<(f64, f64)>>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Final penalized objective (standardized scale when standardizing).
    pub objective: f64,
    /// Final KKT residual of the solved problem.
    pub kkt_residual: f64,
    /// Zero-variance columns that were dropped before the solve.
    pub dropped_columns: Vec<usize>,
    pub n_nonzero: usize,
}

/// Risk-set scan machinery shared by the objective, gradient and baseline.
struct RiskSets {
    /// Patient indices sorted by duration descending, grouped by tied time.
    groups: Vec<Group>,
}

struct Group {
    /// All patients with this duration.
    members: Vec<usize>,
    /// The subset with an observed event.
    events: Vec<usize>,
    time: f64,
}

impl RiskSets {
    fn new(durations: &[f64], events: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..durations.len()).collect();
        order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
        let mut groups: Vec<Group> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if g.time == durations[i] => {
                    g.members.push(i);
                    if events[i] {
                        g.events.push(i);
                    }
                }
                _ => groups.push(Group {
                    members: vec![i],
                    events: if events[i] { vec![i] } else { vec![] },
                    time: durations[i],
                }),
            }
        }
        Self { groups }
    }
}

fn validate(x: ArrayView2<f64>, durations: &[f64], events: &[bool]) -> Result<()> {
    let n = x.nrows();
    if durations.len() != n || events.len() != n {
        return Err(CoxError::LengthMismatch(n, durations.len(), events.len()));
    }
    if let Some(i) = durations.iter().position(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(CoxError::NonPositiveDuration(i));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::NonFiniteFeatures);
    }
    if !events.iter().any(|&e| e) {
        return Err(CoxError::NoEvents);
    }
    Ok(())
}

/// Negative partial log-likelihood (smooth part only), numerically stable
/// via a running-max rescale of the risk-set accumulator.
pub fn smooth_neg_loglik(
    x: ArrayView2<f64>,
    durations: &[f64],
    events: &[bool],
    beta: &[f64],
) -> Result<f64> {
    validate(x, durations, events)?;
    if beta.len() != x.ncols() {
        return Err(CoxError::DimensionMismatch {
            got: beta.len(),
            expected: x.ncols(),
        });
    }
    let sets = RiskSets::new(durations, events);
    let beta = Array1::from_vec(beta.to_vec());
    let eta = x.dot(&beta);
    let mut s0 = 0.0f64;
    let mut m = f64::NEG_INFINITY;
    let mut val = 0.0f64;
    for g in &sets.groups {
        for &j in &g.members {
            if eta[j] > m {
                if m.is_finite() {
                    s0 *= (m - eta[j]).exp();
                }
                m = eta[j];
            }
            s0 += (eta[j] - m).exp();
        }
        for &i in &g.events {
            val += -eta[i] + m + s0.ln();
        }
    }
    if !val.is_finite() {
        return Err(CoxError::NumericalFailure);
    }
    Ok(val)
}

/// Smooth value and gradient in one risk-set scan.
pub fn smooth_neg_loglik_grad(
    x: ArrayView2<f64>,
    durations: &[f64],
    events: &[bool],
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    validate(x, durations, events)?;
    let p = x.ncols();
    if beta.len() != p {
        return Err(CoxError::DimensionMismatch {
            got: beta.len(),
            expected: p,
        });
    }
    let sets = RiskSets::new(durations, events);
    let beta_arr = Array1::from_vec(beta.to_vec());
    let eta = x.dot(&beta_arr);
    let mut s0 = 0.0f64;
    let mut s1 = Array1::<f64>::zeros(p);
    let mut m = f64::NEG_INFINITY;
    let mut val = 0.0f64;
    let mut grad = Array1::<f64>::zeros(p);
    for g in &sets.groups {
        for &j in &g.members {
            if eta[j] > m {
                if m.is_finite() {
                    let r = (m - eta[j]).exp();
                    s0 *= r;
                    s1 *= r;
                }
                m = eta[j];
            }
            let w = (eta[j] - m).exp();
            s0 += w;
            s1.scaled_add(w, &x.row(j));
        }
        if g.events.is_empty() {
            continue;
        }
        let d = g.events.len() as f64;
        for &i in &g.events {
            val += -eta[i] + m + s0.ln();
            grad.scaled_add(-1.0, &x.row(i));
        }
        grad.scaled_add(d / s0, &s1);
    }
    if !val.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::NumericalFailure);
    }
    Ok((val, grad.to_vec()))
}

/// Full penalized objective `smooth + lambda * |beta|_1`.
pub fn neg_penalized_loglik(
    beta: &[f64],
    x: ArrayView2<f64>,
    durations: &[f64],
    events: &[bool],
    lambda: f64,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(CoxError::BadLambda(lambda));
    }
    let smooth = smooth_neg_loglik(x, durations, events, beta)?;
    Ok(smooth + lambda * beta.iter().map(|b| b.abs()).sum::<f64>())
}

/// `max_k |grad_k|` of the smooth part at `beta = 0`; any `lambda` at or
/// above this value yields the all-zero solution.
pub fn lambda_max(x: ArrayView2<f64>, durations: &[f64], events: &[bool]) -> Result<f64> {
    let (_, g) = smooth_neg_loglik_grad(x, durations, events, &vec![0.0; x.ncols()])?;
    Ok(g.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

fn soft_threshold(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// KKT violation of the L1 problem at `beta` given the smooth gradient:
/// zero coordinates need `|g_k| <= lambda` (with the documented 1e-6
/// relative slack), nonzero ones need `g_k + lambda*sign(beta_k) ~ 0`.
fn kkt_residual(beta: &[f64], grad: &[f64], lambda: f64) -> f64 {
    let slack = lambda * 1e-6;
    beta.iter()
        .zip(grad)
        .map(|(&b, &g)| {
            if b == 0.0 {
                (g.abs() - lambda - slack).max(0.0)
            } else {
                (g + lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Fit by proximal gradient with backtracking. Deterministic from a zero
/// start; the returned solution always satisfies the KKT tolerance, else
/// the fit errors out with the final violation.
pub fn fit_cox_lasso(
    x: ArrayView2<f64>,
    durations: &[f64],
    events: &[bool],
    feature_names: Vec<String>,
    cfg: &CoxFitConfig,
) -> Result<(CoxModel, FitDiagnostics)> {
    if cfg.lambda < 0.0 {
        return Err(CoxError::BadLambda(cfg.lambda));
    }
    validate(x, durations, events)?;
    let n = x.nrows();
    let p = x.ncols();
    let names = if feature_names.is_empty() {
        (0..p).map(|j| format!("x{j}")).collect()
    } else {
        feature_names
    };

    // Column moments. Columns that are constant up to float noise are
    // dropped: soft-thresholding cannot use them, and standardizing by a
    // rounding-level scale would blow up the recovered coefficients.
    let mut mean = vec![0.0f64; p];
    let mut scale = vec![0.0f64; p];
    let mut constant = vec![false; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let max_abs = col.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        mean[j] = m;
        scale[j] = var.sqrt();
        constant[j] = scale[j] <= 1e-12 * max_abs.max(f64::MIN_POSITIVE);
        if constant[j] {
            scale[j] = 0.0;
        }
    }
    let kept: Vec<usize> = (0..p).filter(|&j| !constant[j]).collect();
    let dropped: Vec<usize> = (0..p).filter(|&j| constant[j]).collect();
    if kept.is_empty() {
        return Err(CoxError::DegenerateDesign);
    }
    if !dropped.is_empty() {
        log::warn!(
            "dropping {} zero-variance column(s): {}",
            dropped.len(),
            dropped
                .iter()
                .take(5)
                .map(|&j| names[j].as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    let mut z = ndarray::Array2::<f64>::zeros((n, kept.len()));
    for (jj, &j) in kept.iter().enumerate() {
        for i in 0..n {
            z[(i, jj)] = if cfg.standardize {
                (x[(i, j)] - mean[j]) / scale[j]
            } else {
                x[(i, j)]
            };
        }
    }

    // Accelerated proximal gradient with a monotone safeguard: the
    // extrapolated step is kept only when it does not raise the objective,
    // otherwise the momentum restarts with a plain descent step from the
    // current iterate. Convergence is certified by an explicit KKT check.
    let lambda = cfg.lambda;
    let n_kept = kept.len();
    let mut beta = vec![0.0f64; n_kept];
    let mut extra = beta.clone();
    let mut theta = 1.0f64;
    let mut t_step = 1.0f64;
    let mut obj_curr = smooth_neg_loglik(z.view(), durations, events, &beta)?;
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut final_kkt = f64::INFINITY;
    let mut final_obj = obj_curr;
    let mut converged = false;

    let backtrack =
        |from: &[f64], f_from: f64, g_from: &[f64], t_step: &mut f64| -> Result<(Vec<f64>, f64)> {
            loop {
                let cand: Vec<f64> = from
                    .iter()
                    .zip(g_from)
                    .map(|(&b, &gk)| soft_threshold(b - *t_step * gk, *t_step * lambda))
                    .collect();
                let f_cand = smooth_neg_loglik(z.view(), durations, events, &cand)?;
                let mut lin = 0.0f64;
                let mut quad = 0.0f64;
                for ((&c, &b), &gk) in cand.iter().zip(from).zip(g_from) {
                    let dk = c - b;
                    lin += gk * dk;
                    quad += dk * dk;
                }
                let bound = f_from + lin + quad / (2.0 * *t_step) + 1e-12 * (1.0 + f_from.abs());
                if f_cand <= bound {
                    return Ok((cand, f_cand));
                }
                *t_step *= 0.5;
                if *t_step < 1e-18 {
                    return Err(CoxError::NumericalFailure);
                }
            }
        };
    let penalty = |b: &[f64]| lambda * b.iter().map(|v| v.abs()).sum::<f64>();

    // Phase 1: accelerated descent until the certificate holds or the
    // objective stops improving at the `tol` scale (float-noise territory,
    // where value comparisons can no longer steer the iteration).
    while iterations <= cfg.max_iters / 2 && stall < 20 {
        // Certificate at the current iterate (the first pass catches the
        // exact null solution at lambda >= lambda_max).
        if iterations % 5 == 0 {
            let (f_b, g_b) = smooth_neg_loglik_grad(z.view(), durations, events, &beta)?;
            final_obj = f_b + penalty(&beta);
            final_kkt = kkt_residual(&beta, &g_b, lambda);
            if final_kkt <= cfg.kkt_tol {
                converged = true;
                break;
            }
        }
        iterations += 1;

        let (f_y, g_y) = smooth_neg_loglik_grad(z.view(), durations, events, &extra)?;
        let (cand, f_cand) = backtrack(&extra, f_y, &g_y, &mut t_step)?;
        let obj_cand = f_cand + penalty(&cand);

        let obj_next = if obj_cand <= obj_curr + 1e-12 * (1.0 + obj_curr.abs()) {
            // accelerated step accepted
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let momentum = (theta - 1.0) / theta_next;
            extra = cand
                .iter()
                .zip(&beta)
                .map(|(&c, &b)| c + momentum * (c - b))
                .collect();
            beta = cand;
            theta = theta_next;
            obj_cand
        } else {
            // extrapolation overshot: restart momentum, plain descent step
            theta = 1.0;
            let (f_b, g_b) = smooth_neg_loglik_grad(z.view(), durations, events, &beta)?;
            let (cand2, f_cand2) = backtrack(&beta, f_b, &g_b, &mut t_step)?;
            let obj2 = f_cand2 + penalty(&cand2);
            beta = cand2;
            extra = beta.clone();
            obj2
        };
        if (obj_curr - obj_next).abs() <= cfg.tol * (1.0 + obj_next.abs()) {
            stall += 1;
        } else {
            stall = 0;
        }
        obj_curr = obj_next;
    }

    // Phase 2: fixed-step proximal iterations to polish the certificate.
    // No value comparisons (they are noise-limited near the optimum); the
    // prox map with a valid step contracts to the fixpoint, and the step is
    // halved whenever the residual stops shrinking.
    let mut best_kkt = f64::INFINITY;
    let mut since_best = 0usize;
    while !converged && iterations <= cfg.max_iters {
        let (f_b, g_b) = smooth_neg_loglik_grad(z.view(), durations, events, &beta)?;
        final_obj = f_b + penalty(&beta);
        final_kkt = kkt_residual(&beta, &g_b, lambda);
        if final_kkt <= cfg.kkt_tol {
            converged = true;
            break;
        }
        if final_kkt < best_kkt * 0.999 {
            best_kkt = final_kkt;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 100 {
                t_step *= 0.5;
                since_best = 0;
                if t_step < 1e-18 {
                    break;
                }
            }
        }
        iterations += 1;
        beta = beta
            .iter()
            .zip(&g_b)
            .map(|(&b, &gk)| soft_threshold(b - t_step * gk, t_step * lambda))
            .collect();
    }
    if !converged {
        return Err(CoxError::NonConvergence {
            iterations,
            kkt_residual: final_kkt,
            kkt_tol: cfg.kkt_tol,
        });
    }

    // Map back to original units, re-inserting dropped columns as zeros.
    let mut beta_full = vec![0.0f64; p];
    for (jj, &j) in kept.iter().enumerate() {
        beta_full[j] = if cfg.standardize {
            beta[jj] / scale[j]
        } else {
            beta[jj]
        };
    }
    let n_nonzero = beta_full.iter().filter(|&&b| b != 0.0).count();

    let model = CoxModel {
        beta: beta_full,
        lambda,
        baseline: StepFunction::constant(0.0),
        standardization: if cfg.standardize {
            Some(mean.into_iter().zip(scale).collect())
        } else {
            None
        },
        feature_names: names,
    };
    Ok((
        model,
        FitDiagnostics {
            iterations,
            objective: final_obj,
            kkt_residual: final_kkt,
            dropped_columns: dropped,
            n_nonzero,
        },
    ))
}

/// Convenience wrapper taking a [`FeatureMatrix`].
pub fn fit_features(
    features: &FeatureMatrix,
    durations: &[f64],
    events: &[bool],
    cfg: &CoxFitConfig,
) -> Result<(CoxModel, FitDiagnostics)> {
    fit_cox_lasso(
        features.values.view(),
        durations,
        events,
        features.columns.clone(),
        cfg,
    )
}

impl CoxModel {
    /// Linear risk score `eta = row . beta`.
    pub fn risk_score(&self, features_row: &[f64]) -> Result<f64> {
        if features_row.len() != self.beta.len() {
            return Err(CoxError::DimensionMismatch {
                got: features_row.len(),
                expected: self.beta.len(),
            });
        }
        Ok(features_row
            .iter()
            .zip(&self.beta)
            .map(|(&x, &b)| x * b)
            .sum())
    }

    pub fn risk_scores(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..features.n_rows())
            .map(|i| self.risk_score(features.values.row(i).as_slice().unwrap()))
            .collect()
    }

    /// `S(t | row) = exp(-H0(t) * exp(eta))`, right-continuous in `t`.
    pub fn predict_survival(&self, features_row: &[f64], t: f64) -> Result<f64> {
        let eta = self.risk_score(features_row)?;
        Ok(self.survival_from_eta(eta, t))
    }

    pub fn survival_from_eta(&self, eta: f64, t: f64) -> f64 {
        debug_assert!(t >= 0.0, "survival queried at negative time");
        let h0 = self.baseline.eval(t);
        if h0 == 0.0 {
            return 1.0; // also guards 0 * exp(overflowing eta)
        }
        (-h0 * eta.exp()).exp()
    }

    /// Versioned text serialization: feature names, nonzero coefficients,
    /// penalty, standardization stats and the baseline step function.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::from("sigsurv-cox v1\n");
        let _ = writeln!(
            s,
            "lambda={} n_features={} standardize={}",
            self.lambda,
            self.beta.len(),
            u8::from(self.standardization.is_some())
        );
        let _ = writeln!(s, "columns {}", self.feature_names.join(","));
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                let _ = writeln!(s, "beta {j} {b}");
            }
        }
        if let Some(stats) = &self.standardization {
            for (j, (m, sc)) in stats.iter().enumerate() {
                let _ = writeln!(s, "stats {j} {m} {sc}");
            }
        }
        let _ = writeln!(s, "baseline_initial {}", self.baseline.initial());
        for (t, v) in self.baseline.points() {
            let _ = writeln!(s, "baseline {t} {v}");
        }
        crate::ingest::write_atomic(path, s.as_bytes()).map_err(|e| match e {
            crate::ingest::IngestError::Io { path, source } => CoxError::Io { path, source },
            other => CoxError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: other.to_string(),
            },
        })
    }

    pub fn load(path: &std::path::Path) -> Result<CoxModel> {
        let text = std::fs::read_to_string(path).map_err(|source| CoxError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let malformed = |line: usize, reason: String| CoxError::Malformed {
            path: path.display().to_string(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, magic) = lines
            .next()
            .ok_or_else(|| malformed(1, "empty model file".into()))?;
        if magic != "sigsurv-cox v1" {
            return Err(malformed(1, "expected `sigsurv-cox v1`".into()));
        }
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(2, "missing header".into()))?;
        let mut lambda = None;
        let mut n_features = None;
        let mut standardize = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("lambda", v)) => lambda = v.parse::<f64>().ok(),
                Some(("n_features", v)) => n_features = v.parse::<usize>().ok(),
                Some(("standardize", v)) => standardize = v.parse::<u8>().ok(),
                _ => return Err(malformed(2, format!("unknown header field `{field}`"))),
            }
        }
        let (lambda, n_features, standardize) = match (lambda, n_features, standardize) {
            (Some(a), Some(b), Some(c)) => (a, b, c == 1),
            _ => {
                return Err(malformed(
                    2,
                    "header needs lambda=, n_features=, standardize=".into(),
                ))
            }
        };

        let mut feature_names = Vec::new();
        let mut beta = vec![0.0f64; n_features];
        let mut stats = vec![(0.0f64, 0.0f64); if standardize { n_features } else { 0 }];
        let mut baseline_points = Vec::new();
        let mut baseline_initial = 0.0f64;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line
                .split_once(' ')
                .ok_or_else(|| malformed(lineno, "expected `tag value...`".into()))?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| malformed(lineno, format!("bad float `{s}`")))
            };
            match tag {
                "columns" => {
                    feature_names = rest.split(',').map(|s| s.to_string()).collect();
                    if feature_names.len() != n_features {
                        return Err(malformed(lineno, "column count mismatch".into()));
                    }
                }
                "beta" => {
                    let j: usize = fields[0]
                        .parse()
                        .map_err(|_| malformed(lineno, "bad index".into()))?;
                    if j >= n_features {
                        return Err(malformed(lineno, "beta index out of range".into()));
                    }
                    beta[j] = parse(fields[1])?;
                }
                "stats" => {
                    if !standardize {
                        return Err(malformed(lineno, "stats line without standardize=1".into()));
                    }
                    let j: usize = fields[0]
                        .parse()
                        .map_err(|_| malformed(lineno, "bad index".into()))?;
                    stats[j] = (parse(fields[1])?, parse(fields[2])?);
                }
                "baseline_initial" => baseline_initial = parse(fields[0])?,
                "baseline" => baseline_points.push((parse(fields[0])?, parse(fields[1])?)),
                other => return Err(malformed(lineno, format!("unknown tag `{other}`"))),
            }
        }
        let baseline = StepFunction::new(baseline_initial, baseline_points)
            .map_err(|e| malformed(0, e.to_string()))?;
        Ok(CoxModel {
            beta,
            lambda,
            baseline,
            standardization: standardize.then_some(stats),
            feature_names,
        })
    }
}

/// Breslow estimate of the cumulative baseline hazard on training data:
/// `H0(t) = sum_{event times s <= t} d_s / sum_{j: T_j >= s} exp(eta_j)`.
pub fn breslow_baseline(
    model: &CoxModel,
    x: ArrayView2<f64>,
    durations: &[f64],
    events: &[bool],
) -> Result<StepFunction> {
    let n = x.nrows();
    if durations.len() != n || events.len() != n {
        return Err(CoxError::LengthMismatch(n, durations.len(), events.len()));
    }
    if x.ncols() != self_len(model) {
        return Err(CoxError::DimensionMismatch {
            got: x.ncols(),
            expected: self_len(model),
        });
    }
    let beta = Array1::from_vec(model.beta.clone());
    let eta = x.dot(&beta);
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(CoxError::NonFiniteFeatures);
    }

    let sets = RiskSets::new(durations, events);
    // Scan descending, accumulating the rescaled risk-set mass, then emit
    // jumps in ascending time order.
    let mut s0 = 0.0f64;
    let mut increments: Vec<(f64, f64)> = Vec::new();
    for g in &sets.groups {
        for &j in &g.members {
            s0 += (eta[j] - m).exp();
        }
        let d = g.events.len() as f64;
        if d > 0.0 {
            let inc = (d.ln() - m - s0.ln()).exp();
            if !inc.is_finite() {
                return Err(CoxError::NumericalFailure);
            }
            increments.push((g.time, inc));
        }
    }
    increments.reverse();
    let mut cum = 0.0f64;
    let points: Vec<(f64, f64)> = increments
        .into_iter()
        .map(|(t, inc)| {
            cum += inc;
            (t, cum)
        })
        .collect();
    StepFunction::new(0.0, points).map_err(|_| CoxError::NumericalFailure)
}

fn self_len(model: &CoxModel) -> usize {
    model.beta.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn loglik_at_zero_is_sum_of_log_risk_set_sizes() {
        let x = array![[1.0], [0.5], [-1.0], [2.0]];
        let t = [4.0, 3.0, 2.0, 1.0];
        let delta = [true, false, true, true];
        // risk sets at events: T=4 -> {1}, T=2 -> {1,2,3}, T=1 -> all 4
        let expected = (1.0f64).ln() + (3.0f64).ln() + (4.0f64).ln();
        let val = smooth_neg_loglik(x.view(), &t, &delta, &[0.0]).unwrap();
        assert_relative_eq!(val, expected, max_relative = 1e-12);
    }

    #[test]
    fn two_patient_hand_case() {
        // T=(1,2), delta=(1,1), scalar x=(1,0): l(b) = log(1 + e^{-b}).
        let x = array![[1.0], [0.0]];
        let t = [1.0, 2.0];
        let delta = [true, true];
        for b in [-1.5, 0.0, 0.7, 3.0] {
            let val = smooth_neg_loglik(x.view(), &t, &delta, &[b]).unwrap();
            assert_relative_eq!(val, (1.0 + (-b).exp()).ln(), max_relative = 1e-12);
        }
        let at_zero = smooth_neg_loglik(x.view(), &t, &delta, &[0.0]).unwrap();
        assert_relative_eq!(at_zero, 2.0f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn penalty_is_linear_in_lambda() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let t = [3.0, 2.0, 1.0];
        let delta = [true, true, false];
        let beta = [2.0, -1.0]; // |beta|_1 = 3
        let v0 = neg_penalized_loglik(&beta, x.view(), &t, &delta, 0.0).unwrap();
        let v1 = neg_penalized_loglik(&beta, x.view(), &t, &delta, 1.0).unwrap();
        assert_relative_eq!(v1 - v0, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            smooth_neg_loglik(x.view(), &[1.0], &[true, true], &[0.0]).unwrap_err(),
            CoxError::LengthMismatch(..)
        ));
        assert!(matches!(
            smooth_neg_loglik(x.view(), &[1.0, 0.0], &[true, true], &[0.0]).unwrap_err(),
            CoxError::NonPositiveDuration(1)
        ));
        assert!(matches!(
            smooth_neg_loglik(x.view(), &[1.0, 2.0], &[false, false], &[0.0]).unwrap_err(),
            CoxError::NoEvents
        ));
        let bad = array![[f64::NAN], [0.0]];
        assert!(matches!(
            smooth_neg_loglik(bad.view(), &[1.0, 2.0], &[true, true], &[0.0]).unwrap_err(),
            CoxError::NonFiniteFeatures
        ));
    }

    /// Simple proportional-hazards draw used across the solver tests.
    fn simulate_ph(
        n: usize,
        beta_true: &[f64],
        censor_rate: f64,
        seed: u64,
    ) -> (Array2<f64>, Vec<f64>, Vec<bool>) {
        let p = beta_true.len();
        let mut rng = crate::rng::substream(seed, "cox-sim");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::<f64>::zeros((n, p));
        let mut t = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..p {
                let v = normal.sample(&mut rng);
                x[(i, j)] = v;
                eta += v * beta_true[j];
            }
            let u: f64 = rng.random_range(1e-12..1.0);
            let event_time = -u.ln() / eta.exp();
            let c: f64 = if censor_rate > 0.0 {
                let uc: f64 = rng.random_range(1e-12..1.0);
                -uc.ln() / censor_rate
            } else {
                f64::INFINITY
            };
            t.push(event_time.min(c).max(1e-9));
            delta.push(event_time <= c);
        }
        (x, t, delta)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, t, delta) = simulate_ph(60, &[0.8, -0.5, 0.0], 0.3, 4);
        let mut rng = crate::rng::substream(5, "cox-fd");
        for _ in 0..4 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = smooth_neg_loglik_grad(x.view(), &t, &delta, &beta).unwrap();
            for k in 0..3 {
                let h = 1e-6 * (1.0 + beta[k].abs());
                let mut bp = beta.clone();
                bp[k] += h;
                let mut bm = beta.clone();
                bm[k] -= h;
                let fp = smooth_neg_loglik(x.view(), &t, &delta, &bp).unwrap();
                let fm = smooth_neg_loglik(x.view(), &t, &delta, &bm).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert_relative_eq!(g[k], fd, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn lambda_above_max_gives_exact_null_solution() {
        let (x, t, delta) = simulate_ph(80, &[1.0, -1.0], 0.2, 9);
        let lmax = lambda_max(x.view(), &t, &delta).unwrap();
        let cfg = CoxFitConfig::with_lambda(lmax * 1.01);
        let (model, diag) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
        assert!(model.beta.iter().all(|&b| b == 0.0));
        assert_eq!(diag.n_nonzero, 0);
        assert!(diag.kkt_residual <= cfg.kkt_tol);
        // exactly at lambda_max the threshold also holds (slack covers it)
        let cfg_eq = CoxFitConfig::with_lambda(lmax);
        let (model_eq, _) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg_eq).unwrap();
        assert!(model_eq.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn recovers_signs_and_discriminates_held_out() {
        let beta_true = [1.5, -1.5, 1.0, 0.0, 0.0, 0.0];
        let (x, t, delta) = simulate_ph(2000, &beta_true, 0.1, 21);
        let (xh, th, dh) = simulate_ph(800, &beta_true, 0.1, 22);
        let lmax = lambda_max(x.view(), &t, &delta).unwrap();
        let cfg = CoxFitConfig::with_lambda(0.01 * lmax);
        let (model, diag) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
        assert!(diag.kkt_residual <= cfg.kkt_tol);
        for (k, &bt) in beta_true.iter().enumerate() {
            if bt != 0.0 {
                assert!(
                    model.beta[k].signum() == bt.signum(),
                    "coefficient {k}: fitted {} vs true {bt}",
                    model.beta[k]
                );
            }
        }
        // held-out concordance of the fitted scores
        let eta: Vec<f64> = (0..xh.nrows())
            .map(|i| model.risk_score(xh.row(i).as_slice().unwrap()).unwrap())
            .collect();
        let c = crate::metrics::concordance_index(&th, &dh, &eta).unwrap();
        assert!(c > 0.8, "held-out C-index {c}");
    }

    #[test]
    fn l1_norm_shrinks_with_lambda() {
        let (x, t, delta) = simulate_ph(300, &[1.0, -0.7, 0.4], 0.2, 31);
        let lmax = lambda_max(x.view(), &t, &delta).unwrap();
        let mut norms = Vec::new();
        for frac in [0.5, 0.2, 0.05, 0.01] {
            let cfg = CoxFitConfig::with_lambda(frac * lmax);
            let (model, _) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
            norms.push(model.beta.iter().map(|b| b.abs()).sum::<f64>());
        }
        for w in norms.windows(2) {
            assert!(w[0] <= w[1] + 1e-6, "l1 path not monotone: {norms:?}");
        }
    }

    #[test]
    fn zero_variance_columns_are_dropped() {
        let (mut x, t, delta) = simulate_ph(100, &[1.0], 0.2, 41);
        let constant = Array2::from_elem((100, 1), 3.5);
        x.push_column(constant.column(0)).unwrap();
        let cfg = CoxFitConfig::with_lambda(0.1);
        let (model, diag) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
        assert_eq!(diag.dropped_columns, vec![1]);
        assert_eq!(model.beta[1], 0.0);
    }

    #[test]
    fn constant_column_shift_preserves_score_differences() {
        let (x, t, delta) = simulate_ph(150, &[0.9, -0.6], 0.2, 51);
        let cfg = CoxFitConfig::with_lambda(0.5);
        let (model, _) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
        let mut shifted = x.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, 0)] += 42.0;
        }
        let eta: Vec<f64> = (0..x.nrows())
            .map(|i| model.risk_score(x.row(i).as_slice().unwrap()).unwrap())
            .collect();
        let eta_shift: Vec<f64> = (0..x.nrows())
            .map(|i| {
                model
                    .risk_score(shifted.row(i).as_slice().unwrap())
                    .unwrap()
            })
            .collect();
        for i in 1..eta.len() {
            assert_relative_eq!(
                eta[i] - eta[0],
                eta_shift[i] - eta_shift[0],
                max_relative = 1e-9,
                epsilon = 1e-9
            );
        }
        let c1 = crate::metrics::concordance_index(&t, &delta, &eta).unwrap();
        let c2 = crate::metrics::concordance_index(&t, &delta, &eta_shift).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn risk_score_matches_naive_dot_and_is_linear() {
        let model = CoxModel {
            beta: vec![0.5, -1.0, 2.0],
            lambda: 0.1,
            baseline: StepFunction::constant(0.0),
            standardization: None,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let row = [1.0, 2.0, -0.5];
        let naive: f64 = row.iter().zip(&model.beta).map(|(a, b)| a * b).sum();
        assert_relative_eq!(model.risk_score(&row).unwrap(), naive, max_relative = 1e-12);
        // doubling a positively-weighted feature strictly increases the score
        let mut doubled = row;
        doubled[2] *= 2.0; // beta[2] = 2.0 > 0, row[2] negative -> decreases
        assert!(model.risk_score(&doubled).unwrap() < model.risk_score(&row).unwrap());
        let mut doubled_pos = row;
        doubled_pos[0] *= 2.0;
        assert!(model.risk_score(&doubled_pos).unwrap() > model.risk_score(&row).unwrap());
        // zero model scores everyone 0
        let null = CoxModel {
            beta: vec![0.0; 3],
            ..model.clone()
        };
        assert_eq!(null.risk_score(&row).unwrap(), 0.0);
        assert!(matches!(
            model.risk_score(&[1.0]).unwrap_err(),
            CoxError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn breslow_reduces_to_nelson_aalen_at_null_model() {
        let n = 5;
        let x = Array2::<f64>::zeros((n, 1));
        let t: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let delta = vec![true; n];
        let model = CoxModel {
            beta: vec![0.0],
            lambda: 0.0,
            baseline: StepFunction::constant(0.0),
            standardization: None,
            feature_names: vec!["x0".into()],
        };
        let h0 = breslow_baseline(&model, x.view(), &t, &delta).unwrap();
        assert!(h0.is_non_decreasing());
        let mut expected = 0.0;
        for (k, (time, value)) in h0.points().enumerate() {
            expected += 1.0 / (n - k) as f64;
            assert_relative_eq!(value, expected, max_relative = 1e-12);
            assert_eq!(time, (k + 1) as f64);
        }
    }

    #[test]
    fn breslow_no_events_is_identically_zero() {
        let x = Array2::<f64>::zeros((3, 1));
        let t = [1.0, 2.0, 3.0];
        let delta = [false, false, false];
        let model = CoxModel {
            beta: vec![0.0],
            lambda: 0.0,
            baseline: StepFunction::constant(0.0),
            standardization: None,
            feature_names: vec!["x0".into()],
        };
        let h0 = breslow_baseline(&model, x.view(), &t, &delta).unwrap();
        assert_eq!(h0.n_jumps(), 0);
        assert_eq!(h0.eval(10.0), 0.0);
    }

    #[test]
    fn breslow_handles_ties_with_single_jump() {
        // 3 patients, 2 tied events at t=2: one jump of d / sum_R exp(eta).
        let x = array![[1.0], [0.0], [-1.0]];
        let t = [2.0, 2.0, 3.0];
        let delta = [true, true, false];
        let model = CoxModel {
            beta: vec![0.7],
            lambda: 0.0,
            baseline: StepFunction::constant(0.0),
            standardization: None,
            feature_names: vec!["x0".into()],
        };
        let h0 = breslow_baseline(&model, x.view(), &t, &delta).unwrap();
        let pts: Vec<(f64, f64)> = h0.points().collect();
        assert_eq!(pts.len(), 1);
        let denom = (0.7f64).exp() + 1.0 + (-0.7f64).exp();
        assert_relative_eq!(pts[0].1, 2.0 / denom, max_relative = 1e-12);
        assert_eq!(pts[0].0, 2.0);
    }

    #[test]
    fn survival_prediction_shapes() {
        let model = CoxModel {
            beta: vec![0.0],
            lambda: 0.0,
            baseline: StepFunction::new(0.0, vec![(1.0, 0.5), (2.0, 1.25)]).unwrap(),
            standardization: None,
            feature_names: vec!["x0".into()],
        };
        // before the first event time, survival is 1
        assert_eq!(model.predict_survival(&[3.0], 0.5).unwrap(), 1.0);
        // H0=0.5, eta=0 -> exp(-0.5)
        assert_relative_eq!(
            model.predict_survival(&[0.0], 1.5).unwrap(),
            (-0.5f64).exp(),
            max_relative = 1e-12
        );
        // monotone in t and in eta
        let grid = [0.0, 0.5, 1.0, 1.5, 2.0, 5.0];
        let mut prev = 1.0f64;
        for &t in &grid {
            let s = model.survival_from_eta(0.3, t);
            assert!(s <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&s));
            prev = s;
        }
        for &t in &grid[1..] {
            assert!(model.survival_from_eta(1.0, t) <= model.survival_from_eta(-1.0, t));
        }
    }

    #[test]
    fn model_file_round_trips() {
        let (x, t, delta) = simulate_ph(120, &[1.0, -0.5, 0.0], 0.2, 71);
        let cfg = CoxFitConfig::with_lambda(1.0);
        let (mut model, _) = fit_cox_lasso(x.view(), &t, &delta, vec![], &cfg).unwrap();
        model.baseline = breslow_baseline(&model, x.view(), &t, &delta).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        model.save(&path).unwrap();
        let loaded = CoxModel::load(&path).unwrap();
        assert_eq!(model.beta, loaded.beta);
        assert_eq!(model.lambda, loaded.lambda);
        assert_eq!(model.feature_names, loaded.feature_names);
        assert_eq!(model.standardization, loaded.standardization);
        let pts_a: Vec<(f64, f64)> = model.baseline.points().collect();
        let pts_b: Vec<(f64, f64)> = loaded.baseline.points().collect();
        assert_eq!(pts_a, pts_b);
        // saving the reloaded model reproduces the bytes
        let path2 = dir.path().join("model2.txt");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn objective_decreases_monotonically() {
        // re-run the solver loop manually to watch the objective trace
        let (x, t, delta) = simulate_ph(120, &[1.0, -0.5], 0.2, 61);
        let lambda = 0.5;
        let mut beta = vec![0.0f64; 2];
        let mut t_step = 1.0f64;
        let mut trace = Vec::new();
        for _ in 0..200 {
            let (f, g) = smooth_neg_loglik_grad(x.view(), &t, &delta, &beta).unwrap();
            trace.push(f + lambda * beta.iter().map(|b| b.abs()).sum::<f64>());
            t_step *= 1.25;
            loop {
                let cand: Vec<f64> = beta
                    .iter()
                    .zip(&g)
                    .map(|(&b, &gk)| soft_threshold(b - t_step * gk, t_step * lambda))
                    .collect();
                let f_cand = smooth_neg_loglik(x.view(), &t, &delta, &cand).unwrap();
                let mut lin = 0.0;
                let mut quad = 0.0;
                for ((&c, &b), &gk) in cand.iter().zip(&beta).zip(&g) {
                    lin += gk * (c - b);
                    quad += (c - b) * (c - b);
                }
                if f_cand <= f + lin + quad / (2.0 * t_step) + 1e-10 * (1.0 + f.abs()) {
                    beta = cand;
                    break;
                }
                t_step *= 0.5;
            }
        }
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()), "objective rose");
        }
    }
}
