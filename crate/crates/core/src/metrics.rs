//! Censoring-aware evaluation: concordance with jackknife intervals,
//! Kaplan–Meier, time-dependent AUC and its KM-weighted mean, Brier score
//! and IBS, risk–time correlations and risk-quartile summaries.
//!
//! Tie handling: equal risk scores earn half credit in both the C-index and
//! td-AUC. Pairwise counters are integers (in half units), so results are
//! exact and reproducible bit-for-bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};
use thiserror::Error;

use crate::ingest::{truncate_reports, Cohort};
use crate::stepfn::StepFunction;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("input lengths disagree ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("no cases or no controls at t = {0}")]
    NoCasesOrControls(f64),
    #[error("empty input")]
    Empty,
    #[error("survival estimator mass in ({0}, {1}] is zero")]
    ZeroMassWindow(f64, f64),
    #[error("evaluation window [{0}, {1}) is invalid")]
    BadWindow(f64, f64),
    #[error("predictions must lie in [0, 1] (offender at index {0})")]
    BadPrediction(usize),
    #[error("need at least {needed} uncensored patients, got {got}")]
    TooFewUncensored { needed: usize, got: usize },
    #[error("IPCW weighting requested without a censoring estimator")]
    MissingCensoringEstimator,
    #[error("risk computation failed: {0}")]
    PipelineFailure(String),
    #[error("durations must be positive (offender at index {0})")]
    NonPositiveDuration(usize),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn check_lengths(t: &[f64], delta: &[bool], eta: &[f64]) -> Result<()> {
    if t.len() != delta.len() || t.len() != eta.len() {
        return Err(MetricsError::LengthMismatch(
            t.len(),
            delta.len(),
            eta.len(),
        ));
    }
    if t.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = t.iter().position(|&v| !(v > 0.0)) {
        return Err(MetricsError::NonPositiveDuration(i));
    }
    Ok(())
}

/// Numerator (in half units) and denominator of the concordance ratio:
/// the ordered pair (j, i) is comparable when `T_j < T_i` and `delta_j`;
/// it scores 2 when `eta_j > eta_i`, 1 on a risk tie.
fn concordance_counts(t: &[f64], delta: &[bool], eta: &[f64]) -> (u64, u64, Vec<u64>, Vec<u64>) {
    let n = t.len();
    let mut num2 = 0u64;
    let mut den = 0u64;
    let mut num2_marginal = vec![0u64; n];
    let mut den_marginal = vec![0u64; n];
    for j in 0..n {
        if !delta[j] {
            continue;
        }
        for i in 0..n {
            if !(t[j] < t[i]) {
                continue;
            }
            let credit: u64 = if eta[j] > eta[i] {
                2
            } else if eta[j] == eta[i] {
                1
            } else {
                0
            };
            num2 += credit;
            den += 1;
            num2_marginal[j] += credit;
            num2_marginal[i] += credit;
            den_marginal[j] += 1;
            den_marginal[i] += 1;
        }
    }
    (num2, den, num2_marginal, den_marginal)
}

/// Harrell-style concordance index with half-credit ties.
pub fn concordance_index(t: &[f64], delta: &[bool], eta: &[f64]) -> Result<f64> {
    check_lengths(t, delta, eta)?;
    let (num2, den, _, _) = concordance_counts(t, delta, eta);
    if den == 0 {
        return Err(MetricsError::NoComparablePairs);
    }
    Ok(num2 as f64 / (2 * den) as f64)
}

/// Leave-one-patient-out jackknife interval for the C-index
/// (normal approximation around the point estimate).
pub fn jackknife_ci(t: &[f64], delta: &[bool], eta: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_lengths(t, delta, eta)?;
    let (num2, den, num2_m, den_m) = concordance_counts(t, delta, eta);
    if den == 0 {
        return Err(MetricsError::NoComparablePairs);
    }
    let point = num2 as f64 / (2 * den) as f64;
    // Removing patient k removes exactly the pairs it belongs to.
    let pseudo: Vec<f64> = (0..t.len())
        .filter(|&k| den > den_m[k])
        .map(|k| (num2 - num2_m[k]) as f64 / (2 * (den - den_m[k])) as f64)
        .collect();
    if pseudo.is_empty() {
        return Ok((point, point));
    }
    let m = pseudo.len() as f64;
    let mean = pseudo.iter().sum::<f64>() / m;
    let var = (m - 1.0) / m * pseudo.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let half = z * var.sqrt();
    Ok((point - half, point + half))
}

/// Product-limit estimator. Pass the event indicators for the event-time
/// survival curve, or the reversed indicators `!delta` for the censoring
/// distribution `G`.
pub fn kaplan_meier(t: &[f64], indicator: &[bool]) -> Result<StepFunction> {
    if t.len() != indicator.len() {
        return Err(MetricsError::LengthMismatch(t.len(), indicator.len(), 0));
    }
    if t.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = t.iter().position(|&v| !(v > 0.0)) {
        return Err(MetricsError::NonPositiveDuration(i));
    }
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let n = t.len();
    let mut surv = 1.0f64;
    let mut points = Vec::new();
    let mut at_risk = n;
    let mut i = 0usize;
    while i < n {
        let time = t[order[i]];
        let mut d = 0usize;
        let mut leaving = 0usize;
        while i < n && t[order[i]] == time {
            if indicator[order[i]] {
                d += 1;
            }
            leaving += 1;
            i += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            points.push((time, surv));
        }
        at_risk -= leaving;
    }
    Ok(StepFunction::new(1.0, points).expect("sorted jump times"))
}

/// Kaplan–Meier estimate of the censoring survival `G` (reversed
/// indicators).
pub fn censoring_survival(t: &[f64], delta: &[bool]) -> Result<StepFunction> {
    let reversed: Vec<bool> = delta.iter().map(|&d| !d).collect();
    kaplan_meier(t, &reversed)
}

/// Case weighting for the time-dependent AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaseWeighting {
    /// The plain indicator ratio.
    #[default]
    Unweighted,
    /// Inverse-probability-of-censoring weights `1 / G(T_j-)^2` per case.
    Ipcw,
}

/// AUC(t): discrimination between cases (event by `t`) and controls
/// (still surviving past `t`), with half-credit risk ties.
pub fn td_auc(
    t: &[f64],
    delta: &[bool],
    eta: &[f64],
    horizon: f64,
    weighting: CaseWeighting,
    g_hat: Option<&StepFunction>,
) -> Result<f64> {
    check_lengths(t, delta, eta)?;
    let n = t.len();
    let cases: Vec<usize> = (0..n).filter(|&j| t[j] <= horizon && delta[j]).collect();
    let controls: Vec<usize> = (0..n).filter(|&i| t[i] > horizon).collect();
    if cases.is_empty() || controls.is_empty() {
        return Err(MetricsError::NoCasesOrControls(horizon));
    }
    match weighting {
        CaseWeighting::Unweighted => {
            let mut num2 = 0u64;
            let mut den = 0u64;
            for &j in &cases {
                for &i in &controls {
                    num2 += if eta[j] > eta[i] {
                        2
                    } else if eta[j] == eta[i] {
                        1
                    } else {
                        0
                    };
                    den += 1;
                }
            }
            Ok(num2 as f64 / (2 * den) as f64)
        }
        CaseWeighting::Ipcw => {
            let g = g_hat.ok_or(MetricsError::MissingCensoringEstimator)?;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for &j in &cases {
                let gj = g.eval_left(t[j]);
                if gj <= 0.0 {
                    continue;
                }
                let w = 1.0 / (gj * gj);
                for &i in &controls {
                    let credit = if eta[j] > eta[i] {
                        1.0
                    } else if eta[j] == eta[i] {
                        0.5
                    } else {
                        0.0
                    };
                    num += w * credit;
                    den += w;
                }
            }
            if den == 0.0 {
                return Err(MetricsError::NoCasesOrControls(horizon));
            }
            Ok(num / den)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MeanAucOptions {
    /// Integrate against the censoring-distribution KM instead of the
    /// event-survival KM.
    pub censoring_km: bool,
    pub weighting: CaseWeighting,
}

/// KM-weighted mean of AUC(t) over `(tau1, tau2]`: a Stieltjes sum of
/// AUC against the jumps of the survival estimate, normalized by the mass
/// of the window. Horizons where the AUC is undefined (no cases or no
/// controls) are skipped and the weights renormalized over the rest.
pub fn mean_auc(
    t: &[f64],
    delta: &[bool],
    eta: &[f64],
    tau1: f64,
    tau2: f64,
    grid: Option<&[f64]>,
    opts: &MeanAucOptions,
) -> Result<f64> {
    check_lengths(t, delta, eta)?;
    if !(tau1 < tau2) {
        return Err(MetricsError::BadWindow(tau1, tau2));
    }
    let g = if opts.censoring_km {
        censoring_survival(t, delta)?
    } else {
        kaplan_meier(t, delta)?
    };
    if g.eval(tau1) - g.eval(tau2) <= 0.0 {
        return Err(MetricsError::ZeroMassWindow(tau1, tau2));
    }
    let g_cens;
    let g_for_auc = match opts.weighting {
        CaseWeighting::Unweighted => None,
        CaseWeighting::Ipcw => {
            g_cens = censoring_survival(t, delta)?;
            Some(&g_cens)
        }
    };

    // (horizon, weight) pairs: KM jump masses by default, first differences
    // of the estimator on an explicit grid otherwise.
    let weighted_horizons: Vec<(f64, f64)> = match grid {
        None => g
            .points()
            .map(|(s, _)| (s, g.eval_left(s) - g.eval(s)))
            .filter(|&(s, w)| s > tau1 && s <= tau2 && w > 0.0)
            .collect(),
        Some(points) => {
            let mut sorted: Vec<f64> = points
                .iter()
                .copied()
                .filter(|&s| s > tau1 && s <= tau2)
                .collect();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let mut prev = tau1;
            sorted
                .into_iter()
                .map(|s| {
                    let w = g.eval(prev) - g.eval(s);
                    prev = s;
                    (s, w)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect()
        }
    };

    let mut acc = 0.0f64;
    let mut mass = 0.0f64;
    for (s, w) in weighted_horizons {
        match td_auc(t, delta, eta, s, opts.weighting, g_for_auc) {
            Ok(auc) => {
                acc += auc * w;
                mass += w;
            }
            Err(MetricsError::NoCasesOrControls(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if mass <= 0.0 {
        return Err(MetricsError::ZeroMassWindow(tau1, tau2));
    }
    Ok(acc / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierResult {
    pub value: f64,
    /// Terms dropped because the censoring weight was zero.
    pub dropped: usize,
}

/// IPCW Brier score at `horizon`:
/// events by `horizon` contribute `S(t|x)^2 / G(T_i-)`, survivors contribute
/// `(1 - S(t|x))^2 / G(horizon)`; the mean is over all patients. `G` is the
/// censoring KM; the left limit at event times avoids zero weights at the
/// largest observed time.
pub fn brier_score(
    t: &[f64],
    delta: &[bool],
    surv_at_horizon: &[f64],
    horizon: f64,
    g_hat: &StepFunction,
) -> Result<BrierResult> {
    if t.len() != delta.len() || t.len() != surv_at_horizon.len() {
        return Err(MetricsError::LengthMismatch(
            t.len(),
            delta.len(),
            surv_at_horizon.len(),
        ));
    }
    if t.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = surv_at_horizon
        .iter()
        .position(|&s| !(0.0..=1.0).contains(&s))
    {
        return Err(MetricsError::BadPrediction(i));
    }
    let n = t.len();
    let mut acc = 0.0f64;
    let mut dropped = 0usize;
    let g_horizon = g_hat.eval(horizon);
    for i in 0..n {
        let s = surv_at_horizon[i];
        if t[i] <= horizon {
            if !delta[i] {
                continue; // censored before horizon: no contribution
            }
            let w = g_hat.eval_left(t[i]);
            if w <= 0.0 {
                dropped += 1;
                continue;
            }
            acc += s * s / w;
        } else {
            if g_horizon <= 0.0 {
                dropped += 1;
                continue;
            }
            acc += (1.0 - s) * (1.0 - s) / g_horizon;
        }
    }
    if dropped > 0 {
        log::warn!("brier_score at t={horizon}: dropped {dropped} zero-weight term(s)");
    }
    Ok(BrierResult {
        value: acc / n as f64,
        dropped,
    })
}

/// Time-averaged Brier score over `[tau1, tau2]` via the trapezoid rule on
/// the given grid (endpoints are added if missing). `surv(i, t)` returns the
/// predicted survival probability of patient `i` at `t`. When `g_hat` is
/// `None` the censoring KM of the sample itself is used.
pub fn integrated_brier(
    t: &[f64],
    delta: &[bool],
    surv: impl Fn(usize, f64) -> f64,
    tau1: f64,
    tau2: f64,
    grid: &[f64],
    g_hat: Option<&StepFunction>,
) -> Result<BrierResult> {
    if !(tau1 < tau2) {
        return Err(MetricsError::BadWindow(tau1, tau2));
    }
    let own_g;
    let g = match g_hat {
        Some(g) => g,
        None => {
            own_g = censoring_survival(t, delta)?;
            &own_g
        }
    };
    let mut points: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&s| s >= tau1 && s <= tau2)
        .chain([tau1, tau2])
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let n = t.len();
    let mut bs_values = Vec::with_capacity(points.len());
    let mut dropped = 0usize;
    for &s in &points {
        let preds: Vec<f64> = (0..n).map(|i| surv(i, s)).collect();
        let r = brier_score(t, delta, &preds, s, g)?;
        dropped += r.dropped;
        bs_values.push(r.value);
    }
    let mut integral = 0.0f64;
    for k in 1..points.len() {
        integral += 0.5 * (bs_values[k - 1] + bs_values[k]) * (points[k] - points[k - 1]);
    }
    Ok(BrierResult {
        value: integral / (tau2 - tau1),
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub pearson: f64,
    pub pearson_p: f64,
    pub spearman: f64,
    pub spearman_p: f64,
    pub n_uncensored: usize,
}

fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Average ranks (1-based), ties averaged.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return f64::NAN;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 1e-15 {
        return 0.0;
    }
    let t_stat = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    2.0 * dist.sf(t_stat)
}

/// Pearson and Spearman correlations between `log T` and the risk score,
/// restricted to uncensored patients.
pub fn risk_time_correlation(t: &[f64], delta: &[bool], eta: &[f64]) -> Result<CorrelationSummary> {
    check_lengths(t, delta, eta)?;
    let log_t: Vec<f64> = t
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&v, _)| v.ln())
        .collect();
    let scores: Vec<f64> = eta
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&v, _)| v)
        .collect();
    let n = log_t.len();
    if n < 3 {
        return Err(MetricsError::TooFewUncensored { needed: 3, got: n });
    }
    let pearson = pearson_r(&log_t, &scores);
    let spearman = pearson_r(&average_ranks(&log_t), &average_ranks(&scores));
    Ok(CorrelationSummary {
        pearson,
        pearson_p: correlation_p_value(pearson, n),
        spearman,
        spearman_p: correlation_p_value(spearman, n),
        n_uncensored: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileStats {
    pub n: usize,
    pub n_events: usize,
    pub median_log_t: f64,
    pub iqr_log_t: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    /// Index 0 = lowest-risk quartile, 3 = highest.
    pub quartiles: Vec<QuartileStats>,
    pub kruskal_h: f64,
    pub kruskal_p: f64,
    pub anova_f: f64,
    pub anova_p: f64,
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between closest ranks
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Distribution of log-durations across predicted-risk quartiles, with
/// Kruskal–Wallis and one-way ANOVA separation tests on `log T`.
///
/// Quartile membership is by ascending risk rank; ties on the score break
/// by input index (stable, documented).
pub fn risk_quartile_summary(t: &[f64], delta: &[bool], eta: &[f64]) -> Result<QuartileSummary> {
    check_lengths(t, delta, eta)?;
    let n = t.len();
    if n < 4 {
        return Err(MetricsError::TooFewUncensored { needed: 4, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(a.cmp(&b)));
    let mut group = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        group[i] = (rank * 4 / n).min(3);
    }

    let log_t: Vec<f64> = t.iter().map(|&v| v.ln()).collect();
    let mut quartiles = Vec::with_capacity(4);
    for q in 0..4 {
        let mut vals: Vec<f64> = (0..n)
            .filter(|&i| group[i] == q)
            .map(|i| log_t[i])
            .collect();
        vals.sort_by(f64::total_cmp);
        let n_events = (0..n).filter(|&i| group[i] == q && delta[i]).count();
        quartiles.push(QuartileStats {
            n: vals.len(),
            n_events,
            median_log_t: percentile_sorted(&vals, 0.5),
            iqr_log_t: (
                percentile_sorted(&vals, 0.25),
                percentile_sorted(&vals, 0.75),
            ),
        });
    }

    // Kruskal–Wallis H with tie correction.
    let ranks = average_ranks(&log_t);
    let nf = n as f64;
    let mut h = 0.0f64;
    for q in 0..4 {
        let idx: Vec<usize> = (0..n).filter(|&i| group[i] == q).collect();
        if idx.is_empty() {
            continue;
        }
        let r_sum: f64 = idx.iter().map(|&i| ranks[i]).sum();
        h += r_sum * r_sum / idx.len() as f64;
    }
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);
    // tie correction factor
    let mut sorted = log_t.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0f64;
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let ties = (j - i + 1) as f64;
        tie_sum += ties * ties * ties - ties;
        i = j + 1;
    }
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);
    let (kruskal_h, kruskal_p) = if correction <= 0.0 {
        (0.0, 1.0) // all values identical
    } else {
        let h = h / correction;
        let chi = ChiSquared::new(3.0).expect("df 3");
        (h, chi.sf(h.max(0.0)))
    };

    // One-way ANOVA F on log T.
    let grand = log_t.iter().sum::<f64>() / nf;
    let mut ss_between = 0.0f64;
    let mut ss_within = 0.0f64;
    for q in 0..4 {
        let vals: Vec<f64> = (0..n)
            .filter(|&i| group[i] == q)
            .map(|i| log_t[i])
            .collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        ss_between += vals.len() as f64 * (m - grand) * (m - grand);
        ss_within += vals.iter().map(|&v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = 3.0;
    let df_within = nf - 4.0;
    let (anova_f, anova_p) = if ss_within <= 0.0 {
        if ss_between <= 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_between / df_between) / (ss_within / df_within);
        let dist = FisherSnedecor::new(df_between, df_within).expect("valid dof");
        (f, dist.sf(f))
    };

    Ok(QuartileSummary {
        quartiles,
        kruskal_h,
        kruskal_p,
        anova_f,
        anova_p,
    })
}

/// C-index as a function of the per-patient report budget: truncate every
/// patient to their first `min(k, N_i)` reports, recompute risk scores with
/// the supplied featurizer+model closure, and report `(k, C-index)` in
/// ascending `k`.
pub fn cindex_vs_report_count<F>(
    cohort: &Cohort,
    k_values: &[usize],
    mut risk_of: F,
) -> Result<Vec<(usize, f64)>>
where
    F: FnMut(&Cohort) -> std::result::Result<Vec<f64>, String>,
{
    let t = cohort.durations();
    let delta = cohort.events();
    let mut ks: Vec<usize> = k_values.iter().copied().filter(|&k| k >= 1).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut curve = Vec::with_capacity(ks.len());
    for k in ks {
        let truncated = truncate_reports(cohort, k);
        let eta = risk_of(&truncated).map_err(MetricsError::PipelineFailure)?;
        let c = concordance_index(&t, &delta, &eta)?;
        curve.push((k, c));
    }
    Ok(curve)
}

/// Everything the pipeline reports for one evaluation cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_patients: usize,
    pub n_events: usize,
    pub c_index: f64,
    pub c_index_ci95: (f64, f64),
    pub td_auc: Vec<(f64, f64)>,
    pub mean_auc: f64,
    pub brier: Vec<(f64, f64)>,
    pub ibs_by_horizon: Vec<(f64, f64)>,
    pub brier_dropped: usize,
    pub pearson: f64,
    pub pearson_p: f64,
    pub spearman: f64,
    pub spearman_p: f64,
    pub quartiles: QuartileSummary,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Evaluation window `(tau1, tau2)` in days.
    pub tau: (f64, f64),
    /// Horizons for the integrated Brier score, days.
    pub ibs_horizons: Vec<f64>,
    pub td_auc_ipcw: bool,
    pub mean_auc_censoring_km: bool,
    pub alpha: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tau: (0.0, 3650.0),
            ibs_horizons: vec![1095.0, 1825.0, 3650.0],
            td_auc_ipcw: false,
            mean_auc_censoring_km: false,
            alpha: 0.05,
        }
    }
}

/// Run the full metric suite for one cohort given risk scores and a
/// per-patient survival-curve closure `surv(i, t)`.
pub fn evaluate(
    t: &[f64],
    delta: &[bool],
    eta: &[f64],
    surv: impl Fn(usize, f64) -> f64,
    opts: &EvalOptions,
) -> Result<EvaluationReport> {
    check_lengths(t, delta, eta)?;
    let (tau1, tau2) = opts.tau;
    if !(tau1 < tau2) {
        return Err(MetricsError::BadWindow(tau1, tau2));
    }
    let c_index = concordance_index(t, delta, eta)?;
    let ci = jackknife_ci(t, delta, eta, opts.alpha)?;
    let g_cens = censoring_survival(t, delta)?;

    let weighting = if opts.td_auc_ipcw {
        CaseWeighting::Ipcw
    } else {
        CaseWeighting::Unweighted
    };
    let mut event_times: Vec<f64> = t
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&v, _)| v)
        .filter(|&v| v > tau1 && v <= tau2)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();

    let mut auc_curve = Vec::new();
    let mut brier_curve = Vec::new();
    let mut brier_dropped = 0usize;
    let n = t.len();
    for &s in &event_times {
        match td_auc(t, delta, eta, s, weighting, Some(&g_cens)) {
            Ok(a) => auc_curve.push((s, a)),
            Err(MetricsError::NoCasesOrControls(_)) => {}
            Err(e) => return Err(e),
        }
        let preds: Vec<f64> = (0..n).map(|i| surv(i, s)).collect();
        let bs = brier_score(t, delta, &preds, s, &g_cens)?;
        brier_dropped += bs.dropped;
        brier_curve.push((s, bs.value));
    }

    let mean_auc_value = mean_auc(
        t,
        delta,
        eta,
        tau1,
        tau2,
        None,
        &MeanAucOptions {
            censoring_km: opts.mean_auc_censoring_km,
            weighting,
        },
    )?;

    let mut ibs_by_horizon = Vec::new();
    for &h in &opts.ibs_horizons {
        if h <= tau1 {
            continue;
        }
        let grid: Vec<f64> = event_times.iter().copied().filter(|&s| s <= h).collect();
        let r = integrated_brier(t, delta, &surv, tau1, h, &grid, Some(&g_cens))?;
        ibs_by_horizon.push((h, r.value));
    }

    let corr = risk_time_correlation(t, delta, eta)?;
    let quartiles = risk_quartile_summary(t, delta, eta)?;

    Ok(EvaluationReport {
        n_patients: n,
        n_events: delta.iter().filter(|&&d| d).count(),
        c_index,
        c_index_ci95: ci,
        td_auc: auc_curve,
        mean_auc: mean_auc_value,
        brier: brier_curve,
        ibs_by_horizon,
        brier_dropped,
        pearson: corr.pearson,
        pearson_p: corr.pearson_p,
        spearman: corr.spearman,
        spearman_p: corr.spearman_p,
        quartiles,
    })
}

/// Mean and standard deviation (population) per metric across folds.
pub fn summarize_folds(reports: &[EvaluationReport]) -> BTreeMap<String, (f64, f64)> {
    let mut out = BTreeMap::new();
    let mut put = |name: &str, values: Vec<f64>| {
        let usable: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
        if usable.is_empty() {
            return;
        }
        let n = usable.len() as f64;
        let mean = usable.iter().sum::<f64>() / n;
        let var = usable.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        out.insert(name.to_string(), (mean, var.sqrt()));
    };
    put("c_index", reports.iter().map(|r| r.c_index).collect());
    put("mean_auc", reports.iter().map(|r| r.mean_auc).collect());
    put("pearson", reports.iter().map(|r| r.pearson).collect());
    put("spearman", reports.iter().map(|r| r.spearman).collect());
    if let Some(first) = reports.first() {
        for (idx, &(h, _)) in first.ibs_by_horizon.iter().enumerate() {
            put(
                &format!("ibs_{}d", h as i64),
                reports
                    .iter()
                    .filter_map(|r| r.ibs_by_horizon.get(idx).map(|&(_, v)| v))
                    .collect(),
            );
        }
    }
    out
}
