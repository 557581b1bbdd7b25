//! Metric implementations vs independent brute-force enumeration.

use rand::Rng;
use sigsurv::metrics::{
    concordance_index, kaplan_meier, mean_auc, td_auc, CaseWeighting, MeanAucOptions,
};
use sigsurv::rng::substream;

/// Literal transcription of the concordance ratio: double loop over ordered
/// pairs, integer counters in half units.
fn cindex_enumeration(t: &[f64], delta: &[bool], eta: &[f64]) -> Option<f64> {
    let n = t.len();
    let mut num2 = 0u64;
    let mut den = 0u64;
    for j in 0..n {
        for i in 0..n {
            if t[j] < t[i] && delta[j] {
                den += 1;
                if eta[j] > eta[i] {
                    num2 += 2;
                } else if eta[j] == eta[i] {
                    num2 += 1;
                }
            }
        }
    }
    (den > 0).then(|| num2 as f64 / (2 * den) as f64)
}

/// Literal transcription of the td-AUC ratio at horizon `h`.
fn td_auc_enumeration(t: &[f64], delta: &[bool], eta: &[f64], h: f64) -> Option<f64> {
    let n = t.len();
    let mut num2 = 0u64;
    let mut den = 0u64;
    for j in 0..n {
        if !(t[j] <= h && delta[j]) {
            continue;
        }
        for i in 0..n {
            if !(t[i] > h) {
                continue;
            }
            den += 1;
            if eta[j] > eta[i] {
                num2 += 2;
            } else if eta[j] == eta[i] {
                num2 += 1;
            }
        }
    }
    (den > 0).then(|| num2 as f64 / (2 * den) as f64)
}

/// Random data with deliberately heavy ties in times and scores.
fn tied_data(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let mut rng = substream(seed, "metric-ties");
    let t: Vec<f64> = (0..n)
        .map(|_| rng.random_range(1..=12) as f64 / 2.0)
        .collect();
    let delta: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.7).collect();
    let eta: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
    (t, delta, eta)
}

#[test]
fn cindex_matches_enumeration_exactly_with_ties() {
    for seed in 0..25 {
        let (t, delta, eta) = tied_data(seed, 50);
        match (
            concordance_index(&t, &delta, &eta),
            cindex_enumeration(&t, &delta, &eta),
        ) {
            (Ok(fast), Some(brute)) => assert_eq!(fast, brute, "seed {seed}"),
            (Err(_), None) => {}
            (fast, brute) => panic!("disagree on evaluability: {fast:?} vs {brute:?}"),
        }
    }
}

#[test]
fn td_auc_matches_enumeration_exactly_with_ties() {
    for seed in 0..25 {
        let (t, delta, eta) = tied_data(seed + 100, 50);
        for h in [1.0, 2.0, 3.5, 5.0] {
            match (
                td_auc(&t, &delta, &eta, h, CaseWeighting::Unweighted, None),
                td_auc_enumeration(&t, &delta, &eta, h),
            ) {
                (Ok(fast), Some(brute)) => assert_eq!(fast, brute, "seed {seed}, h {h}"),
                (Err(_), None) => {}
                (fast, brute) => panic!("disagree on evaluability: {fast:?} vs {brute:?}"),
            }
        }
    }
}

#[test]
fn td_auc_equals_concordance_on_straddling_pairs() {
    // restricted concordance over (case, control) pairs around t
    for seed in 0..10 {
        let (t, delta, eta) = tied_data(seed + 500, 40);
        for h in [1.5, 2.5, 4.0] {
            let cases: Vec<usize> = (0..t.len()).filter(|&j| t[j] <= h && delta[j]).collect();
            let controls: Vec<usize> = (0..t.len()).filter(|&i| t[i] > h).collect();
            if cases.is_empty() || controls.is_empty() {
                continue;
            }
            let mut num2 = 0u64;
            let mut den = 0u64;
            for &j in &cases {
                for &i in &controls {
                    den += 1;
                    num2 += if eta[j] > eta[i] {
                        2
                    } else if eta[j] == eta[i] {
                        1
                    } else {
                        0
                    };
                }
            }
            let restricted = num2 as f64 / (2 * den) as f64;
            let auc = td_auc(&t, &delta, &eta, h, CaseWeighting::Unweighted, None).unwrap();
            assert_eq!(auc, restricted);
        }
    }
}

/// Second implementation of the KM-weighted mean AUC: trapezoid-style sum
/// on a fine uniform grid against the decrease of the KM curve.
fn mean_auc_trapezoid(t: &[f64], delta: &[bool], eta: &[f64], tau1: f64, tau2: f64) -> f64 {
    let g = kaplan_meier(t, delta).unwrap();
    let m = 4000usize;
    let mut acc = 0.0f64;
    let mut mass = 0.0f64;
    for k in 0..m {
        let lo = tau1 + (tau2 - tau1) * k as f64 / m as f64;
        let hi = tau1 + (tau2 - tau1) * (k + 1) as f64 / m as f64;
        let w = g.eval(lo) - g.eval(hi);
        if w <= 0.0 {
            continue;
        }
        if let Ok(a) = td_auc(t, delta, eta, hi, CaseWeighting::Unweighted, None) {
            acc += a * w;
            mass += w;
        }
    }
    acc / mass
}

#[test]
fn mean_auc_agrees_with_independent_trapezoidal_integrator() {
    let mut rng = substream(77, "mean-auc");
    let n = 120;
    // strong signal: risk is (noisy) negative log time
    let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..10.0)).collect();
    let delta: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.8).collect();
    let eta: Vec<f64> = t
        .iter()
        .map(|&v| -v.ln() + rng.random_range(-0.3..0.3))
        .collect();
    let tau1 = 0.0;
    let tau2 = 8.0;
    let fast = mean_auc(
        &t,
        &delta,
        &eta,
        tau1,
        tau2,
        None,
        &MeanAucOptions::default(),
    )
    .unwrap();
    let slow = mean_auc_trapezoid(&t, &delta, &eta, tau1, tau2);
    assert!(
        (fast - slow).abs() < 0.02,
        "stieltjes {fast} vs trapezoid {slow}"
    );
    assert!(
        fast > 0.8,
        "strong signal should give high mean AUC, got {fast}"
    );
}
