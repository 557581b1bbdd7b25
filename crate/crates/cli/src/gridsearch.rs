//! Penalty selection by cross-validated concordance.
//!
//! Every (lambda, fold) fit is independent; they run in parallel and merge
//! in deterministic grid order. The winning lambda maximizes the mean
//! held-out C-index, with ties broken toward the larger (sparser) penalty.

use ndarray::Array2;
use rayon::prelude::*;
use sigsurv::cox::{fit_cox_lasso, CoxFitConfig};
use sigsurv::metrics::concordance_index;
use sigsurv::rng;
use sigsurv::signature::FeatureMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridSearchError {
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("need at least {folds} events for {folds}-fold validation, got {events}")]
    TooFewEvents { events: usize, folds: usize },
    #[error("every lambda failed on every fold; first error: {0}")]
    AllFitsFailed(String),
    #[error("feature/outcome lengths disagree: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_cindex: f64,
    pub sd_cindex: f64,
    /// Held-out C-index per fold; `None` when the fit or metric failed.
    pub fold_cindex: Vec<Option<f64>>,
    pub n_ok: usize,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    pub table: Vec<CvRow>,
}

/// Deterministic event-stratified fold labels (round-robin within each
/// stratum after a seeded shuffle).
pub fn stratified_fold_labels(events: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = rng::substream(seed, "cv");
    let mut labels = vec![0usize; events.len()];
    let mut next = 0usize;
    for stratum in [true, false] {
        let mut idx: Vec<usize> = (0..events.len())
            .filter(|&i| events[i] == stratum)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            labels[i] = next % folds;
            next += 1;
        }
    }
    labels
}

pub fn grid_search_lambda(
    features: &FeatureMatrix,
    durations: &[f64],
    events: &[bool],
    grid: &[f64],
    cv_folds: usize,
    seed: u64,
    base: &CoxFitConfig,
) -> Result<GridSearchResult, GridSearchError> {
    if grid.is_empty() {
        return Err(GridSearchError::EmptyGrid);
    }
    let n = features.n_rows();
    if durations.len() != n || events.len() != n {
        return Err(GridSearchError::LengthMismatch(n, durations.len()));
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < cv_folds {
        return Err(GridSearchError::TooFewEvents {
            events: n_events,
            folds: cv_folds,
        });
    }

    let labels = stratified_fold_labels(events, cv_folds, seed);

    // Materialize per-fold training/validation views once.
    struct Fold {
        x_train: Array2<f64>,
        t_train: Vec<f64>,
        e_train: Vec<bool>,
        x_val: Array2<f64>,
        t_val: Vec<f64>,
        e_val: Vec<bool>,
    }
    let folds: Vec<Fold> = (0..cv_folds)
        .map(|f| {
            let train_idx: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let val_idx: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            let take = |idx: &[usize]| {
                let mut x = Array2::<f64>::zeros((idx.len(), features.n_columns()));
                for (r, &i) in idx.iter().enumerate() {
                    x.row_mut(r).assign(&features.values.row(i));
                }
                let t: Vec<f64> = idx.iter().map(|&i| durations[i]).collect();
                let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
                (x, t, e)
            };
            let (x_train, t_train, e_train) = take(&train_idx);
            let (x_val, t_val, e_val) = take(&val_idx);
            Fold {
                x_train,
                t_train,
                e_train,
                x_val,
                t_val,
                e_val,
            }
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..cv_folds).map(move |f| (g, f)))
        .collect();
    let outcomes: Vec<((usize, usize), Result<f64, String>)> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let fold = &folds[f];
            let cfg = CoxFitConfig {
                lambda: grid[g],
                ..base.clone()
            };
            let res = fit_cox_lasso(
                fold.x_train.view(),
                &fold.t_train,
                &fold.e_train,
                Vec::new(),
                &cfg,
            )
            .map_err(|e| e.to_string())
            .and_then(|(model, _)| {
                let eta: Vec<f64> = (0..fold.x_val.nrows())
                    .map(|i| {
                        model
                            .risk_score(fold.x_val.row(i).as_slice().unwrap())
                            .expect("aligned widths")
                    })
                    .collect();
                concordance_index(&fold.t_val, &fold.e_val, &eta).map_err(|e| e.to_string())
            });
            ((g, f), res)
        })
        .collect();

    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; cv_folds]; grid.len()];
    let mut first_error: Option<String> = None;
    for ((g, f), res) in outcomes {
        match res {
            Ok(c) => cells[g][f] = Some(c),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(format!("lambda={}: {e}", grid[g]));
                }
                log::warn!("cv fit failed at lambda={} fold {f}: {e}", grid[g]);
            }
        }
    }

    let mut table = Vec::with_capacity(grid.len());
    for (g, &lambda) in grid.iter().enumerate() {
        let ok: Vec<f64> = cells[g].iter().flatten().copied().collect();
        let n_ok = ok.len();
        let (mean, sd) = if n_ok > 0 {
            let m = ok.iter().sum::<f64>() / n_ok as f64;
            let var = ok.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_ok as f64;
            (m, var.sqrt())
        } else {
            (f64::NAN, f64::NAN)
        };
        table.push(CvRow {
            lambda,
            mean_cindex: mean,
            sd_cindex: sd,
            fold_cindex: cells[g].clone(),
            n_ok,
        });
    }

    // argmax over fully-failed-free lambdas; ties toward the larger lambda
    let mut best: Option<(f64, f64)> = None;
    for row in &table {
        if row.n_ok == 0 {
            continue;
        }
        match best {
            None => best = Some((row.lambda, row.mean_cindex)),
            Some((_, best_c)) if row.mean_cindex >= best_c => {
                best = Some((row.lambda, row.mean_cindex));
            }
            _ => {}
        }
    }
    match best {
        Some((lambda, _)) => Ok(GridSearchResult {
            best_lambda: lambda,
            table,
        }),
        None => Err(GridSearchError::AllFitsFailed(
            first_error.unwrap_or_else(|| "no diagnostics".into()),
        )),
    }
}
