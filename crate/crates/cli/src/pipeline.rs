//! End-to-end runs: ingest -> (embed) -> mask -> split -> compress ->
//! featurize -> select lambda -> fit -> evaluate, with artifacts and a
//! manifest written to the output directory.
//!
//! Stage isolation: every stage consumes and produces declared artifact
//! files, recorded in `manifest.json`; test-fold data never reaches the
//! PCA fit, the lambda search or the final model fit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use sigsurv::compression::fit_pca;
use sigsurv::cox::{breslow_baseline, fit_features, CoxFitConfig, CoxModel};
use sigsurv::embedding::embed_cohort;
use sigsurv::ingest::{
    load_cohort, load_freq_table, load_word_table, mask_tail, split_cohort, write_atomic,
    write_cohort, Cohort, InputMode,
};
use sigsurv::metrics::{
    cindex_vs_report_count, evaluate, summarize_folds, EvalOptions, EvaluationReport,
};
use sigsurv::signature::{signature_features, FeatureMatrix};
use sigsurv::synthetic::generate_cohort;

use crate::config::RunConfig;
use crate::gridsearch::{grid_search_lambda, stratified_fold_labels, CvRow};
use crate::manifest::Manifest;
use crate::report;

/// Which covariates feed the Cox stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Truncated path-signature coefficients (the full pipeline).
    Signature,
    /// The last retained report's compressed embedding.
    LastReport,
    /// The per-patient mean of compressed embeddings.
    MeanEmbedding,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Signature => "signature",
            FeatureKind::LastReport => "last_report",
            FeatureKind::MeanEmbedding => "mean_embedding",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub feature_kind: String,
    pub n_patients_loaded: usize,
    pub excluded_by_masking: usize,
    pub reports_dropped_by_masking: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub best_lambda: f64,
    pub n_nonzero: usize,
    pub folds: Vec<EvaluationReport>,
    /// metric -> (mean, sd) across test folds.
    pub summary: BTreeMap<String, (f64, f64)>,
    pub combined: EvaluationReport,
    /// (k, C-index) curve on the combined test set; empty for baselines.
    pub cindex_vs_reports: Vec<(usize, f64)>,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub model: CoxModel,
    pub out_dir: PathBuf,
}

/// Write the synthetic cohort (ingest formats) plus its ground truth.
pub fn run_simulate(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("stage simulate: creating {}", out_dir.display()))?;
    let sim = cfg.resolved_sim();
    let generated = generate_cohort(&sim).context("stage simulate")?;
    let emb = out_dir.join("embeddings.txt");
    let out = out_dir.join("outcomes.txt");
    write_cohort(&generated.cohort, &emb, &out).context("stage simulate: writing cohort")?;
    let mut truth = String::from("patient_id,true_log_hazard\n");
    for (p, eta) in generated
        .cohort
        .patients
        .iter()
        .zip(&generated.true_log_hazard)
    {
        let _ = writeln!(truth, "{},{}", p.outcome.patient_id, eta);
    }
    write_atomic(&out_dir.join("ground_truth.csv"), truth.as_bytes())
        .context("stage simulate: writing ground truth")?;
    Ok((emb, out))
}

fn featurize(kind: FeatureKind, cohort: &Cohort, cfg: &RunConfig) -> anyhow::Result<FeatureMatrix> {
    match kind {
        FeatureKind::Signature => {
            Ok(signature_features(cohort, &cfg.signature).context("signature extraction")?)
        }
        FeatureKind::LastReport | FeatureKind::MeanEmbedding => {
            let p = cohort.embedding_dim;
            let prefix = if kind == FeatureKind::LastReport {
                "E"
            } else {
                "M"
            };
            let mut values = Array2::<f64>::zeros((cohort.n_patients(), p));
            for (i, patient) in cohort.patients.iter().enumerate() {
                match kind {
                    FeatureKind::LastReport => {
                        let last = patient
                            .reports
                            .last()
                            .expect("cohort patients carry reports")
                            .embedding()
                            .expect("vector mode");
                        for (j, &v) in last.iter().enumerate() {
                            values[(i, j)] = v;
                        }
                    }
                    FeatureKind::MeanEmbedding => {
                        let n = patient.reports.len() as f64;
                        for r in &patient.reports {
                            for (j, &v) in r.embedding().expect("vector mode").iter().enumerate() {
                                values[(i, j)] += v / n;
                            }
                        }
                    }
                    FeatureKind::Signature => unreachable!(),
                }
            }
            Ok(FeatureMatrix {
                patient_ids: cohort.patient_ids(),
                columns: (0..p).map(|j| format!("{prefix}_{j}")).collect(),
                values,
            })
        }
    }
}

/// Divide each projected channel by the training-set standard deviation
/// implied by the fitted spectrum.
fn scale_channels(cohort: &mut Cohort, scales: &[f64]) {
    for p in &mut cohort.patients {
        for r in &mut p.reports {
            if let sigsurv::ingest::ReportPayload::Embedding(v) = &mut r.payload {
                for (x, &s) in v.iter_mut().zip(scales) {
                    *x /= s;
                }
            }
        }
    }
}

fn cox_config(cfg: &RunConfig, lambda: f64) -> CoxFitConfig {
    CoxFitConfig {
        lambda,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        standardize: cfg.standardize,
        kkt_tol: cfg.kkt_tol,
    }
}

/// Lambda selection with PCA refit inside each CV fold (optional slow path).
fn grid_search_with_fold_pca(
    train: &Cohort,
    kind: FeatureKind,
    cfg: &RunConfig,
) -> anyhow::Result<(f64, Vec<CvRow>)> {
    use rayon::prelude::*;
    let grid = cfg.lambda_grid.values();
    let events = train.events();
    let labels = stratified_fold_labels(&events, cfg.cv_folds, cfg.seed);

    struct FoldData {
        features_train: FeatureMatrix,
        t_train: Vec<f64>,
        e_train: Vec<bool>,
        features_val: FeatureMatrix,
        t_val: Vec<f64>,
        e_val: Vec<bool>,
    }
    let mut folds = Vec::with_capacity(cfg.cv_folds);
    for f in 0..cfg.cv_folds {
        let keep = |want_val: bool| -> Cohort {
            Cohort {
                patients: train
                    .patients
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (labels[*i] == f) == want_val)
                    .map(|(_, p)| p.clone())
                    .collect(),
                embedding_dim: train.embedding_dim,
                mode: train.mode,
            }
        };
        let fold_train = keep(false);
        let fold_val = keep(true);
        let map = fit_pca(&fold_train.all_embeddings(), cfg.p_bar).context("per-fold PCA refit")?;
        let mut proj_train = map.project_cohort(&fold_train)?;
        let mut proj_val = map.project_cohort(&fold_val)?;
        if cfg.scale_projected {
            let scales: Vec<f64> = map
                .explained_variance
                .iter()
                .map(|&v| v.sqrt().max(1e-12))
                .collect();
            scale_channels(&mut proj_train, &scales);
            scale_channels(&mut proj_val, &scales);
        }
        folds.push(FoldData {
            features_train: featurize(kind, &proj_train, cfg)?,
            t_train: fold_train.durations(),
            e_train: fold_train.events(),
            features_val: featurize(kind, &proj_val, cfg)?,
            t_val: fold_val.durations(),
            e_val: fold_val.events(),
        });
    }

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..cfg.cv_folds).map(move |f| (g, f)))
        .collect();
    let outcomes: Vec<((usize, usize), Option<f64>)> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let fold = &folds[f];
            let res = fit_features(
                &fold.features_train,
                &fold.t_train,
                &fold.e_train,
                &cox_config(cfg, grid[g]),
            )
            .ok()
            .and_then(|(model, _)| {
                let eta = model.risk_scores(&fold.features_val).ok()?;
                sigsurv::metrics::concordance_index(&fold.t_val, &fold.e_val, &eta).ok()
            });
            ((g, f), res)
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; cfg.cv_folds]; grid.len()];
    for ((g, f), res) in outcomes {
        cells[g][f] = res;
    }
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
    let best = table
        .iter()
        .filter(|r| r.n_ok > 0)
        .fold(None::<(f64, f64)>, |acc, r| match acc {
            Some((_, c)) if r.mean_cindex < c => acc,
            _ => Some((r.lambda, r.mean_cindex)),
        });
    let (best_lambda, _) =
        best.ok_or_else(|| anyhow::anyhow!("every lambda failed on every fold"))?;
    Ok((best_lambda, table))
}

/// The full run. `kind` selects signature features or one of the naive
/// baselines (identical stack otherwise).
pub fn run_pipeline(cfg: &RunConfig, kind: FeatureKind) -> anyhow::Result<PipelineOutput> {
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    let mut manifest = Manifest::new(cfg.seed, &cfg.canonical_text());

    // ingest
    let mut cohort =
        load_cohort(&cfg.embeddings, &cfg.outcomes, cfg.mode).context("stage ingest")?;
    let n_loaded = cohort.n_patients();
    manifest
        .stage("ingest")
        .input("embeddings", &cfg.embeddings)?
        .input("outcomes", &cfg.outcomes)?;

    // embed (token inputs only)
    if cfg.mode == InputMode::Token {
        let table_path = cfg
            .word_table
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("stage embed: token mode needs word_table"))?;
        let freq_path = cfg
            .word_freqs
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("stage embed: token mode needs word_freqs"))?;
        let table = load_word_table(table_path).context("stage embed")?;
        let freqs = load_freq_table(freq_path).context("stage embed")?;
        cohort = embed_cohort(&cohort, &table, &freqs, &cfg.sif).context("stage embed")?;
        manifest
            .stage("embed")
            .input("word_table", table_path)?
            .input("word_freqs", freq_path)?;
    }

    // mask
    let masked = mask_tail(&cohort, cfg.mask_horizon_days);
    let cohort = masked.cohort;
    if cohort.n_patients() == 0 {
        anyhow::bail!("stage mask: no patients left after masking");
    }

    // split
    let (train, folds) = split_cohort(&cohort, cfg.test_fraction, cfg.test_folds, cfg.seed)
        .context("stage split")?;
    let splits_path = out_dir.join("splits.csv");
    {
        let mut s = String::from("patient_id,role,fold\n");
        for p in &train.patients {
            let _ = writeln!(s, "{},train,-1", p.outcome.patient_id);
        }
        for (f, fold) in folds.iter().enumerate() {
            for p in &fold.patients {
                let _ = writeln!(s, "{},test,{f}", p.outcome.patient_id);
            }
        }
        write_atomic(&splits_path, s.as_bytes()).context("stage split: writing splits")?;
    }
    manifest.stage("split").output("splits", &splits_path)?;

    // combined test cohort in canonical order
    let mut test_patients: Vec<sigsurv::ingest::Patient> = folds
        .iter()
        .flat_map(|f| f.patients.iter().cloned())
        .collect();
    test_patients.sort_by(|a, b| a.outcome.patient_id.cmp(&b.outcome.patient_id));
    let test_combined = Cohort {
        patients: test_patients,
        embedding_dim: cohort.embedding_dim,
        mode: cohort.mode,
    };

    // compress: PCA fitted on training reports only
    let map = fit_pca(&train.all_embeddings(), cfg.p_bar).context("stage compress")?;
    let map_path = out_dir.join("compression_map.txt");
    map.save(&map_path).context("stage compress: writing map")?;
    manifest
        .stage("compress")
        .input("embeddings", &cfg.embeddings)?
        .input("splits", &splits_path)?
        .output("compression_map", &map_path)?;

    let channel_scales: Option<Vec<f64>> = cfg.scale_projected.then(|| {
        map.explained_variance
            .iter()
            .map(|&v| v.sqrt().max(1e-12))
            .collect()
    });
    let project = |c: &Cohort| -> anyhow::Result<Cohort> {
        let mut projected = map
            .project_cohort(c)
            .context("stage compress: projection")?;
        if let Some(scales) = &channel_scales {
            scale_channels(&mut projected, scales);
        }
        Ok(projected)
    };
    let train_proj = project(&train)?;
    let test_proj = project(&test_combined)?;

    // featurize
    let features_train = featurize(kind, &train_proj, cfg).context("stage featurize")?;
    let features_test = featurize(kind, &test_proj, cfg).context("stage featurize")?;
    let ft_path = out_dir.join("features_train.csv");
    let fe_path = out_dir.join("features_test.csv");
    features_train.save(&ft_path).context("stage featurize")?;
    features_test.save(&fe_path).context("stage featurize")?;
    manifest
        .stage("featurize")
        .input("compression_map", &map_path)?
        .input("splits", &splits_path)?
        .output("features_train", &ft_path)?
        .output("features_test", &fe_path)?;

    // select lambda on the training split only
    let t_train = train.durations();
    let e_train = train.events();
    let (best_lambda, cv_table) = if cfg.pca_per_fold {
        grid_search_with_fold_pca(&train, kind, cfg).context("stage select")?
    } else {
        let res = grid_search_lambda(
            &features_train,
            &t_train,
            &e_train,
            &cfg.lambda_grid.values(),
            cfg.cv_folds,
            cfg.seed,
            &cox_config(cfg, 0.0),
        )
        .context("stage select")?;
        (res.best_lambda, res.table)
    };
    let cv_path = out_dir.join("cv_table.csv");
    report::write_cv_table(&cv_table, &cv_path).context("stage select")?;
    manifest
        .stage("select")
        .input("features_train", &ft_path)?
        .output("cv_table", &cv_path)?;

    // final fit + Breslow baseline on the full training split
    let (mut model, diag) = fit_features(
        &features_train,
        &t_train,
        &e_train,
        &cox_config(cfg, best_lambda),
    )
    .context("stage fit")?;
    model.baseline = breslow_baseline(&model, features_train.values.view(), &t_train, &e_train)
        .context("stage fit: baseline")?;
    let model_path = out_dir.join("model.txt");
    model
        .save(&model_path)
        .context("stage fit: writing model")?;
    manifest
        .stage("fit")
        .input("features_train", &ft_path)?
        .input("cv_table", &cv_path)?
        .output("model", &model_path)?;

    // evaluate per test fold and on the combined test set
    let eval_opts = EvalOptions {
        tau: (cfg.tau1_days, cfg.tau2_days),
        ibs_horizons: cfg.ibs_horizons_days.clone(),
        td_auc_ipcw: cfg.td_auc_ipcw,
        mean_auc_censoring_km: cfg.mean_auc_censoring_km,
        alpha: 0.05,
    };
    let eta_test = model
        .risk_scores(&features_test)
        .context("stage evaluate")?;
    let row_of: HashMap<&str, usize> = features_test
        .patient_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut fold_reports = Vec::with_capacity(folds.len());
    for fold in &folds {
        let idx: Vec<usize> = fold
            .patients
            .iter()
            .map(|p| row_of[p.outcome.patient_id.as_str()])
            .collect();
        let t: Vec<f64> = idx
            .iter()
            .map(|&i| test_combined.patients[i].outcome.duration)
            .collect();
        let d: Vec<bool> = idx
            .iter()
            .map(|&i| test_combined.patients[i].outcome.event)
            .collect();
        let eta: Vec<f64> = idx.iter().map(|&i| eta_test[i]).collect();
        let surv = |i: usize, s: f64| model.survival_from_eta(eta[i], s);
        fold_reports.push(evaluate(&t, &d, &eta, surv, &eval_opts).context("stage evaluate")?);
    }
    let t_test = test_combined.durations();
    let e_test = test_combined.events();
    let surv_combined = |i: usize, s: f64| model.survival_from_eta(eta_test[i], s);
    let combined = evaluate(&t_test, &e_test, &eta_test, surv_combined, &eval_opts)
        .context("stage evaluate")?;
    let summary = summarize_folds(&fold_reports);

    // report-count curve (signature pipeline only)
    let cindex_vs_reports = if kind == FeatureKind::Signature {
        let ks: Vec<usize> = {
            let max_reports = test_proj
                .patients
                .iter()
                .map(|p| p.reports.len())
                .max()
                .unwrap_or(1);
            let mut ks: Vec<usize> = cfg
                .report_count_ks
                .iter()
                .copied()
                .filter(|&k| k < max_reports)
                .collect();
            ks.push(max_reports);
            ks
        };
        cindex_vs_report_count(&test_proj, &ks, |truncated| {
            let features = featurize(kind, truncated, cfg).map_err(|e| e.to_string())?;
            model.risk_scores(&features).map_err(|e| e.to_string())
        })
        .context("stage evaluate: report-count curve")?
    } else {
        Vec::new()
    };

    let pipeline_report = PipelineReport {
        feature_kind: kind.as_str().to_string(),
        n_patients_loaded: n_loaded,
        excluded_by_masking: masked.excluded_patients,
        reports_dropped_by_masking: masked.dropped_reports,
        n_train: train.n_patients(),
        n_test: test_combined.n_patients(),
        n_features: features_train.n_columns(),
        best_lambda,
        n_nonzero: diag.n_nonzero,
        folds: fold_reports,
        summary,
        combined,
        cindex_vs_reports,
    };

    let report_json = out_dir.join("report.json");
    let report_txt = out_dir.join("report.txt");
    report::write_report_files(&pipeline_report, &report_json, &report_txt)
        .context("stage evaluate: writing report")?;
    report::write_curves(&pipeline_report, &out_dir).context("stage evaluate: writing curves")?;
    let mut eval_stage = manifest
        .stage("evaluate")
        .input("model", &model_path)?
        .input("features_test", &fe_path)?
        .output("report_json", &report_json)?
        .output("report_txt", &report_txt)?
        .output("td_auc_curve", &out_dir.join("td_auc.csv"))?
        .output("brier_curve", &out_dir.join("brier.csv"))?
        .output("quartiles", &out_dir.join("quartiles.csv"))?
        .output("folds", &out_dir.join("folds.csv"))?;
    if kind == FeatureKind::Signature {
        eval_stage = eval_stage.output(
            "cindex_vs_reports_curve",
            &out_dir.join("cindex_vs_reports.csv"),
        )?;
    }
    let _ = eval_stage;

    manifest
        .save(&out_dir.join("manifest.json"))
        .context("stage manifest")?;

    Ok(PipelineOutput {
        report: pipeline_report,
        model,
        out_dir,
    })
}

/// The last-report baseline: identical stack, features are the last
/// retained report's compressed embedding.
pub fn baseline_last_report(cfg: &RunConfig) -> anyhow::Result<PipelineOutput> {
    run_pipeline(cfg, FeatureKind::LastReport)
}

/// The mean-embedding baseline: identical stack, features are per-patient
/// means of compressed embeddings.
pub fn baseline_mean_embedding(cfg: &RunConfig) -> anyhow::Result<PipelineOutput> {
    run_pipeline(cfg, FeatureKind::MeanEmbedding)
}
