use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use sigsurv::compression::fit_pca;
use sigsurv::cox::{breslow_baseline, fit_features, CoxModel};
use sigsurv::embedding::embed_cohort;
use sigsurv::ingest::{
    load_cohort, load_freq_table, load_outcomes, load_word_table, mask_tail, write_atomic,
    write_cohort, InputMode,
};
use sigsurv::signature::{signature_features, FeatureMatrix, SignatureConfig, TimeScale};

use sigsurv_cli::config::{GridSpec, RunConfig};
use sigsurv_cli::gridsearch::grid_search_lambda;
use sigsurv_cli::pipeline::{run_pipeline, run_simulate, FeatureKind};
use sigsurv_cli::report;

/// Survival pipeline over longitudinal report embeddings: path-signature
/// features + LASSO-Cox, with a synthetic cohort generator and a
/// censoring-aware evaluation suite.
#[derive(Parser)]
#[command(name = "sigsurv", version)]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Last,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vector,
    Token,
}

impl From<ModeArg> for InputMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vector => InputMode::Vector,
            ModeArg::Token => InputMode::Token,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known ground truth.
    Simulate,
    /// Load, validate, deduplicate and tail-mask a cohort; write it back.
    Ingest {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long, value_enum, default_value = "vector")]
        mode: ModeArg,
        #[arg(long, default_value_t = 100.0)]
        mask_horizon: f64,
    },
    /// Collapse token-mode reports into sentence embeddings.
    Embed {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        word_table: PathBuf,
        #[arg(long)]
        word_freqs: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        smoothing: f64,
        #[arg(long)]
        unique_tokens: bool,
        #[arg(long)]
        remove_first_pc: bool,
        #[arg(long)]
        fail_on_oov: bool,
    },
    /// Fit a PCA map on the given embeddings and project them.
    Compress {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long, default_value_t = 25)]
        p_bar: usize,
    },
    /// Extract truncated path-signature features.
    Signify {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long, default_value_t = 3)]
        level: usize,
        #[arg(long, default_value = "unit_interval")]
        time_scale: String,
        #[arg(long)]
        drop_time_words: bool,
    },
    /// Fit the LASSO-Cox model on a feature matrix.
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        /// Fixed penalty; omit to grid-search with cross-validation.
        #[arg(long)]
        lambda: Option<f64>,
        /// Grid spec `log:a:b:n`, `linear:a:b:step` or `fixed:v`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 5)]
        cv_folds: usize,
        /// Use the exhaustive linear grid (0.001..10 step 0.001).
        #[arg(long)]
        paper_grid: bool,
    },
    /// Risk scores (and optional survival probabilities) from a model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Horizons (days) at which to emit survival probabilities.
        #[arg(long, value_delimiter = ',')]
        at: Vec<f64>,
    },
    /// Censoring-aware evaluation of a fitted model on a cohort.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tau1: f64,
        #[arg(long, default_value_t = 3650.0)]
        tau2: f64,
    },
    /// The end-to-end pipeline: ingest/mask/split/compress/signify/fit/evaluate.
    Run,
    /// Same stack with naive features (last report or mean embedding).
    Baseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg);
    match &cli.cmd {
        Command::Simulate => {
            let (emb, out) = run_simulate(&cfg, &dir)?;
            println!("simulate: wrote {} and {}", emb.display(), out.display());
        }
        Command::Ingest {
            embeddings,
            outcomes,
            mode,
            mask_horizon,
        } => {
            let cohort =
                load_cohort(embeddings, outcomes, (*mode).into()).context("stage ingest")?;
            let n_loaded = cohort.n_patients();
            let masked = mask_tail(&cohort, *mask_horizon);
            std::fs::create_dir_all(&dir)?;
            write_cohort(
                &masked.cohort,
                &dir.join("embeddings.txt"),
                &dir.join("outcomes.txt"),
            )
            .context("stage ingest: writing masked cohort")?;
            let mut summary = String::new();
            let _ = writeln!(summary, "patients_loaded = {n_loaded}");
            let _ = writeln!(summary, "patients_kept = {}", masked.cohort.n_patients());
            let _ = writeln!(summary, "patients_excluded = {}", masked.excluded_patients);
            let _ = writeln!(summary, "reports_dropped = {}", masked.dropped_reports);
            write_atomic(&dir.join("ingest_summary.txt"), summary.as_bytes())?;
            println!(
                "ingest: kept {} of {} patients ({} excluded by masking)",
                masked.cohort.n_patients(),
                n_loaded,
                masked.excluded_patients
            );
        }
        Command::Embed {
            embeddings,
            outcomes,
            word_table,
            word_freqs,
            smoothing,
            unique_tokens,
            remove_first_pc,
            fail_on_oov,
        } => {
            let cohort =
                load_cohort(embeddings, outcomes, InputMode::Token).context("stage embed")?;
            let table = load_word_table(word_table).context("stage embed")?;
            let freqs = load_freq_table(word_freqs).context("stage embed")?;
            let sif = sigsurv::embedding::SifConfig {
                smoothing: *smoothing,
                unique_tokens: *unique_tokens,
                remove_first_pc: *remove_first_pc,
                oov: if *fail_on_oov {
                    sigsurv::embedding::OovPolicy::Fail
                } else {
                    sigsurv::embedding::OovPolicy::SkipWithWarning
                },
            };
            let embedded = embed_cohort(&cohort, &table, &freqs, &sif).context("stage embed")?;
            std::fs::create_dir_all(&dir)?;
            write_cohort(
                &embedded,
                &dir.join("embeddings.txt"),
                &dir.join("outcomes.txt"),
            )?;
            println!(
                "embed: {} reports embedded into dimension {}",
                embedded.n_reports(),
                embedded.embedding_dim
            );
        }
        Command::Compress {
            embeddings,
            outcomes,
            p_bar,
        } => {
            let cohort =
                load_cohort(embeddings, outcomes, InputMode::Vector).context("stage compress")?;
            let map = fit_pca(&cohort.all_embeddings(), *p_bar).context("stage compress")?;
            let projected = map.project_cohort(&cohort).context("stage compress")?;
            std::fs::create_dir_all(&dir)?;
            map.save(&dir.join("compression_map.txt"))
                .context("stage compress")?;
            write_cohort(
                &projected,
                &dir.join("embeddings.txt"),
                &dir.join("outcomes.txt"),
            )?;
            let captured: f64 = map.explained_variance.iter().sum();
            println!(
                "compress: p {} -> {} (captured variance {captured:.4})",
                map.p, map.p_bar
            );
        }
        Command::Signify {
            embeddings,
            outcomes,
            level,
            time_scale,
            drop_time_words,
        } => {
            let cohort =
                load_cohort(embeddings, outcomes, InputMode::Vector).context("stage signify")?;
            let sig_cfg = SignatureConfig {
                level: *level,
                time_scale: time_scale
                    .parse::<TimeScale>()
                    .map_err(|e| anyhow::anyhow!("stage signify: {e}"))?,
                drop_time_words: *drop_time_words,
            };
            let features = signature_features(&cohort, &sig_cfg).context("stage signify")?;
            std::fs::create_dir_all(&dir)?;
            features
                .save(&dir.join("features.csv"))
                .context("stage signify")?;
            println!(
                "signify: {} patients x {} signature covariates",
                features.n_rows(),
                features.n_columns()
            );
        }
        Command::Fit {
            features,
            outcomes,
            lambda,
            grid,
            cv_folds,
            paper_grid,
        } => {
            let fm = FeatureMatrix::load(features).context("stage fit")?;
            let outcome_map = load_outcomes(outcomes).context("stage fit")?;
            let (t, e) = align_outcomes(&fm, &outcome_map)?;
            std::fs::create_dir_all(&dir)?;
            let chosen = match (lambda, grid, paper_grid) {
                (Some(l), _, _) => *l,
                (None, grid, paper) => {
                    let spec = if *paper {
                        GridSpec::exhaustive()
                    } else {
                        match grid {
                            Some(g) => parse_grid(g)?,
                            None => GridSpec::default_desk_scale(),
                        }
                    };
                    let res = grid_search_lambda(
                        &fm,
                        &t,
                        &e,
                        &spec.values(),
                        *cv_folds,
                        cfg.seed,
                        &base_cox(&cfg),
                    )
                    .context("stage fit: grid search")?;
                    report::write_cv_table(&res.table, &dir.join("cv_table.csv"))?;
                    println!("fit: selected lambda {}", res.best_lambda);
                    res.best_lambda
                }
            };
            let mut cox_cfg = base_cox(&cfg);
            cox_cfg.lambda = chosen;
            let (mut model, diag) = fit_features(&fm, &t, &e, &cox_cfg).context("stage fit")?;
            model.baseline =
                breslow_baseline(&model, fm.values.view(), &t, &e).context("stage fit")?;
            model.save(&dir.join("model.txt")).context("stage fit")?;
            println!(
                "fit: lambda {} -> {} nonzero of {} features (KKT {:.2e})",
                chosen,
                diag.n_nonzero,
                fm.n_columns(),
                diag.kkt_residual
            );
        }
        Command::Predict {
            model,
            features,
            at,
        } => {
            let model = CoxModel::load(model).context("stage predict")?;
            let fm = FeatureMatrix::load(features).context("stage predict")?;
            let eta = model.risk_scores(&fm).context("stage predict")?;
            std::fs::create_dir_all(&dir)?;
            let mut s = String::from("patient_id,risk_score");
            for h in at {
                let _ = write!(s, ",surv_{h}d");
            }
            s.push('\n');
            for (i, id) in fm.patient_ids.iter().enumerate() {
                let _ = write!(s, "{id},{}", eta[i]);
                for h in at {
                    let _ = write!(s, ",{}", model.survival_from_eta(eta[i], *h));
                }
                s.push('\n');
            }
            write_atomic(&dir.join("predictions.csv"), s.as_bytes())?;
            println!("predict: wrote {} scores", eta.len());
        }
        Command::Evaluate {
            model,
            features,
            outcomes,
            tau1,
            tau2,
        } => {
            let model = CoxModel::load(model).context("stage evaluate")?;
            let fm = FeatureMatrix::load(features).context("stage evaluate")?;
            let outcome_map = load_outcomes(outcomes).context("stage evaluate")?;
            let (t, e) = align_outcomes(&fm, &outcome_map)?;
            let eta = model.risk_scores(&fm).context("stage evaluate")?;
            let opts = sigsurv::metrics::EvalOptions {
                tau: (*tau1, *tau2),
                ibs_horizons: cfg.ibs_horizons_days.clone(),
                td_auc_ipcw: cfg.td_auc_ipcw,
                mean_auc_censoring_km: cfg.mean_auc_censoring_km,
                alpha: 0.05,
            };
            let surv = |i: usize, s: f64| model.survival_from_eta(eta[i], s);
            let report =
                sigsurv::metrics::evaluate(&t, &e, &eta, surv, &opts).context("stage evaluate")?;
            std::fs::create_dir_all(&dir)?;
            write_atomic(
                &dir.join("evaluation.json"),
                serde_json::to_string_pretty(&report)?.as_bytes(),
            )?;
            println!(
                "evaluate: C-index {:.4} (CI95 [{:.4}, {:.4}]), mean td-AUC {:.4}",
                report.c_index, report.c_index_ci95.0, report.c_index_ci95.1, report.mean_auc
            );
        }
        Command::Run => {
            let mut cfg = cfg.clone();
            cfg.out_dir = dir;
            let output = run_pipeline(&cfg, FeatureKind::Signature)?;
            print!("{}", report::render_text(&output.report));
        }
        Command::Baseline { kind } => {
            let mut cfg = cfg.clone();
            let sub = match kind {
                BaselineKind::Last => "baseline_last",
                BaselineKind::Mean => "baseline_mean",
            };
            cfg.out_dir = dir.join(sub);
            let feature_kind = match kind {
                BaselineKind::Last => FeatureKind::LastReport,
                BaselineKind::Mean => FeatureKind::MeanEmbedding,
            };
            let output = run_pipeline(&cfg, feature_kind)?;
            print!("{}", report::render_text(&output.report));
        }
    }
    Ok(())
}

fn base_cox(cfg: &RunConfig) -> sigsurv::cox::CoxFitConfig {
    sigsurv::cox::CoxFitConfig {
        lambda: 0.0,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        standardize: cfg.standardize,
        kkt_tol: cfg.kkt_tol,
    }
}

fn parse_grid(s: &str) -> anyhow::Result<GridSpec> {
    RunConfig::from_text(&format!("lambda_grid = {s}\n"), "--grid")
        .map(|c| c.lambda_grid)
        .map_err(|e| anyhow::anyhow!("{e}"))
}

fn align_outcomes(
    fm: &FeatureMatrix,
    outcomes: &std::collections::BTreeMap<String, sigsurv::ingest::SurvivalOutcome>,
) -> anyhow::Result<(Vec<f64>, Vec<bool>)> {
    let mut t = Vec::with_capacity(fm.n_rows());
    let mut e = Vec::with_capacity(fm.n_rows());
    for id in &fm.patient_ids {
        let o = outcomes
            .get(id)
            .ok_or_else(|| anyhow::anyhow!("patient `{id}` has features but no outcome"))?;
        t.push(o.duration);
        e.push(o.event);
    }
    Ok((t, e))
}
