//! Pipeline-level behavior: lineage isolation, the per-fold PCA option,
//! and how the signature stack compares to the naive baselines when the
//! survival signal is static versus trajectory-borne.

use sigsurv_cli::config::{GridSpec, RunConfig};
use sigsurv_cli::manifest::Manifest;
use sigsurv_cli::pipeline::{run_pipeline, run_simulate, FeatureKind};

fn small_config(data_dir: &std::path::Path, trend: f64, n: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.embeddings = data_dir.join("embeddings.txt");
    cfg.outcomes = data_dir.join("outcomes.txt");
    cfg.seed = 7;
    cfg.p_bar = 8;
    cfg.signature.level = 2;
    cfg.lambda_grid = GridSpec::Log {
        start: 0.2,
        stop: 30.0,
        points: 8,
    };
    cfg.cv_folds = 3;
    cfg.test_fraction = 0.5;
    cfg.test_folds = 5;
    cfg.report_count_ks = vec![2, 4];
    cfg.sim.n_patients = n;
    cfg.sim.p = 30;
    cfg.sim.latent_dim = 4;
    cfg.sim.trend_strength = trend;
    cfg.sim.reports_per_patient = (4, 12);
    cfg.sim.censoring_rate = 0.2;
    cfg.sim.risk_scale = 1.6;
    cfg.sim.noise_sd = 0.25;
    cfg.sim.baseline_hazard_rate = 0.0006;
    cfg
}

/// With no trajectory-borne signal the signature features cannot beat the
/// static baselines (signatures are translation invariant, so the static
/// level is invisible to them): the baselines must match or exceed the
/// pipeline. With a strong trend the ordering flips decisively.
#[test]
fn baselines_win_at_zero_trend_and_lose_at_high_trend() {
    let tmp = tempfile::tempdir().unwrap();

    // static-only signal
    let data0 = tmp.path().join("trend0/data");
    let mut cfg0 = small_config(&data0, 0.0, 1200);
    run_simulate(&cfg0, &data0).unwrap();
    cfg0.out_dir = tmp.path().join("trend0/sig");
    let sig0 = run_pipeline(&cfg0, FeatureKind::Signature).unwrap().report;
    let mut c = cfg0.clone();
    c.out_dir = tmp.path().join("trend0/last");
    let last0 = run_pipeline(&c, FeatureKind::LastReport).unwrap().report;
    let mut c = cfg0.clone();
    c.out_dir = tmp.path().join("trend0/mean");
    let mean0 = run_pipeline(&c, FeatureKind::MeanEmbedding).unwrap().report;
    assert!(
        last0.combined.c_index >= sig0.combined.c_index - 0.02,
        "last-report baseline ({}) fell behind the pipeline ({}) with no temporal signal",
        last0.combined.c_index,
        sig0.combined.c_index
    );
    assert!(
        mean0.combined.c_index >= sig0.combined.c_index - 0.02,
        "mean-embedding baseline ({}) fell behind the pipeline ({}) with no temporal signal",
        mean0.combined.c_index,
        sig0.combined.c_index
    );

    // trajectory-borne signal
    let data1 = tmp.path().join("trend1/data");
    let mut cfg1 = small_config(&data1, 1.0, 1200);
    run_simulate(&cfg1, &data1).unwrap();
    cfg1.out_dir = tmp.path().join("trend1/sig");
    let sig1 = run_pipeline(&cfg1, FeatureKind::Signature).unwrap().report;
    let mut c = cfg1.clone();
    c.out_dir = tmp.path().join("trend1/last");
    let last1 = run_pipeline(&c, FeatureKind::LastReport).unwrap().report;
    let mut c = cfg1.clone();
    c.out_dir = tmp.path().join("trend1/mean");
    let mean1 = run_pipeline(&c, FeatureKind::MeanEmbedding).unwrap().report;
    assert!(
        sig1.combined.c_index >= last1.combined.c_index + 0.05,
        "pipeline ({}) does not beat last-report ({}) by 0.05 at high trend",
        sig1.combined.c_index,
        last1.combined.c_index
    );
    assert!(
        sig1.combined.c_index >= mean1.combined.c_index + 0.05,
        "pipeline ({}) does not beat mean-embedding ({}) by 0.05 at high trend",
        sig1.combined.c_index,
        mean1.combined.c_index
    );
}

/// The fitted model cannot outrank the true log-hazard by more than
/// simulation noise: its test C-index stays within 0.02 of the oracle's.
#[test]
fn fitted_cindex_bounded_by_oracle_ceiling() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = small_config(&data, 1.0, 1000);
    run_simulate(&cfg, &data).unwrap();
    cfg.out_dir = tmp.path().join("run");
    let out = run_pipeline(&cfg, FeatureKind::Signature).unwrap();

    // join ground truth onto the test split
    let truth: std::collections::HashMap<String, f64> =
        std::fs::read_to_string(data.join("ground_truth.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (id, eta) = l.split_once(',').unwrap();
                (id.to_string(), eta.parse().unwrap())
            })
            .collect();
    let outcomes = sigsurv::ingest::load_outcomes(&data.join("outcomes.txt")).unwrap();
    let mut t = Vec::new();
    let mut delta = Vec::new();
    let mut eta_true = Vec::new();
    for line in std::fs::read_to_string(cfg.out_dir.join("splits.csv"))
        .unwrap()
        .lines()
        .skip(1)
    {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[1] == "test" {
            let o = &outcomes[fields[0]];
            t.push(o.duration);
            delta.push(o.event);
            eta_true.push(truth[fields[0]]);
        }
    }
    let oracle = sigsurv::synthetic::oracle_cindex(&eta_true, &t, &delta).unwrap();
    let fitted = out.report.combined.c_index;
    assert!(
        fitted <= oracle + 0.02,
        "fitted C-index {fitted} exceeds the oracle ceiling {oracle} by more than 0.02"
    );
    assert!(oracle > 0.7, "oracle C-index {oracle} suspiciously low");
}

/// The manifest records per-stage lineage; the PCA fit, the lambda search
/// and the model fit must never consume a test-split artifact.
#[test]
fn manifest_lineage_excludes_test_data_from_fitting_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = small_config(&data, 1.0, 300);
    run_simulate(&cfg, &data).unwrap();
    cfg.out_dir = tmp.path().join("run");
    run_pipeline(&cfg, FeatureKind::Signature).unwrap();

    let manifest = Manifest::load(&cfg.out_dir.join("manifest.json")).unwrap();
    let stage_names: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
    for required in [
        "ingest",
        "split",
        "compress",
        "featurize",
        "select",
        "fit",
        "evaluate",
    ] {
        assert!(stage_names.contains(&required), "stage {required} missing");
    }
    for stage in &manifest.stages {
        if ["compress", "select", "fit"].contains(&stage.name.as_str()) {
            for input in stage.inputs.keys() {
                assert!(
                    !input.contains("test"),
                    "stage {} consumed test artifact {input}",
                    stage.name
                );
            }
        }
    }
    // evaluation does consume the held-out features
    let eval = manifest
        .stages
        .iter()
        .find(|s| s.name == "evaluate")
        .unwrap();
    assert!(eval.inputs.contains_key("features_test"));
}

/// Deleting downstream artifacts and re-running reproduces them
/// bit-identically (stage isolation + determinism).
#[test]
fn rerun_after_deleting_downstream_artifacts_reproduces_them() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = small_config(&data, 1.0, 300);
    run_simulate(&cfg, &data).unwrap();
    cfg.out_dir = tmp.path().join("run");
    run_pipeline(&cfg, FeatureKind::Signature).unwrap();

    let model_before = std::fs::read(cfg.out_dir.join("model.txt")).unwrap();
    let report_before = std::fs::read(cfg.out_dir.join("report.json")).unwrap();
    std::fs::remove_file(cfg.out_dir.join("model.txt")).unwrap();
    std::fs::remove_file(cfg.out_dir.join("report.json")).unwrap();

    run_pipeline(&cfg, FeatureKind::Signature).unwrap();
    assert_eq!(
        model_before,
        std::fs::read(cfg.out_dir.join("model.txt")).unwrap()
    );
    assert_eq!(
        report_before,
        std::fs::read(cfg.out_dir.join("report.json")).unwrap()
    );
}

/// The per-fold PCA refit option runs end to end and stays in a sane range.
#[test]
fn per_fold_pca_selection_works() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = small_config(&data, 1.0, 400);
    cfg.pca_per_fold = true;
    run_simulate(&cfg, &data).unwrap();
    cfg.out_dir = tmp.path().join("run");
    let out = run_pipeline(&cfg, FeatureKind::Signature).unwrap();
    assert!(out.report.best_lambda > 0.0);
    assert!(out.report.combined.c_index > 0.5);
}

/// The optional unit-variance scaling of projected channels changes the
/// features but keeps the pipeline healthy.
#[test]
fn scaled_projection_variant_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cfg = small_config(&data, 1.0, 400);
    cfg.scale_projected = true;
    run_simulate(&cfg, &data).unwrap();
    cfg.out_dir = tmp.path().join("run");
    let out = run_pipeline(&cfg, FeatureKind::Signature).unwrap();
    assert!(out.report.combined.c_index > 0.5);
}
