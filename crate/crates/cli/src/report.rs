//! Report rendering: machine-readable JSON, an aligned human table, and
//! delimited curve files for external plotting.

use std::fmt::Write as _;
use std::path::Path;

use sigsurv::ingest::write_atomic;

use crate::gridsearch::CvRow;
use crate::pipeline::PipelineReport;

pub fn write_cv_table(table: &[CvRow], path: &Path) -> anyhow::Result<()> {
    let folds = table.first().map(|r| r.fold_cindex.len()).unwrap_or(0);
    let mut s = String::from("lambda,mean_cindex,sd_cindex,n_ok");
    for f in 0..folds {
        let _ = write!(s, ",fold_{f}");
    }
    s.push('\n');
    for row in table {
        let _ = write!(
            s,
            "{},{},{},{}",
            row.lambda, row.mean_cindex, row.sd_cindex, row.n_ok
        );
        for c in &row.fold_cindex {
            match c {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push_str(",failed"),
            }
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

pub fn write_report_files(
    report: &PipelineReport,
    json_path: &Path,
    txt_path: &Path,
) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    write_atomic(json_path, json.as_bytes())?;
    write_atomic(txt_path, render_text(report).as_bytes())?;
    Ok(())
}

/// Aligned human-readable summary table.
pub fn render_text(r: &PipelineReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sigsurv evaluation — {} features", r.feature_kind);
    let _ = writeln!(s, "{}", "=".repeat(58));
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k:<34} {v}");
    };
    kv("patients loaded", r.n_patients_loaded.to_string());
    kv(
        "excluded by masking",
        format!(
            "{} ({} reports dropped)",
            r.excluded_by_masking, r.reports_dropped_by_masking
        ),
    );
    kv("train / test", format!("{} / {}", r.n_train, r.n_test));
    kv("features", r.n_features.to_string());
    kv("selected lambda", format!("{:.6}", r.best_lambda));
    kv("nonzero coefficients", r.n_nonzero.to_string());
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<34} {}",
        "metric",
        format_args!("mean (sd) over {} folds", r.folds.len())
    );
    let _ = writeln!(s, "{}", "-".repeat(58));
    let mut metric = |name: &str, key: &str| {
        if let Some((m, sd)) = r.summary.get(key) {
            let _ = writeln!(s, "{name:<34} {m:.4} ({sd:.4})");
        }
    };
    metric("C-index", "c_index");
    metric("mean td-AUC", "mean_auc");
    for (h, _) in &r.combined.ibs_by_horizon {
        metric(
            &format!("IBS @ {} d", *h as i64),
            &format!("ibs_{}d", *h as i64),
        );
    }
    metric("Pearson log-time ~ risk", "pearson");
    metric("Spearman log-time ~ risk", "spearman");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "combined test set ({} patients, {} events)",
        r.combined.n_patients, r.combined.n_events
    );
    let _ = writeln!(s, "{}", "-".repeat(58));
    let _ = writeln!(
        s,
        "{:<34} {:.4}  CI95 [{:.4}, {:.4}]",
        "C-index", r.combined.c_index, r.combined.c_index_ci95.0, r.combined.c_index_ci95.1
    );
    let _ = writeln!(s, "{:<34} {:.4}", "mean td-AUC", r.combined.mean_auc);
    for (h, v) in &r.combined.ibs_by_horizon {
        let _ = writeln!(s, "{:<34} {:.4}", format!("IBS @ {} d", *h as i64), v);
    }
    let _ = writeln!(
        s,
        "{:<34} {:.4} (p = {:.2e})",
        "Pearson log-time ~ risk", r.combined.pearson, r.combined.pearson_p
    );
    let _ = writeln!(
        s,
        "{:<34} {:.4} (p = {:.2e})",
        "Spearman log-time ~ risk", r.combined.spearman, r.combined.spearman_p
    );
    let q = &r.combined.quartiles;
    let _ = writeln!(
        s,
        "{:<34} H = {:.2} (p = {:.2e}), F = {:.2} (p = {:.2e})",
        "risk-quartile separation", q.kruskal_h, q.kruskal_p, q.anova_f, q.anova_p
    );
    for (i, qs) in q.quartiles.iter().enumerate() {
        let _ = writeln!(
            s,
            "  Q{} (n={:<4}) median log T {:.3}  IQR [{:.3}, {:.3}]",
            i + 1,
            qs.n,
            qs.median_log_t,
            qs.iqr_log_t.0,
            qs.iqr_log_t.1
        );
    }
    if !r.cindex_vs_reports.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "C-index vs report budget");
        for (k, c) in &r.cindex_vs_reports {
            let _ = writeln!(s, "  k = {k:<4} C = {c:.4}");
        }
    }
    s
}

/// Curve data as delimited files: td-AUC, Brier, report-count curve and
/// quartile stats of the combined test evaluation.
pub fn write_curves(r: &PipelineReport, out_dir: &Path) -> anyhow::Result<()> {
    let mut auc = String::from("t_days,auc\n");
    for (t, a) in &r.combined.td_auc {
        let _ = writeln!(auc, "{t},{a}");
    }
    write_atomic(&out_dir.join("td_auc.csv"), auc.as_bytes())?;

    let mut bs = String::from("t_days,brier\n");
    for (t, b) in &r.combined.brier {
        let _ = writeln!(bs, "{t},{b}");
    }
    write_atomic(&out_dir.join("brier.csv"), bs.as_bytes())?;

    let mut q = String::from("quartile,n,n_events,median_log_t,q1_log_t,q3_log_t\n");
    for (i, qs) in r.combined.quartiles.quartiles.iter().enumerate() {
        let _ = writeln!(
            q,
            "{},{},{},{},{},{}",
            i + 1,
            qs.n,
            qs.n_events,
            qs.median_log_t,
            qs.iqr_log_t.0,
            qs.iqr_log_t.1
        );
    }
    write_atomic(&out_dir.join("quartiles.csv"), q.as_bytes())?;

    if !r.cindex_vs_reports.is_empty() {
        let mut c = String::from("k,c_index\n");
        for (k, v) in &r.cindex_vs_reports {
            let _ = writeln!(c, "{k},{v}");
        }
        write_atomic(&out_dir.join("cindex_vs_reports.csv"), c.as_bytes())?;
    }

    let mut folds = String::from("fold,n,events,c_index,ci_lo,ci_hi,mean_auc,pearson,spearman\n");
    for (i, f) in r.folds.iter().enumerate() {
        let _ = writeln!(
            folds,
            "{},{},{},{},{},{},{},{},{}",
            i,
            f.n_patients,
            f.n_events,
            f.c_index,
            f.c_index_ci95.0,
            f.c_index_ci95.1,
            f.mean_auc,
            f.pearson,
            f.spearman
        );
    }
    write_atomic(&out_dir.join("folds.csv"), folds.as_bytes())?;
    Ok(())
}
