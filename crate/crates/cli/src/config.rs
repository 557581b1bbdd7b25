//! Run configuration: a plain `key = value` text document.
//!
//! Unknown keys are rejected. `#` starts a comment; blank lines are
//! ignored. The full schema is listed in the README and mirrored by
//! [`RunConfig::canonical_text`], which renders every resolved value and
//! feeds the config hash in the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sigsurv::embedding::{OovPolicy, SifConfig};
use sigsurv::signature::{SignatureConfig, TimeScale};
use sigsurv::synthetic::SynthConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

/// The lambda grid: logarithmic (desk-scale default), linear with a fixed
/// step (the exhaustive preset), or a single fixed value.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Log {
        start: f64,
        stop: f64,
        points: usize,
    },
    Linear {
        start: f64,
        stop: f64,
        step: f64,
    },
    Fixed(f64),
}

impl GridSpec {
    pub fn default_desk_scale() -> Self {
        GridSpec::Log {
            start: 1e-3,
            stop: 10.0,
            points: 50,
        }
    }

    /// The exhaustive linear preset: [0.001, 10] with step 0.001.
    pub fn exhaustive() -> Self {
        GridSpec::Linear {
            start: 1e-3,
            stop: 10.0,
            step: 1e-3,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridSpec::Fixed(v) => vec![v],
            GridSpec::Log {
                start,
                stop,
                points,
            } => {
                if points == 1 {
                    return vec![start];
                }
                let l0 = start.ln();
                let l1 = stop.ln();
                (0..points)
                    .map(|k| (l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp())
                    .collect()
            }
            GridSpec::Linear { start, stop, step } => {
                let count = ((stop - start) / step + 1.0 + 1e-9).floor() as usize;
                (0..count).map(|k| start + step * k as f64).collect()
            }
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || ConfigError::Invalid(format!("cannot parse lambda grid `{s}`"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["log", a, b, n] => GridSpec::Log {
                start: num(a)?,
                stop: num(b)?,
                points: n.parse().map_err(|_| bad())?,
            },
            ["linear", a, b, st] => GridSpec::Linear {
                start: num(a)?,
                stop: num(b)?,
                step: num(st)?,
            },
            ["fixed", v] => GridSpec::Fixed(num(v)?),
            _ => return Err(bad()),
        };
        let ok = match spec {
            GridSpec::Log {
                start,
                stop,
                points,
            } => start > 0.0 && stop >= start && points >= 1,
            GridSpec::Linear { start, stop, step } => start > 0.0 && stop >= start && step > 0.0,
            GridSpec::Fixed(v) => v > 0.0,
        };
        if !ok {
            return Err(ConfigError::Invalid(format!(
                "lambda grid `{s}`: start must be > 0, stop >= start, step/points positive"
            )));
        }
        Ok(spec)
    }

    fn render(&self) -> String {
        match *self {
            GridSpec::Log {
                start,
                stop,
                points,
            } => format!("log:{start}:{stop}:{points}"),
            GridSpec::Linear { start, stop, step } => format!("linear:{start}:{stop}:{step}"),
            GridSpec::Fixed(v) => format!("fixed:{v}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    // inputs
    pub embeddings: PathBuf,
    pub outcomes: PathBuf,
    pub mode: sigsurv::ingest::InputMode,
    pub word_table: Option<PathBuf>,
    pub word_freqs: Option<PathBuf>,
    pub out_dir: PathBuf,
    // preprocessing
    pub mask_horizon_days: f64,
    // embedding
    pub sif: SifConfig,
    // compression
    pub p_bar: usize,
    pub scale_projected: bool,
    // signature
    pub signature: SignatureConfig,
    // selection + fit
    pub lambda_grid: GridSpec,
    pub cv_folds: usize,
    pub pca_per_fold: bool,
    pub standardize: bool,
    pub max_iters: usize,
    pub tol: f64,
    pub kkt_tol: f64,
    // split
    pub test_fraction: f64,
    pub test_folds: usize,
    pub seed: u64,
    // evaluation
    pub tau1_days: f64,
    pub tau2_days: f64,
    pub ibs_horizons_days: Vec<f64>,
    pub td_auc_ipcw: bool,
    pub mean_auc_censoring_km: bool,
    pub report_count_ks: Vec<usize>,
    // simulate
    pub sim: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            embeddings: PathBuf::from("embeddings.txt"),
            outcomes: PathBuf::from("outcomes.txt"),
            mode: sigsurv::ingest::InputMode::Vector,
            word_table: None,
            word_freqs: None,
            out_dir: PathBuf::from("out"),
            mask_horizon_days: 100.0,
            sif: SifConfig::default(),
            p_bar: 25,
            scale_projected: false,
            signature: SignatureConfig::default(),
            lambda_grid: GridSpec::default_desk_scale(),
            cv_folds: 5,
            pca_per_fold: false,
            standardize: true,
            max_iters: 10_000,
            tol: 1e-9,
            kkt_tol: 1e-6,
            test_fraction: 0.5,
            test_folds: 10,
            seed: 42,
            tau1_days: 0.0,
            tau2_days: 3650.0,
            ibs_horizons_days: vec![1095.0, 1825.0, 3650.0],
            td_auc_ipcw: false,
            mean_auc_censoring_km: false,
            report_count_ks: vec![2, 4, 8, 16, 32, 64],
            sim: SynthConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::Invalid(format!(
            "expected true|false, got `{other}`"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, what: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| ConfigError::Invalid(format!("cannot parse {what} `{v}`")))
}

fn parse_list_f64(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_num::<f64>(s.trim(), "list entry"))
        .collect()
}

fn parse_list_usize(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|s| parse_num::<usize>(s.trim(), "list entry"))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                path: origin.to_string(),
                line: lineno,
                reason: "expected `key = value`".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { .. } => ConfigError::UnknownKey {
                    path: origin.to_string(),
                    line: lineno,
                    key: key.to_string(),
                },
                ConfigError::Invalid(v) => ConfigError::Malformed {
                    path: origin.to_string(),
                    line: lineno,
                    reason: v,
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "embeddings" => self.embeddings = PathBuf::from(v),
            "outcomes" => self.outcomes = PathBuf::from(v),
            "mode" => self.mode = v.parse().map_err(|e: String| ConfigError::Invalid(e))?,
            "word_table" => self.word_table = Some(PathBuf::from(v)),
            "word_freqs" => self.word_freqs = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "mask_horizon_days" => self.mask_horizon_days = parse_num(v, key)?,
            "sif_a" => self.sif.smoothing = parse_num(v, key)?,
            "sif_unique_tokens" => self.sif.unique_tokens = parse_bool(v)?,
            "sif_remove_first_pc" => self.sif.remove_first_pc = parse_bool(v)?,
            "oov_policy" => {
                self.sif.oov = match v {
                    "skip" => OovPolicy::SkipWithWarning,
                    "fail" => OovPolicy::Fail,
                    other => {
                        return Err(ConfigError::Invalid(format!(
                            "oov_policy must be skip|fail, got `{other}`"
                        )))
                    }
                }
            }
            "p_bar" => self.p_bar = parse_num(v, key)?,
            "scale_projected" => self.scale_projected = parse_bool(v)?,
            "level" => self.signature.level = parse_num(v, key)?,
            "time_scale" => {
                self.signature.time_scale = v.parse::<TimeScale>().map_err(ConfigError::Invalid)?
            }
            "drop_time_words" => self.signature.drop_time_words = parse_bool(v)?,
            "lambda_grid" => self.lambda_grid = GridSpec::parse(v)?,
            "cv_folds" => self.cv_folds = parse_num(v, key)?,
            "pca_per_fold" => self.pca_per_fold = parse_bool(v)?,
            "standardize" => self.standardize = parse_bool(v)?,
            "max_iters" => self.max_iters = parse_num(v, key)?,
            "tol" => self.tol = parse_num(v, key)?,
            "kkt_tol" => self.kkt_tol = parse_num(v, key)?,
            "test_fraction" => self.test_fraction = parse_num(v, key)?,
            "test_folds" => self.test_folds = parse_num(v, key)?,
            "seed" => self.seed = parse_num(v, key)?,
            "tau1_days" => self.tau1_days = parse_num(v, key)?,
            "tau2_days" => self.tau2_days = parse_num(v, key)?,
            "ibs_horizons_days" => self.ibs_horizons_days = parse_list_f64(v)?,
            "td_auc_ipcw" => self.td_auc_ipcw = parse_bool(v)?,
            "mean_auc_censoring_km" => self.mean_auc_censoring_km = parse_bool(v)?,
            "report_count_ks" => self.report_count_ks = parse_list_usize(v)?,
            "sim_n_patients" => self.sim.n_patients = parse_num(v, key)?,
            "sim_p" => self.sim.p = parse_num(v, key)?,
            "sim_latent_dim" => self.sim.latent_dim = parse_num(v, key)?,
            "sim_reports_min" => self.sim.reports_per_patient.0 = parse_num(v, key)?,
            "sim_reports_max" => self.sim.reports_per_patient.1 = parse_num(v, key)?,
            "sim_trend_strength" => self.sim.trend_strength = parse_num(v, key)?,
            "sim_baseline_hazard" => self.sim.baseline_hazard_rate = parse_num(v, key)?,
            "sim_censoring_rate" => self.sim.censoring_rate = parse_num(v, key)?,
            "sim_risk_scale" => self.sim.risk_scale = parse_num(v, key)?,
            "sim_noise_sd" => self.sim.noise_sd = parse_num(v, key)?,
            "sim_obs_window_days" => self.sim.obs_window_days = parse_num(v, key)?,
            "sim_weibull_shape" => self.sim.weibull_shape = Some(parse_num(v, key)?),
            other => {
                return Err(ConfigError::UnknownKey {
                    path: String::new(),
                    line: 0,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(ConfigError::Invalid("cv_folds must be >= 2".into()));
        }
        if self.test_folds < 1 {
            return Err(ConfigError::Invalid("test_folds must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "test_fraction must lie in (0,1)".into(),
            ));
        }
        if !(self.mask_horizon_days >= 0.0) {
            return Err(ConfigError::Invalid(
                "mask_horizon_days must be >= 0".into(),
            ));
        }
        if !(self.tau1_days < self.tau2_days) {
            return Err(ConfigError::Invalid("need tau1_days < tau2_days".into()));
        }
        if self.p_bar == 0 || self.signature.level == 0 {
            return Err(ConfigError::Invalid("p_bar and level must be >= 1".into()));
        }
        Ok(())
    }

    /// Derive the simulate seed from the master seed unless the config set
    /// it explicitly (keeps one master seed for all substreams).
    pub fn resolved_sim(&self) -> SynthConfig {
        let mut sim = self.sim.clone();
        sim.seed = self.seed;
        sim
    }

    /// Every resolved key, one per line, sorted: the hashed identity of a run.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cv_folds = {}", self.cv_folds);
        let _ = writeln!(s, "drop_time_words = {}", self.signature.drop_time_words);
        let _ = writeln!(s, "embeddings = {}", self.embeddings.display());
        let _ = writeln!(
            s,
            "ibs_horizons_days = {}",
            join_f64(&self.ibs_horizons_days)
        );
        let _ = writeln!(s, "kkt_tol = {}", self.kkt_tol);
        let _ = writeln!(s, "lambda_grid = {}", self.lambda_grid.render());
        let _ = writeln!(s, "level = {}", self.signature.level);
        let _ = writeln!(s, "mask_horizon_days = {}", self.mask_horizon_days);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "mean_auc_censoring_km = {}", self.mean_auc_censoring_km);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(
            s,
            "oov_policy = {}",
            match self.sif.oov {
                OovPolicy::SkipWithWarning => "skip",
                OovPolicy::Fail => "fail",
            }
        );
        let _ = writeln!(s, "outcomes = {}", self.outcomes.display());
        let _ = writeln!(s, "p_bar = {}", self.p_bar);
        let _ = writeln!(s, "pca_per_fold = {}", self.pca_per_fold);
        let _ = writeln!(
            s,
            "report_count_ks = {}",
            self.report_count_ks
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "scale_projected = {}", self.scale_projected);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sif_a = {}", self.sif.smoothing);
        let _ = writeln!(s, "sif_remove_first_pc = {}", self.sif.remove_first_pc);
        let _ = writeln!(s, "sif_unique_tokens = {}", self.sif.unique_tokens);
        let _ = writeln!(s, "sim_baseline_hazard = {}", self.sim.baseline_hazard_rate);
        let _ = writeln!(s, "sim_censoring_rate = {}", self.sim.censoring_rate);
        let _ = writeln!(s, "sim_latent_dim = {}", self.sim.latent_dim);
        let _ = writeln!(s, "sim_n_patients = {}", self.sim.n_patients);
        let _ = writeln!(s, "sim_noise_sd = {}", self.sim.noise_sd);
        let _ = writeln!(s, "sim_obs_window_days = {}", self.sim.obs_window_days);
        let _ = writeln!(s, "sim_p = {}", self.sim.p);
        let _ = writeln!(s, "sim_reports_max = {}", self.sim.reports_per_patient.1);
        let _ = writeln!(s, "sim_reports_min = {}", self.sim.reports_per_patient.0);
        let _ = writeln!(s, "sim_risk_scale = {}", self.sim.risk_scale);
        let _ = writeln!(s, "sim_trend_strength = {}", self.sim.trend_strength);
        let _ = writeln!(
            s,
            "sim_weibull_shape = {}",
            self.sim
                .weibull_shape
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(s, "standardize = {}", self.standardize);
        let _ = writeln!(s, "tau1_days = {}", self.tau1_days);
        let _ = writeln!(s, "tau2_days = {}", self.tau2_days);
        let _ = writeln!(s, "td_auc_ipcw = {}", self.td_auc_ipcw);
        let _ = writeln!(s, "test_folds = {}", self.test_folds);
        let _ = writeln!(s, "test_fraction = {}", self.test_fraction);
        let _ = writeln!(
            s,
            "time_scale = {}",
            match self.signature.time_scale {
                TimeScale::UnitInterval => "unit_interval",
                TimeScale::Days => "days",
            }
        );
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(
            s,
            "word_freqs = {}",
            self.word_freqs
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(
            s,
            "word_table = {}",
            self.word_table
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into())
        );
        s
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_overrides() {
        let text = "\
# a run
seed = 7
p_bar = 10
level = 2
lambda_grid = log:0.01:5:12
ibs_horizons_days = 365, 730
sim_n_patients = 100
";
        let cfg = RunConfig::from_text(text, "test").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.p_bar, 10);
        assert_eq!(cfg.signature.level, 2);
        assert_eq!(cfg.lambda_grid.values().len(), 12);
        assert_eq!(cfg.ibs_horizons_days, vec![365.0, 730.0]);
        assert_eq!(cfg.sim.n_patients, 100);
        assert_eq!(cfg.cv_folds, 5); // default preserved
    }

    #[test]
    fn defaults_match_the_documented_operating_point() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.p_bar, 25);
        assert_eq!(cfg.signature.level, 3);
        assert_eq!(cfg.mask_horizon_days, 100.0);
        assert_eq!(cfg.cv_folds, 5);
        assert_eq!(cfg.test_folds, 10);
        assert_eq!(cfg.sif.smoothing, 1e-3);
        assert!(!cfg.sif.remove_first_pc);
        assert_eq!(cfg.tau1_days, 0.0);
        assert_eq!(cfg.tau2_days, 3650.0);
        // desk-scale default grid: 50 log points over [1e-3, 10]
        match cfg.lambda_grid {
            GridSpec::Log {
                start,
                stop,
                points,
            } => {
                assert_eq!((start, stop, points), (1e-3, 10.0, 50));
            }
            _ => panic!("default grid should be logarithmic"),
        }
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let err = RunConfig::from_text("p_bar = 10\nlevl = 3\n", "cfg.txt").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "levl");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(RunConfig::from_text("cv_folds = 1\n", "t").is_err());
        assert!(RunConfig::from_text("test_fraction = 1.5\n", "t").is_err());
        assert!(RunConfig::from_text("lambda_grid = log:0:1:5\n", "t").is_err());
        assert!(RunConfig::from_text("time_scale = sometimes\n", "t").is_err());
    }

    #[test]
    fn grid_specs_generate_expected_values() {
        let log = GridSpec::parse("log:0.001:10:50").unwrap();
        let vals = log.values();
        assert_eq!(vals.len(), 50);
        assert!((vals[0] - 0.001).abs() < 1e-12);
        assert!((vals[49] - 10.0).abs() < 1e-9);
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }

        let linear = GridSpec::exhaustive();
        let vals = linear.values();
        assert_eq!(vals.len(), 10_000);
        assert!((vals[0] - 0.001).abs() < 1e-12);
        assert!((vals[9999] - 10.0).abs() < 1e-9);

        assert_eq!(GridSpec::parse("fixed:0.5").unwrap().values(), vec![0.5]);
    }

    #[test]
    fn canonical_text_is_stable_and_total() {
        let cfg = RunConfig::default();
        let a = cfg.canonical_text();
        let b = cfg.canonical_text();
        assert_eq!(a, b);
        // every non-path config key appears
        for key in ["seed", "p_bar", "level", "lambda_grid", "sim_n_patients"] {
            assert!(a.contains(key), "canonical text missing {key}");
        }
    }
}
