//! Cohort loading, validation, deduplication, tail masking and splitting.
//!
//! File grammars (see `docs/FORMATS.md` for the full description):
//!
//! - embeddings file: header `p=<uint> mode=<vector|token>`, then one report
//!   per line. Vector mode: `patient_id,t_days,e_1,...,e_p`. Token mode:
//!   `patient_id,t_days,token:count;token:count;...`.
//! - outcomes file: header `patient_id,duration_days,event`, then
//!   `id,duration,0|1` lines.
//! - word-embedding table: header `p=<uint>`, then `token,v_1,...,v_p`.
//! - frequency table: `token,frequency` lines with frequency in (0,1].
//!
//! All files are UTF-8; numbers are 64-bit floats.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: embedding has {got} coordinates, expected {expected}")]
    DimensionMismatch {
        path: String,
        line: usize,
        got: usize,
        expected: usize,
    },
    #[error("embeddings file references patient `{0}` absent from the outcomes file")]
    UnknownPatient(String),
    #[error("duplicate patient `{0}` in outcomes file")]
    DuplicateOutcome(String),
    #[error("patient `{id}`: two reports at t={t} with different payloads")]
    ConflictingReports { id: String, t: f64 },
    #[error("patient `{0}` has no reports")]
    NoReports(String),
    #[error("too few events to stratify: test split has {events} events for {folds} folds")]
    TooFewEvents { events: usize, folds: usize },
    #[error(
        "cohort of {n} patients cannot be split into {folds} test folds (need at least {min})"
    )]
    TooSmall { n: usize, folds: usize, min: usize },
    #[error("test fraction must lie in (0,1), got {0}")]
    BadFraction(f64),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, IngestError>;

/// Which payload the embeddings file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputMode {
    Vector,
    Token,
}

impl InputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::Vector => "vector",
            InputMode::Token => "token",
        }
    }
}

impl std::str::FromStr for InputMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vector" => Ok(InputMode::Vector),
            "token" => Ok(InputMode::Token),
            other => Err(format!("unknown mode `{other}` (expected vector|token)")),
        }
    }
}

/// One report: either an embedding vector or a token bag, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReportPayload {
    Embedding(Vec<f64>),
    Tokens(Vec<(String, u32)>),
}

/// A timestamped report. `t` is days since the patient's first report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub t: f64,
    pub payload: ReportPayload,
}

impl ReportEvent {
    pub fn embedding(&self) -> Option<&[f64]> {
        match &self.payload {
            ReportPayload::Embedding(v) => Some(v),
            ReportPayload::Tokens(_) => None,
        }
    }
}

/// Observed study outcome: time in study and event indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub patient_id: String,
    /// Days in study; strictly positive.
    pub duration: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub outcome: SurvivalOutcome,
    /// Sorted strictly increasing in `t`.
    pub reports: Vec<ReportEvent>,
}

/// A validated cohort. Patients are kept in ascending `patient_id` order so
/// downstream numerics are independent of input row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub patients: Vec<Patient>,
    pub embedding_dim: usize,
    pub mode: InputMode,
}

impl Cohort {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_reports(&self) -> usize {
        self.patients.iter().map(|p| p.reports.len()).sum()
    }

    pub fn n_events(&self) -> usize {
        self.patients.iter().filter(|p| p.outcome.event).count()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.patients.iter().map(|p| p.outcome.duration).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.patients.iter().map(|p| p.outcome.event).collect()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.patients
            .iter()
            .map(|p| p.outcome.patient_id.clone())
            .collect()
    }

    /// All report embeddings in patient-then-time order. Panics on token mode.
    pub fn all_embeddings(&self) -> Vec<&[f64]> {
        self.patients
            .iter()
            .flat_map(|p| p.reports.iter())
            .map(|r| r.embedding().expect("cohort is in vector mode"))
            .collect()
    }

    /// Restrict to the given patient ids, preserving canonical order.
    pub fn subset(&self, ids: &std::collections::HashSet<String>) -> Cohort {
        Cohort {
            patients: self
                .patients
                .iter()
                .filter(|p| ids.contains(&p.outcome.patient_id))
                .cloned()
                .collect(),
            embedding_dim: self.embedding_dim,
            mode: self.mode,
        }
    }
}

struct RawReport {
    patient_id: String,
    t: f64,
    payload: ReportPayload,
    raw_payload: String,
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| {
            malformed(
                path,
                line,
                format!("cannot parse {field} `{s}` as a number"),
            )
        })
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(
                    path,
                    line,
                    format!("{field} `{s}` is not finite"),
                ))
            }
        })
}

fn parse_header_kv(path: &Path, header: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in header.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| malformed(path, 1, format!("header field `{part}` is not key=value")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn parse_tokens(path: &Path, line: usize, payload: &str) -> Result<Vec<(String, u32)>> {
    let mut tokens = Vec::new();
    for piece in payload.split(';') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (tok, cnt) = piece.split_once(':').ok_or_else(|| {
            malformed(
                path,
                line,
                format!("token entry `{piece}` is not token:count"),
            )
        })?;
        if tok.is_empty() || tok.contains(',') {
            return Err(malformed(path, line, format!("invalid token `{tok}`")));
        }
        let count: u32 = cnt
            .parse()
            .map_err(|_| malformed(path, line, format!("invalid token count `{cnt}`")))?;
        if count == 0 {
            return Err(malformed(path, line, "token count must be >= 1"));
        }
        tokens.push((tok.to_string(), count));
    }
    if tokens.is_empty() {
        return Err(malformed(path, line, "empty token payload"));
    }
    Ok(tokens)
}

/// Parse the outcomes file: header + `patient_id,duration_days,event` lines.
pub fn load_outcomes(path: &Path) -> Result<BTreeMap<String, SurvivalOutcome>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty outcomes file"))?;
    if header.trim() != "patient_id,duration_days,event" {
        return Err(malformed(
            path,
            1,
            "expected header `patient_id,duration_days,event`",
        ));
    }
    let mut out = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(malformed(path, lineno, "expected 3 comma-separated fields"));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(malformed(path, lineno, "empty patient id"));
        }
        let duration = parse_f64(path, lineno, "duration_days", fields[1])?;
        if duration <= 0.0 {
            return Err(malformed(path, lineno, "duration_days must be > 0"));
        }
        let event = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    path,
                    lineno,
                    format!("event must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let outcome = SurvivalOutcome {
            patient_id: id.to_string(),
            duration,
            event,
        };
        if out.insert(id.to_string(), outcome).is_some() {
            return Err(IngestError::DuplicateOutcome(id.to_string()));
        }
    }
    Ok(out)
}

/// Load, validate and deduplicate a cohort from an embeddings file and an
/// outcomes file.
///
/// Byte-identical report rows for a patient are dropped (dedup key: patient
/// id, timestamp, full payload bytes). Two reports at the same `t` whose
/// payloads parse to equal values are also collapsed; same `t` with
/// different payloads is an error, since report lists must be strictly
/// increasing in `t`.
pub fn load_cohort(
    embeddings_path: &Path,
    outcomes_path: &Path,
    mode: InputMode,
) -> Result<Cohort> {
    let outcomes = load_outcomes(outcomes_path)?;
    let path = embeddings_path;
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty embeddings file"))?;
    let kv = parse_header_kv(path, header)?;
    let declared_p: usize = kv
        .get("p")
        .ok_or_else(|| malformed(path, 1, "header missing `p=`"))?
        .parse()
        .map_err(|_| malformed(path, 1, "header `p` is not an integer"))?;
    let declared_mode: InputMode = kv
        .get("mode")
        .ok_or_else(|| malformed(path, 1, "header missing `mode=`"))?
        .parse()
        .map_err(|e: String| malformed(path, 1, e))?;
    if declared_mode != mode {
        return Err(malformed(
            path,
            1,
            format!(
                "file declares mode={}, loader asked for {}",
                declared_mode.as_str(),
                mode.as_str()
            ),
        ));
    }
    if declared_p == 0 {
        return Err(malformed(path, 1, "header `p` must be >= 1"));
    }

    let mut by_patient: BTreeMap<String, Vec<RawReport>> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, ',');
        let id = fields
            .next()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| malformed(path, lineno, "missing patient_id"))?
            .trim()
            .to_string();
        let t = parse_f64(
            path,
            lineno,
            "t_days",
            fields
                .next()
                .ok_or_else(|| malformed(path, lineno, "missing t_days"))?,
        )?;
        if t < 0.0 {
            return Err(malformed(path, lineno, "t_days must be >= 0"));
        }
        let rest = fields
            .next()
            .ok_or_else(|| malformed(path, lineno, "missing payload"))?;
        if !outcomes.contains_key(&id) {
            return Err(IngestError::UnknownPatient(id));
        }
        let payload = match mode {
            InputMode::Vector => {
                let coords: Vec<&str> = rest.split(',').collect();
                if coords.len() != declared_p {
                    return Err(IngestError::DimensionMismatch {
                        path: path.display().to_string(),
                        line: lineno,
                        got: coords.len(),
                        expected: declared_p,
                    });
                }
                let mut v = Vec::with_capacity(declared_p);
                for c in coords {
                    v.push(parse_f64(path, lineno, "embedding coordinate", c)?);
                }
                ReportPayload::Embedding(v)
            }
            InputMode::Token => ReportPayload::Tokens(parse_tokens(path, lineno, rest)?),
        };
        by_patient.entry(id.clone()).or_default().push(RawReport {
            patient_id: id,
            t,
            payload,
            raw_payload: rest.to_string(),
        });
    }

    let mut patients = Vec::with_capacity(by_patient.len());
    for (id, mut reports) in by_patient {
        reports.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut deduped: Vec<RawReport> = Vec::with_capacity(reports.len());
        let mut dropped = 0usize;
        for r in reports {
            match deduped.last() {
                Some(prev) if prev.t == r.t => {
                    if prev.raw_payload == r.raw_payload || prev.payload == r.payload {
                        dropped += 1;
                    } else {
                        return Err(IngestError::ConflictingReports {
                            id: r.patient_id,
                            t: r.t,
                        });
                    }
                }
                _ => deduped.push(r),
            }
        }
        if dropped > 0 {
            log::debug!("patient {id}: dropped {dropped} duplicate report(s)");
        }
        let outcome = outcomes[&id].clone();
        patients.push(Patient {
            outcome,
            reports: deduped
                .into_iter()
                .map(|r| ReportEvent {
                    t: r.t,
                    payload: r.payload,
                })
                .collect(),
        });
    }

    // Outcome-only patients (no reports) are rejected: every patient in a
    // cohort carries at least one report.
    for p in &patients {
        if p.reports.is_empty() {
            return Err(IngestError::NoReports(p.outcome.patient_id.clone()));
        }
    }

    Ok(Cohort {
        patients,
        embedding_dim: declared_p,
        mode,
    })
}

fn fmt_float(v: f64) -> String {
    // Shortest round-trip representation; reparses to the same f64.
    format!("{v}")
}

/// Write a cohort back to the on-disk embeddings + outcomes formats.
pub fn write_cohort(cohort: &Cohort, embeddings_path: &Path, outcomes_path: &Path) -> Result<()> {
    let mut emb = String::new();
    let _ = writeln!(
        emb,
        "p={} mode={}",
        cohort.embedding_dim,
        cohort.mode.as_str()
    );
    let mut out = String::from("patient_id,duration_days,event\n");
    for p in &cohort.patients {
        let _ = writeln!(
            out,
            "{},{},{}",
            p.outcome.patient_id,
            fmt_float(p.outcome.duration),
            u8::from(p.outcome.event)
        );
        for r in &p.reports {
            match &r.payload {
                ReportPayload::Embedding(v) => {
                    let coords: Vec<String> = v.iter().map(|&x| fmt_float(x)).collect();
                    let _ = writeln!(
                        emb,
                        "{},{},{}",
                        p.outcome.patient_id,
                        fmt_float(r.t),
                        coords.join(",")
                    );
                }
                ReportPayload::Tokens(toks) => {
                    let parts: Vec<String> = toks.iter().map(|(w, c)| format!("{w}:{c}")).collect();
                    let _ = writeln!(
                        emb,
                        "{},{},{}",
                        p.outcome.patient_id,
                        fmt_float(r.t),
                        parts.join(";")
                    );
                }
            }
        }
    }
    write_atomic(embeddings_path, emb.as_bytes())?;
    write_atomic(outcomes_path, out.as_bytes())?;
    Ok(())
}

/// Write via a temp file + rename so readers never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Masking result: the surviving cohort plus how many patients lost all
/// their reports and were excluded.
#[derive(Debug, Clone)]
pub struct MaskedCohort {
    pub cohort: Cohort,
    pub excluded_patients: usize,
    pub dropped_reports: usize,
}

/// Drop every report within `horizon_days` of the end of study: a report at
/// `t` survives iff `t <= duration - horizon_days`. Patients left with no
/// reports are removed and tallied.
pub fn mask_tail(cohort: &Cohort, horizon_days: f64) -> MaskedCohort {
    assert!(
        horizon_days >= 0.0 && horizon_days.is_finite(),
        "horizon_days must be a non-negative real"
    );
    let mut excluded = 0usize;
    let mut dropped = 0usize;
    let mut patients = Vec::with_capacity(cohort.patients.len());
    for p in &cohort.patients {
        let cutoff = p.outcome.duration - horizon_days;
        let kept: Vec<ReportEvent> = p
            .reports
            .iter()
            .filter(|r| r.t <= cutoff)
            .cloned()
            .collect();
        dropped += p.reports.len() - kept.len();
        if kept.is_empty() {
            excluded += 1;
        } else {
            patients.push(Patient {
                outcome: p.outcome.clone(),
                reports: kept,
            });
        }
    }
    MaskedCohort {
        cohort: Cohort {
            patients,
            embedding_dim: cohort.embedding_dim,
            mode: cohort.mode,
        },
        excluded_patients: excluded,
        dropped_reports: dropped,
    }
}

/// Keep only each patient's first `min(k, N_i)` reports.
pub fn truncate_reports(cohort: &Cohort, k: usize) -> Cohort {
    assert!(k >= 1, "cannot truncate to zero reports");
    Cohort {
        patients: cohort
            .patients
            .iter()
            .map(|p| Patient {
                outcome: p.outcome.clone(),
                reports: p.reports.iter().take(k).cloned().collect(),
            })
            .collect(),
        embedding_dim: cohort.embedding_dim,
        mode: cohort.mode,
    }
}

/// Stratified train/test split with the test side divided into
/// `n_test_folds` disjoint folds.
///
/// Stratification is on the event indicator: each stratum is shuffled with
/// a seed-derived substream, a rounded fraction goes to the test side, and
/// test patients are dealt round-robin across folds so per-fold event
/// counts differ by at most one per stratum. Deterministic given `seed`.
pub fn split_cohort(
    cohort: &Cohort,
    test_fraction: f64,
    n_test_folds: usize,
    seed: u64,
) -> Result<(Cohort, Vec<Cohort>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IngestError::BadFraction(test_fraction));
    }
    let n = cohort.patients.len();
    if n_test_folds == 0 || n < n_test_folds * 2 {
        return Err(IngestError::TooSmall {
            n,
            folds: n_test_folds.max(1),
            min: n_test_folds * 2,
        });
    }

    let mut rng = rng::substream(seed, "split");
    let mut train_idx: Vec<usize> = Vec::new();
    let mut fold_idx: Vec<Vec<usize>> = vec![Vec::new(); n_test_folds];
    let mut test_events = 0usize;
    let mut next_fold = 0usize;

    for stratum_event in [true, false] {
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| cohort.patients[i].outcome.event == stratum_event)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        let n_test = n_test.min(idx.len());
        for (j, &i) in idx.iter().enumerate() {
            if j < n_test {
                fold_idx[next_fold].push(i);
                next_fold = (next_fold + 1) % n_test_folds;
                if stratum_event {
                    test_events += 1;
                }
            } else {
                train_idx.push(i);
            }
        }
    }

    if test_events < n_test_folds {
        return Err(IngestError::TooFewEvents {
            events: test_events,
            folds: n_test_folds,
        });
    }

    let build = |mut idx: Vec<usize>| -> Cohort {
        idx.sort_unstable();
        Cohort {
            patients: idx.iter().map(|&i| cohort.patients[i].clone()).collect(),
            embedding_dim: cohort.embedding_dim,
            mode: cohort.mode,
        }
    };

    Ok((build(train_idx), fold_idx.into_iter().map(build).collect()))
}

/// Word-embedding lookup table (token mode input).
#[derive(Debug, Clone)]
pub struct WordTable {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordTable {
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        Self {
            dim,
            vectors: entries.into_iter().collect(),
        }
    }
}

/// Corpus frequency lookup, values in (0,1].
#[derive(Debug, Clone)]
pub struct FreqTable {
    freqs: HashMap<String, f64>,
}

impl FreqTable {
    pub fn get(&self, token: &str) -> Option<f64> {
        self.freqs.get(token).copied()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            freqs: entries.into_iter().collect(),
        }
    }
}

/// Parse a word-embedding table: header `p=<uint>`, lines `token,v_1..v_p`.
pub fn load_word_table(path: &Path) -> Result<WordTable> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty word table"))?;
    let kv = parse_header_kv(path, header)?;
    let dim: usize = kv
        .get("p")
        .ok_or_else(|| malformed(path, 1, "header missing `p=`"))?
        .parse()
        .map_err(|_| malformed(path, 1, "header `p` is not an integer"))?;
    if dim == 0 {
        return Err(malformed(path, 1, "header `p` must be >= 1"));
    }
    let mut vectors = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(malformed(
                path,
                lineno,
                format!(
                    "expected token + {dim} coordinates, got {} fields",
                    fields.len()
                ),
            ));
        }
        let token = fields[0].trim().to_string();
        if token.is_empty() {
            return Err(malformed(path, lineno, "empty token"));
        }
        let mut v = Vec::with_capacity(dim);
        for c in &fields[1..] {
            v.push(parse_f64(path, lineno, "word vector coordinate", c)?);
        }
        if vectors.insert(token.clone(), v).is_some() {
            return Err(malformed(
                path,
                lineno,
                format!("duplicate token `{token}`"),
            ));
        }
    }
    Ok(WordTable { dim, vectors })
}

/// Parse a frequency table: `token,frequency` lines, frequency in (0,1].
pub fn load_freq_table(path: &Path) -> Result<FreqTable> {
    let text = read_to_string(path)?;
    let mut freqs = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (token, freq) = line
            .split_once(',')
            .ok_or_else(|| malformed(path, lineno, "expected `token,frequency`"))?;
        let token = token.trim().to_string();
        if token.is_empty() {
            return Err(malformed(path, lineno, "empty token"));
        }
        let f = parse_f64(path, lineno, "frequency", freq)?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(malformed(
                path,
                lineno,
                format!("frequency {f} outside (0,1]"),
            ));
        }
        if freqs.insert(token.clone(), f).is_some() {
            return Err(malformed(
                path,
                lineno,
                format!("duplicate token `{token}`"),
            ));
        }
    }
    Ok(FreqTable { freqs })
}
