//! Golden-file tests pinning the on-disk grammars (see docs/FORMATS.md).

use std::path::{Path, PathBuf};

use sigsurv::ingest::{
    load_cohort, load_freq_table, load_outcomes, load_word_table, write_cohort, IngestError,
    InputMode, ReportPayload,
};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn vector_embeddings_golden() {
    let cohort = load_cohort(
        &data("embeddings_vector.txt"),
        &data("outcomes.txt"),
        InputMode::Vector,
    )
    .unwrap();
    assert_eq!(cohort.embedding_dim, 3);
    assert_eq!(cohort.n_patients(), 2);
    assert_eq!(cohort.patients[0].outcome.patient_id, "pt-001");
    assert_eq!(cohort.patients[0].outcome.duration, 412.5);
    assert!(cohort.patients[0].outcome.event);
    assert_eq!(
        cohort.patients[0].reports[0].embedding().unwrap(),
        &[0.25, -1.5, 2.0]
    );
    assert_eq!(cohort.patients[0].reports[1].t, 14.5);
    assert!(!cohort.patients[1].outcome.event);
}

#[test]
fn token_embeddings_golden() {
    let cohort = load_cohort(
        &data("embeddings_token.txt"),
        &data("outcomes.txt"),
        InputMode::Token,
    )
    .unwrap();
    assert_eq!(cohort.embedding_dim, 2);
    match &cohort.patients[0].reports[0].payload {
        ReportPayload::Tokens(toks) => {
            assert_eq!(
                toks,
                &[("fever".to_string(), 2), ("fatigue".to_string(), 1)]
            );
        }
        other => panic!("wrong payload {other:?}"),
    }
}

#[test]
fn word_table_and_freqs_golden() {
    let table = load_word_table(&data("word_table.txt")).unwrap();
    assert_eq!(table.dim, 2);
    assert_eq!(table.get("remission").unwrap(), &[-0.5, 0.5]);
    let freqs = load_freq_table(&data("word_freqs.txt")).unwrap();
    assert_eq!(freqs.get("fever"), Some(0.02));
}

#[test]
fn malformed_files_are_rejected_with_line_numbers() {
    let err = load_cohort(
        &data("bad_header.txt"),
        &data("outcomes.txt"),
        InputMode::Vector,
    )
    .unwrap_err();
    match err {
        IngestError::Malformed { line, .. } => assert_eq!(line, 1),
        other => panic!("unexpected {other}"),
    }

    let err = load_cohort(
        &data("bad_dim.txt"),
        &data("outcomes.txt"),
        InputMode::Vector,
    )
    .unwrap_err();
    match err {
        IngestError::DimensionMismatch {
            line,
            got,
            expected,
            ..
        } => {
            assert_eq!((line, got, expected), (2, 2, 3));
        }
        other => panic!("unexpected {other}"),
    }

    let err = load_outcomes(&data("bad_event_flag.txt")).unwrap_err();
    match err {
        IngestError::Malformed { line, reason, .. } => {
            assert_eq!(line, 2);
            assert!(reason.contains("event"));
        }
        other => panic!("unexpected {other}"),
    }

    let err = load_cohort(
        &data("bad_token_payload.txt"),
        &data("outcomes.txt"),
        InputMode::Token,
    )
    .unwrap_err();
    assert!(matches!(err, IngestError::Malformed { line: 2, .. }));
}

#[test]
fn writer_emits_the_exact_grammar() {
    let cohort = load_cohort(
        &data("embeddings_vector.txt"),
        &data("outcomes.txt"),
        InputMode::Vector,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.txt");
    let out = dir.path().join("out.txt");
    write_cohort(&cohort, &emb, &out).unwrap();
    let emb_text = std::fs::read_to_string(&emb).unwrap();
    let out_text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        emb_text,
        "p=3 mode=vector\n\
         pt-001,0,0.25,-1.5,2\n\
         pt-001,14.5,0.5,0.5,0.5\n\
         pt-002,0,1,0,-1\n"
    );
    assert_eq!(
        out_text,
        "patient_id,duration_days,event\npt-001,412.5,1\npt-002,90,0\n"
    );
}
