use std::path::PathBuf;

use gazeflow_core::attnflow::{read_tensor, read_tensor_from, write_tensor_to, AttnError, ExportManifest};
use gazeflow_core::corpus::{parse_corpus, read_score_file, CorpusError, CorpusFormat};
use gazeflow_core::fixtures::{generate, write_fixtures, FixtureConfig, MANIFEST_FILE, SR_CORPUS_FILE};
use gazeflow_core::{AttentionTensor, Corpus, Task};

fn mini() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini.jsonl")
}

fn parse(text: &str) -> Result<Corpus, CorpusError> {
    Corpus::from_reader(text.as_bytes(), Task::SR, "inline")
}

#[test]
fn mini_corpus_parses() {
    let c = parse_corpus(mini(), CorpusFormat::JsonLines, Task::SR).unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c.source_name, "mini");
    let s2 = c.get("s2").unwrap();
    let expected = [330.0 / 3.0, 560.0 / 3.0, 840.0 / 3.0, 200.0 / 3.0];
    for (got, want) in s2.fixation_ms.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12);
    }
    let s3 = c.get("s3").unwrap();
    assert!(s3.pos.is_none() && s3.label.is_none());
    assert_eq!(s3.len(), 8);
    assert_eq!(c.gaze_scores().get("s1").unwrap().values, vec![120.0, 310.5, 95.0, 280.0]);
}

#[test]
fn corpus_errors_carry_line_numbers() {
    let dup = "{\"id\":\"a\",\"words\":[\"x\"],\"fixation_ms\":[1]}\n{\"id\":\"a\",\"words\":[\"y\"],\"fixation_ms\":[2]}";
    assert!(matches!(parse(dup), Err(CorpusError::DuplicateId { line: 2, .. })));

    let short = r#"{"id":"a","words":["x","y"],"fixation_ms":[1]}"#;
    assert!(matches!(parse(short), Err(CorpusError::Invalid { line: 1, .. })));

    let negative = r#"{"id":"a","words":["x"],"fixation_ms":[-3]}"#;
    assert!(matches!(parse(negative), Err(CorpusError::Invalid { .. })));

    let no_words = r#"{"id":"a","fixation_ms":[1]}"#;
    assert!(matches!(parse(no_words), Err(CorpusError::MissingField { field: "words", .. })));

    let no_gaze = r#"{"id":"a","words":["x"]}"#;
    assert!(matches!(parse(no_gaze), Err(CorpusError::MissingField { field: "fixation_ms", .. })));

    let ragged = r#"{"id":"a","words":["x","y"],"per_participant_ms":[[1,2],[3]]}"#;
    assert!(matches!(parse(ragged), Err(CorpusError::Invalid { .. })));

    let bad_pos = r#"{"id":"a","words":["x","y"],"fixation_ms":[1,2],"pos":["N"]}"#;
    assert!(matches!(parse(bad_pos), Err(CorpusError::Invalid { .. })));

    assert!(matches!(parse("{not json"), Err(CorpusError::Parse { line: 1, .. })));
    assert!(matches!(parse("\n\n"), Err(CorpusError::Empty)));
}

#[test]
fn score_file_reports_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    std::fs::write(&path, "{\"sentence_id\":\"a\",\"source\":\"x\",\"values\":[1.0]}\nnot json\n").unwrap();
    assert!(matches!(read_score_file(&path), Err(CorpusError::Parse { line: 2, .. })));
}

fn sample_tensor() -> AttentionTensor<f32> {
    let v = vec![0.5, 0.5, 0.25, 0.75, 1.0, 0.0, 0.125, 0.875];
    let tokens = vec!["[CLS]".to_string(), "héllo".to_string()];
    AttentionTensor::new(1, 2, 2, v, tokens, Some(vec![true, false])).unwrap()
}

#[test]
fn atnf_round_trip_and_header() {
    let t = sample_tensor();
    let mut bytes = Vec::new();
    write_tensor_to(&t, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"ATNF");
    assert_eq!(bytes[4], 1);
    assert_eq!(bytes[5], 1);
    assert_eq!(&bytes[6..8], &[0, 0]);
    assert_eq!(&bytes[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
    let back: AttentionTensor<f32> = read_tensor_from(bytes.as_slice()).unwrap();
    assert_eq!(back, t);
    let wide: AttentionTensor<f64> = read_tensor_from(bytes.as_slice()).unwrap();
    assert_eq!(wide.get(0, 1, 1, 1), 0.875);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_tensor_from::<f32, _>(bad.as_slice()).is_err());
    assert!(read_tensor_from::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn atnf_rejects_non_stochastic_rows() {
    let t = sample_tensor();
    let mut bytes = Vec::new();
    write_tensor_to(&t, &mut bytes).unwrap();
    // first value 0.5 -> 0.75
    bytes[20..24].copy_from_slice(&0.75f32.to_le_bytes());
    assert!(matches!(
        read_tensor_from::<f32, _>(bytes.as_slice()),
        Err(AttnError::RowSum { .. })
    ));
}

#[test]
fn fixture_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = generate(&FixtureConfig {
        sentences: 5,
        duplicates: 2,
        ..FixtureConfig::default()
    });
    write_fixtures(&fx, dir.path()).unwrap();

    let (manifest, base) = ExportManifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest, fx.manifest);
    let corpus = parse_corpus(dir.path().join(SR_CORPUS_FILE), CorpusFormat::JsonLines, Task::SR).unwrap();
    assert_eq!(corpus.len(), 5);
    for (entry, (id, tensor)) in manifest.sentences.iter().zip(&fx.tensors) {
        assert_eq!(&entry.id, id);
        let loaded: AttentionTensor<f32> = manifest.load(&base, entry).unwrap();
        assert_eq!(&loaded, tensor);
        assert_eq!(read_tensor::<f32>(manifest.resolve(&base, entry)).unwrap(), loaded);
        assert!(corpus.get(id).is_some());
    }

    let mut wrong = manifest.clone();
    wrong.heads += 1;
    assert!(wrong.load::<f32>(&base, &wrong.sentences[0]).is_err());
}
