use std::fs;
use std::io::Cursor;

use tcn_nids::numerics::Rng;
use tcn_nids::pipeline::{
    generate_fixture, read_csv, read_matrix, read_split, run_pipeline, write_matrix, write_split, ClassVocabulary,
    FixtureConfig, PipelineConfig, SchemaHints, MATRIX_MAGIC,
};
use tcn_nids::Error;

fn fixture_csv(per_class: usize) -> Vec<u8> {
    let cfg = FixtureConfig {
        per_class,
        numeric_features: 6,
        categorical_features: 2,
        ..Default::default()
    };
    let mut bytes = Vec::new();
    generate_fixture(&cfg, &mut Rng::new(5)).unwrap().table.write_csv(&mut bytes).unwrap();
    bytes
}

fn hints() -> SchemaHints {
    SchemaHints {
        label_column: Some("Attack_type".into()),
        ..Default::default()
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        fraction: 1.0,
        ..Default::default()
    }
}

#[test]
fn csv_to_split_directory_and_back() {
    let bytes = fixture_csv(20);
    let (table, load) = read_csv(Cursor::new(bytes), &hints()).unwrap();
    let out = run_pipeline(&table, &load, &ClassVocabulary::edge_iiot(), &config(), 1, "h".into()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut sidecar = out.sidecar.clone();
    write_split(dir.path(), &out.split, &mut sidecar, &out.report).unwrap();
    let (split, back) = read_split(dir.path()).unwrap();
    assert_eq!(split, out.split);
    assert_eq!(back, sidecar);

    // the three partitions are disjoint and cover every row
    let mut origin: Vec<usize> = [&split.train, &split.val, &split.test]
        .iter()
        .flat_map(|p| p.origin_rows.iter().copied())
        .collect();
    origin.sort_unstable();
    assert_eq!(origin, (0..300).collect::<Vec<_>>());
}

#[test]
fn tampered_split_files_are_rejected() {
    let (table, load) = read_csv(Cursor::new(fixture_csv(10)), &hints()).unwrap();
    let out = run_pipeline(&table, &load, &ClassVocabulary::edge_iiot(), &config(), 1, "h".into()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut sidecar = out.sidecar.clone();
    write_split(dir.path(), &out.split, &mut sidecar, &out.report).unwrap();

    let path = dir.path().join("val.bin");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_split(dir.path()), Err(Error::Compatibility(_))));
}

#[test]
fn matrix_format_round_trip_and_checks() {
    let data = vec![1.5, -2.0, 0.0, f64::MAX, 3.25, 7.0];
    let bytes = write_matrix(2, 3, &data);
    assert_eq!(&bytes[..4], MATRIX_MAGIC);
    assert_eq!(read_matrix(&bytes).unwrap(), (2, 3, data));

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_matrix(&bad_magic), Err(Error::Corrupt(_))));
    let mut newer = bytes.clone();
    newer[4] = 9;
    assert!(matches!(read_matrix(&newer), Err(Error::Version { found: 9, .. })));
    assert!(read_matrix(&bytes[..bytes.len() - 8]).is_err());
}

#[test]
fn unknown_label_names_are_rejected() {
    let csv = "a,Attack_type\n1,Normal\n2,Alien\n";
    let (table, load) = read_csv(Cursor::new(csv), &hints()).unwrap();
    let err = run_pipeline(&table, &load, &ClassVocabulary::edge_iiot(), &config(), 1, "h".into()).unwrap_err();
    assert!(err.to_string().contains("Alien"), "{err}");
}

#[test]
fn missing_values_are_imputed_and_counted() {
    let csv = "x,y,Attack_type\n1,NaN,Normal\n,2,Normal\n3,4,Normal\n";
    let (table, load) = read_csv(Cursor::new(csv), &hints()).unwrap();
    assert_eq!(load.imputations, 2);
    assert_eq!(table.n_rows(), 3);
}
