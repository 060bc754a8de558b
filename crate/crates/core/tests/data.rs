use std::fs;

use sparsemix::data::{read_categorical_csv, read_counts_csv, read_regression_csv};
use sparsemix::datasets::{load_fear, FEAR_TABLE};
use sparsemix::Error;

#[test]
fn categorical_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fear.csv");
    let fear = load_fear();
    let mut text = String::from("M:4,C:3,F:3\n");
    for r in fear.rows_one_based() {
        text.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
    }
    fs::write(&path, text).unwrap();
    let back = read_categorical_csv(&path).unwrap();
    assert_eq!(back.cards(), fear.cards());
    assert_eq!(back.names(), fear.names());
    assert_eq!(back.rows_one_based(), fear.rows_one_based());
    let total: usize = FEAR_TABLE.iter().flatten().flatten().sum();
    assert_eq!(back.n_obs(), total);
}

#[test]
fn bad_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("cat.csv");
    fs::write(&cat, "a:2,b\n1,2\n3,1\n").unwrap();
    assert!(read_categorical_csv(&cat).is_err());
    fs::write(&cat, "a,b\n1,x\n").unwrap();
    assert!(matches!(read_categorical_csv(&cat), Err(Error::Data(_))));
    let counts = dir.path().join("y.csv");
    fs::write(&counts, "count\n1\n").unwrap();
    assert!(matches!(read_counts_csv(&counts), Err(Error::Data(_))));
    fs::write(&counts, "y\n1\n-2\n").unwrap();
    assert!(matches!(read_counts_csv(&counts), Err(Error::Data(_))));
    assert!(read_counts_csv(dir.path().join("absent.csv")).is_err());
}

#[test]
fn counts_and_regression_files() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("y.csv");
    fs::write(&counts, "id,y\n1,3\n2,0\n3,7.0\n").unwrap();
    assert_eq!(read_counts_csv(&counts).unwrap().y(), &[3, 0, 7]);
    let reg = dir.path().join("reg.csv");
    fs::write(&reg, "x1,y,x2\n0.5,2,1\n-1,0,0\n2,5,1\n0,1,0\n").unwrap();
    let r = read_regression_csv(&reg).unwrap();
    assert_eq!(r.y(), &[2, 0, 5, 1]);
    assert_eq!(r.n_cols(), 3);
    assert_eq!(r.row(0), &[1.0, 0.5, 1.0]);
    assert!(r.full_column_rank());
}
