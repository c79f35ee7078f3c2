use gradlab::io::{read_series, read_series_from, write_series, write_series_to, IoError};
use gradlab_core::mesh::{BoxDomain, Grid, SpaceTimeField};
use std::path::Path;

fn field() -> SpaceTimeField {
    let domain = BoxDomain::new(&[0.0, -1.0], &[2.0, 1.0]).unwrap();
    let grid = Grid::new(domain, &[5, 4]).unwrap();
    SpaceTimeField::from_fn(grid, vec![0.0, 0.1, 0.3], |x, t| (x[0] * 1.7).sin() * x[1] + t / 3.0)
        .unwrap()
        .with_stride(7)
}

#[test]
fn series_round_trip_is_exact() {
    let u = field();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    write_series(&path, &u).unwrap();
    let back = read_series(&path).unwrap();
    assert_eq!(back.grid(), u.grid());
    assert_eq!(back.times(), u.times());
    assert_eq!(back.stride(), 7);
    for (a, b) in back.snapshots().iter().zip(u.snapshots()) {
        assert_eq!(a.values(), b.values());
    }
    let mut again = Vec::new();
    write_series_to(&mut again, &back).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}

#[test]
fn malformed_input_is_reported_with_a_line() {
    let mut text = Vec::new();
    write_series_to(&mut text, &field()).unwrap();
    let text = String::from_utf8(text).unwrap().replacen("0.0000000000000000e0,", "zero,", 1);
    match read_series_from(text.as_bytes(), Path::new("u.csv")) {
        Err(IoError::Format { line, .. }) => assert!(line >= 3),
        other => panic!("expected a format error, got {other:?}"),
    }
    let short = "dims,2\nnodes,5\n";
    assert!(matches!(read_series_from(short.as_bytes(), Path::new("u.csv")), Err(IoError::Format { .. })));
    assert!(matches!(read_series(Path::new("/nonexistent/u.csv")), Err(IoError::Io { .. })));
}
