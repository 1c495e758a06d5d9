use std::path::Path;
use std::process::Command;

use thbbpx_core::bench::{CSV_HEADER, CUBE, LSHAPE_C0, SQUARE};
use thbbpx_core::geometry::GeometryMap;

fn thbbpx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thbbpx"))
}

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn shipped_geometries_match_the_builtin_ones() {
    for (file, text, d) in [("square.geo", SQUARE, 2), ("lshape_c0.geo", LSHAPE_C0, 2), ("cube.geo", CUBE, 3)] {
        let a = GeometryMap::read(&data(file)).unwrap();
        let b = GeometryMap::parse(text).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                let xi = [i as f64 / 4.0, j as f64 / 4.0, if d == 3 { 0.3 } else { 0.0 }];
                let (pa, pb) = (a.eval(&xi, 1).unwrap(), b.eval(&xi, 1).unwrap());
                assert_eq!(pa.x, pb.x, "{file} at {xi:?}");
                assert_eq!(pa.det, pb.det, "{file} at {xi:?}");
            }
        }
    }
}

#[test]
fn small_run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = thbbpx()
        .args(["test1", "--degree", "1", "--levels", "3", "--decomp", "tsupp", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,"));
    let file = std::fs::read_to_string(dir.path().join("test1_d2_p1_thb_tsupp_sgs_admnone.csv")).unwrap();
    assert_eq!(file, stdout);
    assert!(dir.path().join("test1_d2_p1_thb_tsupp_sgs_admnone_L3.svg").exists());
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["test1", "--decomp", "everything"],
        vec!["test1", "--adm", "Q:2"],
        vec!["test3", "--levels", "3"],
        vec!["test1", "--decomp", "hsupp", "--basis", "thb"],
        vec!["test1", "--levels", "99"],
        vec!["nonsense"],
    ] {
        let out = thbbpx().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn thread_variable_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let out = thbbpx()
        .env("THBBPX_THREADS", "many")
        .args(["test1", "--degree", "1", "--levels", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
