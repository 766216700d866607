//! Reference outputs for three small configs. Set `KERRCAT_BLESS=1` to
//! regenerate the files under `golden/expected/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kerrcat_cli::output::read_csv;

const RTOL: f64 = 1e-7;
const ATOL: f64 = 1e-9;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn check(name: &str) {
    let config = golden_dir().join(format!("{name}.toml"));
    let expected = golden_dir().join("expected").join(name);
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_kerrcat"))
        .args(["run", config.to_str().unwrap(), "--output-dir", out.path().to_str().unwrap()])
        .env_remove("KERRCAT_WORKERS")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    if std::env::var_os("KERRCAT_BLESS").is_some() {
        let _ = fs::remove_dir_all(&expected);
        fs::create_dir_all(&expected).unwrap();
        for f in csv_names(out.path()) {
            fs::copy(out.path().join(&f), expected.join(&f)).unwrap();
        }
        return;
    }

    assert_eq!(csv_names(out.path()), csv_names(&expected), "{name}: table set");
    for f in csv_names(&expected) {
        let (h_exp, r_exp) = read_csv(&fs::read_to_string(expected.join(&f)).unwrap()).unwrap();
        let (h_got, r_got) = read_csv(&fs::read_to_string(out.path().join(&f)).unwrap()).unwrap();
        assert_eq!(h_got, h_exp, "{f}: header");
        assert_eq!(r_got.len(), r_exp.len(), "{f}: rows");
        for (k, (a, b)) in r_got.iter().zip(&r_exp).enumerate() {
            for (j, (x, y)) in a.iter().zip(b).enumerate() {
                let ok = (x.is_nan() && y.is_nan()) || (x - y).abs() <= ATOL + RTOL * y.abs();
                assert!(ok, "{f} row {k} column {}: {x} vs {y}", h_exp[j]);
            }
        }
    }
}

#[test]
fn cat_steady_matches_reference() {
    check("cat_steady");
}

#[test]
fn metastability_matches_reference() {
    check("metastability");
}

#[test]
fn feedback_matches_reference() {
    check("feedback");
}
