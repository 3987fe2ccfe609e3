use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mobserv_cli::{ExperimentSpec, Manifest};

fn mobserv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobserv")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn transit_brute_force_on_c7() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mobserv(tmp.path(), &["transit", "--graph", "cycle", "--K", "7", "--method", "brute", "--out", "t"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("t/result.json")).unwrap()).unwrap();
    assert_eq!(v["value_num"], "4");
    assert_eq!(v["value_den"], "7");
}

#[test]
fn curve_rows_and_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mobserv(tmp.path(), &["nlmp-curve", "--beta", "1", "--grid", "99", "--out", "c"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(tmp.path().join("c/curve.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 99);
    assert!(rows.iter().all(|&(_, l)| l > 0.0));
    // Both ends head to 0.
    let peak = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    assert!(rows[0].1 < 0.1 * peak && rows[98].1 < 0.1 * peak);
    let dat = fs::read_to_string(tmp.path().join("c/curve.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 99);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&mobserv(tmp.path(), &["transit", "--no-such-flag"])), 2);
    assert_eq!(code(&mobserv(tmp.path(), &["frobnicate"])), 2);
    let o = mobserv(tmp.path(), &["drift", "--K", "4", "--beta=-1", "--out", "d"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("params.graph") && err.contains("params.beta"), "{err}");
    assert!(!tmp.path().join("d").exists());
    assert_eq!(code(&mobserv(tmp.path(), &["sweep", "--axis", "K", "--values", "", "drift"])), 2);
    assert_eq!(code(&mobserv(tmp.path(), &["run"])), 2);
}

#[test]
fn manifest_round_trip_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mobserv(
        tmp.path(),
        &["absorption", "--beta", "2", "--gamma", "0.3", "--particles", "500", "--seed", "9", "--out", "a"],
    );
    assert_eq!(code(&o), 0);
    let manifest = Manifest::load(&tmp.path().join("a")).unwrap();
    let reloaded = ExperimentSpec::load(&tmp.path().join("a/manifest.json")).unwrap();
    assert_eq!(manifest.spec, reloaded);
    assert_eq!(manifest.spec.seed, 9);

    // Re-running from the manifest, elsewhere, gives the same result files.
    let o = mobserv(tmp.path(), &["run", "--config", "a/manifest.json", "--out", "b"]);
    assert_eq!(code(&o), 0);
    for file in manifest.digests.keys() {
        assert_eq!(fs::read(tmp.path().join("a").join(file)).unwrap(), fs::read(tmp.path().join("b").join(file)).unwrap());
    }
    assert_eq!(Manifest::load(&tmp.path().join("b")).unwrap().digests, manifest.digests);
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{"name":"roots","seed":1,"out":"r","experiment":{"subcommand":"nlmp-roots","params":{"lambda":0.01,"beta":2}}}"#;
    fs::write(tmp.path().join("spec.json"), spec).unwrap();
    let o = mobserv(tmp.path(), &["nlmp-roots", "--config", "spec.json", "--beta", "1"]);
    assert_eq!(code(&o), 0);
    let m = Manifest::load(&tmp.path().join("r")).unwrap();
    let text = serde_json::to_string(&m.spec.experiment).unwrap();
    assert!(text.contains("\"lambda\":0.01") && text.contains("\"beta\":1.0"), "{text}");
    // A config for another subcommand is refused.
    assert_eq!(code(&mobserv(tmp.path(), &["nlmp-curve", "--config", "spec.json"])), 2);
}

#[test]
fn sweep_table_and_failed_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mobserv(
        tmp.path(),
        &["sweep", "--axis", "K", "--values", "5,7,9,11", "--out", "s", "drift", "--lambda", "0.5", "--blocks", "40"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let drift: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    // K* = 3 / lambda = 6: the sign flips between K = 5 and K = 7.
    assert!(drift[0] < 0.0 && drift[1..].iter().all(|&d| d > 0.0), "{table}");

    // The lifetime default threshold needs lambda < lambda_plus; the cell at
    // lambda = 0.9 fails at run time while the other one is kept.
    let o = mobserv(
        tmp.path(),
        &["sweep", "--axis", "lambda", "--values", "0.5,0.9", "--out", "f", "lifetime", "--runs", "2", "--horizon", "50"],
    );
    assert_eq!(code(&o), 1);
    let table = fs::read_to_string(tmp.path().join("f/sweep.csv")).unwrap();
    assert!(table.contains(",ok,") && table.contains(",failed,"), "{table}");
    let cells = fs::read_dir(tmp.path().join("f")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(cells, 1);
}
