use std::fs;
use std::process::Command;

fn heatslice() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatslice"))
}

#[test]
fn index_on_torus_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("torus.toml");
    fs::write(
        &cfg,
        "[manifold]\nkind = \"torus\"\nperiods = [6.283185307179586, 6.283185307179586]\nresolution = [8, 8]\n\n[index]\ndensity_resolution = [8, 8]\ndepth = 2\n\n[time]\nt = 0.25\nsweep = [0.2, 0.3]\n",
    )
    .unwrap();
    let out = heatslice().args(["index", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("[PASS]"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("o/index.csv")).unwrap();
    assert!(csv.starts_with("route,t,index\n"));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/index.json")).unwrap()).unwrap();
    assert_eq!(sidecar["passed"], true);
    assert_eq!(sidecar["config"]["manifold"]["kind"], "torus");
}

#[test]
fn flat_model_passes_and_impossible_bar_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = heatslice().args(["flat-model", "--threads", "1", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(dir.path().join("flat-model.csv").exists());

    let bad = heatslice().args(["flat-model", "--tol-override", "flat_model_abs=1e-30", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("[FAIL]"));
}

#[test]
fn config_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[manifold]\nkind = \"sphere\"\nradious = 1.0\n").unwrap();
    let out = heatslice().args(["geometry", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radious"));

    let out = heatslice().args(["geometry", "--tol-override", "no_such_bar=1"]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn geometry_identities_hold() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatslice().arg("geometry").arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("geometry.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = heatslice::cli::ExperimentConfig::load(&path).unwrap();
        cfg.manifold.build().unwrap();
    }
}
