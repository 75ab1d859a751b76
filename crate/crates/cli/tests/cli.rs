use std::path::{Path, PathBuf};

use podtann_core::artifact::{load_dataset, load_field, load_model, read_bundle};
use podtann_core::tann::EnergyModel;
use serde_json::{json, Value};

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args: Vec<String> = vec![
        "podtann".into(),
        cmd.into(),
        "--config".into(),
        cfg.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    podtann_cli::run(args)
}

fn write_cfg(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn vm_point(su: f64) -> Value {
    json!({
        "params": { "young": 1.0e4, "poisson": 0.3, "hardening": 500.0, "model": { "kind": "von_mises", "su": su } },
        "weight": 0.5
    })
}

fn ruc_cfg(n_paths: usize, n_inc: usize, n_rot: usize, su: f64) -> Value {
    json!({
        "ensemble": { "kind": "points", "points": [vm_point(su), vm_point(1.5 * su)] },
        "paths": { "n_inc": n_inc, "std_dev": 1e-3, "init_vol_strain": -5e-4, "j2_cap": 0.015 },
        "n_paths": n_paths,
        "n_rotations": n_rot,
        "seed": 4
    })
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (head, rows)
}

/// Generates a small plastic dataset and its basis in `dir/data` and `dir/pod`.
fn small_pipeline(dir: &Path, r_list: Value) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let cfg = write_cfg(dir, "ruc.json", &ruc_cfg(3, 60, 1, 20.0));
    assert_eq!(run("gen-ruc", &cfg, &data, &[]), 0);
    let pod_cfg = write_cfg(
        dir,
        "pod.json",
        &json!({ "dataset": data.join("dataset.json"), "r_list": r_list }),
    );
    let pod = dir.join("pod");
    assert_eq!(run("pod", &pod_cfg, &pod, &[]), 0);
    (data.join("dataset.json"), pod.join("basis.json"))
}

#[test]
fn minimal_gen_ruc_has_one_sample_per_increment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.json", &ruc_cfg(1, 10, 0, 50.0));
    let out = dir.path().join("o");
    assert_eq!(run("gen-ruc", &cfg, &out, &[]), 0);
    let ds = load_dataset(&out.join("dataset.json")).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.layout.n_dof(), 2 * 13);
    let m = manifest(&out);
    assert_eq!(m["command"], "gen-ruc");
    assert!(m["outputs"]["dataset.bin"].is_string());
    assert_eq!(m["summary"]["samples"], 10);
}

#[test]
fn rotations_multiply_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.json", &ruc_cfg(2, 5, 3, 50.0));
    let out = dir.path().join("o");
    assert_eq!(run("gen-ruc", &cfg, &out, &[]), 0);
    let ds = load_dataset(&out.join("dataset.json")).unwrap();
    assert_eq!(ds.len(), 2 * 5 * 4);
    assert_eq!(ds.record_ranges().len(), 8);
    assert_eq!(*ds.group.iter().max().unwrap(), 1);
}

#[test]
fn gen_ruc_is_deterministic_and_rerunnable_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.json", &ruc_cfg(1, 20, 1, 30.0));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run("gen-ruc", &cfg, &a, &[]), 0);
    assert_eq!(run("gen-ruc", &cfg, &b, &[]), 0);
    assert_eq!(run("gen-ruc", &a.join("manifest.json"), &c, &[]), 0);
    let ha = manifest(&a)["outputs"].clone();
    assert_eq!(ha, manifest(&b)["outputs"]);
    assert_eq!(ha, manifest(&c)["outputs"]);
    let d = dir.path().join("d");
    assert_eq!(run("gen-ruc", &cfg, &d, &["--seed", "99"]), 0);
    assert_ne!(ha["dataset.bin"], manifest(&d)["outputs"]["dataset.bin"]);
    assert_eq!(manifest(&d)["config"]["seed"], 99);
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut bad = ruc_cfg(1, 5, 0, 50.0);
    bad["n_pathz"] = json!(3);
    let cfg = write_cfg(dir.path(), "bad.json", &bad);
    assert_eq!(run("gen-ruc", &cfg, &out, &[]), 2);
    let cfg = write_cfg(dir.path(), "bad2.json", &json!({ "n_paths": "many" }));
    assert_eq!(run("gen-ruc", &cfg, &out, &[]), 2);
    assert_eq!(run("gen-ruc", &dir.path().join("missing.json"), &out, &[]), 2);
    let cfg = write_cfg(dir.path(), "pod.json", &json!({ "dataset": "nowhere.json" }));
    assert_eq!(run("pod", &cfg, &out, &[]), 2);
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.json", &ruc_cfg(1, 5, 0, 50.0));
    let a = dir.path().join("a");
    assert_eq!(run("gen-ruc", &cfg, &a, &[]), 0);
    assert_eq!(run("pod", &a.join("manifest.json"), &dir.path().join("b"), &[]), 2);
}

#[test]
fn pod_reports_spectrum_energy_error_and_cr() {
    let dir = tempfile::tempdir().unwrap();
    let (_, basis) = small_pipeline(dir.path(), json!([2, 4, 8, "full"]));
    let pod = basis.parent().unwrap();
    let (head, rows) = read_csv(&pod.join("energy_error.csv"));
    assert_eq!(head, ["r", "cr_percent", "err_mean", "err_std", "err_mean_abs"]);
    assert_eq!(rows.len(), 4);
    let full = rows.last().unwrap();
    assert_eq!(full[0], 26.0);
    assert!(full[2].abs() < 1e-12 && full[4] < 1e-12, "{full:?}");
    for w in rows.windows(2) {
        assert!(w[1][4] <= w[0][4] + 1e-15, "{rows:?}");
    }
    assert_eq!(rows[1][1], (1.0 - 4.0 / 26.0) * 100.0);
    let (_, spec) = read_csv(&pod.join("spectrum.csv"));
    assert_eq!(spec.len(), 26);
    assert!((spec.last().unwrap()[3] - 1.0).abs() < 1e-12);
}

#[test]
fn pod_rejects_zero_or_oversized_rank() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = small_pipeline(dir.path(), json!([2]));
    for r in [json!([0]), json!([27])] {
        let cfg = write_cfg(dir.path(), "p.json", &json!({ "dataset": ds, "r_list": r }));
        assert_eq!(run("pod", &cfg, &dir.path().join("x"), &[]), 2);
    }
}

fn train_cfg(ds: &Path, basis: &Path, epochs: usize, lr: f64) -> Value {
    json!({
        "dataset": ds,
        "basis": basis,
        "train": { "epochs": epochs, "learning_rate": lr, "hidden": 8, "batch": 64, "seed": 5 }
    })
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, basis) = small_pipeline(dir.path(), json!([4]));
    let cfg = write_cfg(dir.path(), "t.json", &train_cfg(&ds, &basis, 0, 1e-3));
    let out = dir.path().join("t");
    assert_eq!(run("train", &cfg, &out, &[]), 0);
    let m = load_model(&out.join("model.json"), None).unwrap();
    let init = EnergyModel::init(6, 4, 8, 5);
    assert_eq!((m.w1, m.b1, m.w2), (init.w1, init.b1, init.w2));
    let (_, rows) = read_csv(&out.join("curves.csv"));
    assert!(rows.is_empty());
}

#[test]
fn training_descends_and_inference_header_is_documented() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, basis) = small_pipeline(dir.path(), json!([4]));
    let cfg = write_cfg(dir.path(), "t.json", &train_cfg(&ds, &basis, 40, 3e-3));
    let out = dir.path().join("t");
    assert_eq!(run("train", &cfg, &out, &[]), 0);
    let (_, rows) = read_csv(&out.join("curves.csv"));
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
    assert!(rows.last().unwrap()[1] <= rows[0][1]);

    let icfg = write_cfg(
        dir.path(),
        "i.json",
        &json!({ "model": out.join("model.json"), "basis": out.join("basis.json"), "dataset": ds, "records": [0] }),
    );
    let inf = dir.path().join("i");
    assert_eq!(run("infer", &icfg, &inf, &[]), 0);
    let text = std::fs::read_to_string(inf.join("predictions.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "record,increment,drive_0,drive_1,drive_2,drive_3,drive_4,drive_5,\
         response_0,response_1,response_2,response_3,response_4,response_5,\
         pred_response_0,pred_response_1,pred_response_2,pred_response_3,pred_response_4,pred_response_5,\
         energy,pred_energy,dissipation,pred_dissipation"
    );
    assert_eq!(text.lines().count(), 61);
}

#[test]
fn mismatched_basis_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, basis) = small_pipeline(dir.path(), json!([4]));
    let cfg = write_cfg(dir.path(), "t.json", &train_cfg(&ds, &basis, 1, 1e-3));
    let out = dir.path().join("t");
    assert_eq!(run("train", &cfg, &out, &[]), 0);
    let icfg = write_cfg(
        dir.path(),
        "i.json",
        &json!({ "model": out.join("model.json"), "basis": basis, "dataset": ds }),
    );
    // The trained model saw the same modes, so this must pass.
    assert_eq!(run("infer", &icfg, &dir.path().join("ok"), &[]), 0);
    let other = dir.path().join("other");
    let pcfg = write_cfg(dir.path(), "p3.json", &json!({ "dataset": ds, "r_list": [3] }));
    assert_eq!(run("pod", &pcfg, &other, &[]), 0);
    let icfg = write_cfg(
        dir.path(),
        "i2.json",
        &json!({ "model": out.join("model.json"), "basis": other.join("basis.json"), "dataset": ds }),
    );
    assert_eq!(run("infer", &icfg, &dir.path().join("bad"), &[]), 5);
}

#[test]
fn huge_learning_rate_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, basis) = small_pipeline(dir.path(), json!([4]));
    let cfg = write_cfg(dir.path(), "t.json", &train_cfg(&ds, &basis, 50, 1e300));
    assert_eq!(run("train", &cfg, &dir.path().join("t"), &[]), 4);
}

#[test]
fn reconstruction_error_vanishes_at_full_rank() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, basis) = small_pipeline(dir.path(), json!(["full"]));
    let cfg = write_cfg(
        dir.path(),
        "r.json",
        &json!({ "basis": basis, "dataset": ds, "r_list": [2, 5, 10, "full"] }),
    );
    let out = dir.path().join("r");
    assert_eq!(run("reconstruct", &cfg, &out, &[]), 0);
    let (head, rows) = read_csv(&out.join("reconstruction.csv"));
    assert_eq!(head.first().unwrap(), "r");
    assert_eq!(head.last().unwrap(), "mae_all");
    let all = head.len() - 1;
    assert!(rows.last().unwrap()[all] < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1][all] <= w[0][all]);
    }
}

#[test]
fn field_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "f.json",
        &json!({ "grid": { "lx": 1.0, "ly": 1.0, "lz": 1.0, "nx": 4, "ny": 4, "nz": 4 }, "kappa": 5.0, "seed": 3, "mean": 2.0, "std": 0.5 }),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("gen-field", &cfg, &a, &[]), 0);
    assert_eq!(run("gen-field", &cfg, &b, &[]), 0);
    let f = load_field(&a.join("field.json")).unwrap();
    assert_eq!(f.values.len(), 64);
    assert!((f.mean() - 2.0).abs() < 1e-12 && (f.std() - 0.5).abs() < 1e-12);
    assert_eq!(std::fs::read(a.join("field.bin")).unwrap(), std::fs::read(b.join("field.bin")).unwrap());
    let (head, rows) = read_csv(&a.join("autocorrelation.csv"));
    assert_eq!(head, ["r", "empirical", "theoretical"]);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[0][1] - 1.0).abs() < 1e-12);
    let (_, hist) = read_csv(&a.join("histogram.csv"));
    assert_eq!(hist.iter().map(|r| r[2]).sum::<f64>(), 64.0);
}

#[test]
fn binary_reports_are_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "f.json", &json!({ "grid": { "lx": 1.0, "ly": 1.0, "lz": 1.0, "nx": 4, "ny": 4, "nz": 4 } }));
    let a = dir.path().join("a");
    assert_eq!(run("gen-field", &cfg, &a, &["--format", "binary"]), 0);
    let (m, blocks) = read_bundle(&a.join("histogram.json")).unwrap();
    assert_eq!(m.kind, "report");
    assert_eq!(blocks["table"].cols, 3);
    assert!(!a.join("histogram.csv").exists());
}

fn macro_cfg(h_ratio: f64, f_max: f64) -> Value {
    json!({
        "iwan": { "n_el": 20, "k_total": 1.0e4, "fy_min": 1.0, "fy_max": 10.0, "h_ratio": h_ratio, "seed": 2 },
        "paths": { "n_inc": 40, "n_turns": 4, "f_max": f_max },
        "n_paths": 3,
        "seed": 8,
        "cycles": [[50.0, -50.0, 50.0]],
        "cycle_steps": 10
    })
}

#[test]
fn macro_gen_and_capacity_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_cfg(dir.path(), "m.json", &macro_cfg(0.02, 80.0));
    let out = dir.path().join("m");
    assert_eq!(run("macro-gen", &ok, &out, &[]), 0);
    let ds = load_dataset(&out.join("dataset.json")).unwrap();
    assert_eq!(ds.len(), 120);
    assert_eq!(ds.layout.n_dof(), 60);
    let cyc = load_dataset(&out.join("cycles.json")).unwrap();
    assert_eq!(cyc.len(), 30);
    let bad = write_cfg(dir.path(), "b.json", &macro_cfg(0.0, 500.0));
    assert_eq!(run("macro-gen", &bad, &dir.path().join("b"), &[]), 3);
}

#[test]
fn macro_pipeline_trains_a_gibbs_model() {
    let dir = tempfile::tempdir().unwrap();
    let mcfg = write_cfg(dir.path(), "m.json", &macro_cfg(0.02, 80.0));
    let data = dir.path().join("m");
    assert_eq!(run("macro-gen", &mcfg, &data, &[]), 0);
    let ds = data.join("dataset.json");
    let pcfg = write_cfg(dir.path(), "p.json", &json!({ "dataset": ds, "r_list": [1, 3, 6] }));
    let pod = dir.path().join("p");
    assert_eq!(run("pod", &pcfg, &pod, &[]), 0);
    let (_, err) = read_csv(&pod.join("energy_error.csv"));
    assert_eq!(err.len(), 3);
    let tcfg = write_cfg(dir.path(), "t.json", &train_cfg(&ds, &pod.join("basis.json"), 20, 3e-3));
    let t = dir.path().join("t");
    assert_eq!(run("train-macro", &tcfg, &t, &[]), 0);
    let m = load_model(&t.join("model.json"), None).unwrap();
    assert_eq!(m.potential, podtann_core::tann::Potential::Gibbs);
    assert_eq!((m.n_drive, m.r), (1, 6));
}

#[test]
fn ingest_feeds_pod() {
    let dir = tempfile::tempdir().unwrap();
    let n_el = 3;
    let layout = podtann_core::pod::IcLayout::iwan(n_el);
    let n = 5;
    let xi: Vec<f64> = (0..layout.n_dof() * n).map(|i| (i as f64 * 0.37).sin()).collect();
    let blocks = [
        podtann_core::artifact::Block::new("XI", "mixed", layout.n_dof(), n, xi),
        podtann_core::artifact::Block::new("F", "kN", n, 1, vec![1.0, 2.0, 3.0, 2.0, 1.0]),
        podtann_core::artifact::Block::new("U", "m", n, 1, vec![0.1, 0.2, 0.35, 0.3, 0.2]),
    ];
    let (export, _) = podtann_core::artifact::write_bundle(
        dir.path(),
        "export",
        "snapshots",
        json!({ "layout": layout }),
        &blocks,
    )
    .unwrap();
    let icfg = write_cfg(dir.path(), "i.json", &json!({ "manifest": export, "normalization": "max_abs" }));
    let out = dir.path().join("i");
    assert_eq!(run("ingest", &icfg, &out, &[]), 0);
    let pcfg = write_cfg(dir.path(), "p.json", &json!({ "dataset": out.join("snapshots.json"), "r_list": [2, 5] }));
    assert_eq!(run("pod", &pcfg, &dir.path().join("p"), &[]), 0);
    assert!(!dir.path().join("p").join("energy_error.csv").exists());
}

#[test]
fn relative_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = small_pipeline(dir.path(), json!([3]));
    let cfg = write_cfg(dir.path(), "rel.json", &json!({ "dataset": "data/dataset.json", "r_list": [3] }));
    let out = dir.path().join("again");
    assert_eq!(run("pod", &cfg, &out, &[]), 0);
    let echoed = manifest(&out)["config"]["dataset"].as_str().unwrap().to_string();
    assert!(Path::new(&echoed).is_absolute(), "{echoed}");
    assert_eq!(
        manifest(&out)["outputs"]["basis.bin"],
        manifest(&dir.path().join("pod"))["outputs"]["basis.bin"]
    );
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_podtann");
    let st = std::process::Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let cfg = write_cfg(dir.path(), "c.json", &ruc_cfg(1, 5, 0, 50.0));
    let st = std::process::Command::new(bin)
        .env("PODTANN_THREADS", "1")
        .args(["gen-ruc", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let summary: Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(summary["samples"], 5);
}
