use std::path::{Path, PathBuf};

use podtann_core::artifact::{
    load_basis, load_dataset, load_evolution, load_model, read_bundle, read_manifest, save_basis, save_dataset, save_evolution,
    save_field, save_model, write_bundle, ArtifactError, Block, Dataset, Manifest,
};
use podtann_core::ensemble::{
    augment_rotation, generate_strain_path, parameter_summary, simulate_paths, Ensemble, PathRecord,
};
use podtann_core::macroelement::{
    cycle_path, ingest_snapshots, random_force_path, select_modes_by_singular_threshold, simulate_iwan, train_macro,
    IwanSpec, IwanSystem, MacroError, MacroRecord,
};
use podtann_core::pod::{
    compression_ratio, compute_pod_basis, energy_reconstruction_error, reconstruction_mae, PodBasis, SnapshotMatrix,
};
use podtann_core::random_field::{
    circular_autocorrelation, generate_correlated_field, radial_profile, scale_field, theoretical_autocorrelation,
};
use podtann_core::tann::{infer_path, train, train_evolution, EvolutionModel, TannError, TrainOutcome};
use podtann_core::tensor::random_rotation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::*;
use crate::report::{ReportFormat, Table};
use crate::CliError;

/// Output directory plus the list of files written so far.
pub struct Outputs {
    pub dir: PathBuf,
    pub format: ReportFormat,
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf, format: ReportFormat) -> Self {
        Self {
            dir,
            format,
            files: Vec::new(),
        }
    }

    fn bundle(&mut self, r: Result<(PathBuf, Manifest), ArtifactError>) -> Result<PathBuf, CliError> {
        let (json, m) = r?;
        self.files.push(json.clone());
        self.files.push(self.dir.join(&m.data_file));
        Ok(json)
    }

    fn table(&mut self, t: &Table, stem: &str) -> Result<(), CliError> {
        let files = t.write(&self.dir, stem, self.format)?;
        self.files.extend(files);
        Ok(())
    }
}

fn sim_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Simulation(e.to_string())
}

fn train_err(e: TannError) -> CliError {
    match e {
        TannError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Training(other.to_string()),
    }
}

pub fn gen_ruc(cfg: &RucConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let ens = cfg.ensemble.build()?;
    if cfg.n_paths == 0 {
        return Err(CliError::Config("n_paths must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let paths = (0..cfg.n_paths)
        .map(|_| generate_strain_path(&mut rng, &cfg.paths))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let base = simulate_paths(&ens, &paths).map_err(sim_err)?;
    let mut records: Vec<PathRecord> = Vec::with_capacity(base.len() * (1 + cfg.n_rotations));
    let mut groups = Vec::new();
    for (g, rec) in base.iter().enumerate() {
        records.push(rec.clone());
        groups.push(g);
        for _ in 0..cfg.n_rotations {
            records.push(augment_rotation(rec, &random_rotation(&mut rng)));
            groups.push(g);
        }
    }
    let mut ds = Dataset::from_path_records(ens.layout(), &records, &groups);
    ds.meta = json!({ "source": "ruc", "ensemble": ens, "seed": cfg.seed });
    out.bundle(save_dataset(&out.dir, "dataset", &ds))?;

    let mut params = Table::new(&["parameter_index", "min", "max", "mean"]);
    let summary = parameter_summary(&ens);
    for (i, (_, v)) in summary.iter().enumerate() {
        params.push(vec![i as f64, v[0], v[1], v[2]]);
    }
    out.table(&params, "parameters")?;
    let n_dof = ds.layout.n_dof();
    let candidates: Vec<Value> = [5usize, 10, 25, 50, 100]
        .iter()
        .filter(|&&r| r <= n_dof)
        .map(|&r| json!({ "r": r, "cr_percent": compression_ratio(r, n_dof) }))
        .collect();
    Ok(json!({
        "paths": cfg.n_paths,
        "records": records.len(),
        "increments": cfg.paths.n_inc,
        "samples": ds.len(),
        "ic_dofs": n_dof,
        "parameters": summary.keys().collect::<Vec<_>>(),
        "cr_candidates": candidates,
    }))
}

pub fn gen_field(cfg: &FieldConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let cfg_err = |e: podtann_core::random_field::FieldError| CliError::Config(e.to_string());
    cfg.grid.validate().map_err(cfg_err)?;
    let raw = generate_correlated_field(&cfg.grid, cfg.kappa, cfg.seed).map_err(cfg_err)?;
    let f = scale_field(&raw, cfg.mean, cfg.std).map_err(sim_err)?;
    out.bundle(save_field(&out.dir, "field", &f))?;

    let bins = cfg.histogram_bins.max(1);
    let lo = f.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in &f.values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut hist = Table::new(&["bin_lo", "bin_hi", "count"]);
    for (i, c) in counts.iter().enumerate() {
        hist.push(vec![lo + i as f64 * width, lo + (i + 1) as f64 * width, *c as f64]);
    }
    out.table(&hist, "histogram")?;

    let emp = radial_profile(&cfg.grid, &circular_autocorrelation(&f));
    let theo = radial_profile(&cfg.grid, &theoretical_autocorrelation(&cfg.grid, cfg.kappa));
    let mut ac = Table::new(&["r", "empirical", "theoretical"]);
    for ((r, e), (_, t)) in emp.iter().zip(&theo) {
        ac.push(vec![*r, *e, *t]);
    }
    out.table(&ac, "autocorrelation")?;
    Ok(json!({ "values": f.values.len(), "mean": f.mean(), "std": f.std() }))
}

/// Macroscopic energy of an IC vector, rebuilt from the dataset's provenance.
fn energy_function(info: &Value) -> Result<Option<Box<dyn Fn(&[f64]) -> f64 + Sync>>, CliError> {
    match info.get("source").and_then(Value::as_str) {
        Some("ruc") => {
            let ens: Ensemble = serde_json::from_value(info["ensemble"].clone())
                .map_err(|e| CliError::Config(format!("dataset ensemble: {e}")))?;
            Ok(Some(Box::new(move |xi: &[f64]| ens.energy_of_ics(xi))))
        }
        Some("iwan") => {
            let spec: IwanSpec = serde_json::from_value(info["iwan"].clone())
                .map_err(|e| CliError::Config(format!("dataset iwan spec: {e}")))?;
            let sys = spec.build().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Some(Box::new(move |xi: &[f64]| sys.energy_of_ics(xi))))
        }
        _ => Ok(None),
    }
}

/// Snapshots and energy provenance from a dataset or an ingested snapshot bundle.
fn load_snapshots(path: &Path, exclude: &[usize], records: Option<&[usize]>) -> Result<(SnapshotMatrix, Value), CliError> {
    if read_manifest(path)?.kind == "snapshots" {
        let (m, mut blocks) = read_bundle(path)?;
        let layout = serde_json::from_value(m.meta["layout"].clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let xi = blocks
            .remove("XI")
            .ok_or_else(|| CliError::Config("snapshot bundle lacks XI".into()))?;
        let s = SnapshotMatrix::new(xi.to_matrix(), layout).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((s, Value::Null));
    }
    let ds = load_dataset(path)?;
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| !exclude.contains(&ds.group[i]))
        .filter(|&i| records.is_none_or(|r| r.contains(&ds.record[i])))
        .collect();
    if keep.is_empty() {
        return Err(CliError::Config("no snapshots selected".into()));
    }
    let s = SnapshotMatrix {
        data: ds.xi.select_columns(keep.iter()),
        layout: ds.layout.clone(),
    };
    Ok((s, ds.meta))
}

pub fn pod(cfg: &PodConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let (snaps, info) = load_snapshots(&cfg.dataset, &cfg.exclude_groups, None)?;
    let n_dof = snaps.n_dof();
    let full = n_dof.min(snaps.n_snap());
    let mut rs: Vec<usize> = cfg.r_list.iter().map(|r| r.resolve(full)).collect();
    if let Some(&bad) = rs.iter().find(|&&r| r == 0 || r > full) {
        return Err(CliError::Config(format!("mode count {bad} outside 1..={full}")));
    }
    let keep = cfg.rank.map(|r| r.resolve(full)).unwrap_or_else(|| rs.iter().copied().max().unwrap_or(full));
    if keep == 0 || keep > full {
        return Err(CliError::Config(format!("rank {keep} outside 1..={full}")));
    }
    let eval_rank = keep.max(rs.iter().copied().max().unwrap_or(0));
    let basis_all = compute_pod_basis(&snaps, eval_rank).map_err(sim_err)?;
    let basis = basis_all.truncate(keep).map_err(sim_err)?;
    out.bundle(save_basis(&out.dir, "basis", &basis))?;

    let sigma = &basis.singular_values;
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut spec = Table::new(&["index", "sigma", "sigma_normalized", "cumulative_energy"]);
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        spec.push(vec![(i + 1) as f64, *s, s / sigma[0].max(f64::MIN_POSITIVE), acc / total.max(f64::MIN_POSITIVE)]);
    }
    out.table(&spec, "spectrum")?;

    rs.dedup();
    let mut err = Table::new(&["r", "cr_percent", "err_mean", "err_std", "err_mean_abs"]);
    if let Some(energy) = energy_function(&info)? {
        let rows = energy_reconstruction_error(&basis_all, &rs, &snaps.data, energy, cfg.norm).map_err(sim_err)?;
        for row in rows {
            err.push(vec![row.r as f64, compression_ratio(row.r, n_dof), row.mean, row.std, row.mean_abs]);
        }
        out.table(&err, "energy_error")?;
    }
    let threshold_r = select_modes_by_singular_threshold(sigma, cfg.threshold);
    Ok(json!({
        "snapshots": snaps.n_snap(),
        "ic_dofs": n_dof,
        "rank": keep,
        "threshold_modes": threshold_r,
        "cr_percent": compression_ratio(keep, n_dof),
        "basis_fingerprint": basis.fingerprint(),
    }))
}

fn prepared_dataset(cfg: &TrainCmdConfig) -> Result<(Dataset, PodBasis), CliError> {
    let mut basis = load_basis(&cfg.basis)?;
    if let Some(r) = cfg.r {
        basis = basis.truncate(r).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut ds = load_dataset(&cfg.dataset)?;
    if ds.layout.fingerprint() != basis.layout.fingerprint() {
        return Err(CliError::Mismatch(format!(
            "dataset layout {} does not match basis layout {}",
            ds.layout.fingerprint(),
            basis.layout.fingerprint()
        )));
    }
    ds.attach_basis(&basis).map_err(|e| CliError::Mismatch(e.to_string()))?;
    Ok((ds, basis))
}

fn write_training(out: &mut Outputs, outcome: &TrainOutcome, cfg: &TrainCmdConfig, basis: &PodBasis) -> Result<Value, CliError> {
    out.bundle(save_basis(&out.dir, "basis", basis))?;
    let info = json!({ "train": cfg.train, "early_stopped": outcome.early_stopped });
    out.bundle(save_model(&out.dir, "model", &outcome.model, info))?;
    let mut t = Table::new(&[
        "epoch",
        "train_total",
        "train_psi",
        "train_response",
        "train_d",
        "train_d_sign",
        "val_total",
        "val_psi",
        "val_response",
        "val_d",
        "val_d_sign",
    ]);
    for rec in &outcome.curves {
        let tr = &rec.train;
        let mut row = vec![rec.epoch as f64, tr.total, tr.psi, tr.response, tr.d, tr.d_sign];
        match &rec.val {
            Some(v) => row.extend([v.total, v.psi, v.response, v.d, v.d_sign]),
            None => row.extend([f64::NAN; 5]),
        }
        t.push(row);
    }
    out.table(&t, "curves")?;
    let last = outcome.curves.last();
    Ok(json!({
        "epochs_run": outcome.curves.len(),
        "early_stopped": outcome.early_stopped,
        "final_train": last.map(|r| r.train.total),
        "final_val": last.and_then(|r| r.val.as_ref().map(|v| v.total)),
        "train_groups": outcome.train_paths,
        "val_groups": outcome.val_paths,
        "basis_fingerprint": basis.fingerprint(),
    }))
}

fn train_common(cfg: &TrainCmdConfig, out: &mut Outputs, gibbs: bool) -> Result<Value, CliError> {
    let (ds, basis) = prepared_dataset(cfg)?;
    let samples = ds.samples()?;
    let mut outcome = if gibbs {
        train_macro(&samples, &cfg.train)
    } else {
        train(&samples, &cfg.train)
    }
    .map_err(train_err)?;
    outcome.model.basis_fingerprint = basis.fingerprint();
    let mut summary = write_training(out, &outcome, cfg, &basis)?;
    if outcome.early_stopped {
        eprintln!("early stop after {} epochs", outcome.curves.len());
    }
    if let Some(ecfg) = &cfg.evolution {
        let mut evo = train_evolution(&samples, ecfg).map_err(train_err)?;
        evo.model.basis_fingerprint = basis.fingerprint();
        out.bundle(save_evolution(&out.dir, "evolution", &evo.model))?;
        let mut t = Table::new(&["epoch", "train_mse", "val_mse"]);
        for (e, tr, v) in &evo.curves {
            t.push(vec![*e as f64, *tr, v.unwrap_or(f64::NAN)]);
        }
        out.table(&t, "evolution_curves")?;
        summary["evolution_epochs"] = json!(evo.curves.len());
    }
    Ok(summary)
}

pub fn train_cmd(cfg: &TrainCmdConfig, out: &mut Outputs) -> Result<Value, CliError> {
    train_common(cfg, out, false)
}

pub fn train_macro_cmd(cfg: &TrainCmdConfig, out: &mut Outputs) -> Result<Value, CliError> {
    train_common(cfg, out, true)
}

/// Column names of the prediction report for a drive of width `nd`.
pub fn prediction_header(nd: usize) -> Vec<String> {
    let mut h = vec!["record".to_string(), "increment".to_string()];
    for p in ["drive", "response", "pred_response"] {
        h.extend((0..nd).map(|i| format!("{p}_{i}")));
    }
    h.extend(["energy", "pred_energy", "dissipation", "pred_dissipation"].map(String::from));
    h
}

pub fn infer(cfg: &InferConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let basis = load_basis(&cfg.basis)?;
    let model = load_model(&cfg.model, Some(&basis))?;
    let evo: Option<EvolutionModel> = match &cfg.evolution {
        Some(p) => Some(load_evolution(p, Some(&basis))?),
        None => None,
    };
    let mut ds = load_dataset(&cfg.dataset)?;
    if ds.layout.fingerprint() != basis.layout.fingerprint() {
        return Err(CliError::Mismatch("dataset layout does not match basis layout".into()));
    }
    ds.attach_basis(&basis).map_err(|e| CliError::Mismatch(e.to_string()))?;
    let z = ds.z.clone().unwrap_or_default();
    let nd = model.n_drive;
    let mut t = Table::new(&prediction_header(nd));
    let mut n_rec = 0;
    let (mut abs_err, mut count) = (0.0, 0usize);
    for (rec, range) in ds.record_ranges() {
        if cfg.records.as_ref().is_some_and(|r| !r.contains(&rec)) {
            continue;
        }
        n_rec += 1;
        let drive = &ds.drive[range.clone()];
        let preds = infer_path(&model, evo.as_ref(), cfg.mode, drive, Some(&z[range.clone()]), &vec![0.0; model.r])
            .map_err(|e| match e {
                TannError::DimensionMismatch { .. } => CliError::Mismatch(e.to_string()),
                TannError::ModeMismatch | TannError::MissingIsv => CliError::Config(e.to_string()),
                other => CliError::Training(other.to_string()),
            })?;
        for (k, (i, p)) in range.clone().zip(&preds).enumerate() {
            let mut row = vec![rec as f64, k as f64];
            row.extend_from_slice(&ds.drive[i]);
            row.extend_from_slice(&ds.response[i]);
            row.extend_from_slice(&p.response);
            row.extend([ds.energy[i], p.psi, ds.d[i], p.d]);
            for (a, b) in p.response.iter().zip(&ds.response[i]) {
                abs_err += (a - b).abs();
                count += 1;
            }
            t.push(row);
        }
    }
    if n_rec == 0 {
        return Err(CliError::Config("no records selected".into()));
    }
    out.table(&t, "predictions")?;
    Ok(json!({
        "records": n_rec,
        "increments": t.rows.len(),
        "response_mae": abs_err / count.max(1) as f64,
    }))
}

pub fn reconstruct(cfg: &ReconstructConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let basis = load_basis(&cfg.basis)?;
    let (snaps, _) = load_snapshots(&cfg.dataset, &[], cfg.records.as_deref())?;
    if snaps.layout.fingerprint() != basis.layout.fingerprint() {
        return Err(CliError::Mismatch("snapshot layout does not match basis layout".into()));
    }
    let fields: Vec<String> = basis.layout.fields.iter().map(|f| f.name.clone()).chain(["all".into()]).collect();
    let mut cols = vec!["r".to_string()];
    cols.extend(fields.iter().map(|f| format!("mae_{f}")));
    let mut t = Table::new(&cols);
    let mut by_r = serde_json::Map::new();
    for r in &cfg.r_list {
        let r = r.resolve(basis.rank());
        let b = basis.truncate(r).map_err(|e| CliError::Config(e.to_string()))?;
        let mae = reconstruction_mae(&b, &snaps.data);
        let mut row = vec![r as f64];
        row.extend(mae.iter().map(|(_, v)| *v));
        by_r.insert(r.to_string(), json!(mae.last().map(|m| m.1)));
        t.push(row);
    }
    out.table(&t, "reconstruction")?;
    Ok(json!({ "snapshots": snaps.n_snap(), "mae_all": by_r }))
}

fn macro_err(e: MacroError) -> CliError {
    match e {
        MacroError::InvalidElement { .. } => CliError::Config(e.to_string()),
        other => CliError::Simulation(other.to_string()),
    }
}

fn simulate_all(sys: &IwanSystem, paths: &[Vec<f64>]) -> Result<Vec<MacroRecord>, CliError> {
    use rayon::prelude::*;
    paths.par_iter().map(|p| simulate_iwan(sys, p).map_err(macro_err)).collect()
}

pub fn macro_gen(cfg: &MacroGenConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let sys = cfg.iwan.build().map_err(macro_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let paths: Vec<Vec<f64>> = (0..cfg.n_paths).map(|_| random_force_path(&mut rng, &cfg.paths)).collect();
    let records = simulate_all(&sys, &paths)?;
    let groups: Vec<usize> = (0..records.len()).collect();
    let mut ds = Dataset::from_macro_records(sys.layout(), &records, &groups);
    ds.meta = json!({ "source": "iwan", "iwan": cfg.iwan, "seed": cfg.seed });
    out.bundle(save_dataset(&out.dir, "dataset", &ds))?;
    let mut summary = json!({
        "paths": records.len(),
        "samples": ds.len(),
        "ic_dofs": sys.layout().n_dof(),
        "capacity": sys.capacity(),
        "yield_force": cfg.iwan.yield_force(&sys),
    });
    if !cfg.cycles.is_empty() {
        let cyc: Vec<Vec<f64>> = cfg.cycles.iter().map(|p| cycle_path(p, cfg.cycle_steps)).collect();
        let recs = simulate_all(&sys, &cyc)?;
        let groups: Vec<usize> = (0..recs.len()).collect();
        let mut cds = Dataset::from_macro_records(sys.layout(), &recs, &groups);
        cds.meta = json!({ "source": "iwan", "iwan": cfg.iwan, "cycles": cfg.cycles });
        out.bundle(save_dataset(&out.dir, "cycles", &cds))?;
        summary["cycle_samples"] = json!(cds.len());
    }
    Ok(summary)
}

pub fn ingest(cfg: &IngestConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let ing = ingest_snapshots(&cfg.manifest, cfg.normalization).map_err(|e| CliError::Config(e.to_string()))?;
    let n = ing.force.len();
    let meta = json!({
        "layout": ing.snapshots.layout,
        "layout_fingerprint": ing.snapshots.layout.fingerprint(),
        "normalization": cfg.normalization,
        "field_scales": ing.field_scales,
    });
    let blocks = [
        Block::from_matrix("XI", "mixed", &ing.snapshots.data),
        Block::new("F", "kN", n, 1, ing.force.clone()),
        Block::new("U", "m", n, 1, ing.disp.clone()),
    ];
    out.bundle(write_bundle(&out.dir, "snapshots", "snapshots", meta, &blocks))?;
    Ok(json!({ "snapshots": ing.snapshots.n_snap(), "ic_dofs": ing.snapshots.n_dof() }))
}
