//! On-disk bundles: a JSON manifest next to a binary file of little-endian
//! `f64` blocks. Each block records its byte offset, shape, unit and
//! SHA-256, so blocks can be stored in any order and verified on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ensemble::{PathRecord, TrainingSample};
use crate::pod::{hex, IcLayout, PodBasis, PodError, SnapshotMatrix};
use crate::random_field::{FieldSample, GridSpec};
use crate::tann::{EnergyModel, EvolutionModel, ZQuadratic};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArtifactError {
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("malformed manifest: {0}")]
    Json(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("block '{block}': {detail}")]
    Shape { block: String, detail: String },
    #[error("block '{block}' has no unit tag")]
    Unit { block: String },
    #[error("block '{block}' fails its checksum")]
    Hash { block: String },
    #[error("fingerprint mismatch: expected {expected}, found {got}")]
    Fingerprint { expected: String, got: String },
    #[error("unsupported format version {0}")]
    Version(u32),
}

fn io_err(path: &Path, e: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDesc {
    pub name: String,
    /// Byte offset into the data file.
    pub offset: u64,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub unit: Option<String>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub version: u32,
    pub toolkit: String,
    pub data_file: String,
    pub meta: Value,
    pub blocks: Vec<BlockDesc>,
}

impl Manifest {
    pub fn block(&self, name: &str) -> Option<&BlockDesc> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// A named row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub unit: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(name: &str, unit: &str, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "block {name} shape");
        Self {
            name: name.into(),
            unit: unit.into(),
            rows,
            cols,
            data,
        }
    }

    pub fn from_rows(name: &str, unit: &str, rows: &[Vec<f64>], width: usize) -> Self {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(name, unit, rows.len(), width, data)
    }

    pub fn column(name: &str, unit: &str, v: &[f64]) -> Self {
        Self::new(name, unit, v.len(), 1, v.to_vec())
    }

    pub fn from_matrix(name: &str, unit: &str, m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self::new(name, unit, m.nrows(), m.ncols(), data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn row_vecs(&self) -> Vec<Vec<f64>> {
        if self.cols == 0 {
            return vec![Vec::new(); self.rows];
        }
        self.data.chunks(self.cols).map(|c| c.to_vec()).collect()
    }

    fn bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn toolkit_version() -> String {
    format!("podtann {}", env!("CARGO_PKG_VERSION"))
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`; returns the manifest path.
pub fn write_bundle(dir: &Path, stem: &str, kind: &str, meta: Value, blocks: &[Block]) -> Result<(PathBuf, Manifest), ArtifactError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let data_file = format!("{stem}.bin");
    let mut bin = Vec::new();
    let mut descs = Vec::with_capacity(blocks.len());
    for b in blocks {
        let bytes = b.bytes();
        descs.push(BlockDesc {
            name: b.name.clone(),
            offset: bin.len() as u64,
            rows: b.rows,
            cols: b.cols,
            unit: Some(b.unit.clone()),
            sha256: sha256_hex(&bytes),
        });
        bin.extend_from_slice(&bytes);
    }
    let manifest = Manifest {
        kind: kind.into(),
        version: FORMAT_VERSION,
        toolkit: toolkit_version(),
        data_file: data_file.clone(),
        meta,
        blocks: descs,
    };
    let bin_path = dir.join(&data_file);
    fs::write(&bin_path, &bin).map_err(|e| io_err(&bin_path, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    write_manifest(&json_path, &manifest)?;
    Ok((json_path, manifest))
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<(), ArtifactError> {
    let text = serde_json::to_string_pretty(m).map_err(|e| ArtifactError::Json(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| ArtifactError::Json(e.to_string()))?;
    if m.version != FORMAT_VERSION {
        return Err(ArtifactError::Version(m.version));
    }
    Ok(m)
}

/// Reads and verifies every block of a bundle.
pub fn read_bundle(manifest_path: &Path) -> Result<(Manifest, BTreeMap<String, Block>), ArtifactError> {
    let m = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bin_path = dir.join(&m.data_file);
    let bin = fs::read(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    let mut out = BTreeMap::new();
    for d in &m.blocks {
        let unit = match &d.unit {
            Some(u) if !u.is_empty() => u.clone(),
            _ => return Err(ArtifactError::Unit { block: d.name.clone() }),
        };
        let len = d
            .rows
            .checked_mul(d.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| ArtifactError::Shape {
                block: d.name.clone(),
                detail: "shape overflows".into(),
            })?;
        let start = d.offset as usize;
        let end = start.checked_add(len).filter(|e| *e <= bin.len()).ok_or_else(|| ArtifactError::Shape {
            block: d.name.clone(),
            detail: format!("needs bytes {start}..{} but the data file has {}", start + len, bin.len()),
        })?;
        let bytes = &bin[start..end];
        if sha256_hex(bytes) != d.sha256 {
            return Err(ArtifactError::Hash { block: d.name.clone() });
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if out
            .insert(
                d.name.clone(),
                Block {
                    name: d.name.clone(),
                    unit,
                    rows: d.rows,
                    cols: d.cols,
                    data,
                },
            )
            .is_some()
        {
            return Err(ArtifactError::Schema(format!("duplicate block '{}'", d.name)));
        }
    }
    Ok((m, out))
}

/// Combined hash of all block checksums, in manifest order of names.
pub fn output_hash(m: &Manifest) -> String {
    let mut descs: Vec<&BlockDesc> = m.blocks.iter().collect();
    descs.sort_by(|a, b| a.name.cmp(&b.name));
    let mut h = Sha256::new();
    for d in descs {
        h.update(d.name.as_bytes());
        h.update(d.sha256.as_bytes());
    }
    hex(&h.finalize())
}

fn take(blocks: &mut BTreeMap<String, Block>, name: &str) -> Result<Block, ArtifactError> {
    blocks
        .remove(name)
        .ok_or_else(|| ArtifactError::Schema(format!("missing block '{name}'")))
}

fn expect_shape(b: &Block, rows: usize, cols: usize) -> Result<(), ArtifactError> {
    if b.rows != rows || b.cols != cols {
        return Err(ArtifactError::Shape {
            block: b.name.clone(),
            detail: format!("expected {rows}x{cols}, found {}x{}", b.rows, b.cols),
        });
    }
    Ok(())
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &Value, key: &str) -> Result<T, ArtifactError> {
    let v = meta
        .get(key)
        .ok_or_else(|| ArtifactError::Schema(format!("manifest meta lacks '{key}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| ArtifactError::Schema(format!("meta '{key}': {e}")))
}

fn check_kind(m: &Manifest, kind: &str) -> Result<(), ArtifactError> {
    if m.kind != kind {
        return Err(ArtifactError::Schema(format!("expected a {kind} bundle, found {}", m.kind)));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Strain drive, stress response.
    Ruc,
    /// Force drive, displacement response.
    Macro,
}

impl DatasetKind {
    /// Block names and units of drive, response and energy.
    pub fn names(&self) -> [(&'static str, &'static str); 3] {
        match self {
            DatasetKind::Ruc => [("E", "-"), ("S", "kPa"), ("Psi", "kPa")],
            DatasetKind::Macro => [("F", "kN"), ("U", "m"), ("Phi", "kN*m")],
        }
    }
}

/// Simulated increments with their full IC snapshots and, once a basis is
/// attached, the projected ISVs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub layout: IcLayout,
    /// Record (path or rotated copy) each sample belongs to.
    pub record: Vec<usize>,
    /// Split group; rotated copies share the group of their source path.
    pub group: Vec<usize>,
    pub drive: Vec<Vec<f64>>,
    pub response: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub d: Vec<f64>,
    /// `n_dof × n_samples`.
    pub xi: DMatrix<f64>,
    pub z: Option<Vec<Vec<f64>>>,
    pub zdot: Option<Vec<Vec<f64>>>,
    pub basis_fingerprint: Option<String>,
    pub meta: Value,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.drive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drive.is_empty()
    }

    /// Builds a strain-driven dataset. `groups[i]` is the split group of `records[i]`.
    pub fn from_path_records(layout: IcLayout, records: &[PathRecord], groups: &[usize]) -> Self {
        let mut ds = Self::empty(DatasetKind::Ruc, layout);
        let mut cols = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            for k in 0..rec.len() {
                ds.record.push(i);
                ds.group.push(groups[i]);
                ds.drive.push(rec.strain[k].c.to_vec());
                ds.response.push(rec.stress[k].c.to_vec());
                ds.energy.push(rec.psi[k]);
                ds.d.push(rec.d_inc[k]);
                cols.push(rec.xi[k].clone());
            }
        }
        ds.xi = columns_matrix(ds.layout.n_dof(), &cols);
        ds
    }

    pub fn empty(kind: DatasetKind, layout: IcLayout) -> Self {
        Self {
            kind,
            xi: DMatrix::zeros(layout.n_dof(), 0),
            layout,
            record: Vec::new(),
            group: Vec::new(),
            drive: Vec::new(),
            response: Vec::new(),
            energy: Vec::new(),
            d: Vec::new(),
            z: None,
            zdot: None,
            basis_fingerprint: None,
            meta: Value::Null,
        }
    }

    pub fn snapshots(&self) -> SnapshotMatrix {
        SnapshotMatrix {
            data: self.xi.clone(),
            layout: self.layout.clone(),
        }
    }

    /// Snapshots restricted to the given groups.
    pub fn snapshots_of_groups(&self, groups: &[usize]) -> SnapshotMatrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| groups.contains(&self.group[i])).collect();
        SnapshotMatrix {
            data: self.xi.select_columns(idx.iter()),
            layout: self.layout.clone(),
        }
    }

    /// Projects the snapshots; `Ż` is the backward difference within each record.
    pub fn attach_basis(&mut self, basis: &PodBasis) -> Result<(), PodError> {
        if basis.n_dof() != self.layout.n_dof() {
            return Err(PodError::LayoutMismatch {
                expected: self.layout.n_dof(),
                got: basis.n_dof(),
            });
        }
        let zm = basis.modes.transpose() * &self.xi;
        let r = basis.rank();
        let mut z = Vec::with_capacity(self.len());
        let mut zdot = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let zi: Vec<f64> = zm.column(i).iter().copied().collect();
            let prev = if i > 0 && self.record[i - 1] == self.record[i] {
                z.last().cloned()
            } else {
                None
            };
            let dz = match prev {
                Some(p) => zi.iter().zip(&p).map(|(a, b): (&f64, &f64)| a - b).collect(),
                None => zi.clone(),
            };
            debug_assert_eq!(zi.len(), r);
            z.push(zi);
            zdot.push(dz);
        }
        self.z = Some(z);
        self.zdot = Some(zdot);
        self.basis_fingerprint = Some(basis.fingerprint());
        Ok(())
    }

    /// Training samples; requires an attached basis.
    pub fn samples(&self) -> Result<Vec<TrainingSample>, ArtifactError> {
        let (z, zdot) = match (&self.z, &self.zdot) {
            (Some(z), Some(d)) => (z, d),
            _ => return Err(ArtifactError::Schema("dataset has no projected ISVs".into())),
        };
        let nd = self.drive.first().map_or(0, |v| v.len());
        Ok((0..self.len())
            .map(|i| {
                let prev = if i > 0 && self.record[i - 1] == self.record[i] {
                    self.drive[i - 1].clone()
                } else {
                    vec![0.0; nd]
                };
                TrainingSample {
                    path: self.group[i],
                    drive: self.drive[i].clone(),
                    d_drive: self.drive[i].iter().zip(&prev).map(|(a, b)| a - b).collect(),
                    z: z[i].clone(),
                    zdot: zdot[i].clone(),
                    response: self.response[i].clone(),
                    psi: self.energy[i],
                    d: self.d[i],
                }
            })
            .collect())
    }

    /// Sample indices of each record, in order.
    pub fn record_ranges(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut out: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (i, &r) in self.record.iter().enumerate() {
            match out.last_mut() {
                Some((id, range)) if *id == r => range.end = i + 1,
                _ => out.push((r, i..i + 1)),
            }
        }
        out
    }
}

pub fn columns_matrix(n_rows: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n_rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.column_mut(j).copy_from_slice(c);
    }
    m
}

fn as_index(v: &[f64]) -> Vec<usize> {
    v.iter().map(|x| *x as usize).collect()
}

fn as_float(v: &[usize]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

pub fn save_dataset(dir: &Path, stem: &str, ds: &Dataset) -> Result<(PathBuf, Manifest), ArtifactError> {
    let [(dn, du), (rn, ru), (en, eu)] = ds.kind.names();
    let nd = ds.drive.first().map_or(0, |v| v.len());
    let mut blocks = vec![
        Block::column("record", "-", &as_float(&ds.record)),
        Block::column("group", "-", &as_float(&ds.group)),
        Block::from_rows(dn, du, &ds.drive, nd),
        Block::from_rows(rn, ru, &ds.response, nd),
        Block::column(en, eu, &ds.energy),
        Block::column("D", eu, &ds.d),
        Block::from_matrix("XI", "mixed", &ds.xi),
    ];
    if let (Some(z), Some(zd)) = (&ds.z, &ds.zdot) {
        let r = z.first().map_or(0, |v| v.len());
        blocks.push(Block::from_rows("Z", "-", z, r));
        blocks.push(Block::from_rows("Zdot", "-", zd, r));
    }
    let meta = serde_json::json!({
        "dataset_kind": ds.kind,
        "layout": ds.layout,
        "layout_fingerprint": ds.layout.fingerprint(),
        "basis_fingerprint": ds.basis_fingerprint,
        "n_samples": ds.len(),
        "info": ds.meta,
    });
    write_bundle(dir, stem, "dataset", meta, &blocks)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, ArtifactError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    check_kind(&m, "dataset")?;
    let kind: DatasetKind = meta_field(&m.meta, "dataset_kind")?;
    let layout: IcLayout = meta_field(&m.meta, "layout")?;
    let basis_fingerprint: Option<String> = meta_field(&m.meta, "basis_fingerprint")?;
    let [(dn, _), (rn, _), (en, _)] = kind.names();
    let record = take(&mut blocks, "record")?;
    let n = record.rows;
    let group = take(&mut blocks, "group")?;
    expect_shape(&group, n, 1)?;
    let drive = take(&mut blocks, dn)?;
    let nd = drive.cols;
    expect_shape(&drive, n, nd)?;
    let response = take(&mut blocks, rn)?;
    expect_shape(&response, n, nd)?;
    let energy = take(&mut blocks, en)?;
    expect_shape(&energy, n, 1)?;
    let d = take(&mut blocks, "D")?;
    expect_shape(&d, n, 1)?;
    let xi = take(&mut blocks, "XI")?;
    expect_shape(&xi, layout.n_dof(), n)?;
    let (z, zdot) = match (blocks.remove("Z"), blocks.remove("Zdot")) {
        (Some(z), Some(zd)) => {
            expect_shape(&z, n, z.cols)?;
            expect_shape(&zd, n, z.cols)?;
            (Some(z.row_vecs()), Some(zd.row_vecs()))
        }
        (None, None) => (None, None),
        _ => return Err(ArtifactError::Schema("Z and Zdot must appear together".into())),
    };
    Ok(Dataset {
        kind,
        layout,
        record: as_index(&record.data),
        group: as_index(&group.data),
        drive: drive.row_vecs(),
        response: response.row_vecs(),
        energy: energy.data,
        d: d.data,
        xi: xi.to_matrix(),
        z,
        zdot,
        basis_fingerprint,
        meta: m.meta.get("info").cloned().unwrap_or(Value::Null),
    })
}

pub fn save_basis(dir: &Path, stem: &str, b: &PodBasis) -> Result<(PathBuf, Manifest), ArtifactError> {
    let meta = serde_json::json!({
        "n_dof": b.n_dof(),
        "r": b.rank(),
        "layout": b.layout,
        "layout_fingerprint": b.layout.fingerprint(),
        "sign_convention": "largest-magnitude entry of each mode is positive",
        "fingerprint": b.fingerprint(),
    });
    let blocks = [
        Block::from_matrix("U", "-", &b.modes),
        Block::new("sigma", "-", 1, b.singular_values.len(), b.singular_values.clone()),
    ];
    write_bundle(dir, stem, "basis", meta, &blocks)
}

pub fn load_basis(manifest_path: &Path) -> Result<PodBasis, ArtifactError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    check_kind(&m, "basis")?;
    let layout: IcLayout = meta_field(&m.meta, "layout")?;
    let n_dof: usize = meta_field(&m.meta, "n_dof")?;
    let r: usize = meta_field(&m.meta, "r")?;
    let u = take(&mut blocks, "U")?;
    expect_shape(&u, n_dof, r)?;
    let s = take(&mut blocks, "sigma")?;
    let basis = PodBasis {
        modes: u.to_matrix(),
        singular_values: s.data,
        layout,
    };
    let expected: String = meta_field(&m.meta, "fingerprint")?;
    let got = basis.fingerprint();
    if got != expected {
        return Err(ArtifactError::Fingerprint { expected, got });
    }
    Ok(basis)
}

/// Saves an energy model; `info` carries training config and final losses.
pub fn save_model(dir: &Path, stem: &str, model: &EnergyModel, info: Value) -> Result<(PathBuf, Manifest), ArtifactError> {
    let mut arch = model.clone();
    arch.w1.clear();
    arch.b1.clear();
    arch.w2.clear();
    arch.z_offset = None;
    let n_in = model.n_in();
    let mut blocks = vec![
        Block::new("w1", "-", model.hidden, n_in, model.w1.clone()),
        Block::new("b1", "-", 1, model.hidden, model.b1.clone()),
        Block::new("w2", "-", 1, model.hidden, model.w2.clone()),
    ];
    if let Some(g) = &model.z_offset {
        blocks.push(Block::new("offset_q", "-", model.r, model.r, g.q_mat.clone()));
        blocks.push(Block::new("offset_lin", "-", 1, model.r, g.lin.clone()));
    }
    let meta = serde_json::json!({ "architecture": arch, "info": info });
    write_bundle(dir, stem, "model", meta, &blocks)
}

/// Loads an energy model, refusing it when `basis` is given and its
/// fingerprint differs from the one the model was trained against.
pub fn load_model(manifest_path: &Path, basis: Option<&PodBasis>) -> Result<EnergyModel, ArtifactError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    check_kind(&m, "model")?;
    let mut model: EnergyModel = meta_field(&m.meta, "architecture")?;
    let n_in = model.n_in();
    let w1 = take(&mut blocks, "w1")?;
    expect_shape(&w1, model.hidden, n_in)?;
    let b1 = take(&mut blocks, "b1")?;
    expect_shape(&b1, 1, model.hidden)?;
    let w2 = take(&mut blocks, "w2")?;
    expect_shape(&w2, 1, model.hidden)?;
    model.w1 = w1.data;
    model.b1 = b1.data;
    model.w2 = w2.data;
    if let (Some(q), Some(l)) = (blocks.remove("offset_q"), blocks.remove("offset_lin")) {
        expect_shape(&q, model.r, model.r)?;
        expect_shape(&l, 1, model.r)?;
        model.z_offset = Some(ZQuadratic { q_mat: q.data, lin: l.data });
    }
    if let Some(b) = basis {
        let got = b.fingerprint();
        if got != model.basis_fingerprint {
            return Err(ArtifactError::Fingerprint {
                expected: model.basis_fingerprint.clone(),
                got,
            });
        }
    }
    Ok(model)
}

pub fn save_evolution(dir: &Path, stem: &str, model: &EvolutionModel) -> Result<(PathBuf, Manifest), ArtifactError> {
    let mut arch = model.clone();
    arch.w1.clear();
    arch.b1.clear();
    arch.w2.clear();
    arch.b2.clear();
    let blocks = [
        Block::new("w1", "-", model.hidden, model.n_in(), model.w1.clone()),
        Block::new("b1", "-", 1, model.hidden, model.b1.clone()),
        Block::new("w2", "-", model.r, model.hidden, model.w2.clone()),
        Block::new("b2", "-", 1, model.r, model.b2.clone()),
    ];
    write_bundle(dir, stem, "evolution", serde_json::json!({ "architecture": arch }), &blocks)
}

pub fn load_evolution(manifest_path: &Path, basis: Option<&PodBasis>) -> Result<EvolutionModel, ArtifactError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    check_kind(&m, "evolution")?;
    let mut model: EvolutionModel = meta_field(&m.meta, "architecture")?;
    let w1 = take(&mut blocks, "w1")?;
    expect_shape(&w1, model.hidden, model.n_in())?;
    let b1 = take(&mut blocks, "b1")?;
    expect_shape(&b1, 1, model.hidden)?;
    let w2 = take(&mut blocks, "w2")?;
    expect_shape(&w2, model.r, model.hidden)?;
    let b2 = take(&mut blocks, "b2")?;
    expect_shape(&b2, 1, model.r)?;
    model.w1 = w1.data;
    model.b1 = b1.data;
    model.w2 = w2.data;
    model.b2 = b2.data;
    if let Some(b) = basis {
        let got = b.fingerprint();
        if got != model.basis_fingerprint {
            return Err(ArtifactError::Fingerprint {
                expected: model.basis_fingerprint.clone(),
                got,
            });
        }
    }
    Ok(model)
}

pub fn save_field(dir: &Path, stem: &str, f: &FieldSample) -> Result<(PathBuf, Manifest), ArtifactError> {
    let meta = serde_json::json!({
        "grid": f.grid,
        "kappa": f.kappa,
        "seed": f.seed,
        "stats": { "mean": f.mean(), "std": f.std() },
    });
    let blocks = [Block::new("values", "-", 1, f.values.len(), f.values.clone())];
    write_bundle(dir, stem, "field", meta, &blocks)
}

pub fn load_field(manifest_path: &Path) -> Result<FieldSample, ArtifactError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    check_kind(&m, "field")?;
    let grid: GridSpec = meta_field(&m.meta, "grid")?;
    let values = take(&mut blocks, "values")?;
    expect_shape(&values, 1, grid.len())?;
    Ok(FieldSample {
        values: values.data,
        grid,
        kappa: meta_field(&m.meta, "kappa")?,
        seed: meta_field(&m.meta, "seed")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_blocks() -> Vec<Block> {
        vec![
            Block::new("a", "m", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, f64::MIN_POSITIVE]),
            Block::new("b", "kN", 1, 2, vec![-0.0, 1e300]),
        ]
    }

    #[test]
    fn bundle_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = write_bundle(dir.path(), "x", "test", Value::Null, &sample_blocks()).unwrap();
        let (m2, blocks) = read_bundle(&p).unwrap();
        assert_eq!(m, m2);
        for b in sample_blocks() {
            let got = &blocks[&b.name];
            assert_eq!(got.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn truncated_data_names_the_block() {
        let dir = tempfile::tempdir().unwrap();
        let (p, _) = write_bundle(dir.path(), "x", "test", Value::Null, &sample_blocks()).unwrap();
        let bin = dir.path().join("x.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        match read_bundle(&p) {
            Err(ArtifactError::Shape { block, .. }) => assert_eq!(block, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_unit_and_corruption_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (p, mut m) = write_bundle(dir.path(), "x", "test", Value::Null, &sample_blocks()).unwrap();
        m.blocks[0].unit = None;
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_bundle(&p).unwrap_err(), ArtifactError::Unit { block: "a".into() });
        m.blocks[0].unit = Some("m".into());
        m.blocks[1].sha256 = "00".into();
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_bundle(&p).unwrap_err(), ArtifactError::Hash { block: "b".into() });
    }

    #[test]
    fn block_order_in_manifest_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let (p, mut m) = write_bundle(dir.path(), "x", "test", Value::Null, &sample_blocks()).unwrap();
        let (_, before) = read_bundle(&p).unwrap();
        m.blocks.reverse();
        write_manifest(&p, &m).unwrap();
        let (m2, after) = read_bundle(&p).unwrap();
        assert_eq!(before, after);
        assert_eq!(output_hash(&m), output_hash(&m2));
    }
}
