//! One-DOF macroelement: a parallel Iwan assembly of springs and linear
//! kinematically hardening sliders, loaded by a horizontal force. It supplies
//! force–displacement histories, a Gibbs energy `Φ = Ψ − F·U` and micro ICs
//! `[u − s, s, max|s|]` per element.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{read_bundle, ArtifactError, Dataset, DatasetKind};
use crate::ensemble::TrainingSample;
use crate::pod::{IcLayout, PodError, SnapshotMatrix};
use crate::tann::{train, EnergyModel, Potential, TannError, TrainConfig, TrainOutcome};

pub use crate::pod::select_modes_by_singular_threshold;

/// Energy model evaluated with the Gibbs sign convention.
pub type GibbsModel = EnergyModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacroError {
    #[error("invalid element {index}: {reason}")]
    InvalidElement { index: usize, reason: String },
    #[error("force exceeds the system capacity at increment {increment}")]
    CapacityExceeded { increment: usize },
    #[error("equilibrium solve failed at increment {increment}")]
    NonConvergence { increment: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IwanElement {
    /// Spring stiffness (kN/m).
    pub k: f64,
    /// Slip threshold (kN).
    pub fy: f64,
    /// Kinematic hardening modulus (kN/m).
    pub h: f64,
}

impl IwanElement {
    /// Slip after moving to `u` from committed slip `s` monotonically.
    fn slip_at(&self, s: f64, u: f64) -> f64 {
        let chi = self.k * (u - s) - self.h * s;
        if chi.abs() <= self.fy {
            s
        } else {
            s + (chi.abs() - self.fy) / (self.k + self.h) * chi.signum()
        }
    }

    fn energy(&self, u: f64, s: f64) -> f64 {
        0.5 * self.k * (u - s).powi(2) + 0.5 * self.h * s * s
    }

    /// Exact `∫ f du` from `(u0, s0)` to `u1`.
    fn work(&self, s0: f64, u0: f64, u1: f64) -> f64 {
        let s1 = self.slip_at(s0, u1);
        let f = |u: f64, s: f64| self.k * (u - s);
        if s1 == s0 {
            return 0.5 * (f(u0, s0) + f(u1, s0)) * (u1 - u0);
        }
        let chi0 = self.k * (u0 - s0) - self.h * s0;
        let target = self.fy * (s1 - s0).signum();
        let us = u0 + (target - chi0) / self.k;
        let fs = f(us, s0);
        0.5 * (f(u0, s0) + fs) * (us - u0) + 0.5 * (fs + f(u1, s1)) * (u1 - us)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IwanState {
    pub u: f64,
    pub slip: Vec<f64>,
    pub slip_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IwanSystem {
    pub elements: Vec<IwanElement>,
    pub state: IwanState,
}

impl IwanSystem {
    pub fn new(elements: Vec<IwanElement>) -> Result<Self, MacroError> {
        for (index, e) in elements.iter().enumerate() {
            let bad = |reason: &str| MacroError::InvalidElement {
                index,
                reason: reason.into(),
            };
            if !(e.k > 0.0 && e.k.is_finite()) {
                return Err(bad("stiffness must be positive"));
            }
            if !(e.fy >= 0.0 && e.fy.is_finite()) {
                return Err(bad("slip threshold must be non-negative"));
            }
            if !(e.h >= 0.0 && e.h.is_finite()) {
                return Err(bad("hardening must be non-negative"));
            }
        }
        let n = elements.len();
        Ok(Self {
            elements,
            state: IwanState {
                u: 0.0,
                slip: vec![0.0; n],
                slip_max: vec![0.0; n],
            },
        })
    }

    pub fn n_el(&self) -> usize {
        self.elements.len()
    }

    pub fn layout(&self) -> IcLayout {
        IcLayout::iwan(self.n_el())
    }

    /// Largest force the assembly can carry; unbounded with any hardening.
    pub fn capacity(&self) -> f64 {
        if self.elements.iter().any(|e| e.h > 0.0) {
            f64::INFINITY
        } else {
            self.elements.iter().map(|e| e.fy).sum()
        }
    }

    pub fn elastic_stiffness(&self) -> f64 {
        self.elements.iter().map(|e| e.k).sum()
    }

    /// Force and tangent at trial displacement `u` from the committed state.
    fn trial(&self, u: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut kt = 0.0;
        for (e, &s0) in self.elements.iter().zip(&self.state.slip) {
            let s = e.slip_at(s0, u);
            f += e.k * (u - s);
            let chi = e.k * (u - s0) - e.h * s0;
            kt += if chi.abs() <= e.fy { e.k } else { e.k * e.h / (e.k + e.h) };
        }
        (f, kt)
    }

    pub fn force(&self) -> f64 {
        self.elements
            .iter()
            .zip(&self.state.slip)
            .map(|(e, s)| e.k * (self.state.u - s))
            .sum()
    }

    pub fn energy(&self) -> f64 {
        self.elements
            .iter()
            .zip(&self.state.slip)
            .map(|(e, s)| e.energy(self.state.u, *s))
            .sum()
    }

    /// Stored energy of a flattened IC vector `[u − s, s, max|s|]`.
    pub fn energy_of_ics(&self, xi: &[f64]) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| 0.5 * e.k * xi[3 * i].powi(2) + 0.5 * e.h * xi[3 * i + 1].powi(2))
            .sum()
    }

    pub fn ics(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.n_el());
        for i in 0..self.n_el() {
            out.push(self.state.u - self.state.slip[i]);
            out.push(self.state.slip[i]);
            out.push(self.state.slip_max[i]);
        }
        out
    }

    /// Moves to displacement `u`; returns `(work, dissipation)`.
    pub fn step_displacement(&mut self, u: f64) -> (f64, f64) {
        let u0 = self.state.u;
        let mut work = 0.0;
        let mut diss = 0.0;
        for (i, e) in self.elements.iter().enumerate() {
            let s0 = self.state.slip[i];
            let s1 = e.slip_at(s0, u);
            work += e.work(s0, u0, u);
            diss += e.fy * (s1 - s0).abs();
            self.state.slip[i] = s1;
            self.state.slip_max[i] = self.state.slip_max[i].max(s1.abs());
        }
        self.state.u = u;
        (work, diss)
    }

    /// Displacement that equilibrates `target` from the committed state.
    fn solve_force(&self, target: f64) -> Option<f64> {
        let scale = self.elements.iter().map(|e| e.fy).sum::<f64>().max(target.abs()).max(1.0);
        let tol = 1e-12 * scale;
        let u0 = self.state.u;
        let (f0, _) = self.trial(u0);
        if (f0 - target).abs() <= tol {
            return Some(u0);
        }
        // bracket along the loading direction
        let dir = (target - f0).signum();
        let mut step = (target - f0).abs() / self.elastic_stiffness();
        let (mut lo, mut hi) = (u0, u0);
        for _ in 0..200 {
            hi = u0 + dir * step;
            if (self.trial(hi).0 - target) * dir >= 0.0 {
                break;
            }
            lo = hi;
            step *= 2.0;
        }
        if (self.trial(hi).0 - target) * dir < 0.0 {
            return None;
        }
        let mut u = lo;
        for _ in 0..500 {
            let (f, kt) = self.trial(u);
            let r = f - target;
            if r.abs() <= tol {
                return Some(u);
            }
            if r * dir < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let newton = u - r / kt;
            let inside = (newton - lo) * (newton - hi) < 0.0;
            u = if kt > 0.0 && inside { newton } else { 0.5 * (lo + hi) };
            if (hi - lo).abs() <= f64::EPSILON * (u.abs() + 1e-300) {
                return Some(u);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IwanSpec {
    pub n_el: usize,
    /// Total elastic stiffness (kN/m), split equally.
    pub k_total: f64,
    pub fy_min: f64,
    pub fy_max: f64,
    /// `h_i = h_ratio · k_i`.
    pub h_ratio: f64,
    pub seed: u64,
}

impl Default for IwanSpec {
    fn default() -> Self {
        Self {
            n_el: 200,
            k_total: 1.0e5,
            fy_min: 10.0,
            fy_max: 100.0,
            h_ratio: 0.02,
            seed: 11,
        }
    }
}

impl IwanSpec {
    pub fn build(&self) -> Result<IwanSystem, MacroError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let k = self.k_total / self.n_el.max(1) as f64;
        let mut fys: Vec<f64> = (0..self.n_el).map(|_| rng.random_range(self.fy_min..=self.fy_max)).collect();
        fys.sort_by(f64::total_cmp);
        IwanSystem::new(
            fys.into_iter()
                .map(|fy| IwanElement {
                    k,
                    fy,
                    h: self.h_ratio * k,
                })
                .collect(),
        )
    }

    /// Nominal yield capacity `Σ f_y`.
    pub fn yield_force(&self, sys: &IwanSystem) -> f64 {
        sys.elements.iter().map(|e| e.fy).sum()
    }
}

/// Per-increment history of a force-driven simulation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MacroRecord {
    pub force: Vec<f64>,
    pub disp: Vec<f64>,
    /// System Helmholtz energy.
    pub psi: Vec<f64>,
    /// Gibbs energy `Ψ − F·U`.
    pub phi: Vec<f64>,
    pub d_inc: Vec<f64>,
    /// Exact external work of each increment.
    pub work: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
}

impl MacroRecord {
    pub fn len(&self) -> usize {
        self.force.len()
    }

    pub fn is_empty(&self) -> bool {
        self.force.is_empty()
    }
}

/// Force-driven simulation from the system's current state; `force_path`
/// holds the total force after each increment.
pub fn simulate_iwan(sys: &IwanSystem, force_path: &[f64]) -> Result<MacroRecord, MacroError> {
    let mut s = sys.clone();
    let cap = s.capacity();
    let mut rec = MacroRecord::default();
    for (increment, &f) in force_path.iter().enumerate() {
        if f.abs() >= cap {
            return Err(MacroError::CapacityExceeded { increment });
        }
        let u = s.solve_force(f).ok_or(MacroError::NonConvergence { increment })?;
        let (w, d) = s.step_displacement(u);
        push_state(&mut rec, &s, f, w, d);
    }
    Ok(rec)
}

/// Displacement-driven counterpart of [`simulate_iwan`].
pub fn simulate_iwan_displacement(sys: &IwanSystem, disp_path: &[f64]) -> MacroRecord {
    let mut s = sys.clone();
    let mut rec = MacroRecord::default();
    for &u in disp_path {
        let (w, d) = s.step_displacement(u);
        let f = s.force();
        push_state(&mut rec, &s, f, w, d);
    }
    rec
}

fn push_state(rec: &mut MacroRecord, s: &IwanSystem, f: f64, w: f64, d: f64) {
    let psi = s.energy();
    rec.force.push(f);
    rec.disp.push(s.state.u);
    rec.psi.push(psi);
    rec.phi.push(psi - f * s.state.u);
    rec.d_inc.push(d);
    rec.work.push(w);
    rec.xi.push(s.ics());
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForcePathSettings {
    pub n_inc: usize,
    /// Random turning points, reached by linear ramps.
    pub n_turns: usize,
    pub f_max: f64,
}

impl Default for ForcePathSettings {
    fn default() -> Self {
        Self {
            n_inc: 500,
            n_turns: 10,
            f_max: 8000.0,
        }
    }
}

/// Piecewise-linear force history through uniformly sampled turning points.
pub fn random_force_path<R: Rng + ?Sized>(rng: &mut R, s: &ForcePathSettings) -> Vec<f64> {
    let turns = s.n_turns.max(1);
    let peaks: Vec<f64> = (0..turns).map(|_| rng.random_range(-s.f_max..=s.f_max)).collect();
    let mut out = Vec::with_capacity(s.n_inc);
    let mut prev = 0.0;
    for (j, &p) in peaks.iter().enumerate() {
        let start = j * s.n_inc / turns;
        let end = (j + 1) * s.n_inc / turns;
        let n = end - start;
        for i in 1..=n {
            out.push(prev + (p - prev) * i as f64 / n as f64);
        }
        prev = p;
    }
    out
}

/// Linear ramps from zero through each peak, `steps` increments per ramp.
pub fn cycle_path(peaks: &[f64], steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(peaks.len() * steps);
    let mut prev = 0.0;
    for &p in peaks {
        for i in 1..=steps {
            out.push(prev + (p - prev) * i as f64 / steps as f64);
        }
        prev = p;
    }
    out
}

/// Trapezoidal `|∮ F dU|` over consecutive points.
pub fn loop_area(force: &[f64], disp: &[f64]) -> f64 {
    force
        .windows(2)
        .zip(disp.windows(2))
        .map(|(f, u)| 0.5 * (f[0] + f[1]) * (u[1] - u[0]))
        .sum::<f64>()
        .abs()
}

/// Generalized-force sample with its reduced state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroSample {
    pub force: f64,
    pub disp: f64,
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
    pub phi: f64,
    pub d_inc: f64,
}

impl MacroSample {
    pub fn from_training(s: &TrainingSample) -> Self {
        Self {
            force: s.drive[0],
            disp: s.response[0],
            z: s.z.clone(),
            zdot: s.zdot.clone(),
            phi: s.psi,
            d_inc: s.d,
        }
    }
}

impl Dataset {
    /// Force-driven dataset; `groups[i]` is the split group of `records[i]`.
    pub fn from_macro_records(layout: IcLayout, records: &[MacroRecord], groups: &[usize]) -> Self {
        let mut ds = Dataset::empty(DatasetKind::Macro, layout);
        let mut cols = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            for k in 0..rec.len() {
                ds.record.push(i);
                ds.group.push(groups[i]);
                ds.drive.push(vec![rec.force[k]]);
                ds.response.push(vec![rec.disp[k]]);
                ds.energy.push(rec.phi[k]);
                ds.d.push(rec.d_inc[k]);
                cols.push(rec.xi[k].clone());
            }
        }
        ds.xi = crate::artifact::columns_matrix(ds.layout.n_dof(), &cols);
        ds
    }
}

/// Trains a Gibbs-form energy model: displacement is `−∂Φ̂/∂F`.
pub fn train_macro(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome, TannError> {
    let cfg = TrainConfig {
        potential: Potential::Gibbs,
        ..cfg.clone()
    };
    train(samples, &cfg)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("block '{block}': {detail}")]
    Shape { block: String, detail: String },
    #[error("block '{block}' has no unit tag")]
    Unit { block: String },
    #[error(transparent)]
    Artifact(ArtifactError),
    #[error(transparent)]
    Pod(#[from] PodError),
}

impl From<ArtifactError> for IngestError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Schema(s) => IngestError::Schema(s),
            ArtifactError::Shape { block, detail } => IngestError::Shape { block, detail },
            ArtifactError::Unit { block } => IngestError::Unit { block },
            other => IngestError::Artifact(other),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockNormalization {
    #[default]
    None,
    /// Divide each IC field by its largest magnitude.
    MaxAbs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub snapshots: SnapshotMatrix,
    pub force: Vec<f64>,
    pub disp: Vec<f64>,
    /// Per-field divisors applied (1 without normalization).
    pub field_scales: Vec<(String, f64)>,
}

/// Reads exported IC snapshots plus the generalized force/displacement table.
pub fn ingest_snapshots(manifest_path: &Path, norm: BlockNormalization) -> Result<Ingested, IngestError> {
    let (m, mut blocks) = read_bundle(manifest_path)?;
    let layout: IcLayout = m
        .meta
        .get("layout")
        .cloned()
        .ok_or_else(|| IngestError::Schema("manifest meta lacks 'layout'".into()))
        .and_then(|v| serde_json::from_value(v).map_err(|e| IngestError::Schema(format!("layout: {e}"))))?;
    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| IngestError::Schema(format!("missing block '{name}'")))
    };
    let xi = take("XI")?;
    let f = take("F")?;
    let u = take("U")?;
    let n = xi.cols;
    if xi.rows != layout.n_dof() {
        return Err(IngestError::Shape {
            block: "XI".into(),
            detail: format!("{} rows, layout needs {}", xi.rows, layout.n_dof()),
        });
    }
    for b in [&f, &u] {
        if b.rows * b.cols != n {
            return Err(IngestError::Shape {
                block: b.name.clone(),
                detail: format!("{} values for {n} snapshots", b.rows * b.cols),
            });
        }
    }
    let mut data = xi.to_matrix();
    let mut field_scales = Vec::new();
    for fd in &layout.fields {
        let rows = layout.field_rows(&fd.name);
        let scale = match norm {
            BlockNormalization::None => 1.0,
            BlockNormalization::MaxAbs => {
                let mx = rows
                    .iter()
                    .flat_map(|&i| data.row(i).iter().map(|v| v.abs()).collect::<Vec<_>>())
                    .fold(0.0, f64::max);
                if mx > 0.0 {
                    mx
                } else {
                    1.0
                }
            }
        };
        if scale != 1.0 {
            for &i in &rows {
                data.row_mut(i).iter_mut().for_each(|v| *v /= scale);
            }
        }
        field_scales.push((fd.name.clone(), scale));
    }
    Ok(Ingested {
        snapshots: SnapshotMatrix::new(data, layout)?,
        force: f.data,
        disp: u.data,
        field_scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{save_dataset, write_manifest, read_manifest};

    fn one(k: f64, fy: f64, h: f64) -> IwanSystem {
        IwanSystem::new(vec![IwanElement { k, fy, h }]).unwrap()
    }

    fn small_system(n: usize) -> IwanSystem {
        IwanSpec {
            n_el: n,
            k_total: 1000.0,
            fy_min: 1.0,
            fy_max: 10.0,
            h_ratio: 0.05,
            seed: 3,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn single_element_elastic_ramp() {
        let sys = one(200.0, 50.0, 0.0);
        let path: Vec<f64> = (1..=20).map(|i| 2.0 * i as f64).collect();
        let rec = simulate_iwan(&sys, &path).unwrap();
        for (f, u) in rec.force.iter().zip(&rec.disp) {
            assert!((u * 200.0 - f).abs() < 1e-10);
        }
        assert!(rec.d_inc.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn perfectly_plastic_element_is_bilinear() {
        let sys = one(100.0, 5.0, 0.0);
        let path: Vec<f64> = (1..=40).map(|i| 0.002 * i as f64).collect();
        let rec = simulate_iwan_displacement(&sys, &path);
        for (f, u) in rec.force.iter().zip(&rec.disp) {
            assert!((f - (100.0 * u).min(5.0)).abs() < 1e-12);
        }
        assert_eq!(
            simulate_iwan(&sys, &[2.0, 4.0, 6.0]),
            Err(MacroError::CapacityExceeded { increment: 2 })
        );
    }

    #[test]
    fn force_path_is_equilibrated_and_admissible() {
        let sys = small_system(30);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = random_force_path(
            &mut rng,
            &ForcePathSettings {
                n_inc: 300,
                n_turns: 6,
                f_max: 150.0,
            },
        );
        let rec = simulate_iwan(&sys, &path).unwrap();
        let mut s = sys.clone();
        for k in 0..rec.len() {
            s.step_displacement(rec.disp[k]);
            assert!((s.force() - path[k]).abs() <= 1e-9 * 150.0);
            for (e, sl) in s.elements.iter().zip(&s.state.slip) {
                let chi = e.k * (s.state.u - sl) - e.h * sl;
                assert!(chi.abs() <= e.fy * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn first_law_and_legendre_consistency() {
        let sys = small_system(40);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = random_force_path(
            &mut rng,
            &ForcePathSettings {
                n_inc: 400,
                n_turns: 8,
                f_max: 200.0,
            },
        );
        let rec = simulate_iwan(&sys, &path).unwrap();
        let mut psi_prev = 0.0;
        for k in 0..rec.len() {
            assert!(rec.d_inc[k] >= 0.0);
            let resid = rec.work[k] - (rec.psi[k] - psi_prev) - rec.d_inc[k];
            let scale = rec.work[k].abs().max(rec.d_inc[k]).max(1e-12);
            assert!(resid.abs() <= 1e-8 * scale, "increment {k}: {resid}");
            assert!((rec.psi[k] - rec.phi[k] - rec.force[k] * rec.disp[k]).abs() <= 1e-12 * rec.psi[k].abs().max(1.0));
            psi_prev = rec.psi[k];
        }
    }

    #[test]
    fn unloading_follows_masing_rule() {
        let sys = small_system(25);
        let fa = 120.0;
        let steps = 200;
        let load = cycle_path(&[fa], steps);
        let up = simulate_iwan(&sys, &load).unwrap();
        let ua = *up.disp.last().unwrap();
        let mut after_peak = sys.clone();
        after_peak.step_displacement(ua);
        let down: Vec<f64> = (1..=steps).map(|i| fa - 2.0 * fa * i as f64 / steps as f64).collect();
        let rec = simulate_iwan(&after_peak, &down).unwrap();
        for (f, u) in rec.force.iter().zip(&rec.disp) {
            let half = (fa - f) / 2.0;
            let ub = *simulate_iwan(&sys, &[half]).unwrap().disp.last().unwrap();
            let masing = ua - 2.0 * ub;
            assert!((u - masing).abs() <= 1e-8 * ua.abs(), "{u} vs {masing}");
        }
    }

    #[test]
    fn closed_loop_area_equals_dissipation() {
        let sys = small_system(20);
        let n = 200;
        let rec = simulate_iwan(&sys, &cycle_path(&[100.0, -100.0, 100.0], n)).unwrap();
        let (i0, i1) = (n - 1, 3 * n - 1);
        assert!((rec.disp[i0] - rec.disp[i1]).abs() <= 1e-10 * rec.disp[i0].abs());
        let diss: f64 = rec.d_inc[i0 + 1..=i1].iter().sum();
        let work: f64 = rec.work[i0 + 1..=i1].iter().sum();
        assert!((work - diss).abs() <= 1e-8 * diss);
        let area = loop_area(&rec.force[i0..=i1], &rec.disp[i0..=i1]);
        assert!((area - diss).abs() <= 1e-3 * diss, "{area} {diss}");
    }

    #[test]
    fn threshold_selection_examples() {
        assert_eq!(select_modes_by_singular_threshold(&[1.0, 0.5, 1e-5], 1e-4), 2);
        assert_eq!(select_modes_by_singular_threshold(&[2.0; 4], 1e-4), 4);
    }

    fn exported(dir: &Path) -> (std::path::PathBuf, Dataset) {
        let sys = small_system(10);
        let rec = simulate_iwan(&sys, &cycle_path(&[20.0, -20.0], 30)).unwrap();
        let ds = Dataset::from_macro_records(sys.layout(), &[rec], &[0]);
        let (p, _) = save_dataset(dir, "macro", &ds).unwrap();
        (p, ds)
    }

    #[test]
    fn ingest_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p, ds) = exported(dir.path());
        let ing = ingest_snapshots(&p, BlockNormalization::None).unwrap();
        assert_eq!(ing.snapshots.data, ds.xi);
        let f: Vec<f64> = ds.drive.iter().map(|v| v[0]).collect();
        assert_eq!(ing.force, f);
        assert_eq!(ing.disp.len(), ds.len());
        let norm = ingest_snapshots(&p, BlockNormalization::MaxAbs).unwrap();
        assert!(norm.snapshots.data.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn ingest_reports_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let (p, _) = exported(dir.path());
        let mut m = read_manifest(&p).unwrap();
        let ok = ingest_snapshots(&p, BlockNormalization::None).unwrap();

        m.blocks.reverse();
        write_manifest(&p, &m).unwrap();
        assert_eq!(ingest_snapshots(&p, BlockNormalization::None).unwrap(), ok);

        let pos = m.blocks.iter().position(|b| b.name == "U").unwrap();
        let removed = m.blocks.remove(pos);
        write_manifest(&p, &m).unwrap();
        assert!(matches!(ingest_snapshots(&p, BlockNormalization::None), Err(IngestError::Schema(_))));
        m.blocks.insert(pos, removed);

        let xi = m.blocks.iter_mut().find(|b| b.name == "XI").unwrap();
        xi.unit = None;
        write_manifest(&p, &m).unwrap();
        assert_eq!(
            ingest_snapshots(&p, BlockNormalization::None).unwrap_err(),
            IngestError::Unit { block: "XI".into() }
        );
        m.blocks.iter_mut().find(|b| b.name == "XI").unwrap().unit = Some("mixed".into());
        write_manifest(&p, &m).unwrap();

        // truncate the data file so the last stored block no longer fits
        let last = m.blocks.iter().max_by_key(|b| b.offset).unwrap().name.clone();
        let bin = dir.path().join("macro.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        match ingest_snapshots(&p, BlockNormalization::None) {
            Err(IngestError::Shape { block, .. }) => assert_eq!(block, last),
            other => panic!("{other:?}"),
        }
    }
}
