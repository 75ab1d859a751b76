//! Pointwise small-strain elasto-plasticity with linear isotropic hardening.
//!
//! Both von Mises and Drucker–Prager are expressed as a cone in the
//! meridian plane, `f(σ, α) = q + η·p − (σ_y0 + H·α)`, with `p` the
//! tension-positive mean stress, `q = √(3 J2)` and `α` the equivalent plastic
//! strain (`α̇ = λ̇`). Stored energy is `ψ = ½ ε_el:C:ε_el + ½ H α²`.
//!
//! Increments are integrated along the straight strain path with unit pseudo
//! time: the elastic segment is located exactly and the plastic segment is
//! integrated by an embedded Runge–Kutta pair with consistency projection, so
//! splitting an increment into sub-increments does not change the result
//! beyond the integration tolerance. The work-average stress over the
//! increment (`sigma_mid`) is returned alongside the end stress; with it the
//! discrete first law `sigma_mid : Δε = Δψ + d_inc` closes to that tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Mandel66, SymTensor6, TensorUnit};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Increment norms at or above this are outside the small-strain contract.
pub const MAX_INCREMENT_NORM: f64 = 0.05;

const MAX_RK_STEPS: usize = 50;
const RK_RTOL: f64 = 1e-11;
const RK_ATOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlasticityError {
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("strain increment norm {0:.3e} exceeds the small-strain limit")]
    IncrementTooLarge(f64),
    #[error("plastic integration did not converge within {0} steps")]
    NonConvergence(usize),
}

/// Yield criterion with its strength parameters (angles in degrees, stresses in kPa).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YieldModel {
    /// Pressure-insensitive; `su` is the shear strength, `q_y = √3·su`.
    VonMises { su: f64 },
    /// Drucker–Prager matched to Mohr–Coulomb on the compression meridian.
    DruckerPrager {
        cohesion: f64,
        friction_deg: f64,
        dilatancy_deg: f64,
    },
    /// Linear Drucker–Prager in `p–q` form, `q + p·tan β − d ≤ 0`.
    DruckerPragerLinear {
        beta_deg: f64,
        d: f64,
        dilation_deg: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Young's modulus (kPa).
    pub young: f64,
    pub poisson: f64,
    /// Linear isotropic hardening modulus (kPa).
    pub hardening: f64,
    pub model: YieldModel,
}

/// Meridian-plane cone: `η` for the yield surface, `η_flow` for the plastic potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cone {
    pub eta: f64,
    pub eta_flow: f64,
    pub sigma_y0: f64,
}

/// Drucker–Prager `(α_dp, k_dp)` for `√J2 + α_dp·I1 − k_dp` matching Mohr–Coulomb
/// on the compression meridian.
pub fn dp_params_from_mc(cohesion: f64, friction_deg: f64) -> (f64, f64) {
    let phi = friction_deg.to_radians();
    let (s, c) = phi.sin_cos();
    let den = SQRT3 * (3.0 - s);
    (2.0 * s / den, 6.0 * cohesion * c / den)
}

impl MaterialParams {
    pub fn von_mises(young: f64, poisson: f64, su: f64, hardening: f64) -> Self {
        Self {
            young,
            poisson,
            hardening,
            model: YieldModel::VonMises { su },
        }
    }

    pub fn drucker_prager(
        young: f64,
        poisson: f64,
        friction_deg: f64,
        dilatancy_deg: f64,
        cohesion: f64,
        hardening: f64,
    ) -> Self {
        Self {
            young,
            poisson,
            hardening,
            model: YieldModel::DruckerPrager {
                cohesion,
                friction_deg,
                dilatancy_deg,
            },
        }
    }

    pub fn validate(&self) -> Result<(), PlasticityError> {
        let bad = |m: &str| Err(PlasticityError::InvalidParams(m.to_string()));
        if !(self.young > 0.0) {
            return bad("Young's modulus must be positive");
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return bad("Poisson ratio must lie in (-1, 0.5)");
        }
        if !(self.hardening >= 0.0) {
            return bad("hardening modulus must be non-negative");
        }
        match self.model {
            YieldModel::VonMises { su } => {
                if !(su >= 0.0) {
                    return bad("undrained strength must be non-negative");
                }
            }
            YieldModel::DruckerPrager {
                cohesion,
                friction_deg,
                dilatancy_deg,
            } => {
                if !(cohesion >= 0.0) {
                    return bad("cohesion must be non-negative");
                }
                if !(0.0..90.0).contains(&friction_deg) || !(0.0..90.0).contains(&dilatancy_deg) {
                    return bad("friction and dilatancy angles must lie in [0, 90)");
                }
            }
            YieldModel::DruckerPragerLinear {
                beta_deg,
                d,
                dilation_deg,
            } => {
                if !(d >= 0.0) {
                    return bad("cohesion d must be non-negative");
                }
                if !(0.0..90.0).contains(&beta_deg) || !(0.0..90.0).contains(&dilation_deg) {
                    return bad("friction and dilation angles must lie in [0, 90)");
                }
            }
        }
        Ok(())
    }

    pub fn is_associative(&self) -> bool {
        match self.model {
            YieldModel::VonMises { .. } => true,
            YieldModel::DruckerPrager {
                friction_deg,
                dilatancy_deg,
                ..
            } => friction_deg == dilatancy_deg,
            YieldModel::DruckerPragerLinear {
                beta_deg,
                dilation_deg,
                ..
            } => beta_deg == dilation_deg,
        }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    pub fn bulk_modulus(&self) -> f64 {
        self.young / (3.0 * (1.0 - 2.0 * self.poisson))
    }

    pub fn cone(&self) -> Cone {
        match self.model {
            YieldModel::VonMises { su } => Cone {
                eta: 0.0,
                eta_flow: 0.0,
                sigma_y0: SQRT3 * su,
            },
            YieldModel::DruckerPrager {
                cohesion,
                friction_deg,
                dilatancy_deg,
            } => {
                let (a, k) = dp_params_from_mc(cohesion, friction_deg);
                let (a_flow, _) = dp_params_from_mc(cohesion, dilatancy_deg);
                Cone {
                    eta: 3.0 * SQRT3 * a,
                    eta_flow: 3.0 * SQRT3 * a_flow,
                    sigma_y0: SQRT3 * k,
                }
            }
            YieldModel::DruckerPragerLinear {
                beta_deg,
                d,
                dilation_deg,
            } => Cone {
                eta: beta_deg.to_radians().tan(),
                eta_flow: dilation_deg.to_radians().tan(),
                sigma_y0: d,
            },
        }
    }

    /// Scale used for the yield-consistency tolerance, `c + Su + 1`.
    pub fn strength_scale(&self) -> f64 {
        match self.model {
            YieldModel::VonMises { su } => su + 1.0,
            YieldModel::DruckerPrager { cohesion, .. } => cohesion + 1.0,
            YieldModel::DruckerPragerLinear { d, .. } => d + 1.0,
        }
    }

    /// Elastic stress for an elastic strain.
    pub fn elastic_stress(&self, eps_el: &SymTensor6) -> SymTensor6 {
        let g2 = 2.0 * self.shear_modulus();
        let k = self.bulk_modulus();
        let tr = eps_el.trace();
        let mut c = [0.0; 6];
        for (i, v) in c.iter_mut().enumerate() {
            *v = g2 * eps_el.c[i];
        }
        let vol = (k - g2 / 3.0) * tr;
        for v in c.iter_mut().take(3) {
            *v += vol;
        }
        SymTensor6::stress(c)
    }

    /// Helmholtz density `½ ε_el:C:ε_el + ½ H α²` (kPa).
    pub fn helmholtz(&self, eps_el: &SymTensor6, alpha: f64) -> f64 {
        0.5 * self.elastic_stress(eps_el).dot(eps_el) + 0.5 * self.hardening * alpha * alpha
    }

    pub fn yield_function(&self, sigma: &SymTensor6, alpha: f64) -> f64 {
        let cone = self.cone();
        let inv = sigma.invariants();
        inv.q + cone.eta * inv.p - (cone.sigma_y0 + self.hardening * alpha)
    }
}

/// Isotropic Hooke operator in the Mandel basis (kPa).
pub fn elastic_stiffness(params: &MaterialParams) -> Result<Mandel66, PlasticityError> {
    if params.poisson >= 0.5 {
        return Err(PlasticityError::InvalidParams(
            "Poisson ratio must be below 0.5".into(),
        ));
    }
    params.validate()?;
    let g = params.shear_modulus();
    let k = params.bulk_modulus();
    let mut c = [[0.0; 6]; 6];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 2.0 * g;
    }
    for row in c.iter_mut().take(3) {
        for v in row.iter_mut().take(3) {
            *v += k - 2.0 * g / 3.0;
        }
    }
    Ok(c)
}

/// Microscale state of one integration point.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PointState {
    pub eps_el: SymTensor6,
    pub eps_pl: SymTensor6,
    /// Equivalent plastic strain.
    pub alpha: f64,
}

impl PointState {
    pub fn total_strain(&self) -> SymTensor6 {
        self.eps_el + self.eps_pl
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementResult {
    pub state: PointState,
    /// End-of-increment stress.
    pub sigma: SymTensor6,
    /// Average stress over the increment; `sigma_mid : Δε` is the increment work.
    pub sigma_mid: SymTensor6,
    /// Helmholtz density at the end of the increment.
    pub psi: f64,
    /// Energy dissipated over the increment.
    pub d_inc: f64,
    /// The return reached the cone apex.
    pub apex: bool,
}

// Integration state: eps_pl (0..6), alpha (6), ∫eps_pl dt (7..13), dissipation (13).
const NY: usize = 14;
type Y = [f64; NY];

struct Kernel {
    cone: Cone,
    g: f64,
    k: f64,
    h: f64,
    denom: f64,
    eps0: [f64; 6],
    deps: [f64; 6],
}

struct Local {
    sigma: [f64; 6],
    s: [f64; 6],
    q: f64,
    p: f64,
    f: f64,
}

enum Rhs {
    Rate(Y),
    Apex,
}

fn dev(v: &[f64; 6]) -> ([f64; 6], f64) {
    let tr = v[0] + v[1] + v[2];
    let mut d = *v;
    for x in d.iter_mut().take(3) {
        *x -= tr / 3.0;
    }
    (d, tr)
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

impl Kernel {
    fn new(p: &MaterialParams, eps0: [f64; 6], deps: [f64; 6]) -> Self {
        let cone = p.cone();
        let g = p.shear_modulus();
        let k = p.bulk_modulus();
        let h = p.hardening;
        Self {
            cone,
            g,
            k,
            h,
            denom: 3.0 * g + k * cone.eta * cone.eta_flow + h,
            eps0,
            deps,
        }
    }

    fn strain_at(&self, t: f64) -> [f64; 6] {
        let mut e = [0.0; 6];
        for (i, v) in e.iter_mut().enumerate() {
            *v = self.eps0[i] + t * self.deps[i];
        }
        e
    }

    fn local(&self, t: f64, eps_pl: &[f64], alpha: f64) -> Local {
        let e = self.strain_at(t);
        let mut el = [0.0; 6];
        for i in 0..6 {
            el[i] = e[i] - eps_pl[i];
        }
        let (de, tr) = dev(&el);
        let mut s = [0.0; 6];
        for i in 0..6 {
            s[i] = 2.0 * self.g * de[i];
        }
        let p = self.k * tr;
        let mut sigma = s;
        for v in sigma.iter_mut().take(3) {
            *v += p;
        }
        let q = (1.5 * dot6(&s, &s)).sqrt();
        let f = q + self.cone.eta * p - (self.cone.sigma_y0 + self.h * alpha);
        Local { sigma, s, q, p, f }
    }

    fn yield_scale(&self, alpha: f64) -> f64 {
        self.cone.sigma_y0 + self.h * alpha + 1.0
    }

    fn q_floor(&self, loc: &Local, alpha: f64) -> f64 {
        1e-9 * (self.yield_scale(alpha) + self.cone.eta * loc.p.abs())
    }

    fn flow_dir(&self, loc: &Local) -> [f64; 6] {
        let mut m = [0.0; 6];
        for i in 0..6 {
            m[i] = 1.5 * loc.s[i] / loc.q;
        }
        for v in m.iter_mut().take(3) {
            *v += self.cone.eta_flow / 3.0;
        }
        m
    }

    /// Unclamped plastic multiplier rate for a state on the yield surface.
    fn loading_rate(&self, loc: &Local) -> f64 {
        let (de, tr) = dev(&self.deps);
        (3.0 * self.g * dot6(&loc.s, &de) / loc.q + self.cone.eta * self.k * tr) / self.denom
    }

    fn rhs(&self, t: f64, y: &Y) -> Rhs {
        let alpha = y[6];
        let loc = self.local(t, &y[0..6], alpha);
        if loc.q < self.q_floor(&loc, alpha) {
            return Rhs::Apex;
        }
        let lam = self.loading_rate(&loc).max(0.0);
        let m = self.flow_dir(&loc);
        let mut out = [0.0; NY];
        for i in 0..6 {
            out[i] = lam * m[i];
            out[7 + i] = y[i];
        }
        out[6] = lam;
        out[13] = lam * (dot6(&loc.sigma, &m) - self.h * alpha);
        Rhs::Rate(out)
    }

    /// Pull a slightly violating state back onto the yield surface.
    fn project(&self, t: f64, y: &mut Y) {
        let loc = self.local(t, &y[0..6], y[6]);
        if loc.f <= 0.0 || loc.q <= 0.0 {
            return;
        }
        let dl = loc.f / self.denom;
        let m = self.flow_dir(&loc);
        let work = dot6(&loc.sigma, &m) - self.h * y[6];
        for i in 0..6 {
            y[i] += dl * m[i];
        }
        y[6] += dl;
        y[13] += dl * work;
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &Y, terms: &[(f64, &Y)], h: f64) -> Y {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..NY {
            out[i] += h * c * k[i];
        }
    }
    out
}

enum PlasticOutcome {
    Done,
    Apex(f64),
}

/// Integrates the plastic phase from `t0` to 1; stops early at the apex.
fn integrate_plastic(kern: &Kernel, t0: f64, y: &mut Y) -> Result<PlasticOutcome, PlasticityError> {
    let mut t = t0;
    let mut h = (1.0 - t0).min(0.25);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    while t < 1.0 {
        if steps + rejected > MAX_RK_STEPS * 20 || steps > MAX_RK_STEPS * 10 {
            return Err(PlasticityError::NonConvergence(steps));
        }
        h = h.min(1.0 - t);
        let stage = |tt: f64, yy: &Y| kern.rhs(tt, yy);
        macro_rules! rate {
            ($tt:expr, $yy:expr) => {
                match stage($tt, &$yy) {
                    Rhs::Rate(r) => r,
                    Rhs::Apex => return Ok(PlasticOutcome::Apex(t)),
                }
            };
        }
        let k1 = rate!(t, *y);
        let k2 = rate!(t + h / 5.0, axpy(y, &[(A21, &k1)], h));
        let k3 = rate!(t + 0.3 * h, axpy(y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = rate!(t + 0.8 * h, axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = rate!(
            t + 8.0 / 9.0 * h,
            axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h)
        );
        let k6 = rate!(
            t + h,
            axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h)
        );
        let y_new = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = rate!(t + h, y_new);
        let mut err: f64 = 0.0;
        for i in 0..NY {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = RK_ATOL + RK_RTOL * y[i].abs().max(y_new[i].abs()).max(kern.deps_scale());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 || h < 1e-12 {
            t += h;
            *y = y_new;
            kern.project(t.min(1.0), y);
            steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
        }
    }
    Ok(PlasticOutcome::Done)
}

impl Kernel {
    fn deps_scale(&self) -> f64 {
        self.deps.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * 1e-3
    }
}

/// First pseudo-time in `(t_a, 1]` at which the straight elastic path leaves the
/// elastic domain, if any. `f` is convex along the path.
fn elastic_exit(kern: &Kernel, t_a: f64, eps_pl: &[f64], alpha: f64, tol: f64) -> Option<f64> {
    let f = |t: f64| kern.local(t, eps_pl, alpha).f;
    if f(1.0) <= tol {
        return None;
    }
    let (mut lo, mut hi) = (t_a, 1.0);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let t_min = 0.5 * (lo + hi);
    let mut lo = if f(t_min) <= 0.0 { t_min } else { t_a };
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Backward-Euler closest-point return over the pseudo-time interval `[t, 1]`.
/// Handles the Drucker–Prager apex.
fn backward_euler_tail(kern: &Kernel, t: f64, y: &mut Y) -> Result<bool, PlasticityError> {
    let start = kern.local(t, &y[0..6], y[6]);
    let trial = kern.local(1.0, &y[0..6], y[6]);
    let dt = 1.0 - t;
    let eps_pl_start: [f64; 6] = y[0..6].try_into().unwrap_or([0.0; 6]);
    let alpha0 = y[6];
    let mut apex = false;
    if trial.f > 0.0 {
        let cone = kern.cone;
        let dl = trial.f / kern.denom;
        if trial.q - 3.0 * kern.g * dl >= 0.0 && trial.q > 0.0 {
            let m = kern.flow_dir(&trial);
            for i in 0..6 {
                y[i] += dl * m[i];
            }
            y[6] += dl;
        } else {
            if !(cone.eta > 0.0 && cone.eta_flow > 0.0) {
                return Err(PlasticityError::NonConvergence(0));
            }
            apex = true;
            let dv = (cone.eta * trial.p - cone.sigma_y0 - kern.h * alpha0)
                / (cone.eta * kern.k + kern.h / cone.eta_flow);
            // deviatoric trial elastic strain becomes plastic, s = 0
            for i in 0..6 {
                y[i] += trial.s[i] / (2.0 * kern.g);
            }
            for v in y.iter_mut().take(3) {
                *v += dv / 3.0;
            }
            y[6] += dv / cone.eta_flow;
        }
        let end = kern.local(1.0, &y[0..6], y[6]);
        let mut dpl = [0.0; 6];
        for i in 0..6 {
            dpl[i] = y[i] - eps_pl_start[i];
        }
        let d_alpha = y[6] - alpha0;
        let alpha_mid = 0.5 * (y[6] + alpha0);
        // stress is linear in time along the tail, so the trapezoid rule is exact
        let mut sigma_avg = [0.0; 6];
        for i in 0..6 {
            sigma_avg[i] = 0.5 * (start.sigma[i] + end.sigma[i]);
        }
        y[13] += dot6(&sigma_avg, &dpl) - kern.h * alpha_mid * d_alpha;
    }
    // trapezoidal average of eps_pl over the tail
    for i in 0..6 {
        y[7 + i] += 0.5 * dt * (eps_pl_start[i] + y[i]);
    }
    Ok(apex)
}

/// Integrates one strain increment from `state`.
pub fn integrate_increment(
    params: &MaterialParams,
    state: &PointState,
    d_eps: &SymTensor6,
) -> Result<IncrementResult, PlasticityError> {
    let n = d_eps.norm();
    if !(n < MAX_INCREMENT_NORM) {
        return Err(PlasticityError::IncrementTooLarge(n));
    }
    let eps0 = state.total_strain();
    let kern = Kernel::new(params, eps0.c, d_eps.c);
    let mut y: Y = [0.0; NY];
    y[0..6].copy_from_slice(&state.eps_pl.c);
    y[6] = state.alpha;

    let mut apex = false;
    let mut t = 0.0;
    if n > 0.0 {
        let mut phases = 0;
        while t < 1.0 {
            phases += 1;
            if phases > 8 {
                return Err(PlasticityError::NonConvergence(phases));
            }
            let tol = 1e-10 * kern.yield_scale(y[6]);
            let loc = kern.local(t, &y[0..6], y[6]);
            let on_surface = loc.f >= -tol;
            if on_surface && loc.q < kern.q_floor(&loc, y[6]) {
                apex |= backward_euler_tail(&kern, t, &mut y)?;
                break;
            }
            if on_surface && kern.loading_rate(&loc) > 0.0 {
                kern.project(t, &mut y);
                match integrate_plastic(&kern, t, &mut y)? {
                    PlasticOutcome::Done => {
                        t = 1.0;
                    }
                    PlasticOutcome::Apex(ta) => {
                        apex |= backward_euler_tail(&kern, ta, &mut y)?;
                        t = 1.0;
                    }
                }
                continue;
            }
            // elastic segment
            let eps_pl: [f64; 6] = y[0..6].try_into().unwrap_or([0.0; 6]);
            let exit = elastic_exit(&kern, t, &eps_pl, y[6], tol);
            let t_end = exit.unwrap_or(1.0);
            for i in 0..6 {
                y[7 + i] += (t_end - t) * eps_pl[i];
            }
            t = t_end;
            if exit.is_none() {
                break;
            }
        }
    }

    let eps1 = eps0 + *d_eps;
    let eps_pl = SymTensor6::strain(y[0..6].try_into().unwrap_or([0.0; 6]));
    let eps_el = eps1 - eps_pl;
    let new_state = PointState {
        eps_el,
        eps_pl,
        alpha: y[6],
    };
    let sigma = params.elastic_stress(&eps_el);
    let mut avg_el = [0.0; 6];
    for i in 0..6 {
        avg_el[i] = eps0.c[i] + 0.5 * d_eps.c[i] - y[7 + i];
    }
    let sigma_mid = if n > 0.0 {
        params.elastic_stress(&SymTensor6::strain(avg_el))
    } else {
        sigma
    };
    Ok(IncrementResult {
        state: new_state,
        sigma,
        sigma_mid,
        psi: params.helmholtz(&eps_el, y[6]),
        d_inc: y[13],
        apex,
    })
}

/// Single backward-Euler return over the whole increment (first-order in the
/// increment size for non-radial paths). Kept as a reference integrator.
pub fn integrate_increment_backward_euler(
    params: &MaterialParams,
    state: &PointState,
    d_eps: &SymTensor6,
) -> Result<IncrementResult, PlasticityError> {
    let eps0 = state.total_strain();
    let kern = Kernel::new(params, eps0.c, d_eps.c);
    let mut y: Y = [0.0; NY];
    y[0..6].copy_from_slice(&state.eps_pl.c);
    y[6] = state.alpha;
    let apex = backward_euler_tail(&kern, 0.0, &mut y)?;
    let eps_pl = SymTensor6::strain(y[0..6].try_into().unwrap_or([0.0; 6]));
    let eps_el = eps0 + *d_eps - eps_pl;
    let sigma = params.elastic_stress(&eps_el);
    let sigma0 = params.elastic_stress(&state.eps_el);
    Ok(IncrementResult {
        state: PointState {
            eps_el,
            eps_pl,
            alpha: y[6],
        },
        sigma,
        sigma_mid: (sigma0 + sigma) * 0.5,
        psi: params.helmholtz(&eps_el, y[6]),
        d_inc: y[13],
        apex,
    })
}

/// `|σ_mid:Δε − Δψ − d_inc|` for one increment.
pub fn first_law_residual(params: &MaterialParams, before: &PointState, res: &IncrementResult, d_eps: &SymTensor6) -> f64 {
    let psi0 = params.helmholtz(&before.eps_el, before.alpha);
    (res.sigma_mid.dot(d_eps) - (res.psi - psi0) - res.d_inc).abs()
}

/// Stress scale of a material used for first-law tolerances (kPa).
pub fn stress_scale(params: &MaterialParams) -> f64 {
    params.young.max(1.0)
}

pub fn zero_stress() -> SymTensor6 {
    SymTensor6::zero(TensorUnit::Stress)
}
