use serde::{Deserialize, Serialize};

use super::evolution::EvolutionModel;
use super::model::EnergyModel;
use super::TannError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    /// Consume recorded ISVs.
    #[default]
    TeacherForced,
    /// Advance ISVs with the evolution model.
    Autonomous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub response: Vec<f64>,
    pub psi: f64,
    pub d: f64,
    pub z: Vec<f64>,
}

/// Runs the energy model along a drive history (cumulative values per
/// increment). `recorded_z` is required in teacher-forced mode.
pub fn infer_path(
    m: &EnergyModel,
    evolution: Option<&EvolutionModel>,
    mode: InferMode,
    drive: &[Vec<f64>],
    recorded_z: Option<&[Vec<f64>]>,
    z0: &[f64],
) -> Result<Vec<Prediction>, TannError> {
    if z0.len() != m.r {
        return Err(TannError::DimensionMismatch {
            expected: (m.n_drive, m.r),
            got: (m.n_drive, z0.len()),
        });
    }
    let evo = match mode {
        InferMode::Autonomous => Some(evolution.ok_or(TannError::ModeMismatch)?),
        InferMode::TeacherForced => None,
    };
    let rec = match mode {
        InferMode::TeacherForced => {
            let r = recorded_z.ok_or(TannError::MissingIsv)?;
            if r.len() != drive.len() {
                return Err(TannError::MissingIsv);
            }
            Some(r)
        }
        InferMode::Autonomous => None,
    };
    let mut out = Vec::with_capacity(drive.len());
    let mut z_prev = z0.to_vec();
    let mut e_prev = vec![0.0; m.n_drive];
    for (t, e) in drive.iter().enumerate() {
        let z = match (rec, evo) {
            (Some(r), _) => r[t].clone(),
            (None, Some(ev)) => {
                let de: Vec<f64> = e.iter().zip(&e_prev).map(|(a, b)| a - b).collect();
                let dz = ev.predict(&e_prev, &z_prev, &de)?;
                z_prev.iter().zip(&dz).map(|(a, b)| a + b).collect()
            }
            (None, None) => unreachable!("mode checked above"),
        };
        let ev = m.evaluate(e, &z)?;
        let d = -ev
            .dpsi_dz
            .iter()
            .zip(z.iter().zip(&z_prev))
            .map(|(g, (a, b))| g * (a - b))
            .sum::<f64>();
        out.push(Prediction {
            response: ev.response,
            psi: ev.psi,
            d,
            z: z.clone(),
        });
        z_prev = z;
        e_prev = e.clone();
    }
    Ok(out)
}
