use serde::{Deserialize, Serialize};

/// Componentwise `y = a ⊙ x + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        Self {
            a: vec![1.0; n],
            c: vec![0.0; n],
        }
    }

    /// Maps the per-column range of `rows` onto `[−1, 1]`. Constant columns
    /// are shifted to zero.
    pub fn min_max<'a, I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for r in rows {
            for k in 0..n {
                lo[k] = lo[k].min(r[k]);
                hi[k] = hi[k].max(r[k]);
            }
        }
        let mut s = Self::identity(n);
        for k in 0..n {
            if !lo[k].is_finite() {
                continue;
            }
            let span = hi[k] - lo[k];
            if span > 1e-300 {
                s.a[k] = 2.0 / span;
                s.c[k] = -(hi[k] + lo[k]) / span;
            } else {
                s.c[k] = -lo[k];
            }
        }
        s
    }

    /// Pure scaling by the per-column maximum magnitude.
    pub fn max_abs<'a, I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut m = vec![0.0_f64; n];
        for r in rows {
            for k in 0..n {
                m[k] = m[k].max(r[k].abs());
            }
        }
        Self {
            a: m.iter().map(|v| if *v > 1e-300 { 1.0 / v } else { 1.0 }).collect(),
            c: vec![0.0; n],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.a.iter().zip(&self.c)).map(|(v, (a, c))| a * v + c).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(self.a.iter().zip(&self.c)).map(|(v, (a, c))| (v - c) / a).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyScalers {
    pub drive: Affine,
    pub z: Affine,
    pub response: Affine,
    pub psi_scale: f64,
    pub d_scale: f64,
}

impl EnergyScalers {
    pub fn identity(n_drive: usize, r: usize) -> Self {
        Self {
            drive: Affine::identity(n_drive),
            z: Affine::identity(r),
            response: Affine::identity(n_drive),
            psi_scale: 1.0,
            d_scale: 1.0,
        }
    }

    /// Fits input ranges to `[−1, 1]`, the response range to `[−1, 1]`, and
    /// energy and dissipation to their maximum magnitudes.
    pub fn fit(samples: &[crate::ensemble::TrainingSample]) -> Self {
        let n_drive = samples.first().map_or(0, |s| s.drive.len());
        let r = samples.first().map_or(0, |s| s.z.len());
        let mx = |f: &dyn Fn(&crate::ensemble::TrainingSample) -> f64| {
            let m = samples.iter().fold(0.0_f64, |a, s| a.max(f(s).abs()));
            if m > 1e-300 {
                m
            } else {
                1.0
            }
        };
        Self {
            drive: Affine::min_max(n_drive, samples.iter().map(|s| s.drive.as_slice())),
            z: Affine::min_max(r, samples.iter().map(|s| s.z.as_slice())),
            response: Affine::min_max(n_drive, samples.iter().map(|s| s.response.as_slice())),
            psi_scale: mx(&|s| s.psi),
            d_scale: mx(&|s| s.d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_maps_range() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]];
        let s = Affine::min_max(2, rows.iter().map(|r| r.as_slice()));
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        let back = s.invert(&s.apply(&[2.5, 5.0]));
        assert!((back[0] - 2.5).abs() < 1e-15 && back[1] == 5.0);
    }
}
