use serde::{Deserialize, Serialize};

/// Nesterov-accelerated Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Nadam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c1_next = 1.0 - b1.powi(t + 1);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = b1 * self.m[i] / c1_next + (1.0 - b1) * g / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut o = Nadam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            o.step(&mut p, &[0.0; 3], 0.1);
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn descends_scalar_quadratic() {
        let mut o = Nadam::new(1);
        let mut w = vec![1.0];
        let g0 = [w[0]];
        o.step(&mut w, &g0, 0.01);
        assert!(w[0].abs() < 1.0);
        for _ in 1..500 {
            let g = [w[0]];
            o.step(&mut w, &g, 0.01);
        }
        assert!(w[0].abs() < 1e-2, "{}", w[0]);
    }
}
