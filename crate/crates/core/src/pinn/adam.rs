//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use super::PinnError;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of steps taken.
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<(), PinnError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.m.len() == self.v.len();
        if ok {
            Ok(())
        } else {
            Err(PinnError::Config("invalid Adam hyperparameters"))
        }
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), PinnError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(PinnError::Shape {
                what: "Adam state",
                expected: self.m.len(),
                got: grad.len().min(params.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(PinnError::NonFinite { term: "gradient" });
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2) = (self.beta1, self.beta2);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let mut a = AdamState::new(1, 1e-3);
            let mut x = [0.5];
            a.step(&mut x, &[g]).unwrap();
            let moved = x[0] - 0.5;
            assert!((moved + 1e-3 * g.signum()).abs() < 1e-3 * 1e-8 / g.abs() * 2.0 + 1e-15);
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut a = AdamState::new(2, 1e-3);
        let mut x = [1.0, 2.0];
        a.step(&mut x, &[1.0, -1.0]).unwrap();
        let (m, v) = (a.m.clone(), a.v.clone());
        let before = x;
        // With zero gradient the update is lr * m_hat / (sqrt(v_hat) + eps),
        // which is not zero while momentum persists; check moments decay.
        let mut a0 = AdamState::new(2, 1e-3);
        let mut y = [1.0, 2.0];
        a0.step(&mut y, &[0.0, 0.0]).unwrap();
        assert_eq!(y, [1.0, 2.0]);
        a.step(&mut x, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            assert_eq!(a.m[i], 0.9 * m[i]);
            assert_eq!(a.v[i], 0.999 * v[i]);
        }
        assert_ne!(x, before);
    }

    #[test]
    fn rejects_bad_input() {
        let mut a = AdamState::new(2, 1e-3);
        let mut x = [0.0, 0.0];
        assert!(a.step(&mut x, &[1.0]).is_err());
        assert!(a.step(&mut x, &[1.0, f64::NAN]).is_err());
        assert_eq!(a.t, 0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut a = AdamState::new(2, 0.05);
        let mut x = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.0), 8.0 * (x[1] + 0.5)];
            a.step(&mut x, &g).unwrap();
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
    }
}
