use super::params::ParameterVector;
use crate::{Error, Result};

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParameterVector, grads: &ParameterVector) -> Result<()> {
        self.step_slice(params.values_mut(), grads.values())
    }

    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut opt = Adam::new(3, 0.1);
        for _ in 0..10 {
            opt.step_slice(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(opt.steps(), 10);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut opt = Adam::new(3, 0.01);
        opt.step_slice(&mut p, &[3.0, -0.002, 1e4]).unwrap();
        // m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps).
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-7);
        assert!((p[2] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        // Independent scalar recurrence of the textbook update.
        let (mut x_ref, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut x = [1.0];
        let mut opt = Adam::new(1, 0.1);
        for s in 1..=200 {
            let g = 2.0 * x_ref;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(s));
            let vh = v / (1.0 - 0.999f64.powi(s));
            x_ref -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let g = [2.0 * x[0]];
            opt.step_slice(&mut x, &g).unwrap();
        }
        assert!((x[0] - x_ref).abs() < 1e-12);
        assert!(x[0].abs() < 1e-2);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let mut opt = Adam::new(2, 0.1);
        assert!(matches!(
            opt.step_slice(&mut [0.0; 3], &[0.0; 3]),
            Err(Error::Shape(_))
        ));
    }
}
