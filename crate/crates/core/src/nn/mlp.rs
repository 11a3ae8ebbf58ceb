//! Fully connected network with hand-derived reverse pass.
//!
//! Hidden layers apply the configured activation; the output layer is affine.
//! All batched operations take row-major `(rows, features)` matrices.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Layout, ParameterVector};
use crate::seed::{self, LabRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x * tanh(softplus(x))`
    Mish,
    Identity,
}

fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Activation::Mish => x * softplus(x).tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Mish => {
                let t = softplus(x).tanh();
                t + x * sigmoid(x) * (1.0 - t * t)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `c = a · b + beta · c` for strided row/column-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
        }
    };
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: every view was bounds-checked against its backing slice above,
    // all strides are non-negative, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Intermediate values kept by [`Mlp::forward_traced`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has an output")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    activation: Activation,
    params: ParameterVector,
}

impl Mlp {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(seed: u64, widths: &[usize], activation: Activation) -> Result<Self> {
        let layout = Arc::new(Layout::new(widths)?);
        let mut params = ParameterVector::zeros(layout.clone());
        let mut rng: LabRng = seed::rng(seed, &[seed::stream::INIT]);
        for (l, slot) in layout.layers().iter().enumerate() {
            let scale = 1.0 / (slot.inputs as f64).sqrt();
            for w in params.weights_mut(l) {
                *w = rng.random_range(-scale..scale);
            }
            for b in params.bias_mut(l) {
                *b = rng.random_range(-scale..scale);
            }
        }
        Ok(Self { activation, params })
    }

    pub fn from_params(params: ParameterVector, activation: Activation) -> Self {
        Self { activation, params }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn layout(&self) -> &Arc<Layout> {
        self.params.layout()
    }

    pub fn input_dim(&self) -> usize {
        self.layout().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layout().output_dim()
    }

    fn check_input(&self, input: &[f64], rows: usize) -> Result<()> {
        if rows == 0 || input.len() != rows * self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} values, expected {} rows x {}",
                input.len(),
                rows,
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &[f64], rows: usize, out: &mut Vec<f64>) {
        let slot = self.layout().layers()[layer];
        let bias = self.params.bias(layer);
        out.clear();
        out.reserve(rows * slot.outputs);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        // z (rows x out) += x (rows x in) · Wᵀ (in x out)
        gemm(
            (rows, slot.inputs, slot.outputs),
            input,
            (slot.inputs as isize, 1),
            self.params.weights(layer),
            (1, slot.inputs as isize),
            1.0,
            out,
            (slot.outputs as isize, 1),
        );
    }

    /// Batched forward pass without retaining intermediates.
    pub fn forward(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input, rows)?;
        let n_layers = self.layout().layers().len();
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for l in 0..n_layers {
            self.affine(l, &current, rows, &mut next);
            if l + 1 < n_layers {
                let act = self.activation;
                next.iter_mut().for_each(|z| *z = act.forward(*z));
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward_traced(&self, input: &[f64], rows: usize) -> Result<Trace> {
        self.check_input(input, rows)?;
        let n_layers = self.layout().layers().len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let mut z = Vec::new();
            self.affine(l, &acts[l], rows, &mut z);
            let a = if l + 1 < n_layers {
                z.iter().map(|&v| self.activation.forward(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Ok(Trace { rows, acts, pre })
    }

    /// Reverse pass: gradient of a scalar loss with respect to all parameters
    /// given `d_output = dL/d(output)`.
    pub fn backward(&self, trace: &Trace, d_output: &[f64]) -> Result<ParameterVector> {
        let rows = trace.rows;
        if d_output.len() != rows * self.output_dim() {
            return Err(Error::shape(format!(
                "output gradient has {} values, expected {}",
                d_output.len(),
                rows * self.output_dim()
            )));
        }
        let layers = self.layout().layers();
        let mut grad = self.params.zeros_like();
        let mut dz = d_output.to_vec();
        for l in (0..layers.len()).rev() {
            let slot = layers[l];
            // dW (out x in) = dZᵀ (out x rows) · A (rows x in)
            gemm(
                (slot.outputs, rows, slot.inputs),
                &dz,
                (1, slot.outputs as isize),
                &trace.acts[l],
                (slot.inputs as isize, 1),
                0.0,
                grad.weights_mut(l),
                (slot.inputs as isize, 1),
            );
            let db = grad.bias_mut(l);
            for row in dz.chunks_exact(slot.outputs) {
                for (b, d) in db.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l == 0 {
                break;
            }
            // dA (rows x in) = dZ (rows x out) · W (out x in)
            let mut da = vec![0.0; rows * slot.inputs];
            gemm(
                (rows, slot.outputs, slot.inputs),
                &dz,
                (slot.outputs as isize, 1),
                self.params.weights(l),
                (slot.inputs as isize, 1),
                0.0,
                &mut da,
                (slot.inputs as isize, 1),
            );
            let act = self.activation;
            for (d, &z) in da.iter_mut().zip(&trace.pre[l - 1]) {
                *d *= act.derivative(z);
            }
            dz = da;
        }
        Ok(grad)
    }

    /// Mean over rows and output features of the squared error, and its
    /// gradient.
    pub fn mse_and_grad(
        &self,
        input: &[f64],
        targets: &[f64],
        rows: usize,
    ) -> Result<(f64, ParameterVector)> {
        if targets.len() != rows * self.output_dim() {
            return Err(Error::shape(format!(
                "targets have {} values, expected {}",
                targets.len(),
                rows * self.output_dim()
            )));
        }
        if !input.iter().chain(targets).all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite network input or target"));
        }
        let trace = self.forward_traced(input, rows)?;
        let scale = 1.0 / targets.len() as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = trace
            .output()
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                2.0 * r * scale
            })
            .collect();
        let grad = self.backward(&trace, &d_out)?;
        Ok((loss * scale, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_bit_identical() {
        let a = Mlp::init(7, &[4, 8, 2], Activation::Mish).unwrap();
        let b = Mlp::init(7, &[4, 8, 2], Activation::Mish).unwrap();
        assert_eq!(a.params().values(), b.params().values());
        let c = Mlp::init(8, &[4, 8, 2], Activation::Mish).unwrap();
        assert_ne!(a.params().values(), c.params().values());
    }

    #[test]
    fn init_respects_fan_in_scale() {
        let net = Mlp::init(1, &[16, 4], Activation::Mish).unwrap();
        assert!(net.params().max_abs() < 0.25);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = Mlp::init(3, &[4, 8, 2], Activation::Mish).unwrap();
        net.params_mut().values_mut().fill(0.0);
        let y = net.forward(&[0.3, -1.0, 2.0, 5.0], 1).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::init(3, &[3, 3], Activation::Identity).unwrap();
        let p = net.params_mut();
        p.values_mut().fill(0.0);
        for i in 0..3 {
            p.weights_mut(0)[i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 7.25, 1.0, 2.0, 3.0];
        assert_eq!(net.forward(&x, 2).unwrap(), x.to_vec());
    }

    #[test]
    fn mish_derivative_matches_central_difference() {
        for &x in &[-25.0, -3.0, -0.5, 0.0, 0.7, 4.0, 30.0] {
            let h = 1e-6;
            let fd = (Activation::Mish.forward(x + h) - Activation::Mish.forward(x - h)) / (2.0 * h);
            assert!((fd - Activation::Mish.derivative(x)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn batch_forward_matches_row_by_row() {
        let net = Mlp::init(11, &[3, 5, 5, 2], Activation::Mish).unwrap();
        let x = [0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 0.0, 0.0, -0.4];
        let batched = net.forward(&x, 3).unwrap();
        for r in 0..3 {
            let single = net.forward(&x[r * 3..r * 3 + 3], 1).unwrap();
            assert_eq!(&batched[r * 2..r * 2 + 2], single.as_slice());
        }
    }

    #[test]
    fn mismatched_shapes_are_errors() {
        let net = Mlp::init(1, &[3, 2], Activation::Mish).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0], 1), Err(Error::Shape(_))));
        assert!(matches!(
            net.mse_and_grad(&[1.0, 2.0, 3.0], &[1.0], 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn non_finite_inputs_are_numeric_errors() {
        let net = Mlp::init(1, &[2, 2], Activation::Mish).unwrap();
        assert!(matches!(
            net.mse_and_grad(&[f64::NAN, 0.0], &[0.0, 0.0], 1),
            Err(Error::Numeric(_))
        ));
    }
}
