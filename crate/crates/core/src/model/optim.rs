use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{Gradients, ModelState};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: i32,
    m_w: Vec<DenseMatrix>,
    v_w: Vec<DenseMatrix>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(state: &ModelState) -> Self {
        let zeros_w: Vec<_> = state
            .weights
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect();
        let zeros_b: Vec<_> = state.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            step: 0,
            m_w: zeros_w.clone(),
            v_w: zeros_w,
            m_b: zeros_b.clone(),
            v_b: zeros_b,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

fn update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One bias-corrected Adam update of every weight and bias.
pub fn adam_step(state: &mut ModelState, grads: &Gradients, opt: &mut AdamState, lr: f64) -> Result<()> {
    if grads.weights.len() != state.weights.len() || grads.biases.len() != state.biases.len() {
        return Err(Error::shape("gradient count differs from parameter count"));
    }
    for (w, g) in state.weights.iter().zip(&grads.weights) {
        if w.shape() != g.shape() {
            return Err(Error::shape("weight gradient shape mismatch"));
        }
    }
    for (b, g) in state.biases.iter().zip(&grads.biases) {
        if b.len() != g.len() {
            return Err(Error::shape("bias gradient length mismatch"));
        }
    }
    opt.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(opt.step);
    let c2 = 1.0 - ADAM_BETA2.powi(opt.step);
    for l in 0..state.weights.len() {
        update(
            state.weights[l].as_mut_slice(),
            grads.weights[l].as_slice(),
            opt.m_w[l].as_mut_slice(),
            opt.v_w[l].as_mut_slice(),
            lr,
            c1,
            c2,
        );
        update(
            &mut state.biases[l],
            &grads.biases[l],
            &mut opt.m_b[l],
            &mut opt.v_b[l],
            lr,
            c1,
            c2,
        );
    }
    Ok(())
}
