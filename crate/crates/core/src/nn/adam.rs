use super::model::{Gradients, ModelParams};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per trainable tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        let zeros: Vec<Tensor<F>> = params.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Moment arithmetic runs in f64.
pub fn adam_step<F: Real>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    let gts = grads.tensors();
    if gts.len() != state.m.len() {
        return Err(Error::Shape("optimizer state does not match the model".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .trainable_mut()
        .into_iter()
        .zip(gts)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("gradient shape {:?} vs {:?}", g.shape(), p.shape())));
        }
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i].f64();
            let mi = cfg.beta1 * md[i].f64() + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * vd[i].f64() + (1.0 - cfg.beta2) * gi * gi;
            md[i] = F::of(mi);
            vd[i] = F::of(vi);
            let step = cfg.lr * (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
            pd[i] = F::of(pd[i].f64() - step);
        }
    }
    Ok(())
}
