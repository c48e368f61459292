use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::model::{read_tensors, write_tensors, ModelParams, PARAM_NAMES};

/// Bias-corrected Adam moments plus hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `θ ← θ − lr·weight_decay·θ` each step.
    pub weight_decay: f64,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// A header tensor `[t, lr, β1, β2, ε, weight_decay]`, then `m`, then `v`.
    pub fn write(&self, out: &mut Vec<u8>) {
        let header = Tensor::vector(vec![
            self.t as f64,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
        ]);
        write_tensors(out, std::slice::from_ref(&header));
        write_tensors(out, &self.m);
        write_tensors(out, &self.v);
    }

    pub fn read<'a>(bytes: &'a [u8], params: &ModelParams) -> Result<(Self, &'a [u8])> {
        let n = params.tensors().len();
        let (header, rest) = read_tensors(bytes, 1)?;
        let h = header[0].data();
        if h.len() != 6 {
            return Err(Error::Parse {
                source_name: "checkpoint".into(),
                line: 0,
                message: format!("optimizer header has {} fields, expected 6", h.len()),
            });
        }
        let (m, rest) = read_tensors(rest, n)?;
        let (v, rest) = read_tensors(rest, n)?;
        for ((mm, vv), p) in m.iter().zip(&v).zip(params.tensors()) {
            if mm.shape() != p.shape() || vv.shape() != p.shape() {
                return Err(Error::shape("adam moments", mm.shape(), p.shape()));
            }
        }
        let state = AdamState {
            t: h[0] as u64,
            lr: h[1],
            beta1: h[2],
            beta2: h[3],
            eps: h[4],
            weight_decay: h[5],
            m,
            v,
        };
        Ok((state, rest))
    }
}

/// One Adam update with decoupled weight decay.
///
/// Nothing is modified when any gradient entry is non-finite.
pub fn adam_step(params: &mut ModelParams, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.tensors().len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.tensors().len()
        )));
    }
    for (i, (g, p)) in grads.iter().zip(params.tensors()).enumerate() {
        if g.shape() != p.shape() {
            return Err(Error::shape("adam_step", g.shape(), p.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                param: PARAM_NAMES.get(i).copied().unwrap_or("?").to_string(),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (lr, wd, eps) = (state.lr, state.weight_decay, state.eps);
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let p = p.data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            let mk = &mut m.data_mut()[k];
            *mk = b1 * *mk + (1.0 - b1) * gk;
            let vk = &mut v.data_mut()[k];
            *vk = b2 * *vk + (1.0 - b2) * gk * gk;
            let m_hat = m.data()[k] / c1;
            let v_hat = v.data()[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps) + lr * wd * p[k];
        }
    }
    Ok(())
}
