use crate::error::{Error, Result};
use crate::layers::LayerParams;

/// Bias-corrected Adam over every tensor of a [`LayerParams`] store, with
/// each tensor's L2 decay added to its gradient before the moment update.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &LayerParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the gradients in `params`. Nothing changes unless
    /// every tensor carries a gradient of its own shape.
    pub fn step(&mut self, params: &mut LayerParams) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::InvalidState(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        for (k, id) in params.ids().enumerate() {
            match params.get(id).grad() {
                None => {
                    return Err(Error::InvalidState(format!(
                        "parameter {} has no gradient",
                        params.name(id)
                    )))
                }
                Some(g) if g.len() != self.m[k].len() => {
                    return Err(Error::InvalidState(format!("parameter {} changed shape", params.name(id))))
                }
                Some(_) => {}
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, id) in params.ids().enumerate().collect::<Vec<_>>() {
            let decay = params.weight_decay(id);
            let w = params.get_mut(id);
            let g = w.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in w.data_mut().iter_mut().enumerate() {
                let g = g[i] + decay * *w;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
