use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// First and second moments for each parameter tensor, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T> Default for OptimState<T> {
    fn default() -> Self {
        OptimState {
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// Adam with decoupled weight decay.
///
/// One step, with `t` the 1-based step count:
///
/// ```text
/// m ← β1·m + (1-β1)·g
/// v ← β2·v + (1-β2)·g²
/// θ ← θ·(1 - lr·λ) - lr · m̂ / (√v̂ + eps),   m̂ = m/(1-β1^t), v̂ = v/(1-β2^t)
/// ```
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub state: OptimState<T>,
}

impl<T: Element> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            state: OptimState::default(),
        }
    }

    /// Applies one update. Every entry is `(name, parameter, gradient)`; the
    /// order must be the same on every call. Nothing is modified if any
    /// gradient is non-finite or mis-shaped.
    pub fn step(&mut self, entries: &mut [(&str, &mut Tensor<T>, &Tensor<T>)], lr: f64) -> Result<()> {
        let view: Vec<(&str, &[usize], &Tensor<T>)> = entries.iter().map(|(n, p, g)| (*n, p.shape(), *g)).collect();
        self.begin_step(&view)?;
        for (i, (_, p, g)) in entries.iter_mut().enumerate() {
            self.update(i, p, g, lr);
        }
        Ok(())
    }

    /// Validates a full set of `(name, parameter shape, gradient)` and
    /// advances the step counter. Must be followed by one [`AdamW::update`]
    /// per entry, in the same order.
    pub fn begin_step(&mut self, entries: &[(&str, &[usize], &Tensor<T>)]) -> Result<()> {
        for &(name, shape, g) in entries {
            if shape != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adamw",
                    left: shape.to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        if self.state.m.is_empty() {
            self.state.m = entries.iter().map(|(_, s, _)| Tensor::zeros(s.to_vec())).collect();
            self.state.v = self.state.m.clone();
        }
        if self.state.m.len() != entries.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} tensors, step got {}",
                self.state.m.len(),
                entries.len()
            )));
        }
        for (&(_, shape, _), m) in entries.iter().zip(&self.state.m) {
            if shape != m.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adamw state",
                    left: shape.to_vec(),
                    right: m.shape().to_vec(),
                });
            }
        }
        self.state.step += 1;
        Ok(())
    }

    /// Updates parameter `index` in place; see [`AdamW::begin_step`].
    pub fn update(&mut self, index: usize, param: &mut Tensor<T>, grad: &Tensor<T>, lr: f64) {
        let t = self.state.step as i32;
        let c = &self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one_b1 = T::from_f64_lossy(1.0 - c.beta1);
        let one_b2 = T::from_f64_lossy(1.0 - c.beta2);
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let eps = T::from_f64_lossy(c.eps);
        let lr_t = T::from_f64_lossy(lr);
        let decay = T::from_f64_lossy(1.0 - lr * c.weight_decay);

        let m = &mut self.state.m[index];
        let v = &mut self.state.v[index];
        let iter = param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((theta, &g), (mi, vi)) in iter {
            *mi = b1 * *mi + one_b1 * g;
            *vi = b2 * *vi + one_b2 * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta = *theta * decay - lr_t * (m_hat / (v_hat.sqrt() + eps));
        }
    }
}
