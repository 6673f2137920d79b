use super::Tensor;
use crate::error::{ensure, Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam moments for an ordered list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments for buffers of the given lengths.
    pub fn new(lengths: &[usize]) -> Self {
        Self::with_hyper(lengths, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_hyper(lengths: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One bias-corrected Adam update. Rejects the whole update, leaving
    /// parameters and moments untouched, if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], lr: f64) -> Result<()> {
        ensure(lr >= 0.0 && lr.is_finite(), || {
            format!("adam: invalid learning rate {lr}")
        })?;
        ensure(
            params.len() == grads.len() && params.len() == self.first_moment.len(),
            || {
                format!(
                    "adam: {} params, {} grads, {} moment buffers",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                )
            },
        )?;
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            ensure(p.len() == g.len() && p.len() == m.len(), || {
                format!(
                    "adam: buffer {i} lengths {} / {} / {}",
                    p.len(),
                    g.len(),
                    m.len()
                )
            })?;
        }
        if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical {
                step: self.step_count,
                message: format!("non-finite gradient in parameter buffer {i}"),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let eps = self.epsilon as f32;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = f64::from(m[i]) / bc1;
                let v_hat = f64::from(v[i]) / bc2;
                p[i] -= (lr * m_hat) as f32 / (v_hat.sqrt() as f32 + eps);
            }
        }
        Ok(())
    }

    /// Update tensors in place from their stored gradients.
    pub fn step_tensors(&mut self, params: &mut [&mut Tensor], lr: f64) -> Result<()> {
        let mut datas = Vec::with_capacity(params.len());
        let mut grads = Vec::with_capacity(params.len());
        for (i, t) in params.iter_mut().enumerate() {
            let (d, g) = t.data_and_grad_mut();
            let g =
                g.ok_or_else(|| Error::Contract(format!("adam: parameter {i} has no gradient")))?;
            datas.push(d);
            grads.push(g);
        }
        self.step(&mut datas, &grads, lr)
    }
}
