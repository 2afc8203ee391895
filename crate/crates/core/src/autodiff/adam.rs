//! Adam with bias-corrected moment estimates.

use ndarray::ArrayD;

use super::tape::TapeError;
use super::tensor::Tensor;

/// First/second moment state for one parameter list. The state is bound
/// to the parameter shapes it was created with.
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &[&Tensor]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|p| ArrayD::zeros(p.data().raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.data().raw_dim())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the full parameter list. `grads` must align with
    /// `params` in order and shape.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[ArrayD<f64>],
    ) -> Result<(), TapeError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TapeError::Invalid {
                op: "adam",
                detail: format!(
                    "state holds {} parameters, got {} params / {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.data().shape() != g.shape() {
                return Err(TapeError::Shape {
                    op: "adam",
                    detail: format!(
                        "param {} has shape {:?}, grad {:?}",
                        i,
                        p.data().shape(),
                        g.shape()
                    ),
                });
            }
            if !g.sum().is_finite() {
                return Err(TapeError::NonFinite { op: "adam" });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .map(|p| &mut **p)
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(g, |m, g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let mut data = p.data().clone();
            ndarray::Zip::from(&mut data)
                .and(&*m)
                .and(&*v)
                .for_each(|x, m, v| {
                    let mh = m / bc1;
                    let vh = v / bc2;
                    *x -= self.lr * mh / (vh.sqrt() + self.epsilon);
                });
            p.set_data(data).map_err(|_| TapeError::NonFinite { op: "adam" })?;
        }
        Ok(())
    }
}
