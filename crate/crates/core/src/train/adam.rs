use crate::autodiff::Tensor;
use crate::model::{ModelParams, PARAM_NAMES};

use super::{TrainConfig, TrainError};

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(shapes: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = shapes.iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn for_params(params: &ModelParams) -> Self {
        AdamState::new(&params.tensors())
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: &[&str],
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        assert_eq!(params.len(), grads.len());
        for ((p, g), name) in params.iter().zip(grads).zip(names) {
            if p.shape() != g.shape() {
                return Err(TrainError::GradShape {
                    name: name.to_string(),
                    expected: p.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(name.to_string()));
            }
        }
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((theta, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                let m_hat = *mj / c1;
                let v_hat = *vj / c2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
        Ok(())
    }
}

/// Adam step on the model, then rounds every parameter to `f32` precision.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let mut tensors = params.tensors_mut();
    state.update(&mut tensors, grads, &PARAM_NAMES, cfg)?;
    for t in tensors {
        t.round_to_f32();
    }
    Ok(())
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let cfg = TrainConfig::default();
        let mut theta = Tensor::vector(vec![0.5, -0.25]);
        let mut st = AdamState::new(&[&theta]);
        st.update(&mut [&mut theta], &[Tensor::zeros(&[2])], &["x"], &cfg).unwrap();
        assert_eq!(theta.data(), &[0.5, -0.25]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut theta = Tensor::scalar(1.0);
        let mut st = AdamState::new(&[&theta]);
        st.update(&mut [&mut theta], &[Tensor::scalar(1.0)], &["x"], &cfg).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expected = 1.0 - cfg.learning_rate / (1.0 + cfg.adam_eps);
        assert!((theta.item() - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let cfg = TrainConfig::default();
        let mut theta = Tensor::scalar(1.0);
        let mut st = AdamState::new(&[&theta]);
        let err = st
            .update(&mut [&mut theta], &[Tensor::scalar(f64::NAN)], &["w2"], &cfg)
            .unwrap_err();
        assert!(err.to_string().contains("w2"));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 5.0), 5.0);
        assert_eq!(g[0].data(), &[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }
}
