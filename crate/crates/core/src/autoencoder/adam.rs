use super::{zero_gradients, Autoencoder, Gradients, Real};
use crate::error::{Error, Result};

/// First/second moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &Autoencoder<T>) -> Self {
        Self {
            m: zero_gradients(&model.config),
            v: zero_gradients(&model.config),
            t: 0,
        }
    }
}

impl<T: Real> Autoencoder<T> {
    /// One bias-corrected Adam update using the model's configured
    /// learning rate, betas and epsilon.
    pub fn adam_step(&mut self, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
        if grads.len() != self.layers.len()
            || grads
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.len() != l.bias.len())
        {
            return Err(Error::shape("gradient shapes do not match the model"));
        }
        for (l, g) in grads.iter().enumerate() {
            if g.weight.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("non-finite gradient in layer {l}")));
            }
        }

        let cfg = &self.config;
        state.t += 1;
        let t = state.t as i32;
        let b1 = T::of(cfg.adam_beta1);
        let b2 = T::of(cfg.adam_beta2);
        let one = T::one();
        let eps = T::of(cfg.adam_eps);
        let step = T::of(cfg.learning_rate / (1.0 - cfg.adam_beta1.powi(t)));
        let v_corr = T::of(1.0 / (1.0 - cfg.adam_beta2.powi(t)));

        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step * *m / ((*v * v_corr).sqrt() + eps);
        };

        for (((layer, g), m), v) in self.layers.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
            ndarray::Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{AutoencoderConfig, Layer};
    use super::*;
    use ndarray::array;

    fn scalar_model(lr: f64) -> Autoencoder<f64> {
        let cfg = AutoencoderConfig {
            learning_rate: lr,
            ..AutoencoderConfig::symmetric(&[1, 1])
        };
        Autoencoder::from_layers(
            cfg,
            vec![
                Layer { weight: array![[0.5]], bias: array![0.0] },
                Layer { weight: array![[0.5]], bias: array![0.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut m = scalar_model(0.1);
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let g = zero_gradients(&m.config);
        m.adam_step(&g, &mut st).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.t, 1);
        m.adam_step(&g, &mut st).unwrap();
        assert_eq!(st.t, 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // constant g = 1: m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let mut m = scalar_model(0.1);
        let mut st = AdamState::new(&m);
        let mut g = zero_gradients::<f64>(&m.config);
        g[0].weight[[0, 0]] = 1.0;
        m.adam_step(&g, &mut st).unwrap();
        assert!((m.layers[0].weight[[0, 0]] - (0.5 - 0.1)).abs() < 1e-8);
        // a constant gradient keeps the bias-corrected ratio at one
        m.adam_step(&g, &mut st).unwrap();
        assert!((m.layers[0].weight[[0, 0]] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let mut m = scalar_model(0.1);
        let mut st = AdamState::new(&m);
        let mut g = zero_gradients::<f64>(&m.config);
        g[1].bias[0] = f64::NAN;
        assert!(matches!(m.adam_step(&g, &mut st), Err(Error::Numeric(_))));
        assert_eq!(st.t, 0);
    }
}
