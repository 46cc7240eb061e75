//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Autoencoder, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Maximum admissible relative error.
    pub tol: f64,
    /// Number of parameter coordinates to probe (all if the model is smaller).
    pub coords: usize,
    /// Denominator floor so near-zero partials are compared absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            coords: 256,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the coordinate with the largest error.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Compares `analytic` against `(f(θ+h) - f(θ-h)) / 2h` on sampled coordinates.
pub fn gradient_check<F>(
    model: &Autoencoder<f64>,
    analytic: &Gradients<f64>,
    loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&Autoencoder<f64>) -> Result<f64>,
{
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::validation(format!("finite-difference step must be positive, got {}", cfg.h)));
    }
    let n = model.n_params();
    let flat: Vec<f64> = analytic
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect();
    if flat.len() != n {
        return Err(Error::shape("analytic gradient does not match the model"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut coords: Vec<usize> = if cfg.coords >= n {
        (0..n).collect()
    } else {
        index::sample(&mut rng, n, cfg.coords).into_vec()
    };
    coords.sort_unstable();

    let mut probe = model.clone();
    let mut worst = (0.0f64, coords.first().copied().unwrap_or(0));
    for &i in &coords {
        let orig = probe.param(i);
        *probe.param_mut(i) = orig + cfg.h;
        let plus = loss(&probe)?;
        *probe.param_mut(i) = orig - cfg.h;
        let minus = loss(&probe)?;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * cfg.h);
        let a = flat[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.abs_floor);
        if rel > worst.0 || !rel.is_finite() {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: coords.len(),
        passed: worst.0 <= cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::super::AutoencoderConfig;
    use super::*;
    use ndarray::Array2;

    fn recon_loss(m: &Autoencoder<f64>, x: &Array2<f64>) -> Result<(f64, Gradients<f64>)> {
        let t = m.forward(x.view())?;
        let r = t.reconstruction() - x;
        let loss = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let g = m.backward(&t, Array2::zeros((x.nrows(), m.bottleneck_dim())).view(), r.view())?;
        Ok((loss, g))
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let m = Autoencoder::<f64>::new(AutoencoderConfig {
            init_seed: 21,
            ..AutoencoderConfig::symmetric(&[6, 4, 3])
        })
        .unwrap();
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j * 3) as f64 * 0.61).sin());
        let (_, g) = recon_loss(&m, &x).unwrap();
        let report = gradient_check(
            &m,
            &g,
            |p| Ok(recon_loss(p, &x)?.0),
            &GradCheckConfig {
                tol: 1e-6,
                coords: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.checked, m.n_params());
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn zero_step_rejected() {
        let m = Autoencoder::<f64>::new(AutoencoderConfig::symmetric(&[2, 1])).unwrap();
        let g = super::super::zero_gradients(&m.config);
        let cfg = GradCheckConfig { h: 0.0, ..Default::default() };
        assert!(matches!(gradient_check(&m, &g, |_| Ok(0.0), &cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let m = Autoencoder::<f64>::new(AutoencoderConfig::symmetric(&[3, 2])).unwrap();
        let x = Array2::from_elem((2, 3), 0.7);
        let (_, mut g) = recon_loss(&m, &x).unwrap();
        g[0].weight.mapv_inplace(|v| v * 1.5 + 0.1);
        let report = gradient_check(&m, &g, |p| Ok(recon_loss(p, &x)?.0), &GradCheckConfig::default()).unwrap();
        assert!(!report.passed);
        assert!(report.worst_index < 6);
    }
}
