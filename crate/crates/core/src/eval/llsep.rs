use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmm::GmmModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlRow {
    /// 0 if the sample belongs to the first group, 1 otherwise.
    pub truth: u8,
    pub ll_first: f64,
    pub ll_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlSeparationReport {
    pub first: String,
    pub second: String,
    pub rows: Vec<LlRow>,
    pub accuracy: f64,
}

/// Scores both test sets under both models and classifies each sample by
/// the larger log-likelihood (ties go to the first model).
pub fn ll_separation(
    first: &GmmModel,
    second: &GmmModel,
    test_first: ArrayView2<f64>,
    test_second: ArrayView2<f64>,
) -> Result<LlSeparationReport> {
    let mut rows = Vec::with_capacity(test_first.nrows() + test_second.nrows());
    for (truth, x) in [(0u8, test_first), (1u8, test_second)] {
        let a = first.log_likelihoods(x)?;
        let b = second.log_likelihoods(x)?;
        rows.extend(a.iter().zip(b.iter()).map(|(&ll_first, &ll_second)| LlRow { truth, ll_first, ll_second }));
    }
    let correct = rows
        .iter()
        .filter(|r| (r.ll_first >= r.ll_second) == (r.truth == 0))
        .count();
    let accuracy = if rows.is_empty() { 0.0 } else { correct as f64 / rows.len() as f64 };
    Ok(LlSeparationReport {
        first: first.group.to_string(),
        second: second.group.to_string(),
        rows,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroupSelector;
    use crate::error::Error;
    use crate::gmm::Covariance;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(mu: f64) -> GmmModel {
        GmmModel::new(
            GroupSelector::all(),
            array![1.0],
            array![[mu, 0.0]],
            Covariance::Diagonal(Array2::ones((1, 2))),
        )
        .unwrap()
    }

    fn draws(n: usize, mu: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |(_, j)| rng.sample::<f64, _>(StandardNormal) + if j == 0 { mu } else { 0.0 })
    }

    #[test]
    fn separated_groups() {
        let (a, b) = (draws(300, -5.0, 1), draws(200, 5.0, 2));
        let r = ll_separation(&gaussian(-5.0), &gaussian(5.0), a.view(), b.view()).unwrap();
        assert_eq!(r.rows.len(), 500);
        assert!(r.accuracy >= 0.99);
    }

    #[test]
    fn same_model_is_chance() {
        let (a, b) = (draws(250, 0.0, 3), draws(250, 0.0, 4));
        let g = gaussian(0.0);
        let r = ll_separation(&g, &g, a.view(), b.view()).unwrap();
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn dim_mismatch() {
        let x = Array2::zeros((3, 5));
        assert!(matches!(
            ll_separation(&gaussian(0.0), &gaussian(1.0), x.view(), x.view()),
            Err(Error::Shape(_))
        ));
    }
}
