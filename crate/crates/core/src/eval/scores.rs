use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_MIN: f64 = -2.0;
pub const SCORE_MAX: f64 = 0.0;
pub const DEFAULT_BINS: usize = 100;

/// Shifted cosine similarity `u.v / (|u||v|) - 1`, in `[-2, 0]`.
pub fn cosine_similarity_score(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let nu = u.dot(&u);
    let nv = v.dot(&v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::validation("cosine score of a zero vector"));
    }
    Ok(score_unchecked(u, v, nu, nv))
}

fn score_unchecked(u: ArrayView1<f64>, v: ArrayView1<f64>, nu: f64, nv: f64) -> f64 {
    (u.dot(&v) / (nu * nv).sqrt() - 1.0).clamp(SCORE_MIN, SCORE_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// All unordered pairs within the first set.
    Within,
    /// All pairs across the two sets.
    Between,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub label: String,
    pub mode: ScoreMode,
    /// Counts over equal-width bins spanning `[-2, 0]`.
    pub bins: Vec<u64>,
    pub scores: Vec<f64>,
}

impl ScoreDistribution {
    pub fn count(&self) -> usize {
        self.scores.len()
    }

    pub fn bin_width(&self) -> f64 {
        (SCORE_MAX - SCORE_MIN) / self.bins.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len().max(1) as f64
    }

    /// Bins precomputed scores; values outside `[-2, 0]` land in the end bins.
    pub fn from_scores(label: &str, mode: ScoreMode, scores: Vec<f64>, n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::validation("histogram needs at least one bin"));
        }
        let mut bins = vec![0u64; n_bins];
        for &s in &scores {
            bins[bin_of(s, n_bins)] += 1;
        }
        Ok(Self { label: label.to_string(), mode, bins, scores })
    }

    /// Bin counts normalized to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.count().max(1) as f64;
        self.bins.iter().map(|&c| c as f64 / n).collect()
    }
}

fn bin_of(s: f64, n_bins: usize) -> usize {
    let t = ((s - SCORE_MIN) / (SCORE_MAX - SCORE_MIN) * n_bins as f64).floor();
    (t.max(0.0) as usize).min(n_bins - 1)
}

fn norms(x: ArrayView2<f64>, which: &str) -> Result<Vec<f64>> {
    x.outer_iter()
        .enumerate()
        .map(|(i, r)| {
            let n = r.dot(&r);
            if n == 0.0 {
                Err(Error::validation(format!("zero vector at index {i} of {which}")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Pairwise shifted-cosine scores binned over `[-2, 0]`. `b` is ignored in
/// `Within` mode.
pub fn score_distribution(
    label: &str,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    mode: ScoreMode,
    n_bins: usize,
) -> Result<ScoreDistribution> {
    if n_bins == 0 {
        return Err(Error::validation("histogram needs at least one bin"));
    }
    let na = norms(a, "set A")?;
    let mut scores = Vec::new();
    match mode {
        ScoreMode::Within => {
            for i in 0..a.nrows() {
                for j in i + 1..a.nrows() {
                    scores.push(score_unchecked(a.row(i), a.row(j), na[i], na[j]));
                }
            }
        }
        ScoreMode::Between => {
            if a.ncols() != b.ncols() {
                return Err(Error::shape(format!("sets of width {} and {}", a.ncols(), b.ncols())));
            }
            let nb = norms(b, "set B")?;
            for (ra, &ni) in a.outer_iter().zip(&na) {
                for (rb, &nj) in b.outer_iter().zip(&nb) {
                    scores.push(score_unchecked(ra, rb, ni, nj));
                }
            }
        }
    }
    ScoreDistribution::from_scores(label, mode, scores, n_bins)
}

/// Sum of bin-wise minima of the two normalized histograms, in `[0, 1]`.
pub fn histogram_intersection(a: &ScoreDistribution, b: &ScoreDistribution) -> Result<f64> {
    if a.bins.len() != b.bins.len() {
        return Err(Error::shape(format!("histograms with {} and {} bins", a.bins.len(), b.bins.len())));
    }
    Ok(a.normalized().iter().zip(b.normalized()).map(|(x, y)| x.min(y)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fixed_points() {
        let u = array![0.3, -1.2, 2.5];
        assert_eq!(cosine_similarity_score(u.view(), u.view()).unwrap(), 0.0);
        let neg = -&u;
        assert!((cosine_similarity_score(u.view(), neg.view()).unwrap() + 2.0).abs() < 1e-15);
        let s = cosine_similarity_score(array![1.0, 0.0].view(), array![0.0, 1.0].view()).unwrap();
        assert_eq!(s, -1.0);
        assert!(cosine_similarity_score(array![0.0, 0.0].view(), array![0.0, 1.0].view()).is_err());
    }

    #[test]
    fn self_score_exactly_zero_for_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u: ndarray::Array1<f64> = (0..16).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
            assert_eq!(cosine_similarity_score(u.view(), u.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn within_counts_and_duplicates() {
        let a = array![[1.0, 2.0], [1.0, 2.0]];
        let d = score_distribution("w", a.view(), a.view(), ScoreMode::Within, DEFAULT_BINS).unwrap();
        assert_eq!(d.scores, vec![0.0]);
        assert_eq!(d.bins[DEFAULT_BINS - 1], 1);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((100, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let d = score_distribution("w", x.view(), x.view(), ScoreMode::Within, DEFAULT_BINS).unwrap();
        assert_eq!(d.count(), 4950);
        assert_eq!(d.bins.iter().sum::<u64>(), 4950);
        assert!((d.bin_width() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_sets_score_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = m.qr().q();
        let a = Array2::from_shape_fn((4, 8), |(i, j)| q[(j, i)]);
        let b = Array2::from_shape_fn((4, 8), |(i, j)| q[(j, i + 4)]);
        let d = score_distribution("b", a.view(), b.view(), ScoreMode::Between, DEFAULT_BINS).unwrap();
        assert_eq!(d.count(), 16);
        assert!(d.scores.iter().all(|s| (s + 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_vector_named_by_index() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        let err = score_distribution("w", a.view(), a.view(), ScoreMode::Within, 10).unwrap_err();
        assert!(err.to_string().contains("index 1"));
    }

    #[test]
    fn intersection_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((40, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y = x.mapv(|v| v + 3.0);
        let a = score_distribution("a", x.view(), x.view(), ScoreMode::Within, DEFAULT_BINS).unwrap();
        let b = score_distribution("b", y.view(), y.view(), ScoreMode::Within, DEFAULT_BINS).unwrap();
        assert!((histogram_intersection(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let h = histogram_intersection(&a, &b).unwrap();
        assert!((0.0..1.0).contains(&h));
    }

    proptest::proptest! {
        #[test]
        fn scores_bounded_and_symmetric(
            u in proptest::collection::vec(-1e3f64..1e3, 6),
            v in proptest::collection::vec(-1e3f64..1e3, 6),
        ) {
            let u = ndarray::Array1::from(u);
            let v = ndarray::Array1::from(v);
            proptest::prop_assume!(u.dot(&u) > 0.0 && v.dot(&v) > 0.0);
            let a = cosine_similarity_score(u.view(), v.view()).unwrap();
            let b = cosine_similarity_score(v.view(), u.view()).unwrap();
            proptest::prop_assert!((-2.0..=1e-9).contains(&a));
            proptest::prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
