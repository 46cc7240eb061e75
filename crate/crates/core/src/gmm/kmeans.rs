use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding. Returns the chosen row indices.
pub(crate) fn kmeanspp_indices(x: ArrayView2<f64>, m: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if m == 0 {
        return Err(Error::validation("k-means++ needs at least one center"));
    }
    if n < m {
        return Err(Error::validation(format!("{n} samples cannot seed {m} centers")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, x.row(first))).collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && u < acc {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // all remaining points coincide with a center
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    Ok(chosen)
}

/// k-means++ seeding: first center uniform, the rest proportional to the
/// squared distance from the nearest chosen center.
pub fn kmeanspp_init(x: ArrayView2<f64>, m: usize, seed: u64) -> Result<Array2<f64>> {
    let idx = kmeanspp_indices(x, m, seed)?;
    Ok(x.select(ndarray::Axis(0), &idx))
}
