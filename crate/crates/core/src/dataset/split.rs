use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LatentDataset;
use crate::error::{Error, Result};

/// Stratified train/test split by full group combination.
///
/// Each group with `c` records sends `round(c * test_fraction)` of them to the
/// test side, clamped so both sides keep at least one record.
pub fn split_dataset(ds: &LatentDataset, test_fraction: f64, seed: u64) -> Result<(LatentDataset, LatentDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let schema = ds.schema();
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); schema.n_combinations()];
    for (i, c) in ds.combination_indices().into_iter().enumerate() {
        by_group[c].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in by_group.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::validation(format!(
                "group {} has {} record(s); stratified split needs at least 2",
                schema.full_selector(&schema.combination(c)),
                members.len()
            )));
        }
        let n = members.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Shuffled index batches for one epoch.
///
/// The permutation depends only on `(seed, epoch)`. A trailing batch with a
/// single record is dropped since it has no pairs.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::validation(format!("batch size must be >= 2, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect())
}
