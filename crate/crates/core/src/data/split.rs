use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabSequence;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabSequence>,
    pub dev: Vec<LabSequence>,
    pub test: Vec<LabSequence>,
    pub seed: u64,
}

/// Train / dev / test sizes for `n` episodes: 65% and 15% rounded to the
/// nearest integer (halves up), test takes the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (65 * n + 50) / 100;
    let dev = (15 * n + 50) / 100;
    (train, dev, n - train - dev)
}

/// Seeded shuffle of episodes, then a 65/15/20 partition.
pub fn split_dataset(seqs: &[LabSequence], seed: u64) -> Result<DatasetSplit> {
    if seqs.len() < 10 {
        return Err(Error::TooFew {
            required: 10,
            found: seqs.len(),
        });
    }
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(&mut stream(&[seed, 0x0053_504c_4954]));
    let (n_train, n_dev, _) = split_sizes(seqs.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| seqs[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        dev: pick(&order[n_train..n_train + n_dev]),
        test: pick(&order[n_train + n_dev..]),
        seed,
    })
}
