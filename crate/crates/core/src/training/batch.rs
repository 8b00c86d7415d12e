use rand::seq::SliceRandom;

use crate::preprocess::{Window, N_CHANNELS};
use crate::rng;
use crate::tensor_nn::Float;

pub(crate) struct Batch<F> {
    pub x: Vec<F>,
    pub locs: Vec<usize>,
    pub present: Vec<bool>,
    pub len: usize,
}

pub(crate) fn assemble<'a, F: Float>(windows: impl IntoIterator<Item = &'a Window>) -> Batch<F> {
    let mut b = Batch {
        x: Vec::new(),
        locs: Vec::new(),
        present: Vec::new(),
        len: 0,
    };
    for w in windows {
        b.x.extend(w.values.iter().map(|&v| F::of(v as f64)));
        b.locs.push(w.location_id as usize);
        b.present.extend_from_slice(&w.present_mask);
        b.len += 1;
    }
    debug_assert_eq!(b.present.len(), b.len * N_CHANNELS);
    b
}

/// Seeded per-epoch permutation of `0..n`.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::child(seed, &[rng::tag("order"), epoch as u64]));
    idx
}

pub(crate) fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}
