use rand::seq::index::sample;

use crate::rng;

/// Exactly ⌊ratio · seq_len⌋ masked positions, drawn without replacement.
pub fn make_mask(seq_len: usize, mask_ratio: f64, seed: u64) -> Vec<bool> {
    let k = ((mask_ratio * seq_len as f64) + 1e-9).floor().clamp(0.0, seq_len as f64) as usize;
    let mut mask = vec![false; seq_len];
    for i in sample(&mut rng::rng(seed), seq_len, k) {
        mask[i] = true;
    }
    mask
}
