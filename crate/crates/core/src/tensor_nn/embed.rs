use super::{init, Float, Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed sine/cosine position table `[T × D]`: even columns hold
/// `sin(t / 10000^(2i/D))`, odd columns the matching cosine.
pub fn sinusoidal_positional<F: Float>(seq: usize, dim: usize) -> Tensor<F> {
    Tensor::from_fn(&[seq, dim], |idx| {
        let (t, j) = (idx / dim, idx % dim);
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        F::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Learned lookup table, `[n × D]`.
pub fn embedding_table<F: Float>(n: usize, dim: usize, rng: &mut Rng) -> Param<F> {
    Param::new(init::normal(&[n, dim], 0.02, rng))
}

pub fn location_embed<F: Float>(location_id: usize, table: &Param<F>) -> Result<&[F]> {
    let (n, d) = (table.value.shape()[0], table.value.shape()[1]);
    if location_id >= n {
        return Err(Error::Index(format!("location id {location_id} not in [0, {})", n)));
    }
    Ok(&table.value.data()[location_id * d..][..d])
}

/// Adds `d_row` into the gradient of the selected row only.
pub fn location_embed_backward<F: Float>(location_id: usize, table: &mut Param<F>, d_row: &[F]) {
    let d = table.value.shape()[1];
    for (g, &v) in table.grad.data_mut()[location_id * d..][..d].iter_mut().zip(d_row) {
        *g += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_is_sin_zero_cos_one() {
        let pe = sinusoidal_positional::<f64>(4, 8);
        for j in 0..8 {
            assert_eq!(pe.data()[j], if j % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn rows_differ_and_gradients_stay_sparse() {
        let mut rng = crate::rng::rng(9);
        let mut table = embedding_table::<f64>(6, 4, &mut rng);
        assert_ne!(location_embed(1, &table).unwrap(), location_embed(4, &table).unwrap());
        location_embed_backward(2, &mut table, &[1.0, 2.0, 3.0, 4.0]);
        for (r, row) in table.grad.data().chunks(4).enumerate() {
            if r == 2 {
                assert_eq!(row, &[1.0, 2.0, 3.0, 4.0]);
            } else {
                assert!(row.iter().all(|&g| g == 0.0));
            }
        }
        assert!(matches!(location_embed(6, &table), Err(Error::Index(_))));
    }
}
