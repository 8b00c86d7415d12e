use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSplit {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub repeat_index: usize,
}

/// Seeded random train/test partitions of the subject set.
///
/// Each repeat shuffles the (sorted, deduplicated) ids with its own derived
/// seed. When `n_train = n - 1` the splits are leave-one-subject-out: a
/// single seeded permutation is walked so that the first `n` repeats hold
/// out every subject exactly once.
pub fn split_subjects(subject_ids: &[String], n_train: usize, n_repeats: usize, seed: u64) -> Result<Vec<SubjectSplit>> {
    let ids: Vec<String> = subject_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if n_train >= ids.len() {
        return Err(Error::Config(format!(
            "n_train = {n_train} leaves no test subjects out of {}",
            ids.len()
        )));
    }
    if n_repeats == 0 {
        return Err(Error::Config("n_repeats must be at least 1".into()));
    }
    let loso_order = (n_train + 1 == ids.len()).then(|| {
        let mut order = ids.clone();
        order.shuffle(&mut rng::child(seed, &[rng::tag("loso")]));
        order
    });
    Ok((0..n_repeats)
        .map(|r| {
            let order = match &loso_order {
                Some(order) => {
                    let held = &order[r % order.len()];
                    let mut o: Vec<String> = ids.iter().filter(|id| *id != held).cloned().collect();
                    o.push(held.clone());
                    o
                }
                None => {
                    let mut o = ids.clone();
                    o.shuffle(&mut rng::child(seed, &[rng::tag("split"), r as u64]));
                    o
                }
            };
            SubjectSplit {
                train_ids: order[..n_train].iter().cloned().collect(),
                test_ids: order[n_train..].iter().cloned().collect(),
                repeat_index: r,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i:02}")).collect()
    }

    #[test]
    fn sixteen_of_twenty_three() {
        let splits = split_subjects(&ids(23), 16, 25, 2024).unwrap();
        assert_eq!(splits.len(), 25);
        for s in &splits {
            assert_eq!((s.train_ids.len(), s.test_ids.len()), (16, 7));
            assert!(s.train_ids.is_disjoint(&s.test_ids));
            assert_eq!(s.train_ids.union(&s.test_ids).count(), 23);
        }
        assert_eq!(splits, split_subjects(&ids(23), 16, 25, 2024).unwrap());
        let covered: BTreeSet<_> = splits.iter().flat_map(|s| s.test_ids.iter().cloned()).collect();
        assert_eq!(covered.len(), 23);
    }

    #[test]
    fn leave_one_out_covers_everyone() {
        let splits = split_subjects(&ids(10), 9, 10, 3).unwrap();
        let held: BTreeSet<_> = splits.iter().flat_map(|s| s.test_ids.iter().cloned()).collect();
        assert_eq!(held.len(), 10);
        assert!(splits.iter().all(|s| s.test_ids.len() == 1));
    }

    #[test]
    fn too_many_train_subjects() {
        assert!(matches!(split_subjects(&ids(5), 5, 1, 0), Err(Error::Config(_))));
    }
}
