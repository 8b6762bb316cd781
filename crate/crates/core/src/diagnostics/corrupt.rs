use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// A uniform shuffle of `0..n` whose fixed points are then each swapped with
/// a random other position, so no index maps to itself.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a derangement needs at least 2 items, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    for i in 0..n {
        if perm[i] == i {
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            perm.swap(i, j);
        }
    }
    Ok(perm)
}

/// Initializations that pair each source with some other sentence's
/// target: entry `i` is `targets[perm[i]]` for a derangement `perm`.
pub fn corrupt_no_accuracy<R: Rng + ?Sized>(
    targets: &[Sentence],
    rng: &mut R,
) -> Result<Vec<Sentence>> {
    Ok(derangement(targets.len(), rng)?
        .into_iter()
        .map(|j| targets[j].clone())
        .collect())
}

/// Shuffles the words of a sentence; the pieces of a word stay together.
/// A dangling final piece joins whatever word lands after it.
pub fn corrupt_no_fluency<R: Rng + ?Sized>(reference: &Sentence, rng: &mut R) -> Sentence {
    let mut groups = reference.word_groups();
    groups.shuffle(rng);
    reference.gather(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn two_items_swap() {
        for s in 0..20 {
            assert_eq!(derangement(2, &mut seeded(s)).unwrap(), vec![1, 0]);
        }
        assert!(derangement(1, &mut seeded(0)).is_err());
    }

    #[test]
    fn no_fixed_points_in_large_runs() {
        let p = derangement(10_000, &mut seeded(5)).unwrap();
        let fixed = p.iter().enumerate().filter(|(i, &j)| *i == j).count();
        assert!((fixed as f64) < 0.01 * 10_000.0);
        assert_eq!(fixed, 0);
    }

    #[test]
    fn seeded_runs_repeat() {
        assert_eq!(
            derangement(50, &mut seeded(8)).unwrap(),
            derangement(50, &mut seeded(8)).unwrap()
        );
    }

    #[test]
    fn fluency_keeps_pieces_together() {
        let v = Vocab::from_surfaces(["t@@", "he", "cat", "sat"]);
        let s = v.encode("t@@ he cat sat");
        for seed in 0..30 {
            let out = v.decode(corrupt_no_fluency(&s, &mut seeded(seed)).ids());
            assert!(out.contains("t@@ he"), "{out}");
        }
        let one = v.encode("t@@ he");
        assert_eq!(corrupt_no_fluency(&one, &mut seeded(1)), one);
    }

    proptest! {
        #[test]
        fn derangement_is_a_permutation(n in 2usize..200, seed in any::<u64>()) {
            let p = derangement(n, &mut seeded(seed)).unwrap();
            let mut sorted = p.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }

        #[test]
        fn fluency_preserves_word_multiset(
            v in proptest::collection::vec((4u32..9, any::<bool>()), 0..20),
            seed in any::<u64>(),
        ) {
            let (ids, mut cont): (Vec<_>, Vec<_>) = v.into_iter().unzip();
            if let Some(last) = cont.last_mut() {
                *last = false;
            }
            let s = Sentence::new(ids, cont).unwrap();
            let out = corrupt_no_fluency(&s, &mut seeded(seed));
            let words = |x: &Sentence| {
                let mut w: Vec<Vec<u32>> = x.word_groups().into_iter().map(|g| x.ids()[g].to_vec()).collect();
                w.sort();
                w
            };
            prop_assert_eq!(words(&s), words(&out));
        }
    }
}
