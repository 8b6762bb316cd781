//! Hashed sparse features for the linear policy.
//!
//! Besides the local token window, position and source-length features, each
//! state position gets an estimated source position. Content tokens are
//! matched right to left against the nearest identical source token at or
//! before a cursor (the same preference the edit-script backtrace has); a
//! placeholder or unmatched token takes the cursor itself. Gaps use the
//! difference of the estimates on both sides, which for an empty state is
//! the source length.

use crate::corpus::{TokenId, PLD};

use super::Head;

const BOUNDARY: u64 = u64::MAX;

// feature family tags
const F_BIAS: u64 = 1;
const F_WINDOW: u64 = 2;
const F_RELPOS: u64 = 3;
const F_SRCLEN: u64 = 4;
const F_BAG: u64 = 5;
const F_MATCHED: u64 = 6;
const F_DIAG_EQ: u64 = 7;
const F_EST_PAIR: u64 = 8;
const F_DIAG_PAIR: u64 = 9;
const F_SRC_EST: u64 = 10;
const F_SRC_DIAG: u64 = 11;
const F_DELTA: u64 = 12;
const F_DELTA_MATCH: u64 = 13;
const F_GAP_PAIR: u64 = 14;

const BAG_SAMPLE: usize = 8;
const RELPOS_BUCKETS: usize = 10;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash(head: Head, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(head as u64 + 0x51), |acc, &p| mix64(acc ^ p))
}

fn len_bucket(n: usize) -> u64 {
    if n <= 64 {
        n as u64
    } else {
        64 + (usize::BITS - n.leading_zeros()) as u64
    }
}

/// Estimated source position of every state position (sentinel-indexed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `<s>` maps to -1 and `</s>` to the source length.
    pub est: Vec<i64>,
    /// The token was found in the source at `est`.
    pub matched: Vec<bool>,
    /// Proportional position `k * srclen / n` of content index `k`.
    pub diag: Vec<i64>,
}

impl Alignment {
    pub fn new(state: &[TokenId], source: &[TokenId]) -> Self {
        let n = state.len();
        let srclen = source.len() as i64;
        let mut est = vec![0i64; n];
        let mut matched = vec![false; n];
        let mut diag = vec![0i64; n];
        if n == 0 {
            return Alignment { est, matched, diag };
        }
        est[0] = -1;
        est[n - 1] = srclen;
        diag[0] = -1;
        diag[n - 1] = srclen;
        let content = n.saturating_sub(2);
        let mut cursor = srclen - 1;
        for p in (1..n - 1).rev() {
            let t = state[p];
            let found = if t == PLD || cursor < 0 {
                None
            } else {
                (0..=cursor).rev().find(|&q| source[q as usize] == t)
            };
            match found {
                Some(q) => {
                    est[p] = q;
                    matched[p] = true;
                    cursor = q - 1;
                }
                None => {
                    est[p] = cursor;
                    cursor -= 1;
                }
            }
            diag[p] = ((p - 1) as i64 * srclen) / content as i64;
        }
        Alignment { est, matched, diag }
    }
}

fn at(seq: &[TokenId], i: i64) -> u64 {
    if i >= 0 && (i as usize) < seq.len() {
        seq[i as usize] as u64
    } else {
        BOUNDARY
    }
}

/// Feature indices in `0..2^hash_bits` for one position.
///
/// `pos` is a state position (sentinel-indexed) for the deletion and token
/// heads, and a gap index `g` (between `state[g]` and `state[g + 1]`) for the
/// placeholder head.
pub fn featurize(
    state: &[TokenId],
    source: &[TokenId],
    pos: usize,
    head: Head,
    hash_bits: u32,
) -> Vec<u32> {
    let align = Alignment::new(state, source);
    features_with(&align, state, source, pos, head, hash_bits)
}

pub(crate) fn features_with(
    align: &Alignment,
    state: &[TokenId],
    source: &[TokenId],
    pos: usize,
    head: Head,
    hash_bits: u32,
) -> Vec<u32> {
    let mask = (1u64 << hash_bits) - 1;
    let mut raw: Vec<u64> = Vec::with_capacity(32);
    let mut push = |parts: &[u64]| raw.push(hash(head, parts));
    let p = pos as i64;
    let last = state.len().saturating_sub(1).max(1) as f64;

    push(&[F_BIAS]);
    push(&[F_SRCLEN, len_bucket(source.len())]);
    let rel = ((pos as f64 / last) * RELPOS_BUCKETS as f64) as u64;
    push(&[F_RELPOS, rel.min(RELPOS_BUCKETS as u64)]);
    if !source.is_empty() {
        let take = BAG_SAMPLE.min(source.len());
        for k in 0..take {
            push(&[F_BAG, source[k * source.len() / take] as u64]);
        }
    }

    match head {
        Head::Del | Head::Tok => {
            for o in -2i64..=2 {
                push(&[F_WINDOW, o as u64, at(state, p + o)]);
            }
            let est = align.est[pos];
            let diag = align.diag[pos];
            if head == Head::Del {
                let t = state[pos] as u64;
                push(&[F_MATCHED, align.matched[pos] as u64]);
                push(&[F_DIAG_EQ, (at(source, diag) == t) as u64]);
                push(&[F_EST_PAIR, t, at(source, est)]);
                push(&[F_DIAG_PAIR, t, at(source, diag)]);
            } else {
                for o in -1i64..=1 {
                    push(&[F_SRC_EST, o as u64, at(source, est + o)]);
                    push(&[F_SRC_DIAG, o as u64, at(source, diag + o)]);
                }
            }
        }
        Head::Pld => {
            for o in -1i64..=2 {
                push(&[F_WINDOW, o as u64, at(state, p + o)]);
            }
            let (l, r) = (pos, pos + 1);
            let delta = (align.est[r] - align.est[l] - 1).clamp(0, 255) as u64;
            push(&[F_DELTA, delta]);
            push(&[
                F_DELTA_MATCH,
                delta,
                align.matched[l] as u64,
                align.matched[r] as u64,
            ]);
            push(&[F_GAP_PAIR, state[l] as u64, state[r] as u64]);
        }
    }
    raw.into_iter().map(|h| (h & mask) as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::with_sentinels;

    #[test]
    fn deterministic() {
        let state = with_sentinels(&[4, 5, PLD, 6]);
        let src = [4, 5, 9, 6];
        for head in [Head::Del, Head::Tok] {
            assert_eq!(
                featurize(&state, &src, 3, head, 18),
                featurize(&state, &src, 3, head, 18)
            );
        }
    }

    #[test]
    fn boundaries_are_safe_and_in_range() {
        let state = with_sentinels(&[4]);
        for head in Head::ALL {
            let f = featurize(&state, &[], 1.min(state.len() - 2), head, 10);
            assert!(f.iter().all(|&i| i < 1 << 10));
        }
        let f = featurize(&with_sentinels(&[]), &[7, 8], 0, Head::Pld, 12);
        assert!(f.iter().all(|&i| i < 1 << 12));
    }

    #[test]
    fn window_change_changes_features() {
        let src = [4, 5, 6, 7];
        let a = featurize(&with_sentinels(&[4, 5, 6, 7]), &src, 2, Head::Del, 18);
        let b = featurize(&with_sentinels(&[4, 5, 6, 8]), &src, 2, Head::Del, 18);
        assert_ne!(a, b);
    }

    #[test]
    fn alignment_of_complete_copy_is_exact() {
        let src = [4, 5, 4, 6];
        let a = Alignment::new(&with_sentinels(&src), &src);
        assert_eq!(a.est, vec![-1, 0, 1, 2, 3, 4]);
        assert!(a.matched[1..5].iter().all(|&m| m));
    }

    #[test]
    fn empty_state_gap_spans_source() {
        let a = Alignment::new(&with_sentinels(&[]), &[4, 5, 6]);
        assert_eq!(a.est, vec![-1, 3]);
    }

    #[test]
    fn dropped_state_deltas_count_missing_tokens() {
        // source a b a c, state keeps the second a and c
        let src = [4, 5, 4, 6];
        let a = Alignment::new(&with_sentinels(&[4, 6]), &src);
        assert_eq!(a.est, vec![-1, 2, 3, 4]);
    }
}
