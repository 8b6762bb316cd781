//! Minimal insert/delete edit scripts and roll-in state generators.
//!
//! The action space matches the decoder: tokens can be deleted and new tokens
//! inserted into gaps, but never substituted in place, so a substitution
//! costs two. Gaps are counted including the two sentinel-adjacent ones, so a
//! roll-in of length `n` has `n + 1` gaps.
//!
//! A `<pld>` token already present in the roll-in is a slot waiting for a
//! token; the script may fill it with any reference token at no cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, PLD};
use crate::error::{Error, Result};
use crate::rng::sample_softmax;
use crate::MAX_INSERT;

/// Supervision realizing a minimal edit script from a roll-in to a reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditLabels {
    /// Per roll-in token, 1 = delete.
    pub del_labels: Vec<u8>,
    /// Per gap, number of inserted slots. Length is roll-in length + 1.
    pub ins_counts: Vec<usize>,
    /// Tokens for the inserted slots, gap by gap, left to right.
    pub fills: Vec<TokenId>,
    /// Tokens for the kept `<pld>` slots of the roll-in, left to right.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mask_fills: Vec<TokenId>,
}

impl EditLabels {
    /// Labels that leave `rollin` unchanged (kept `<pld>` slots excepted).
    pub fn identity(len: usize) -> Self {
        EditLabels {
            del_labels: vec![0; len],
            ins_counts: vec![0; len + 1],
            fills: Vec::new(),
            mask_fills: Vec::new(),
        }
    }

    pub fn deletions(&self) -> usize {
        self.del_labels.iter().filter(|&&d| d == 1).count()
    }

    pub fn insertions(&self) -> usize {
        self.ins_counts.iter().sum()
    }

    /// Script cost with unit insert and delete costs.
    pub fn cost(&self) -> usize {
        self.deletions() + self.insertions()
    }

    /// Fill tokens grouped per gap.
    pub fn fills_per_gap(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.ins_counts.len());
        let mut at = 0;
        for &c in &self.ins_counts {
            out.push(self.fills[at..at + c].to_vec());
            at += c;
        }
        out
    }
}

/// Token-level edit distance with unit insert/delete costs
/// (a substitution counts as delete + insert).
pub fn levenshtein_distance(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1]
            } else {
                prev[j].min(cur[j - 1]) + 1
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn aligns(rollin_tok: TokenId, ref_tok: TokenId) -> bool {
    rollin_tok == ref_tok || rollin_tok == PLD
}

/// Cost table over prefixes; `<pld>` in the roll-in aligns with anything.
fn cost_table(rollin: &[TokenId], reference: &[TokenId]) -> Vec<Vec<usize>> {
    let (n, m) = (rollin.len(), reference.len());
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, c) in cost[0].iter_mut().enumerate() {
        *c = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let mut best = cost[i - 1][j].min(cost[i][j - 1]) + 1;
            if aligns(rollin[i - 1], reference[j - 1]) {
                best = best.min(cost[i - 1][j - 1]);
            }
            cost[i][j] = best;
        }
    }
    cost
}

/// Backtrace without the per-gap limit. Prefers a diagonal (keep) step,
/// then a deletion, then an insertion.
pub(crate) fn edit_labels_unbounded(rollin: &[TokenId], reference: &[TokenId]) -> EditLabels {
    let cost = cost_table(rollin, reference);
    let (mut i, mut j) = (rollin.len(), reference.len());
    let mut del_labels = vec![0u8; rollin.len()];
    let mut gap_fills: Vec<Vec<TokenId>> = vec![Vec::new(); rollin.len() + 1];
    let mut mask_fills = Vec::new();
    while i > 0 || j > 0 {
        if i > 0
            && j > 0
            && aligns(rollin[i - 1], reference[j - 1])
            && cost[i][j] == cost[i - 1][j - 1]
        {
            if rollin[i - 1] == PLD {
                mask_fills.push(reference[j - 1]);
            }
            i -= 1;
            j -= 1;
        } else if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            del_labels[i - 1] = 1;
            i -= 1;
        } else {
            gap_fills[i].push(reference[j - 1]);
            j -= 1;
        }
    }
    mask_fills.reverse();
    let ins_counts = gap_fills.iter().map(Vec::len).collect();
    let fills = gap_fills
        .into_iter()
        .flat_map(|mut g| {
            g.reverse();
            g
        })
        .collect();
    EditLabels {
        del_labels,
        ins_counts,
        fills,
        mask_fills,
    }
}

/// Minimal-cost delete-then-insert labels turning `rollin` into `reference`.
///
/// Fails with [`Error::ScriptOverflow`] when one gap would need more than
/// 255 insertions.
pub fn optimal_edit_labels(rollin: &[TokenId], reference: &[TokenId]) -> Result<EditLabels> {
    let labels = edit_labels_unbounded(rollin, reference);
    if let Some((gap, &count)) = labels
        .ins_counts
        .iter()
        .enumerate()
        .find(|(_, &c)| c > MAX_INSERT)
    {
        return Err(Error::ScriptOverflow {
            gap,
            count,
            limit: MAX_INSERT,
        });
    }
    Ok(labels)
}

/// Applies deletions, then the gap insertions, then fills kept `<pld>` slots.
pub fn apply_edit(rollin: &[TokenId], labels: &EditLabels) -> Result<Vec<TokenId>> {
    if labels.del_labels.len() != rollin.len() {
        return Err(Error::Shape(format!(
            "{} deletion labels for {} tokens",
            labels.del_labels.len(),
            rollin.len()
        )));
    }
    if labels.ins_counts.len() != rollin.len() + 1 {
        return Err(Error::Shape(format!(
            "{} gap counts for {} tokens",
            labels.ins_counts.len(),
            rollin.len()
        )));
    }
    if labels.insertions() != labels.fills.len() {
        return Err(Error::Shape(format!(
            "{} insertions but {} fills",
            labels.insertions(),
            labels.fills.len()
        )));
    }
    let kept_slots = rollin
        .iter()
        .zip(&labels.del_labels)
        .filter(|(&t, &d)| t == PLD && d == 0)
        .count();
    if kept_slots != labels.mask_fills.len() {
        return Err(Error::Shape(format!(
            "{} kept placeholders but {} mask fills",
            kept_slots,
            labels.mask_fills.len()
        )));
    }

    let mut out = Vec::with_capacity(rollin.len() + labels.fills.len());
    let mut fills = labels.fills.iter();
    let mut mask_fills = labels.mask_fills.iter();
    for gap in 0..=rollin.len() {
        out.extend(fills.by_ref().take(labels.ins_counts[gap]));
        if gap < rollin.len() && labels.del_labels[gap] == 0 {
            let tok = rollin[gap];
            out.push(if tok == PLD {
                *mask_fills.next().expect("counted above")
            } else {
                tok
            });
        }
    }
    Ok(out)
}

/// Per-reference-token drop flags (true = dropped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropMask(pub Vec<bool>);

impl DropMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.0.iter().filter(|&&d| d).count()
    }
}

/// Draws a ratio `r ~ U[0,1)` and drops each token with probability `r`.
pub fn rollin_drop<R: Rng + ?Sized>(
    reference: &[TokenId],
    rng: &mut R,
) -> (Vec<TokenId>, DropMask) {
    let ratio: f64 = rng.gen();
    rollin_drop_with_ratio(reference, ratio, rng)
}

/// [`rollin_drop`] with a fixed drop ratio.
pub fn rollin_drop_with_ratio<R: Rng + ?Sized>(
    reference: &[TokenId],
    ratio: f64,
    rng: &mut R,
) -> (Vec<TokenId>, DropMask) {
    let mask: Vec<bool> = reference.iter().map(|_| rng.gen::<f64>() < ratio).collect();
    let survivors = reference
        .iter()
        .zip(&mask)
        .filter(|(_, &d)| !d)
        .map(|(&t, _)| t)
        .collect();
    (survivors, DropMask(mask))
}

/// Replaces the dropped positions of `reference` with `<pld>`.
pub fn rollin_mask(reference: &[TokenId], mask: &DropMask) -> Result<Vec<TokenId>> {
    if mask.len() != reference.len() {
        return Err(Error::Shape(format!(
            "mask of length {} for a reference of length {}",
            mask.len(),
            reference.len()
        )));
    }
    Ok(reference
        .iter()
        .zip(&mask.0)
        .map(|(&t, &d)| if d { PLD } else { t })
        .collect())
}

/// Insertion labels for the dropped roll-in read straight from the mask:
/// each dropped token is inserted into the gap it fell out of.
pub fn labels_from_drop(reference: &[TokenId], mask: &DropMask) -> Result<EditLabels> {
    if mask.len() != reference.len() {
        return Err(Error::Shape(format!(
            "mask of length {} for a reference of length {}",
            mask.len(),
            reference.len()
        )));
    }
    let kept = reference.len() - mask.dropped();
    let mut ins_counts = vec![0usize; kept + 1];
    let mut fills = Vec::new();
    let mut gap = 0;
    for (&t, &d) in reference.iter().zip(&mask.0) {
        if d {
            ins_counts[gap] += 1;
            fills.push(t);
        } else {
            gap += 1;
        }
    }
    Ok(EditLabels {
        del_labels: vec![0; kept],
        ins_counts,
        fills,
        mask_fills: Vec::new(),
    })
}

/// Token labels for the masked roll-in: the dropped tokens in order.
pub fn mask_targets(reference: &[TokenId], mask: &DropMask) -> Vec<TokenId> {
    reference
        .iter()
        .zip(&mask.0)
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect()
}

/// Samples one class per slot from `softmax(scores)`.
pub fn rollin_model_sample<R: Rng + ?Sized>(
    token_scores: &[Vec<f64>],
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    token_scores
        .iter()
        .enumerate()
        .map(|(slot, s)| sample_softmax(s, slot, rng).map(|c| c as TokenId))
        .collect()
}
