//! Imitation-style training of [`LinearPolicy`].
//!
//! For every reference the three heads see different roll-in states:
//!
//! - placeholder head: the reference with each token dropped with a
//!   per-sentence probability `r ~ U[0,1)`, labelled with the minimal
//!   insertion counts back to the reference;
//! - token head: the same drops replaced by `<pld>`, labelled with the
//!   dropped tokens;
//! - deletion head: the masked state with every slot filled by a token
//!   sampled from the current token head, labelled with the minimal-script
//!   deletions.
//!
//! The step loss is the sum of the three per-head mean cross-entropies.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, TokenId, NUM_RESERVED, PLD};
use crate::edit_oracle::{
    edit_labels_unbounded, mask_targets, rollin_drop, rollin_mask, rollin_model_sample,
};
use crate::error::{Error, Result};
use crate::rng::{seeded, split_seed, SeededRng};

use super::{with_sentinels, Head, LinearPolicy, Policy, Query, PLD_CLASSES};

const TRAIN_STREAM: u64 = 0x0074_7261_696e;

/// A sentinel-wrapped state and one label per scored position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledState {
    pub state: Vec<TokenId>,
    pub labels: Vec<usize>,
}

/// Roll-in states and roll-out labels of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub id: usize,
    pub source: Vec<TokenId>,
    pub del: LabeledState,
    pub pld: LabeledState,
    pub tok: LabeledState,
}

impl TrainingBatch {
    pub fn head(&self, head: Head) -> &LabeledState {
        match head {
            Head::Del => &self.del,
            Head::Pld => &self.pld,
            Head::Tok => &self.tok,
        }
    }
}

/// Average per-head losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub del: f64,
    pub pld: f64,
    pub tok: f64,
    pub total: f64,
}

/// Builds the three roll-in states for one reference.
pub fn build_batch(
    model: &LinearPolicy,
    id: usize,
    source: &[TokenId],
    reference: &[TokenId],
    rng: &mut SeededRng,
) -> Result<TrainingBatch> {
    let (dropped, mask) = rollin_drop(reference, rng);

    let pld_labels = edit_labels_unbounded(&dropped, reference)
        .ins_counts
        .into_iter()
        .map(|c| c.min(PLD_CLASSES - 1))
        .collect();
    let pld = LabeledState {
        state: with_sentinels(&dropped),
        labels: pld_labels,
    };

    let masked = rollin_mask(reference, &mask)?;
    let tok = LabeledState {
        state: with_sentinels(&masked),
        labels: mask_targets(reference, &mask)
            .into_iter()
            .map(|t| t as usize)
            .collect(),
    };

    let filled = if tok.labels.is_empty() {
        masked
    } else {
        let scores = model.score(&Query::new(id, source, &tok.state), Head::Tok)?;
        let candidates: Vec<Vec<f64>> = scores
            .tok
            .into_iter()
            .map(|row| row[NUM_RESERVED..].to_vec())
            .collect();
        let mut sampled = rollin_model_sample(&candidates, rng)?.into_iter();
        masked
            .iter()
            .map(|&t| {
                if t == PLD {
                    sampled.next().expect("one sample per slot") + NUM_RESERVED as TokenId
                } else {
                    t
                }
            })
            .collect()
    };
    let del = LabeledState {
        labels: edit_labels_unbounded(&filled, reference)
            .del_labels
            .into_iter()
            .map(usize::from)
            .collect(),
        state: with_sentinels(&filled),
    };

    Ok(TrainingBatch {
        id,
        source: source.to_vec(),
        del,
        pld,
        tok,
    })
}

/// Runs `epochs` passes of SGD over the corpus and returns the mean
/// pre-update loss of every epoch. References come from the alternate
/// targets when the corpus has them.
pub fn train(
    model: &mut LinearPolicy,
    corpus: &ParallelCorpus,
    seed: u64,
    epochs: usize,
) -> Result<Vec<EpochLoss>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let targets = corpus.training_targets();
    let lr = model.learning_rate();
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let epoch_seed = split_seed(seed, TRAIN_STREAM, epoch as u64);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut seeded(epoch_seed));
        let mut sums = [0.0f64; 3];
        for &i in &order {
            let mut rng = seeded(split_seed(epoch_seed, 1, i as u64));
            let source = corpus.source[i].ids();
            let batch = build_batch(model, i, source, targets[i].ids(), &mut rng)?;
            let mut steps = Vec::with_capacity(3);
            for (k, head) in Head::ALL.into_iter().enumerate() {
                let labeled = batch.head(head);
                let examples = model.examples(
                    &Query::new(i, source, &labeled.state),
                    head,
                    &labeled.labels,
                )?;
                sums[k] += model.head_loss(head, &examples);
                steps.push((head, model.head_gradient(head, &examples)));
            }
            for (head, g) in &steps {
                model.apply_gradient(*head, g, lr);
            }
        }
        let n = corpus.len() as f64;
        let (del, pld, tok) = (sums[0] / n, sums[1] / n, sums[2] / n);
        curve.push(EpochLoss {
            epoch: epoch + 1,
            del,
            pld,
            tok,
            total: del + pld + tok,
        });
    }
    Ok(curve)
}
