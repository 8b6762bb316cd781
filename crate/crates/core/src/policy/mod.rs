//! Scoring policies consumed by the refinement engine.
//!
//! A policy sees the decoder state wrapped in `<s>` ... `</s>` and returns
//! scores for one head at a time:
//!
//! - deletion: two scores (keep, delete) per content token;
//! - placeholder: 256 scores (0..=255 insertions) per gap;
//! - token: one score per vocabulary id per `<pld>` slot.

mod features;
mod linear;
mod oracle;
mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, BOS, EOS, PLD};
use crate::error::{Error, Result};

pub use features::{featurize, Alignment};
pub use linear::{Gradient, HeadExample, LinearConfig, LinearPolicy};
pub use oracle::OraclePolicy;
pub use train::{build_batch, train, EpochLoss, LabeledState, TrainingBatch};

/// Number of placeholder classes (insertion counts 0..=255).
pub const PLD_CLASSES: usize = crate::MAX_INSERT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Del,
    Pld,
    Tok,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Del, Head::Pld, Head::Tok];

    pub fn name(self) -> &'static str {
        match self {
            Head::Del => "del",
            Head::Pld => "pld",
            Head::Tok => "tok",
        }
    }
}

/// One scoring request: the sentence id (for reference lookups), its
/// source, and the current state including sentinels.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub id: usize,
    pub source: &'a [TokenId],
    pub state: &'a [TokenId],
}

impl<'a> Query<'a> {
    pub fn new(id: usize, source: &'a [TokenId], state: &'a [TokenId]) -> Self {
        Query { id, source, state }
    }

    /// State without the sentinels.
    pub fn content(&self) -> &'a [TokenId] {
        &self.state[1..self.state.len() - 1]
    }

    /// State positions (sentinel-indexed) holding `<pld>`.
    pub fn slots(&self) -> Vec<usize> {
        (1..self.state.len() - 1)
            .filter(|&p| self.state[p] == PLD)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.state.len() < 2 || self.state[0] != BOS || self.state[self.state.len() - 1] != EOS {
            return Err(Error::Contract(
                "state must be wrapped in <s> ... </s>".to_string(),
            ));
        }
        Ok(())
    }
}

/// Scores of one head; the other two families stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScores {
    pub head: Head,
    /// Per content token: [keep, delete].
    pub del: Vec<[f64; 2]>,
    /// Per gap: one score per insertion count.
    pub pld: Vec<Vec<f64>>,
    /// Per `<pld>` slot: one score per vocabulary id.
    pub tok: Vec<Vec<f64>>,
}

impl PolicyScores {
    pub fn del(scores: Vec<[f64; 2]>) -> Self {
        PolicyScores {
            head: Head::Del,
            del: scores,
            pld: Vec::new(),
            tok: Vec::new(),
        }
    }

    pub fn pld(scores: Vec<Vec<f64>>) -> Self {
        PolicyScores {
            head: Head::Pld,
            del: Vec::new(),
            pld: scores,
            tok: Vec::new(),
        }
    }

    pub fn tok(scores: Vec<Vec<f64>>) -> Self {
        PolicyScores {
            head: Head::Tok,
            del: Vec::new(),
            pld: Vec::new(),
            tok: scores,
        }
    }

    /// Checks the shape against the query and that every score is finite.
    pub fn validate(&self, query: &Query, vocab_size: usize) -> Result<()> {
        let content = query.state.len() - 2;
        let (rows, width): (Vec<&[f64]>, usize) = match self.head {
            Head::Del => {
                if self.del.len() != content {
                    return Err(Error::Contract(format!(
                        "{} deletion rows for {} tokens",
                        self.del.len(),
                        content
                    )));
                }
                (self.del.iter().map(|r| &r[..]).collect(), 2)
            }
            Head::Pld => {
                if self.pld.len() != content + 1 {
                    return Err(Error::Contract(format!(
                        "{} placeholder rows for {} gaps",
                        self.pld.len(),
                        content + 1
                    )));
                }
                (self.pld.iter().map(Vec::as_slice).collect(), PLD_CLASSES)
            }
            Head::Tok => {
                let slots = query.slots().len();
                if self.tok.len() != slots {
                    return Err(Error::Contract(format!(
                        "{} token rows for {} slots",
                        self.tok.len(),
                        slots
                    )));
                }
                (self.tok.iter().map(Vec::as_slice).collect(), vocab_size)
            }
        };
        for (slot, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Contract(format!(
                    "{} row {slot} has {} classes, expected {width}",
                    self.head.name(),
                    row.len()
                )));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite { slot });
            }
        }
        Ok(())
    }
}

/// A scoring policy. Implementations must be pure: identical queries give
/// identical scores.
pub trait Policy {
    fn vocab_size(&self) -> usize;

    /// Scores for `head` on the query state. The token head requires at
    /// least one `<pld>` slot.
    fn score(&self, query: &Query, head: Head) -> Result<PolicyScores>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn score(&self, query: &Query, head: Head) -> Result<PolicyScores> {
        (**self).score(query, head)
    }
}

pub(crate) fn check_query(query: &Query, head: Head) -> Result<()> {
    query.validate()?;
    if head == Head::Tok && !query.content().contains(&PLD) {
        return Err(Error::Contract(
            "token head queried on a state without <pld>".to_string(),
        ));
    }
    Ok(())
}

/// Wraps content tokens in sentinels.
pub fn with_sentinels(content: &[TokenId]) -> Vec<TokenId> {
    let mut state = Vec::with_capacity(content.len() + 2);
    state.push(BOS);
    state.extend_from_slice(content);
    state.push(EOS);
    state
}
