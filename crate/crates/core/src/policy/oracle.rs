use crate::corpus::{TokenId, PLD};
use crate::edit_oracle::edit_labels_unbounded;
use crate::error::{Error, Result};

use super::{check_query, Head, Policy, PolicyScores, Query, PLD_CLASSES};

/// Scores +1 on the class a minimal edit script toward the reference picks
/// and -1 everywhere else.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    references: Vec<Vec<TokenId>>,
    vocab_size: usize,
}

impl OraclePolicy {
    /// `references[id]` is the reference for sentence `id`.
    pub fn new(references: Vec<Vec<TokenId>>, vocab_size: usize) -> Self {
        OraclePolicy {
            references,
            vocab_size,
        }
    }

    fn reference(&self, id: usize) -> Result<&[TokenId]> {
        self.references
            .get(id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSentence(id))
    }
}

fn one_hot(width: usize, class: Option<usize>) -> Vec<f64> {
    let mut row = vec![-1.0; width];
    if let Some(c) = class {
        row[c] = 1.0;
    }
    row
}

impl Policy for OraclePolicy {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn score(&self, query: &Query, head: Head) -> Result<PolicyScores> {
        check_query(query, head)?;
        let reference = self.reference(query.id)?;
        let content = query.content();
        let labels = edit_labels_unbounded(content, reference);
        Ok(match head {
            Head::Del => PolicyScores::del(
                labels
                    .del_labels
                    .iter()
                    .map(|&d| if d == 1 { [-1.0, 1.0] } else { [1.0, -1.0] })
                    .collect(),
            ),
            Head::Pld => PolicyScores::pld(
                labels
                    .ins_counts
                    .iter()
                    .map(|&c| one_hot(PLD_CLASSES, Some(c.min(PLD_CLASSES - 1))))
                    .collect(),
            ),
            Head::Tok => {
                // placeholders the script deletes get no preferred token
                let mut fills = labels.mask_fills.iter();
                let rows = content
                    .iter()
                    .zip(&labels.del_labels)
                    .filter(|(&t, _)| t == PLD)
                    .map(|(_, &d)| {
                        let class = if d == 0 {
                            fills.next().map(|&t| t as usize)
                        } else {
                            None
                        };
                        one_hot(self.vocab_size, class)
                    })
                    .collect();
                PolicyScores::tok(rows)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::with_sentinels;
    use crate::rng::argmax;

    fn oracle() -> OraclePolicy {
        OraclePolicy::new(vec![vec![4, 5, 6, 7]], 10)
    }

    #[test]
    fn reference_state_keeps_everything() {
        let state = with_sentinels(&[4, 5, 6, 7]);
        let s = oracle()
            .score(&Query::new(0, &[], &state), Head::Del)
            .unwrap();
        assert!(s.del.iter().all(|r| r[1] < r[0]));
        let s = oracle()
            .score(&Query::new(0, &[], &state), Head::Pld)
            .unwrap();
        assert!(s.pld.iter().all(|r| argmax(r) == 0));
    }

    #[test]
    fn empty_state_asks_for_full_length() {
        let state = with_sentinels(&[]);
        let s = oracle()
            .score(&Query::new(0, &[], &state), Head::Pld)
            .unwrap();
        assert_eq!(s.pld.len(), 1);
        assert_eq!(argmax(&s.pld[0]), 4);
    }

    #[test]
    fn long_reference_clamps_to_255() {
        let p = OraclePolicy::new(vec![vec![4; 300]], 5);
        let state = with_sentinels(&[]);
        let s = p.score(&Query::new(0, &[], &state), Head::Pld).unwrap();
        assert_eq!(argmax(&s.pld[0]), 255);
    }

    #[test]
    fn missing_token_marks_its_gap() {
        let state = with_sentinels(&[4, 6, 7]);
        let s = oracle()
            .score(&Query::new(0, &[], &state), Head::Pld)
            .unwrap();
        let counts: Vec<usize> = s.pld.iter().map(|r| argmax(r)).collect();
        assert_eq!(counts, vec![0, 1, 0, 0]);
        assert_eq!(s.pld[1][1], 1.0);
    }

    #[test]
    fn slots_get_reference_tokens() {
        let state = with_sentinels(&[4, PLD, PLD, 7]);
        let s = oracle()
            .score(&Query::new(0, &[], &state), Head::Tok)
            .unwrap();
        let fills: Vec<usize> = s.tok.iter().map(|r| argmax(r)).collect();
        assert_eq!(fills, vec![5, 6]);
    }

    #[test]
    fn tok_head_needs_a_slot() {
        let state = with_sentinels(&[4]);
        assert!(matches!(
            oracle().score(&Query::new(0, &[], &state), Head::Tok),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn unknown_id() {
        let state = with_sentinels(&[]);
        assert!(matches!(
            oracle().score(&Query::new(3, &[], &state), Head::Pld),
            Err(Error::UnknownSentence(3))
        ));
    }

    #[test]
    fn missing_sentinels_rejected() {
        assert!(matches!(
            oracle().score(&Query::new(0, &[], &[4, 5]), Head::Del),
            Err(Error::Contract(_))
        ));
    }
}
