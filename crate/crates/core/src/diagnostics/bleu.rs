use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{merge_to_words, Sentence, Vocab};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuLevel {
    Bpe,
    Word,
}

/// Corpus BLEU. Precisions and score are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub score: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Hash + Eq>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over arbitrary token sequences, one reference each.
///
/// Clipped n-gram matches and totals are summed over the corpus before
/// dividing. An order for which neither side has any n-gram (every sentence
/// shorter than `n`) counts as a full match, so a corpus scored against
/// itself always gets 100. Otherwise a zero precision gives a zero score.
/// An empty hypothesis corpus side (`c = 0`) gets brevity penalty 0.
pub fn bleu_sequences<T: Hash + Eq>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> Result<BleuReport> {
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if hyps.len() != refs.len() {
        return Err(Error::Shape(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut hyp_total = [0usize; MAX_ORDER];
    let mut ref_total = [0usize; MAX_ORDER];
    for (h, r) in hyps.iter().zip(refs) {
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            hyp_total[n - 1] += h.len().saturating_sub(n - 1);
            ref_total[n - 1] += r.len().saturating_sub(n - 1);
            matched[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if hyp_total[n] == 0 {
            if ref_total[n] == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            matched[n] as f64 / hyp_total[n] as f64
        };
    }
    let c = hyp_total[0];
    let r = ref_total[0];
    let brevity_penalty = if c == 0 {
        if r == 0 {
            1.0
        } else {
            0.0
        }
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        precisions: precisions.map(|p| 100.0 * p),
        brevity_penalty,
        score,
        hyp_len: c,
        ref_len: r,
    })
}

/// Corpus BLEU on BPE tokens or on merged words.
pub fn bleu(
    hyps: &[Sentence],
    refs: &[Sentence],
    level: BleuLevel,
    vocab: &Vocab,
) -> Result<BleuReport> {
    match level {
        BleuLevel::Bpe => {
            let ids = |s: &[Sentence]| s.iter().map(|x| x.ids().to_vec()).collect::<Vec<_>>();
            bleu_sequences(&ids(hyps), &ids(refs))
        }
        BleuLevel::Word => {
            let words = |s: &[Sentence]| {
                s.iter()
                    .map(|x| merge_to_words(x, vocab).words)
                    .collect::<Vec<_>>()
            };
            bleu_sequences(&words(hyps), &words(refs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn corpus<'a>(lines: &[&'a str]) -> Vec<Vec<&'a str>> {
        lines.iter().map(|l| toks(l)).collect()
    }

    #[test]
    fn identical_corpora() {
        for c in [corpus(&["a b c d e", "f g"]), corpus(&["x"])] {
            let r = bleu_sequences(&c, &c).unwrap();
            assert_eq!(r.score, 100.0);
            assert_eq!(r.brevity_penalty, 1.0);
            assert_eq!(r.precisions, [100.0; 4]);
        }
    }

    #[test]
    fn short_hypothesis_penalty() {
        let r = bleu_sequences(&corpus(&["a b"]), &corpus(&["a b c d"])).unwrap();
        assert!((r.brevity_penalty - (-1.0f64).exp()).abs() < 1e-12);
        // no 3-grams on the hypothesis side while the reference has some
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn clipping() {
        let r = bleu_sequences(&corpus(&["a a a"]), &corpus(&["a b"])).unwrap();
        assert!((r.precisions[0] - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(matches!(
            bleu_sequences(&empty, &empty),
            Err(Error::EmptyCorpus)
        ));
        assert!(bleu_sequences(&corpus(&["a"]), &corpus(&["a", "b"])).is_err());
    }

    #[test]
    fn word_level_merges_pieces() {
        let vocab = Vocab::from_surfaces(["t@@", "he", "cat", "th@@", "e"]);
        let h = vocab.encode("t@@ he cat");
        let r = vocab.encode("th@@ e cat");
        let word = bleu(
            std::slice::from_ref(&h),
            std::slice::from_ref(&r),
            BleuLevel::Word,
            &vocab,
        )
        .unwrap();
        assert_eq!(word.score, 100.0);
        let bpe = bleu(&[h], &[r], BleuLevel::Bpe, &vocab).unwrap();
        assert!(bpe.score < 100.0);
    }
}
