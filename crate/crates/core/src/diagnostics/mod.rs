//! Metrics and probe generators for analysing decoder behaviour.

mod bleu;
mod corrupt;
mod probe;
pub mod tsv;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    merge_to_words, strip_stopwords, Lexicon, Sentence, StopList, TokenId, Vocab, PLD,
};
use crate::engine::DecodeTrace;
use crate::error::{Error, Result};

pub use bleu::{bleu, bleu_sequences, BleuLevel, BleuReport, MAX_ORDER};
pub use corrupt::{corrupt_no_accuracy, corrupt_no_fluency, derangement};
pub use probe::{
    make_probe_set, Probe, ProbeKind, ProbeSet, PROBE_RATIOS_RANDOM, PROBE_RATIOS_WORD,
};

/// Stage tags reported by default: the first placeholder insertion, the
/// deletion after the first token fill, the second placeholder insertion
/// and the final output.
pub const DEFAULT_LENGTH_TAGS: [&str; 4] = ["pld_1", "del_2", "pld_2", "final"];
/// Stage tags of the default duplication report.
pub const DEFAULT_DUPLICATION_TAGS: [&str; 4] = ["tok_1", "del_2", "tok_2", "final"];

/// Content tokens of a trace at `tag`; `final` is the decoder output.
pub fn tokens_at<'a>(trace: &'a DecodeTrace, tag: &str) -> Option<&'a [TokenId]> {
    if tag == "final" {
        return Some(&trace.final_tokens);
    }
    trace.stage(tag).map(|s| s.content())
}

/// Mean of a per-sentence quantity over the traces that reached a tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMean {
    pub tag: String,
    pub sentences: usize,
    pub raw: f64,
    /// Same quantity with stop words removed first.
    pub stripped: f64,
}

fn tag_means(
    traces: &[DecodeTrace],
    tags: &[&str],
    vocab: &Vocab,
    stoplist: &StopList,
    measure: impl Fn(&Sentence) -> usize,
) -> Result<Vec<TagMean>> {
    if traces.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut out = Vec::new();
    for &tag in tags {
        let mut n = 0usize;
        let (mut raw, mut stripped) = (0usize, 0usize);
        for t in traces {
            if let Some(tokens) = tokens_at(t, tag) {
                let s = vocab.sentence(tokens.to_vec());
                n += 1;
                raw += measure(&s);
                stripped += measure(&strip_stopwords(&s, vocab, stoplist));
            }
        }
        if n > 0 {
            out.push(TagMean {
                tag: tag.to_string(),
                sentences: n,
                raw: raw as f64 / n as f64,
                stripped: stripped as f64 / n as f64,
            });
        }
    }
    Ok(out)
}

/// Mean token length per stage tag, with and without stop words.
/// Placeholders count toward length. Tags no trace reached are left out.
pub fn iteration_length_stats(
    traces: &[DecodeTrace],
    tags: &[&str],
    vocab: &Vocab,
    stoplist: &StopList,
) -> Result<Vec<TagMean>> {
    tag_means(traces, tags, vocab, stoplist, Sentence::len)
}

/// Mean consecutive-duplicate count per stage tag, with and without stop
/// words.
pub fn iteration_duplicate_stats(
    traces: &[DecodeTrace],
    tags: &[&str],
    vocab: &Vocab,
    stoplist: &StopList,
) -> Result<Vec<TagMean>> {
    tag_means(traces, tags, vocab, stoplist, |s| count_duplicates(s.ids()))
}

/// Positions holding the same token as the one before (`a b b b c` has 2).
pub fn count_duplicates<T: PartialEq>(tokens: &[T]) -> usize {
    tokens.windows(2).filter(|w| w[0] == w[1]).count()
}

/// [`count_duplicates`] after removing stop words.
pub fn count_duplicates_stripped(sentence: &Sentence, vocab: &Vocab, stoplist: &StopList) -> usize {
    count_duplicates(strip_stopwords(sentence, vocab, stoplist).ids())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidWords {
    /// Merged words missing from the lexicon.
    pub words: usize,
    /// Sentences with at least one such word.
    pub sentences: usize,
    pub total_words: usize,
}

pub fn count_invalid_words(hyps: &[Sentence], vocab: &Vocab, lexicon: &Lexicon) -> InvalidWords {
    let mut out = InvalidWords {
        words: 0,
        sentences: 0,
        total_words: 0,
    };
    for h in hyps {
        let words = merge_to_words(h, vocab).words;
        let bad = words.iter().filter(|w| !lexicon.contains(w)).count();
        out.words += bad;
        out.sentences += usize::from(bad > 0);
        out.total_words += words.len();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubwordStats {
    /// Subword tokens over all tokens.
    pub ratio: f64,
    pub mean_subwords: f64,
    pub mean_tokens: f64,
}

pub fn subword_stats(hyps: &[Sentence]) -> Result<SubwordStats> {
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sub: usize = hyps.iter().map(Sentence::subword_count).sum();
    let tok: usize = hyps.iter().map(Sentence::len).sum();
    let n = hyps.len() as f64;
    Ok(SubwordStats {
        ratio: if tok == 0 {
            0.0
        } else {
            sub as f64 / tok as f64
        },
        mean_subwords: sub as f64 / n,
        mean_tokens: tok as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PldAccuracyMode {
    /// Fraction of gaps whose predicted count equals the gold count.
    #[default]
    Elementwise,
    /// Gaps with a nonzero gold count predicted exactly, over all gaps.
    NonzeroGold,
}

pub fn pld_accuracy(pred: &[usize], gold: &[usize], mode: PldAccuracyMode) -> Result<f64> {
    if pred.len() != gold.len() || gold.is_empty() {
        return Err(Error::Shape(format!(
            "{} predicted gaps for {} gold gaps",
            pred.len(),
            gold.len()
        )));
    }
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p == g && (mode == PldAccuracyMode::Elementwise || **g > 0))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Size of the multiset intersection of two token lists.
pub fn multiset_overlap(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut counts: HashMap<TokenId, usize> = HashMap::new();
    for &t in b {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut n = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                n += 1;
            }
        }
    }
    n
}

/// Splits `seq` into the runs between the tokens of `anchors`, matching each
/// anchor to its leftmost occurrence after the previous one. `None` when
/// `anchors` is not a subsequence of `seq`.
pub fn gap_fills(anchors: &[TokenId], seq: &[TokenId]) -> Option<Vec<Vec<TokenId>>> {
    let mut out = Vec::with_capacity(anchors.len() + 1);
    let mut at = 0;
    for &a in anchors {
        let found = seq[at..].iter().position(|&t| t == a)? + at;
        out.push(seq[at..found].to_vec());
        at = found + 1;
    }
    out.push(seq[at..].to_vec());
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchDenominator {
    /// Average over gaps that have gold tokens.
    #[default]
    GoldFilled,
    AllGaps,
}

/// Order-insensitive matches per gap, summed over a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCount {
    pub matched: usize,
    pub gaps: usize,
}

impl MatchCount {
    pub fn mean(&self) -> Option<f64> {
        (self.gaps > 0).then(|| self.matched as f64 / self.gaps as f64)
    }
}

pub fn match_gaps(
    pred_fills: &[Vec<TokenId>],
    gold_fills: &[Vec<TokenId>],
    denominator: MatchDenominator,
) -> Result<MatchCount> {
    if pred_fills.len() != gold_fills.len() {
        return Err(Error::Shape(format!(
            "{} predicted gaps for {} gold gaps",
            pred_fills.len(),
            gold_fills.len()
        )));
    }
    let matched = pred_fills
        .iter()
        .zip(gold_fills)
        .map(|(p, g)| multiset_overlap(p, g))
        .sum();
    let gaps = match denominator {
        MatchDenominator::GoldFilled => gold_fills.iter().filter(|g| !g.is_empty()).count(),
        MatchDenominator::AllGaps => gold_fills.len(),
    };
    Ok(MatchCount { matched, gaps })
}

/// Matched-token count of a prediction against a reference, both split into
/// gaps around the initialization tokens. `id` names the sentence in errors.
pub fn matched_tokens(
    id: usize,
    init: &[TokenId],
    predicted: &[TokenId],
    reference: &[TokenId],
    denominator: MatchDenominator,
) -> Result<MatchCount> {
    let pred = gap_fills(init, predicted).ok_or(Error::AnchorAlignment {
        id,
        which: "prediction",
    })?;
    let gold = gap_fills(init, reference).ok_or(Error::AnchorAlignment {
        id,
        which: "reference",
    })?;
    match_gaps(&pred, &gold, denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenClass {
    Subword,
    Fullword,
    All,
}

impl TokenClass {
    pub fn admits(self, subword: bool) -> bool {
        match self {
            TokenClass::Subword => subword,
            TokenClass::Fullword => !subword,
            TokenClass::All => true,
        }
    }
}

/// A filled token and whether it is a subword piece where it stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillToken {
    pub id: TokenId,
    pub subword: bool,
}

/// Fill tokens per gap, classified by position in `sentence`.
pub fn classified_fills(anchors: &[TokenId], sentence: &Sentence) -> Option<Vec<Vec<FillToken>>> {
    let mut out = Vec::with_capacity(anchors.len() + 1);
    let mut current = Vec::new();
    let mut next = 0;
    for (i, &t) in sentence.ids().iter().enumerate() {
        if next < anchors.len() && anchors[next] == t {
            out.push(std::mem::take(&mut current));
            next += 1;
        } else {
            current.push(FillToken {
                id: t,
                subword: sentence.is_subword_token(i),
            });
        }
    }
    if next < anchors.len() {
        return None;
    }
    out.push(current);
    Some(out)
}

/// Fill tokens per gap of `filled`, which is `with_slots` with every
/// `<pld>` replaced. Classification is by position in `filled`.
pub fn slot_fills(with_slots: &[TokenId], filled: &Sentence) -> Result<Vec<Vec<FillToken>>> {
    if with_slots.len() != filled.len() {
        return Err(Error::Shape(format!(
            "{} slots state for {} filled tokens",
            with_slots.len(),
            filled.len()
        )));
    }
    let mut out = vec![Vec::new()];
    for (i, &t) in with_slots.iter().enumerate() {
        if t == PLD {
            out.last_mut().expect("nonempty").push(FillToken {
                id: filled.ids()[i],
                subword: filled.is_subword_token(i),
            });
        } else {
            out.push(Vec::new());
        }
    }
    Ok(out)
}

/// Multiset counts behind fill precision and recall; add them up over a
/// corpus before taking ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FillCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl FillCounts {
    /// `None` when nothing of the class was predicted.
    pub fn precision(&self) -> Option<f64> {
        (self.predicted > 0).then(|| self.matched as f64 / self.predicted as f64)
    }

    /// `None` when the gold side has nothing of the class.
    pub fn recall(&self) -> Option<f64> {
        (self.gold > 0).then(|| self.matched as f64 / self.gold as f64)
    }

    pub fn add(&mut self, other: FillCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

/// Per-gap multiset matches restricted to one token class.
pub fn fill_precision_recall(
    pred: &[Vec<FillToken>],
    gold: &[Vec<FillToken>],
    class: TokenClass,
) -> Result<FillCounts> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predicted gaps for {} gold gaps",
            pred.len(),
            gold.len()
        )));
    }
    let pick = |fills: &[FillToken]| -> Vec<TokenId> {
        fills
            .iter()
            .filter(|f| class.admits(f.subword))
            .map(|f| f.id)
            .collect()
    };
    let mut out = FillCounts::default();
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (pick(p), pick(g));
        out.matched += multiset_overlap(&p, &g);
        out.predicted += p.len();
        out.gold += g.len();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{decode, DecodeOptions};
    use crate::policy::OraclePolicy;

    #[test]
    fn duplicates() {
        let v = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        assert_eq!(count_duplicates(&v("a b b b c")), 2);
        assert_eq!(count_duplicates(&v("a b a b")), 0);
        assert_eq!(count_duplicates(&v("x x y y")), 2);
        assert_eq!(count_duplicates::<u32>(&[]), 0);
    }

    #[test]
    fn duplicates_without_stop_words() {
        let vocab = Vocab::from_surfaces(["a", "the", "b"]);
        let stop = StopList::from_words(["the"]);
        let s = vocab.encode("a the a b");
        assert_eq!(count_duplicates(s.ids()), 0);
        assert_eq!(count_duplicates_stripped(&s, &vocab, &stop), 1);
    }

    #[test]
    fn invalid_words() {
        let vocab = Vocab::from_surfaces(["the", "cat", "ca@@", "t", "do@@", "g"]);
        let lex = Lexicon::from_words(["the", "cat"]);
        let hyps = [vocab.encode("the ca@@ t"), vocab.encode("do@@ g the do@@")];
        let r = count_invalid_words(&hyps, &vocab, &lex);
        assert_eq!((r.words, r.sentences), (2, 1));
        assert_eq!(r.total_words, 5);
        assert_eq!(count_invalid_words(&hyps[..1], &vocab, &lex).words, 0);
    }

    #[test]
    fn subwords() {
        let vocab = Vocab::from_surfaces(["a@@", "b@@", "c", "a", "b"]);
        let s = subword_stats(&[vocab.encode("a@@ b@@ c")]).unwrap();
        assert_eq!((s.ratio, s.mean_subwords, s.mean_tokens), (1.0, 3.0, 3.0));
        assert_eq!(subword_stats(&[vocab.encode("a b")]).unwrap().ratio, 0.0);
        assert!(subword_stats(&[]).is_err());
    }

    #[test]
    fn pld_accuracy_modes() {
        let (p, g) = ([0, 0, 2, 0], [0, 1, 2, 0]);
        assert_eq!(
            pld_accuracy(&p, &g, PldAccuracyMode::Elementwise).unwrap(),
            0.75
        );
        assert_eq!(
            pld_accuracy(&p, &g, PldAccuracyMode::NonzeroGold).unwrap(),
            0.25
        );
        assert_eq!(
            pld_accuracy(&g, &g, PldAccuracyMode::Elementwise).unwrap(),
            1.0
        );
        assert_eq!(
            pld_accuracy(&[1, 1], &[0, 0], PldAccuracyMode::Elementwise).unwrap(),
            0.0
        );
        assert!(pld_accuracy(&[0], &[0, 1], PldAccuracyMode::Elementwise).is_err());
    }

    #[test]
    fn matched_token_examples() {
        let (a, b, c, d) = (4, 5, 6, 7);
        let m = matched_tokens(
            0,
            &[a, d],
            &[a, c, b, d],
            &[a, b, c, d],
            MatchDenominator::GoldFilled,
        )
        .unwrap();
        assert_eq!(m.mean(), Some(2.0));
        let m = matched_tokens(
            0,
            &[a, d],
            &[a, c, b, d],
            &[a, b, c, d],
            MatchDenominator::AllGaps,
        )
        .unwrap();
        assert_eq!((m.matched, m.gaps), (2, 3));
        let m = matched_tokens(
            0,
            &[a],
            &[a, 9, 9],
            &[a, b, c],
            MatchDenominator::GoldFilled,
        )
        .unwrap();
        assert_eq!(m.matched, 0);
        assert!(matches!(
            matched_tokens(7, &[a, d], &[d, a], &[a, d], MatchDenominator::GoldFilled),
            Err(Error::AnchorAlignment {
                id: 7,
                which: "prediction"
            })
        ));
    }

    #[test]
    fn precision_recall() {
        let f = |ids: &[TokenId]| {
            ids.iter()
                .map(|&id| FillToken { id, subword: false })
                .collect::<Vec<_>>()
        };
        let gold = vec![f(&[4, 5]), f(&[6, 7])];
        let perfect = fill_precision_recall(&gold, &gold, TokenClass::All).unwrap();
        assert_eq!(
            (perfect.precision(), perfect.recall()),
            (Some(1.0), Some(1.0))
        );
        let half = fill_precision_recall(&[f(&[4]), f(&[7])], &gold, TokenClass::All).unwrap();
        assert_eq!((half.precision(), half.recall()), (Some(1.0), Some(0.5)));
        let none = fill_precision_recall(&gold, &gold, TokenClass::Subword).unwrap();
        assert_eq!((none.precision(), none.recall()), (None, None));
    }

    #[test]
    fn classified_fill_positions() {
        let vocab = Vocab::from_surfaces(["a@@", "b", "c", "d"]);
        let s = vocab.encode("c a@@ b d");
        let c = vocab.id_of("c").unwrap();
        let d = vocab.id_of("d").unwrap();
        let fills = classified_fills(&[c, d], &s).unwrap();
        assert_eq!(fills.len(), 3);
        assert!(fills[1].iter().all(|f| f.subword));
        assert!(classified_fills(&[d, c], &s).is_none());
    }

    #[test]
    fn slot_fill_groups() {
        let vocab = Vocab::from_surfaces(["a", "b@@", "c"]);
        let (a, b, c) = (4, 5, 6);
        let filled = vocab.sentence(vec![b, c, a, b, c]);
        let g = slot_fills(&[PLD, PLD, a, PLD, PLD], &filled).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].iter().map(|f| f.id).collect::<Vec<_>>(), vec![b, c]);
        assert!(g[1].iter().all(|f| f.subword));
        assert!(slot_fills(&[PLD], &filled).is_err());
    }

    #[test]
    fn oracle_lengths_match_references() {
        let vocab = Vocab::from_surfaces(["a", "b", "c", "the"]);
        let refs = [vocab.encode("a b c the"), vocab.encode("the b")];
        let oracle =
            OraclePolicy::new(refs.iter().map(|r| r.ids().to_vec()).collect(), vocab.len());
        let traces: Vec<_> = (0..2)
            .map(|i| decode(&oracle, i, &[], &DecodeOptions::default()).unwrap())
            .collect();
        let stop = StopList::from_words(["the"]);
        let stats = iteration_length_stats(&traces, &DEFAULT_LENGTH_TAGS, &vocab, &stop).unwrap();
        let fin = stats.iter().find(|s| s.tag == "final").unwrap();
        assert_eq!(fin.raw, 3.0);
        assert_eq!(fin.stripped, 2.0);
        assert!(stats.iter().all(|s| s.stripped <= s.raw));
        assert!(stats.iter().all(|s| s.tag != "pld_3"));
    }
}
