//! The iterative refinement decoder.
//!
//! Each round deletes tokens, inserts placeholders into gaps and fills the
//! placeholders, and decoding stops once a round leaves the sentence
//! unchanged or the round budget runs out. Every stage snapshot is kept in
//! the returned [`DecodeTrace`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, BOS, EOS, NUM_RESERVED, PLD};
use crate::error::{Error, Result};
use crate::policy::{with_sentinels, Head, Policy, PolicyScores, Query};
use crate::rng::{argmax, sample_softmax, sentence_rng};
use crate::MAX_INSERT;

const LENGTH_SAMPLE_STREAM: u64 = 0x6c65_6e67_7468;

/// Starting sentence of a decode.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Init {
    #[default]
    Empty,
    /// Start from an existing translation (a translation-memory match or a
    /// corrupted reference).
    Given(Vec<TokenId>),
}

/// First-round placeholder override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthOverride {
    /// Insert exactly this many placeholders (clamped to 255) into the single
    /// gap of an empty first state. Ignored for non-empty initializations.
    External(usize),
    /// Rank-k lengths; see [`decode_topk_lengths`]. [`decode`] keeps the
    /// rank-1 (argmax) candidate.
    TopK(usize),
}

/// Which deletion stages use the probability threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdScope {
    /// Only the deletion right after the first token fill (round 2).
    #[default]
    AfterFirstInsertion,
    EveryRound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    pub max_rounds: usize,
    pub init: Init,
    pub length_override: Option<LengthOverride>,
    /// Seed for sampling round-2 insertion counts from `softmax(score)`.
    pub length_sample_seed: Option<u64>,
    /// Delete when `softmax(del scores)[delete] > tau`.
    pub deletion_threshold: Option<f64>,
    pub threshold_scope: ThresholdScope,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_rounds: 10,
            init: Init::Empty,
            length_override: None,
            length_sample_seed: None,
            deletion_threshold: None,
            threshold_scope: ThresholdScope::default(),
        }
    }
}

impl DecodeOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(tau) = self.deletion_threshold {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::InvalidArgument(format!(
                    "deletion threshold {tau} outside [0, 1]"
                )));
            }
        }
        if let Some(LengthOverride::TopK(0)) = self.length_override {
            return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
        }
        if let Init::Given(tokens) = &self.init {
            if tokens.iter().any(|&t| t == BOS || t == EOS) {
                return Err(Error::InvalidArgument(
                    "initialization contains sentinel ids".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Del,
    Pld,
    Tok,
}

impl StageKind {
    fn name(self) -> &'static str {
        match self {
            StageKind::Del => "del",
            StageKind::Pld => "pld",
            StageKind::Tok => "tok",
        }
    }
}

/// Snapshot after one stage, sentinels included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    pub round: usize,
    pub tokens: Vec<TokenId>,
}

impl Stage {
    /// `del_1`, `pld_1`, `tok_1`, `del_2`, ...
    pub fn tag(&self) -> String {
        format!("{}_{}", self.kind.name(), self.round)
    }

    /// Content tokens (placeholders included).
    pub fn content(&self) -> &[TokenId] {
        &self.tokens[1..self.tokens.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Fixpoint,
    MaxRounds,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Fixpoint => "fixpoint",
            Termination::MaxRounds => "max_rounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub stages: Vec<Stage>,
    /// Rounds run, including the final unchanged round on a fixpoint.
    pub rounds: usize,
    pub termination: Termination,
    /// Final sentence without sentinels.
    pub final_tokens: Vec<TokenId>,
}

impl DecodeTrace {
    pub fn stage(&self, tag: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.tag() == tag)
    }
}

/// Per-gap insertion counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapInsertion(pub Vec<usize>);

/// `true` where `softmax(scores)[delete] > tau`.
///
/// Compared in log-odds space, `s_delete - s_keep > ln(tau / (1 - tau))`,
/// which is exact at the ends: `tau = 0` deletes every token and `tau = 1`
/// none, for any finite scores. `tau = 0.5` is argmax with ties kept.
pub fn threshold_delete(del_scores: &[[f64; 2]], tau: f64) -> Vec<bool> {
    let tau = tau.clamp(0.0, 1.0);
    let cut = (tau / (1.0 - tau)).ln();
    del_scores.iter().map(|s| s[1] - s[0] > cut).collect()
}

/// Argmax deletion; a tie keeps the token.
pub fn argmax_delete(del_scores: &[[f64; 2]]) -> Vec<bool> {
    del_scores.iter().map(|s| s[1] > s[0]).collect()
}

/// Draws one insertion count per gap from `softmax(scores)`.
pub fn sample_gap_lengths<R: Rng + ?Sized>(
    pld_scores: &[Vec<f64>],
    rng: &mut R,
) -> Result<GapInsertion> {
    pld_scores
        .iter()
        .enumerate()
        .map(|(gap, s)| sample_softmax(s, gap, rng).map(|c| c.min(MAX_INSERT)))
        .collect::<Result<Vec<_>>>()
        .map(GapInsertion)
}

/// Argmax count per gap.
pub fn argmax_gap_lengths(pld_scores: &[Vec<f64>]) -> GapInsertion {
    GapInsertion(
        pld_scores
            .iter()
            .map(|s| argmax(s).min(MAX_INSERT))
            .collect(),
    )
}

/// Inserts `counts[g]` placeholders before content token `g` (the last
/// count goes at the end).
pub fn insert_placeholders(content: &[TokenId], counts: &[usize]) -> Result<Vec<TokenId>> {
    if counts.len() != content.len() + 1 {
        return Err(Error::Shape(format!(
            "{} gap counts for {} tokens",
            counts.len(),
            content.len()
        )));
    }
    let mut out = Vec::with_capacity(content.len() + counts.iter().sum::<usize>());
    for (g, &c) in counts.iter().enumerate() {
        out.extend(std::iter::repeat_n(PLD, c));
        if g < content.len() {
            out.push(content[g]);
        }
    }
    Ok(out)
}

fn scored<P: Policy + ?Sized>(policy: &P, query: &Query, head: Head) -> Result<PolicyScores> {
    let scores = policy.score(query, head)?;
    if scores.head != head {
        return Err(Error::Contract(format!(
            "asked for {} scores, got {}",
            head.name(),
            scores.head.name()
        )));
    }
    scores.validate(query, policy.vocab_size())?;
    Ok(scores)
}

/// Argmax insertion counts for every gap of `content`.
pub fn predict_gaps<P: Policy + ?Sized>(
    policy: &P,
    id: usize,
    source: &[TokenId],
    content: &[TokenId],
) -> Result<GapInsertion> {
    let state = with_sentinels(content);
    let scores = scored(policy, &Query::new(id, source, &state), Head::Pld)?;
    Ok(argmax_gap_lengths(&scores.pld))
}

/// Replaces every `<pld>` with the best-scoring non-reserved token.
pub fn fill_slots<P: Policy + ?Sized>(
    policy: &P,
    id: usize,
    source: &[TokenId],
    content: &[TokenId],
) -> Result<Vec<TokenId>> {
    if !content.contains(&PLD) {
        return Ok(content.to_vec());
    }
    if policy.vocab_size() <= NUM_RESERVED {
        return Err(Error::Contract("vocabulary has no emittable tokens".into()));
    }
    let state = with_sentinels(content);
    let scores = scored(policy, &Query::new(id, source, &state), Head::Tok)?;
    let mut fills = scores
        .tok
        .iter()
        .map(|row| (argmax(&row[NUM_RESERVED..]) + NUM_RESERVED) as TokenId);
    Ok(content
        .iter()
        .map(|&t| {
            if t == PLD {
                fills.next().expect("one row per slot")
            } else {
                t
            }
        })
        .collect())
}

struct Run<'a, P: ?Sized> {
    policy: &'a P,
    id: usize,
    source: &'a [TokenId],
    options: &'a DecodeOptions,
}

impl<P: Policy + ?Sized> Run<'_, P> {
    fn query<'s>(&'s self, state: &'s [TokenId]) -> Query<'s> {
        Query::new(self.id, self.source, state)
    }

    fn delete(&self, content: &[TokenId], round: usize) -> Result<Vec<TokenId>> {
        if content.is_empty() {
            return Ok(Vec::new());
        }
        let state = with_sentinels(content);
        let scores = scored(self.policy, &self.query(&state), Head::Del)?;
        let use_threshold = match self.options.threshold_scope {
            ThresholdScope::AfterFirstInsertion => round == 2,
            ThresholdScope::EveryRound => true,
        };
        let mask = match self.options.deletion_threshold {
            Some(tau) if use_threshold => threshold_delete(&scores.del, tau),
            _ => argmax_delete(&scores.del),
        };
        Ok(content
            .iter()
            .zip(mask)
            .filter(|(_, d)| !d)
            .map(|(&t, _)| t)
            .collect())
    }

    fn pld_scores(&self, content: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        let state = with_sentinels(content);
        Ok(scored(self.policy, &self.query(&state), Head::Pld)?.pld)
    }

    fn gap_counts(
        &self,
        content: &[TokenId],
        round: usize,
        first_counts: Option<&[usize]>,
    ) -> Result<Vec<usize>> {
        if round == 1 {
            if let Some(counts) = first_counts {
                return Ok(counts.to_vec());
            }
            if let (Some(LengthOverride::External(n)), Init::Empty) =
                (self.options.length_override, &self.options.init)
            {
                // an empty initialization is still empty after deletion
                debug_assert!(content.is_empty());
                return Ok(vec![n.min(MAX_INSERT)]);
            }
        }
        let scores = self.pld_scores(content)?;
        if round == 2 {
            if let Some(seed) = self.options.length_sample_seed {
                let mut rng = sentence_rng(seed, LENGTH_SAMPLE_STREAM, self.id);
                return Ok(sample_gap_lengths(&scores, &mut rng)?.0);
            }
        }
        Ok(argmax_gap_lengths(&scores).0)
    }

    fn decode(&self, first_counts: Option<&[usize]>) -> Result<DecodeTrace> {
        let mut state = match &self.options.init {
            Init::Empty => Vec::new(),
            Init::Given(t) => t.clone(),
        };
        let mut stages = Vec::with_capacity(3 * self.options.max_rounds);
        let snap = |kind, round, content: &[TokenId]| Stage {
            kind,
            round,
            tokens: with_sentinels(content),
        };
        for round in 1..=self.options.max_rounds {
            let before = state.clone();

            state = self.delete(&state, round)?;
            stages.push(snap(StageKind::Del, round, &state));

            let counts = self.gap_counts(&state, round, first_counts)?;
            state = insert_placeholders(&state, &counts)?;
            stages.push(snap(StageKind::Pld, round, &state));

            state = fill_slots(self.policy, self.id, self.source, &state)?;
            stages.push(snap(StageKind::Tok, round, &state));

            if state == before {
                return Ok(DecodeTrace {
                    stages,
                    rounds: round,
                    termination: Termination::Fixpoint,
                    final_tokens: state,
                });
            }
        }
        Ok(DecodeTrace {
            stages,
            rounds: self.options.max_rounds,
            termination: Termination::MaxRounds,
            final_tokens: state,
        })
    }
}

/// Decodes one sentence. `id` identifies the sentence to the policy.
pub fn decode<P: Policy + ?Sized>(
    policy: &P,
    id: usize,
    source: &[TokenId],
    options: &DecodeOptions,
) -> Result<DecodeTrace> {
    options.validate()?;
    Run {
        policy,
        id,
        source,
        options,
    }
    .decode(None)
}

/// First-round insertion candidates, best first.
///
/// With a single gap these are the `k` highest-scoring counts. With several
/// gaps the first candidate is the per-gap argmax and the rest change one
/// gap to another count, ranked by the score given up (ties by gap, then
/// count).
pub fn topk_gap_configs(pld_scores: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let base = argmax_gap_lengths(pld_scores).0;
    if pld_scores.len() == 1 {
        let row = &pld_scores[0];
        let mut classes: Vec<usize> = (0..row.len()).collect();
        classes.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        return classes.into_iter().take(k).map(|c| vec![c]).collect();
    }
    let mut perturbations: Vec<(f64, usize, usize)> = Vec::new();
    for (g, row) in pld_scores.iter().enumerate() {
        for (c, &s) in row.iter().enumerate() {
            if c != base[g] {
                perturbations.push((row[base[g]] - s, g, c));
            }
        }
    }
    perturbations.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut configs = vec![base.clone()];
    for (_, g, c) in perturbations.into_iter().take(k.saturating_sub(1)) {
        let mut cfg = base.clone();
        cfg[g] = c;
        configs.push(cfg);
    }
    configs
}

/// Decodes once per first-round length candidate (see
/// [`topk_gap_configs`]); every candidate then refines on its own.
/// External length overrides are ignored here.
pub fn decode_topk_lengths<P: Policy + ?Sized>(
    policy: &P,
    id: usize,
    source: &[TokenId],
    k: usize,
    options: &DecodeOptions,
) -> Result<Vec<DecodeTrace>> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
    }
    options.validate()?;
    let run = Run {
        policy,
        id,
        source,
        options,
    };
    if options.max_rounds == 0 {
        return Ok(vec![run.decode(None)?]);
    }
    let init = match &options.init {
        Init::Empty => Vec::new(),
        Init::Given(t) => t.clone(),
    };
    let after_delete = run.delete(&init, 1)?;
    let configs = topk_gap_configs(&run.pld_scores(&after_delete)?, k);
    configs.iter().map(|cfg| run.decode(Some(cfg))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::OraclePolicy;
    use crate::rng::seeded;

    struct FixedPld {
        scores: Vec<f64>,
        vocab: usize,
    }

    // Always prefers `scores` at every gap, fills with id 4, keeps tokens.
    impl Policy for FixedPld {
        fn vocab_size(&self) -> usize {
            self.vocab
        }
        fn score(&self, q: &Query, head: Head) -> Result<PolicyScores> {
            let n = q.state.len() - 2;
            Ok(match head {
                Head::Del => PolicyScores::del(vec![[1.0, 0.0]; n]),
                Head::Pld => PolicyScores::pld(vec![self.scores.clone(); n + 1]),
                Head::Tok => {
                    let mut row = vec![0.0; self.vocab];
                    row[4] = 1.0;
                    PolicyScores::tok(vec![row; q.slots().len()])
                }
            })
        }
    }

    fn fixed(best: &[(usize, f64)]) -> FixedPld {
        let mut scores = vec![-10.0; 256];
        for &(c, s) in best {
            scores[c] = s;
        }
        FixedPld { scores, vocab: 8 }
    }

    fn oracle(reference: &[TokenId]) -> OraclePolicy {
        OraclePolicy::new(vec![reference.to_vec()], 16)
    }

    #[test]
    fn oracle_from_empty() {
        let r = [4, 5, 6, 5, 7];
        let t = decode(&oracle(&r), 0, &[9, 9], &DecodeOptions::default()).unwrap();
        assert_eq!(t.final_tokens, r);
        assert_eq!(t.termination, Termination::Fixpoint);
        assert_eq!(t.rounds, 2);
        assert_eq!(t.stage("tok_1").unwrap().content(), &r);
        let tags: Vec<String> = t.stages.iter().map(Stage::tag).collect();
        assert_eq!(tags, ["del_1", "pld_1", "tok_1", "del_2", "pld_2", "tok_2"]);
    }

    #[test]
    fn oracle_from_reference_is_a_fixpoint() {
        let r = vec![4, 5, 6];
        let opts = DecodeOptions {
            init: Init::Given(r.clone()),
            ..Default::default()
        };
        let t = decode(&oracle(&r), 0, &[], &opts).unwrap();
        assert_eq!(t.rounds, 1);
        assert_eq!(t.termination, Termination::Fixpoint);
        assert!(t.stages.iter().all(|s| s.content() == r.as_slice()));
    }

    #[test]
    fn oracle_repairs_a_corrupted_init() {
        let r = vec![4, 5, 6, 7];
        let opts = DecodeOptions {
            init: Init::Given(vec![7, 9, 5, 4]),
            ..Default::default()
        };
        let t = decode(&oracle(&r), 0, &[], &opts).unwrap();
        assert_eq!(t.final_tokens, r);
        assert_eq!(t.termination, Termination::Fixpoint);
    }

    #[test]
    fn zero_rounds() {
        let opts = DecodeOptions {
            max_rounds: 0,
            init: Init::Given(vec![4, 5]),
            ..Default::default()
        };
        let t = decode(&oracle(&[6]), 0, &[], &opts).unwrap();
        assert!(t.stages.is_empty());
        assert_eq!(t.final_tokens, vec![4, 5]);
        assert_eq!(t.termination, Termination::MaxRounds);
    }

    #[test]
    fn external_length_override() {
        for n in [0, 3, 17, 400] {
            let opts = DecodeOptions {
                length_override: Some(LengthOverride::External(n)),
                max_rounds: 1,
                ..Default::default()
            };
            let t = decode(&oracle(&[4, 5]), 0, &[], &opts).unwrap();
            let pld1 = t.stage("pld_1").unwrap().content();
            assert_eq!(pld1.len(), n.min(255));
            assert!(pld1.iter().all(|&x| x == PLD));
        }
    }

    #[test]
    fn trace_well_formed() {
        let t = decode(&fixed(&[(2, 1.0)]), 0, &[], &DecodeOptions::default()).unwrap();
        for s in &t.stages {
            assert_eq!(s.tokens[0], crate::corpus::BOS);
            assert_eq!(*s.tokens.last().unwrap(), crate::corpus::EOS);
            if s.kind == StageKind::Tok {
                assert!(!s.content().contains(&PLD));
            }
        }
        // keeps inserting two per gap forever
        assert_eq!(t.termination, Termination::MaxRounds);
        assert_eq!(t.rounds, 10);
    }

    #[test]
    fn topk_single_gap_follows_score_order() {
        let p = fixed(&[(5, 3.0), (7, 2.5), (2, 2.0), (9, 1.0), (1, 0.5)]);
        let opts = DecodeOptions {
            max_rounds: 1,
            ..Default::default()
        };
        let traces = decode_topk_lengths(&p, 0, &[], 5, &opts).unwrap();
        let lens: Vec<usize> = traces
            .iter()
            .map(|t| t.stage("pld_1").unwrap().content().len())
            .collect();
        assert_eq!(lens, vec![5, 7, 2, 9, 1]);
    }

    #[test]
    fn topk_one_equals_decode() {
        let r = [4, 6, 5];
        let opts = DecodeOptions::default();
        let one = decode_topk_lengths(&oracle(&r), 0, &[], 1, &opts).unwrap();
        assert_eq!(one, vec![decode(&oracle(&r), 0, &[], &opts).unwrap()]);
        assert!(decode_topk_lengths(&oracle(&r), 0, &[], 0, &opts).is_err());
    }

    #[test]
    fn topk_multi_gap_perturbs_cheapest_first() {
        let scores = vec![vec![0.0, -1.0, -5.0], vec![-0.5, 0.0, -3.0]];
        let cfgs = topk_gap_configs(&scores, 4);
        assert_eq!(cfgs, vec![vec![0, 1], vec![0, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn threshold_rules() {
        let scores = [[0.0, 0.0], [3.0, -3.0], [-50.0, 50.0], [1e300, -1e300]];
        assert_eq!(threshold_delete(&scores, 1.0), vec![false; 4]);
        assert_eq!(threshold_delete(&scores, 0.0), vec![true; 4]);
        assert_eq!(threshold_delete(&scores, 0.5), argmax_delete(&scores));
        assert!(!threshold_delete(&[[0.0, 0.0]], 0.5)[0]);
    }

    #[test]
    fn sampling_extremes_and_counts() {
        let mut row = vec![0.0; 256];
        row[9] = 1e9;
        let mut rng = seeded(3);
        for _ in 0..50 {
            assert_eq!(
                sample_gap_lengths(&[row.clone()], &mut rng).unwrap().0,
                vec![9]
            );
        }
        let uniform = vec![vec![0.0; 4]];
        let mut counts = [0usize; 4];
        let mut rng = seeded(77);
        for _ in 0..40_000 {
            counts[sample_gap_lengths(&uniform, &mut rng).unwrap().0[0]] += 1;
        }
        assert!(
            counts.iter().all(|&c| (9400..=10600).contains(&c)),
            "{counts:?}"
        );
        let a = sample_gap_lengths(&vec![vec![0.1, 0.2, 0.3]; 5], &mut seeded(5)).unwrap();
        let b = sample_gap_lengths(&vec![vec![0.1, 0.2, 0.3]; 5], &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert!(sample_gap_lengths(&[vec![f64::NAN]], &mut rng).is_err());
    }

    #[test]
    fn round_two_sampling_is_seeded() {
        let p = fixed(&[(1, 0.0), (2, 0.0), (3, 0.0)]);
        let opts = DecodeOptions {
            max_rounds: 2,
            length_sample_seed: Some(42),
            ..Default::default()
        };
        let a = decode(&p, 3, &[], &opts).unwrap();
        let b = decode(&p, 3, &[], &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_options() {
        let opts = DecodeOptions {
            deletion_threshold: Some(1.5),
            ..Default::default()
        };
        assert!(decode(&oracle(&[4]), 0, &[], &opts).is_err());
    }

    #[test]
    fn placeholder_insertion() {
        assert_eq!(
            insert_placeholders(&[4, 5], &[1, 0, 2]).unwrap(),
            vec![PLD, 4, 5, PLD, PLD]
        );
        assert!(insert_placeholders(&[4], &[0]).is_err());
    }
}
