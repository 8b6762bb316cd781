//! Edit-based iterative refinement decoding.
//!
//! A decoder state is a sequence of token ids. Each refinement round runs
//! three heads in order: deletion (keep/delete per token), placeholder
//! insertion (0..=255 slots per gap) and token fill (one vocabulary token per
//! slot). Rounds repeat until the sentence stops changing.
//!
//! The crate is split by role:
//!
//! - [`corpus`]: vocabulary, BPE-aware sentences, stop words.
//! - [`edit_oracle`]: minimal insert/delete scripts, roll-in generators.
//! - [`policy`]: the scoring interface plus an oracle and a trainable
//!   feature-hashed linear policy.
//! - [`engine`]: the refinement decoder and its probe hooks.
//! - [`lengthpred`]: external first-round length predictors.
//! - [`diagnostics`]: BLEU, length/duplication/subword statistics, probe
//!   sets and corruption generators.

pub mod corpus;
pub mod diagnostics;
pub mod edit_oracle;
pub mod engine;
pub mod error;
pub mod lengthpred;
pub mod policy;
pub mod rng;

pub use corpus::{
    build_vocab, load_parallel_corpus, ParallelCorpus, RawCorpus, Sentence, StopList, TokenId,
    Vocab,
};
pub use edit_oracle::{apply_edit, levenshtein_distance, optimal_edit_labels, EditLabels};
pub use engine::{decode, decode_topk_lengths, DecodeOptions, DecodeTrace, Init};
pub use error::{Error, Result};
pub use policy::{Head, LinearPolicy, OraclePolicy, Policy, PolicyScores, Query};

/// Largest number of placeholders the insertion head may emit at one gap.
pub const MAX_INSERT: usize = 255;
