use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "levt",
    version,
    about = "Edit-based refinement decoding experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a linear policy; writes model.bin, vocab.txt and loss.tsv.
    #[command(args_override_self = true)]
    Train(Args),
    /// Decode a corpus; writes traces, hypotheses and length/duplication/BLEU tables.
    #[command(args_override_self = true)]
    Decode(Args),
    /// Compare top-k first-round lengths and external length predictors.
    #[command(args_override_self = true)]
    ProbeLength(Args),
    /// Placeholder and token accuracy on references with deleted subwords or words.
    #[command(args_override_self = true)]
    ProbeSubword(Args),
    /// Decoding from corrupted initializations and a deletion threshold sweep.
    #[command(args_override_self = true)]
    ProbeDeletion(Args),
    /// Write corrupted initialization files for a target corpus.
    #[command(args_override_self = true)]
    Corrupt(Args),
    /// Score a hypothesis file against references.
    #[command(args_override_self = true)]
    Report(Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Oracle,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Empty,
    /// Start from the alternate target file (translation memory).
    Tm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LengthPred {
    Srclen,
    Ratio,
    Linreg,
    Tgtlen,
}

impl LengthPred {
    pub const ALL: [LengthPred; 4] = [
        LengthPred::Srclen,
        LengthPred::Ratio,
        LengthPred::Linreg,
        LengthPred::Tgtlen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LengthPred::Srclen => "srclen",
            LengthPred::Ratio => "ratio",
            LengthPred::Linreg => "linreg",
            LengthPred::Tgtlen => "tgtlen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    /// Only the deletion after the first token fill.
    FirstInsertion,
    EveryRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PldAccuracyArg {
    Elementwise,
    /// Count only exact hits on gaps with a nonzero gold count.
    NonzeroGold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchDenominatorArg {
    GoldFilled,
    AllGaps,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// Flat key=value file; keys are long flag names. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyKind::Linear)]
    pub policy: PolicyKind,
    /// Linear policy weights written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Vocabulary file; defaults to vocab.txt next to the model.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 32000)]
    pub vocab_cap: usize,

    /// Evaluation source file.
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Evaluation reference file.
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    /// Alternate targets of the evaluation corpus (translation memory).
    #[arg(long)]
    pub alt_tgt: Option<PathBuf>,
    /// Training source file.
    #[arg(long)]
    pub train_src: Option<PathBuf>,
    /// Training reference file.
    #[arg(long)]
    pub train_tgt: Option<PathBuf>,
    /// Alternate (e.g. distilled) training targets used as supervision.
    #[arg(long)]
    pub train_alt: Option<PathBuf>,
    /// Hypothesis file for `report`.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// Word-level stop-word list, one per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = InitKind::Empty)]
    pub init: InitKind,
    #[arg(long, default_value_t = 10)]
    pub max_rounds: usize,
    /// Number of first-round length candidates in probe-length.
    #[arg(long)]
    pub topk: Option<usize>,
    /// External first-round length for decode.
    #[arg(long, value_enum)]
    pub length_pred: Option<LengthPred>,
    /// Delete a token when its deletion probability exceeds this value.
    #[arg(long)]
    pub del_threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = ScopeArg::FirstInsertion)]
    pub threshold_scope: ScopeArg,

    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 18)]
    pub hash_bits: u32,

    #[arg(long, value_enum, default_value_t = PldAccuracyArg::Elementwise)]
    pub pld_accuracy: PldAccuracyArg,
    #[arg(long, value_enum, default_value_t = MatchDenominatorArg::GoldFilled)]
    pub match_denominator: MatchDenominatorArg,
    /// Comma-separated deletion ratios for the subword and fullword probes.
    #[arg(long)]
    pub word_ratios: Option<String>,
    /// Comma-separated deletion ratios for the random probe.
    #[arg(long)]
    pub random_ratios: Option<String>,
    /// Comma-separated deletion thresholds for probe-deletion.
    #[arg(long)]
    pub tau_grid: Option<String>,
}

pub fn parse_list(flag: &str, raw: &str) -> anyhow::Result<Vec<f64>> {
    raw.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("--{flag}: {x:?} is not a number"))
        })
        .collect()
}
