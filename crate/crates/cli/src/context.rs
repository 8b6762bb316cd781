use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use levt_core::corpus::{Lexicon, RawCorpus};
use levt_core::engine::{LengthOverride, ThresholdScope};
use levt_core::lengthpred::{fit_linreg, fit_ratio, predict_length, LengthModel};
use levt_core::policy::Head;
use levt_core::{
    build_vocab, load_parallel_corpus, DecodeOptions, Init, LinearPolicy, OraclePolicy,
    ParallelCorpus, Policy, PolicyScores, Query, StopList, Vocab,
};

use crate::args::{Args, InitKind, LengthPred, PolicyKind, ScopeArg};

pub enum AnyPolicy {
    Oracle(OraclePolicy),
    Linear(Box<LinearPolicy>),
}

impl Policy for AnyPolicy {
    fn vocab_size(&self) -> usize {
        match self {
            AnyPolicy::Oracle(p) => p.vocab_size(),
            AnyPolicy::Linear(p) => p.vocab_size(),
        }
    }

    fn score(&self, query: &Query, head: Head) -> levt_core::Result<PolicyScores> {
        match self {
            AnyPolicy::Oracle(p) => p.score(query, head),
            AnyPolicy::Linear(p) => p.score(query, head),
        }
    }
}

pub struct Context {
    pub args: Args,
    pub vocab: Vocab,
    pub raw_eval: Option<RawCorpus>,
    pub eval: Option<ParallelCorpus>,
    pub train: Option<ParallelCorpus>,
    pub stoplist: StopList,
}

fn load_pair(
    src: &Option<PathBuf>,
    tgt: &Option<PathBuf>,
    alt: &Option<PathBuf>,
    what: &str,
) -> Result<Option<RawCorpus>> {
    match (src, tgt) {
        (Some(s), Some(t)) => Ok(Some(load_parallel_corpus(s, t, alt.as_deref())?)),
        (None, None) if alt.is_none() => Ok(None),
        _ => bail!("{what} corpus needs both source and target files"),
    }
}

fn concat(parts: &[&RawCorpus]) -> RawCorpus {
    let mut out = RawCorpus::default();
    for p in parts {
        out.source.extend(p.source.iter().cloned());
        out.target.extend(p.target.iter().cloned());
        if let Some(alt) = &p.alt_target {
            out.alt_target
                .get_or_insert_with(Vec::new)
                .extend(alt.iter().cloned());
        }
    }
    out
}

impl Context {
    pub fn load(args: &Args) -> Result<Self> {
        let raw_eval = load_pair(&args.src, &args.tgt, &args.alt_tgt, "evaluation")?;
        let raw_train = load_pair(
            &args.train_src,
            &args.train_tgt,
            &args.train_alt,
            "training",
        )?;
        let vocab_path = args.vocab.clone().or_else(|| {
            let p = args.model.as_ref()?.with_file_name("vocab.txt");
            p.exists().then_some(p)
        });
        let vocab = match vocab_path {
            Some(p) => Vocab::load(&p)?,
            None => {
                let parts: Vec<&RawCorpus> = raw_train.iter().chain(raw_eval.iter()).collect();
                if parts.is_empty() {
                    bail!("no vocabulary: pass --vocab or corpus files");
                }
                build_vocab(&concat(&parts), args.vocab_cap)?
            }
        };
        let stoplist = match &args.stopwords {
            Some(p) => StopList::load(p)?,
            None => StopList::default(),
        };
        Ok(Context {
            eval: raw_eval.as_ref().map(|r| r.encode(&vocab)),
            train: raw_train.as_ref().map(|r| r.encode(&vocab)),
            raw_eval,
            vocab,
            stoplist,
            args: args.clone(),
        })
    }

    pub fn eval(&self) -> Result<&ParallelCorpus> {
        let c = self
            .eval
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs --src and --tgt"))?;
        if c.is_empty() {
            bail!("evaluation corpus is empty");
        }
        Ok(c)
    }

    pub fn policy(&self) -> Result<AnyPolicy> {
        match self.args.policy {
            PolicyKind::Oracle => {
                let refs = self
                    .eval()?
                    .target
                    .iter()
                    .map(|s| s.ids().to_vec())
                    .collect();
                Ok(AnyPolicy::Oracle(OraclePolicy::new(refs, self.vocab.len())))
            }
            PolicyKind::Linear => {
                let path = self
                    .args
                    .model
                    .as_ref()
                    .ok_or_else(|| anyhow!("--policy linear needs --model"))?;
                let model = LinearPolicy::load(path)?;
                if model.vocab_size() != self.vocab.len() {
                    bail!(
                        "model expects {} vocabulary entries, vocabulary has {}",
                        model.vocab_size(),
                        self.vocab.len()
                    );
                }
                Ok(AnyPolicy::Linear(Box::new(model)))
            }
        }
    }

    /// Options shared by every decode of a command, before per-sentence
    /// initialization and length overrides.
    pub fn base_options(&self) -> DecodeOptions {
        DecodeOptions {
            max_rounds: self.args.max_rounds,
            deletion_threshold: self.args.del_threshold,
            threshold_scope: match self.args.threshold_scope {
                ScopeArg::FirstInsertion => ThresholdScope::AfterFirstInsertion,
                ScopeArg::EveryRound => ThresholdScope::EveryRound,
            },
            ..Default::default()
        }
    }

    pub fn init_for(&self, i: usize) -> Result<Init> {
        match self.args.init {
            InitKind::Empty => Ok(Init::Empty),
            InitKind::Tm => {
                let alt = self.eval()?.alt_target.as_ref().ok_or_else(|| {
                    anyhow!("--init tm needs --alt-tgt with the translation-memory targets")
                })?;
                Ok(Init::Given(alt[i].ids().to_vec()))
            }
        }
    }

    /// Corpus the length models are fitted on: training data when given.
    pub fn fit_corpus(&self) -> Result<&ParallelCorpus> {
        match &self.train {
            Some(t) => Ok(t),
            None => self.eval(),
        }
    }

    pub fn length_model(&self, pred: LengthPred) -> Result<LengthModel> {
        Ok(match pred {
            LengthPred::Srclen => LengthModel::SrcLen,
            LengthPred::Ratio => LengthModel::Ratio(fit_ratio(self.fit_corpus()?)?),
            LengthPred::Linreg => LengthModel::LinReg(fit_linreg(self.fit_corpus()?)?),
            LengthPred::Tgtlen => LengthModel::Oracle,
        })
    }

    pub fn external_length(&self, model: &LengthModel, i: usize) -> Result<LengthOverride> {
        let eval = self.eval()?;
        let n = predict_length(model, eval.source[i].len(), Some(eval.target[i].len()))?;
        Ok(LengthOverride::External(n))
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        let refs = match &self.train {
            Some(t) => &t.target,
            None => &self.eval()?.target,
        };
        Ok(Lexicon::from_sentences(refs, &self.vocab))
    }

    pub fn out_path(&self, name: &str) -> Result<PathBuf> {
        let dir = &self.args.out_dir;
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir.join(name))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        write_file(&self.out_path(name)?, contents)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}
