use anyhow::{anyhow, bail, Result};
use levt_core::corpus::{read_lines, split_tokens, strip_stopwords, Lexicon, Sentence, TokenId};
use levt_core::diagnostics::tsv::{float, Table};
use levt_core::diagnostics::{
    bleu, corrupt_no_accuracy, corrupt_no_fluency, count_duplicates, count_duplicates_stripped,
    count_invalid_words, iteration_duplicate_stats, iteration_length_stats, subword_stats,
    BleuLevel, BleuReport, TagMean, DEFAULT_DUPLICATION_TAGS, DEFAULT_LENGTH_TAGS,
};
use levt_core::engine::Termination;
use levt_core::lengthpred::{fit_linreg, fit_ratio};
use levt_core::policy::{train, LinearConfig};
use levt_core::rng::{seeded, sentence_rng, split_seed};
use levt_core::{
    build_vocab, decode, load_parallel_corpus, DecodeTrace, LinearPolicy, ParallelCorpus,
    RawCorpus, Vocab,
};
use serde_json::json;

use crate::args::{Args, PolicyKind};
use crate::context::{write_file, Context};

pub const NO_ACCURACY_STREAM: u64 = 0x6e6f_6163;
pub const NO_FLUENCY_STREAM: u64 = 0x6e6f_666c;

pub fn train_cmd(args: &Args) -> Result<()> {
    if args.policy == PolicyKind::Oracle {
        bail!("the oracle policy has nothing to train; use --policy linear");
    }
    // a lone --src/--tgt pair also works as training data
    let mut args = args.clone();
    if args.train_src.is_none() && args.train_tgt.is_none() {
        args.train_src = args.src.take();
        args.train_tgt = args.tgt.take();
        args.train_alt = args.train_alt.or(args.alt_tgt.take());
    }
    args.model = None;
    let ctx = Context::load(&args)?;
    let corpus = ctx
        .train
        .as_ref()
        .ok_or_else(|| anyhow!("train needs --train-src and --train-tgt"))?;
    let mut model = LinearPolicy::new(
        ctx.vocab.len(),
        LinearConfig {
            hash_bits: args.hash_bits,
            learning_rate: args.lr,
        },
    );
    let curve = train(&mut model, corpus, args.seed, args.epochs)?;
    let mut t = Table::new(["epoch", "del", "pld", "tok", "total"]);
    for e in &curve {
        t.push([
            e.epoch.to_string(),
            float(e.del),
            float(e.pld),
            float(e.tok),
            float(e.total),
        ]);
    }
    model.save(&ctx.out_path("model.bin")?)?;
    ctx.vocab.save(&ctx.out_path("vocab.txt")?)?;
    ctx.write("loss.tsv", &t.render())
}

pub fn bleu_header() -> Vec<&'static str> {
    vec!["score", "p1", "p2", "p3", "p4", "bp", "hyp_len", "ref_len"]
}

pub fn bleu_cells(r: &BleuReport) -> Vec<String> {
    let mut v = vec![float(r.score)];
    v.extend(r.precisions.iter().map(|&p| float(p)));
    v.push(float(r.brevity_penalty));
    v.push(r.hyp_len.to_string());
    v.push(r.ref_len.to_string());
    v
}

pub fn trace_json(id: usize, trace: &DecodeTrace, vocab: &Vocab) -> String {
    let surfaces = |ids: &[TokenId]| -> Vec<String> {
        ids.iter()
            .map(|&t| vocab.surface_of(t).unwrap_or("<unk>").to_string())
            .collect()
    };
    let stages: Vec<_> = trace
        .stages
        .iter()
        .map(|s| json!({"tag": s.tag(), "tokens": surfaces(&s.tokens)}))
        .collect();
    json!({
        "id": id,
        "stages": stages,
        "rounds": trace.rounds,
        "termination": trace.termination.name(),
        "final": surfaces(&trace.final_tokens),
    })
    .to_string()
}

pub fn hyps_of(traces: &[DecodeTrace], vocab: &Vocab) -> Vec<Sentence> {
    traces
        .iter()
        .map(|t| vocab.sentence(t.final_tokens.clone()))
        .collect()
}

pub fn mean<I: IntoIterator<Item = f64>>(xs: I) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn tag_table(first: &str, refs: TagMean, rows: Vec<TagMean>) -> Table {
    let mut t = Table::new(["stage", "sentences", first, &format!("{first}_nostop")]);
    for r in std::iter::once(refs).chain(rows) {
        t.push([
            r.tag,
            r.sentences.to_string(),
            float(r.raw),
            float(r.stripped),
        ]);
    }
    t
}

fn ref_mean(
    refs: &[Sentence],
    raw: impl Fn(&Sentence) -> usize,
    stripped: impl Fn(&Sentence) -> usize,
) -> TagMean {
    let n = refs.len() as f64;
    TagMean {
        tag: "ref".into(),
        sentences: refs.len(),
        raw: refs.iter().map(&raw).sum::<usize>() as f64 / n,
        stripped: refs.iter().map(&stripped).sum::<usize>() as f64 / n,
    }
}

pub fn decode_cmd(args: &Args) -> Result<()> {
    let ctx = Context::load(args)?;
    let eval = ctx.eval()?;
    let policy = ctx.policy()?;
    let length_model = args.length_pred.map(|p| ctx.length_model(p)).transpose()?;
    let mut traces = Vec::with_capacity(eval.len());
    let mut jsonl = String::new();
    for i in 0..eval.len() {
        let mut opts = ctx.base_options();
        opts.init = ctx.init_for(i)?;
        if let Some(m) = &length_model {
            opts.length_override = Some(ctx.external_length(m, i)?);
        }
        let t = decode(&policy, i, eval.source[i].ids(), &opts)?;
        jsonl.push_str(&trace_json(i, &t, &ctx.vocab));
        jsonl.push('\n');
        traces.push(t);
    }
    let hyps = hyps_of(&traces, &ctx.vocab);
    let refs = &eval.target;

    let mut b = Table::new(std::iter::once("level").chain(bleu_header()));
    for (name, level) in [("bpe", BleuLevel::Bpe), ("word", BleuLevel::Word)] {
        let r = bleu(&hyps, refs, level, &ctx.vocab)?;
        b.push(std::iter::once(name.to_string()).chain(bleu_cells(&r)));
    }

    let stop = &ctx.stoplist;
    let len_ref = ref_mean(refs, Sentence::len, |r| {
        strip_stopwords(r, &ctx.vocab, stop).len()
    });
    let lengths = iteration_length_stats(&traces, &DEFAULT_LENGTH_TAGS, &ctx.vocab, stop)?;
    let dup_ref = ref_mean(
        refs,
        |r| count_duplicates(r.ids()),
        |r| count_duplicates_stripped(r, &ctx.vocab, stop),
    );
    let dups = iteration_duplicate_stats(&traces, &DEFAULT_DUPLICATION_TAGS, &ctx.vocab, stop)?;

    let inv = count_invalid_words(&hyps, &ctx.vocab, &ctx.lexicon()?);
    let mut iw = Table::new([
        "invalid_words",
        "total_words",
        "sentences_with_invalid",
        "sentences",
        "sentence_ratio",
    ]);
    iw.push([
        inv.words.to_string(),
        inv.total_words.to_string(),
        inv.sentences.to_string(),
        hyps.len().to_string(),
        float(inv.sentences as f64 / hyps.len() as f64),
    ]);

    let fix = traces
        .iter()
        .filter(|t| t.termination == Termination::Fixpoint)
        .count();
    let mut sm = Table::new(["sentences", "mean_rounds", "fixpoint", "max_rounds"]);
    sm.push([
        traces.len().to_string(),
        float(mean(traces.iter().map(|t| t.rounds as f64)).unwrap_or(0.0)),
        fix.to_string(),
        (traces.len() - fix).to_string(),
    ]);

    let mut hyp_text = String::new();
    for h in &hyps {
        hyp_text.push_str(&ctx.vocab.decode(h.ids()));
        hyp_text.push('\n');
    }
    ctx.write("traces.jsonl", &jsonl)?;
    ctx.write("hyps.txt", &hyp_text)?;
    ctx.write("bleu.tsv", &b.render())?;
    ctx.write("lengths.tsv", &tag_table("len", len_ref, lengths).render())?;
    ctx.write("duplicates.tsv", &tag_table("dup", dup_ref, dups).render())?;
    ctx.write("invalid_words.tsv", &iw.render())?;
    ctx.write("summary.tsv", &sm.render())
}

/// Builds a vocabulary holding every token of `raw`, so nothing maps to
/// `<unk>` when lines are re-emitted.
fn full_vocab(raw: &RawCorpus) -> Result<Vocab> {
    Ok(build_vocab(raw, usize::MAX)?)
}

pub fn corrupt_cmd(args: &Args) -> Result<()> {
    let mut args = args.clone();
    args.vocab = None;
    args.model = None;
    let ctx = Context::load(&args)?;
    let raw = ctx
        .raw_eval
        .as_ref()
        .ok_or_else(|| anyhow!("corrupt needs --src and --tgt"))?;
    let vocab = full_vocab(raw)?;
    let refs = raw.encode(&vocab).target;
    if refs.len() < 2 {
        bail!("corrupt needs at least 2 sentence pairs");
    }
    let mut rng = seeded(split_seed(args.seed, NO_ACCURACY_STREAM, 0));
    let mut acc = String::new();
    for s in corrupt_no_accuracy(&refs, &mut rng)? {
        acc.push_str(&vocab.decode(s.ids()));
        acc.push('\n');
    }
    let mut flu = String::new();
    for (i, r) in refs.iter().enumerate() {
        let mut rng = sentence_rng(args.seed, NO_FLUENCY_STREAM, i);
        flu.push_str(&vocab.decode(corrupt_no_fluency(r, &mut rng).ids()));
        flu.push('\n');
    }
    ctx.write("no_accuracy.txt", &acc)?;
    ctx.write("no_fluency.txt", &flu)
}

pub fn report_cmd(args: &Args) -> Result<()> {
    let hyp_path = args
        .hyp
        .as_ref()
        .ok_or_else(|| anyhow!("report needs --hyp"))?;
    let tgt_path = args
        .tgt
        .as_ref()
        .ok_or_else(|| anyhow!("report needs --tgt"))?;
    let hyp_lines = read_lines(hyp_path)?;
    let tgt_lines = read_lines(tgt_path)?;
    if hyp_lines.len() != tgt_lines.len() {
        bail!(
            "{} has {} lines but {} has {}",
            hyp_path.display(),
            hyp_lines.len(),
            tgt_path.display(),
            tgt_lines.len()
        );
    }
    let train_raw = match (&args.train_src, &args.train_tgt) {
        (Some(s), Some(t)) => Some(load_parallel_corpus(s, t, None)?),
        (None, None) => None,
        _ => bail!("--train-src and --train-tgt go together"),
    };

    // hypotheses, references and training targets share one uncapped vocabulary
    let mut vocab = Vocab::new();
    let train_lines = train_raw.iter().flat_map(|r| r.target.iter());
    for l in hyp_lines.iter().chain(&tgt_lines) {
        for t in split_tokens(l) {
            vocab.insert(t);
        }
    }
    for l in train_lines {
        for t in l {
            vocab.insert(t);
        }
    }
    let train = train_raw.map(|r| r.encode(&vocab));
    let hyps: Vec<Sentence> = hyp_lines.iter().map(|l| vocab.encode(l)).collect();
    let refs: Vec<Sentence> = tgt_lines.iter().map(|l| vocab.encode(l)).collect();
    let stop = match &args.stopwords {
        Some(p) => levt_core::StopList::load(p)?,
        None => levt_core::StopList::default(),
    };

    let mut b = Table::new(std::iter::once("level").chain(bleu_header()));
    for (name, level) in [("bpe", BleuLevel::Bpe), ("word", BleuLevel::Word)] {
        let r = bleu(&hyps, &refs, level, &vocab)?;
        b.push(std::iter::once(name.to_string()).chain(bleu_cells(&r)));
    }

    let lexicon = match &train {
        Some(t) => Lexicon::from_sentences(&t.target, &vocab),
        None => Lexicon::from_sentences(&refs, &vocab),
    };
    let inv = count_invalid_words(&hyps, &vocab, &lexicon);
    let sub = subword_stats(&hyps)?;
    let n = hyps.len() as f64;
    let dup: usize = hyps.iter().map(|h| count_duplicates(h.ids())).sum();
    let dup_ns: usize = hyps
        .iter()
        .map(|h| count_duplicates_stripped(h, &vocab, &stop))
        .sum();
    let mut m = Table::new(["metric", "value"]);
    for (k, v) in [
        ("sentences", hyps.len().to_string()),
        ("mean_tokens", float(sub.mean_tokens)),
        ("mean_subwords", float(sub.mean_subwords)),
        ("subword_ratio", float(sub.ratio)),
        ("duplicates_mean", float(dup as f64 / n)),
        ("duplicates_nostop_mean", float(dup_ns as f64 / n)),
        ("invalid_words", inv.words.to_string()),
        ("total_words", inv.total_words.to_string()),
        ("sentences_with_invalid", inv.sentences.to_string()),
        ("invalid_sentence_ratio", float(inv.sentences as f64 / n)),
    ] {
        m.push([k.to_string(), v]);
    }

    let out = |name: &str| args.out_dir.join(name);
    write_file(&out("bleu.tsv"), &b.render())?;
    write_file(&out("report.tsv"), &m.render())?;
    if let Some(t) = &train {
        write_file(&out("length_models.tsv"), &length_models_table(t)?.render())?;
    }
    Ok(())
}

pub fn length_models_table(corpus: &ParallelCorpus) -> Result<Table> {
    let mut t = Table::new(["predictor", "ratio", "coef", "intercept", "r2"]);
    let na = || levt_core::diagnostics::tsv::UNDEFINED.to_string();
    let r = fit_ratio(corpus)?;
    t.push(["ratio".into(), float(r.ratio), na(), na(), na()]);
    match fit_linreg(corpus) {
        Ok(l) => t.push([
            "linreg".into(),
            na(),
            float(l.coef),
            float(l.intercept),
            float(l.r_squared),
        ]),
        Err(levt_core::Error::DegenerateDesign(_)) => {
            t.push(["linreg".to_string(), na(), na(), na(), na()])
        }
        Err(e) => return Err(e.into()),
    }
    Ok(t)
}
