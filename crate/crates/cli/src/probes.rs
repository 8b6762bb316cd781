use anyhow::{anyhow, bail, Result};
use levt_core::diagnostics::tsv::{float, opt_float, Table, UNDEFINED};
use levt_core::diagnostics::{
    bleu, classified_fills, corrupt_no_accuracy, corrupt_no_fluency, fill_precision_recall,
    make_probe_set, match_gaps, pld_accuracy, slot_fills, tokens_at, BleuLevel, BleuReport,
    FillCounts, MatchDenominator, PldAccuracyMode, ProbeKind, TokenClass, PROBE_RATIOS_RANDOM,
    PROBE_RATIOS_WORD,
};
use levt_core::engine::{fill_slots, insert_placeholders, predict_gaps};
use levt_core::lengthpred::LengthModel;
use levt_core::rng::{seeded, sentence_rng, split_seed};
use levt_core::{decode, decode_topk_lengths, DecodeOptions, DecodeTrace, Init, Sentence};

use crate::args::{parse_list, Args, LengthPred, MatchDenominatorArg, PldAccuracyArg};
use crate::commands::{hyps_of, length_models_table, mean, NO_ACCURACY_STREAM, NO_FLUENCY_STREAM};
use crate::context::{AnyPolicy, Context};

const DEFAULT_TOPK: usize = 5;

fn mean_len(traces: &[&DecodeTrace], tag: &str) -> String {
    opt_float(mean(
        traces
            .iter()
            .filter_map(|t| tokens_at(t, tag))
            .map(|x| x.len() as f64),
    ))
}

fn word_bleu(ctx: &Context, hyps: &[Sentence]) -> Result<BleuReport> {
    Ok(bleu(
        hyps,
        &ctx.eval()?.target,
        BleuLevel::Word,
        &ctx.vocab,
    )?)
}

fn stage_hyps(ctx: &Context, traces: &[&DecodeTrace], tag: &str) -> Vec<Sentence> {
    traces
        .iter()
        .map(|t| {
            ctx.vocab
                .sentence(tokens_at(t, tag).unwrap_or(&[]).to_vec())
        })
        .collect()
}

/// Length, round and BLEU columns shared by the length and deletion probes.
fn trace_cells(ctx: &Context, traces: &[&DecodeTrace]) -> Result<Vec<String>> {
    let finals: Vec<DecodeTrace> = traces.iter().map(|&t| t.clone()).collect();
    let fin = word_bleu(ctx, &hyps_of(&finals, &ctx.vocab))?;
    let tok1 = word_bleu(ctx, &stage_hyps(ctx, traces, "tok_1"))?;
    Ok(vec![
        float(mean(traces.iter().map(|t| t.rounds as f64)).unwrap_or(0.0)),
        mean_len(traces, "del_1"),
        mean_len(traces, "pld_1"),
        mean_len(traces, "del_2"),
        mean_len(traces, "pld_2"),
        mean_len(traces, "final"),
        float(tok1.score),
        float(fin.score),
        float(fin.brevity_penalty),
    ])
}

const TRACE_COLUMNS: [&str; 9] = [
    "rounds",
    "del1_len",
    "pld1_len",
    "del2_len",
    "pld2_len",
    "final_len",
    "tok1_bleu",
    "final_bleu",
    "final_bp",
];

pub fn probe_length_cmd(args: &Args) -> Result<()> {
    let ctx = Context::load(args)?;
    let eval = ctx.eval()?;
    let policy = ctx.policy()?;
    let k = args.topk.unwrap_or(DEFAULT_TOPK);
    if k == 0 {
        bail!("--topk must be at least 1");
    }
    let mut table = Table::new(["mode", "name", "iter2"].into_iter().chain(TRACE_COLUMNS));

    for (iter2, sample) in [("argmax", false), ("sample", true)] {
        let mut per_rank: Vec<Vec<DecodeTrace>> = vec![Vec::new(); k];
        for i in 0..eval.len() {
            let mut opts = ctx.base_options();
            opts.init = ctx.init_for(i)?;
            if sample {
                opts.length_sample_seed = Some(args.seed);
            }
            for (r, t) in decode_topk_lengths(&policy, i, eval.source[i].ids(), k, &opts)?
                .into_iter()
                .enumerate()
            {
                per_rank[r].push(t);
            }
        }
        for (r, traces) in per_rank.iter().enumerate() {
            if traces.len() != eval.len() {
                continue;
            }
            let refs: Vec<&DecodeTrace> = traces.iter().collect();
            let mut row = vec!["rank".to_string(), (r + 1).to_string(), iter2.to_string()];
            row.extend(trace_cells(&ctx, &refs)?);
            table.push(row);
        }
    }

    for pred in LengthPred::ALL {
        let model = ctx.length_model(pred);
        let model = match model {
            Ok(m) => m,
            Err(e) => {
                let mut row = vec![
                    "predictor".to_string(),
                    pred.name().to_string(),
                    "argmax".into(),
                ];
                row.extend(TRACE_COLUMNS.iter().map(|_| UNDEFINED.to_string()));
                table.push(row);
                eprintln!("warning: {} predictor skipped: {e:#}", pred.name());
                continue;
            }
        };
        let traces = decode_with_length(&ctx, &policy, &model)?;
        let refs: Vec<&DecodeTrace> = traces.iter().collect();
        let mut row = vec![
            "predictor".to_string(),
            pred.name().to_string(),
            "argmax".into(),
        ];
        row.extend(trace_cells(&ctx, &refs)?);
        table.push(row);
    }

    ctx.write("length_probe.tsv", &table.render())?;
    ctx.write(
        "length_models.tsv",
        &length_models_table(ctx.fit_corpus()?)?.render(),
    )
}

fn decode_with_length(
    ctx: &Context,
    policy: &AnyPolicy,
    model: &LengthModel,
) -> Result<Vec<DecodeTrace>> {
    let eval = ctx.eval()?;
    (0..eval.len())
        .map(|i| {
            let mut opts = ctx.base_options();
            opts.init = ctx.init_for(i)?;
            opts.length_override = Some(ctx.external_length(model, i)?);
            Ok(decode(policy, i, eval.source[i].ids(), &opts)?)
        })
        .collect()
}

fn ratios(flag: &str, raw: &Option<String>, default: &[f64]) -> Result<Vec<f64>> {
    match raw {
        Some(r) => parse_list(flag, r),
        None => Ok(default.to_vec()),
    }
}

fn class_of(kind: ProbeKind) -> TokenClass {
    match kind {
        ProbeKind::Subword => TokenClass::Subword,
        ProbeKind::Fullword => TokenClass::Fullword,
        ProbeKind::Random => TokenClass::All,
    }
}

pub fn probe_subword_cmd(args: &Args) -> Result<()> {
    let ctx = Context::load(args)?;
    let eval = ctx.eval()?;
    let policy = ctx.policy()?;
    let acc_mode = match args.pld_accuracy {
        PldAccuracyArg::Elementwise => PldAccuracyMode::Elementwise,
        PldAccuracyArg::NonzeroGold => PldAccuracyMode::NonzeroGold,
    };
    let denom = match args.match_denominator {
        MatchDenominatorArg::GoldFilled => MatchDenominator::GoldFilled,
        MatchDenominatorArg::AllGaps => MatchDenominator::AllGaps,
    };
    let word = ratios("word-ratios", &args.word_ratios, &PROBE_RATIOS_WORD)?;
    let random = ratios("random-ratios", &args.random_ratios, &PROBE_RATIOS_RANDOM)?;
    let grid = [
        (ProbeKind::Subword, &word),
        (ProbeKind::Fullword, &word),
        (ProbeKind::Random, &random),
    ];

    let mut table = Table::new([
        "kind",
        "ratio",
        "sentences",
        "skipped",
        "pld_acc",
        "matched",
        "tok1_prec",
        "tok1_rec",
        "tok1_bleu",
        "final_prec",
        "final_rec",
        "final_bleu",
        "unaligned",
    ]);
    for (kind, ratios) in grid {
        for &ratio in ratios.iter() {
            let set = make_probe_set(&eval.target, kind, ratio, args.seed)?;
            let mut buf = Vec::new();
            set.write_jsonl(&mut buf)?;
            ctx.write(
                &format!("probes/{}_{:.2}.jsonl", kind.name(), ratio),
                &String::from_utf8(buf)?,
            )?;

            let class = class_of(kind);
            let (mut accs, mut matches) = (Vec::new(), Vec::new());
            let (mut first, mut last) = (FillCounts::default(), FillCounts::default());
            let (mut tok1_h, mut final_h, mut refs) = (Vec::new(), Vec::new(), Vec::new());
            let mut unaligned = 0usize;
            for p in &set.probes {
                if set.skipped.contains(&p.index) {
                    continue;
                }
                let i = p.index;
                let source = eval.source[i].ids();
                let reference = &eval.target[i];
                let gold = p.gold_classified(reference);

                let counts = predict_gaps(&policy, i, source, p.init.ids())?.0;
                accs.push(pld_accuracy(&counts, &p.gold_counts, acc_mode)?);
                let with_slots = insert_placeholders(p.init.ids(), &counts)?;
                let filled = ctx
                    .vocab
                    .sentence(fill_slots(&policy, i, source, &with_slots)?);
                let pred = slot_fills(&with_slots, &filled)?;
                let pred_ids: Vec<Vec<_>> = pred
                    .iter()
                    .map(|g| g.iter().map(|f| f.id).collect())
                    .collect();
                if let Some(m) = match_gaps(&pred_ids, &p.gold_fills, denom)?.mean() {
                    matches.push(m);
                }
                first.add(fill_precision_recall(&pred, &gold, class)?);

                let opts = DecodeOptions {
                    init: Init::Given(p.init.ids().to_vec()),
                    ..ctx.base_options()
                };
                let fin = ctx
                    .vocab
                    .sentence(decode(&policy, i, source, &opts)?.final_tokens);
                // both sides aligned to the init the same way
                let final_gold = classified_fills(p.init.ids(), reference).ok_or_else(|| {
                    anyhow!("probe {i}: init is not a subsequence of the reference")
                })?;
                match classified_fills(p.init.ids(), &fin) {
                    Some(f) => last.add(fill_precision_recall(&f, &final_gold, class)?),
                    None => unaligned += 1,
                }
                tok1_h.push(filled);
                final_h.push(fin);
                refs.push(reference.clone());
            }
            let bleu_of = |h: &[Sentence]| -> Result<String> {
                if h.is_empty() {
                    return Ok(UNDEFINED.to_string());
                }
                Ok(float(bleu(h, &refs, BleuLevel::Word, &ctx.vocab)?.score))
            };
            table.push([
                kind.name().to_string(),
                format!("{ratio:.2}"),
                refs.len().to_string(),
                set.skipped.len().to_string(),
                opt_float(mean(accs)),
                opt_float(mean(matches)),
                opt_float(first.precision()),
                opt_float(first.recall()),
                bleu_of(&tok1_h)?,
                opt_float(last.precision()),
                opt_float(last.recall()),
                bleu_of(&final_h)?,
                unaligned.to_string(),
            ]);
        }
    }
    ctx.write("subword_probe.tsv", &table.render())
}

/// `0.05, 0.10, ..., 0.95`.
fn default_tau_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

pub fn probe_deletion_cmd(args: &Args) -> Result<()> {
    let ctx = Context::load(args)?;
    let eval = ctx.eval()?;
    let policy = ctx.policy()?;
    let refs = &eval.target;

    let mut rng = seeded(split_seed(args.seed, NO_ACCURACY_STREAM, 0));
    let no_accuracy = if refs.len() >= 2 {
        Some(corrupt_no_accuracy(refs, &mut rng)?)
    } else {
        None
    };
    let no_fluency: Vec<Sentence> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| corrupt_no_fluency(r, &mut sentence_rng(args.seed, NO_FLUENCY_STREAM, i)))
        .collect();

    let mut inits = Table::new(["regime", "init_len"].into_iter().chain(TRACE_COLUMNS));
    let regimes: [(&str, Option<&[Sentence]>); 4] = [
        ("empty", None),
        ("reference", Some(refs)),
        ("no_accuracy", no_accuracy.as_deref()),
        ("no_fluency", Some(&no_fluency)),
    ];
    for (name, init) in regimes {
        if name == "no_accuracy" && init.is_none() {
            continue;
        }
        let traces: Vec<DecodeTrace> = (0..eval.len())
            .map(|i| {
                let opts = DecodeOptions {
                    init: match init {
                        Some(s) => Init::Given(s[i].ids().to_vec()),
                        None => Init::Empty,
                    },
                    ..ctx.base_options()
                };
                Ok(decode(&policy, i, eval.source[i].ids(), &opts)?)
            })
            .collect::<Result<_>>()?;
        let init_len = mean(init.unwrap_or(&[]).iter().map(|s| s.len() as f64)).unwrap_or(0.0);
        let refs_t: Vec<&DecodeTrace> = traces.iter().collect();
        let mut row = vec![name.to_string(), float(init_len)];
        row.extend(trace_cells(&ctx, &refs_t)?);
        inits.push(row);
    }

    let grid = match &args.tau_grid {
        Some(g) => parse_list("tau-grid", g)?,
        None => default_tau_grid(),
    };
    let mut sweep = Table::new(["tau"].into_iter().chain(TRACE_COLUMNS));
    for tau in grid {
        if !(0.0..=1.0).contains(&tau) {
            bail!("--tau-grid: {tau} outside [0, 1]");
        }
        let traces: Vec<DecodeTrace> = (0..eval.len())
            .map(|i| {
                let opts = DecodeOptions {
                    init: ctx.init_for(i)?,
                    deletion_threshold: Some(tau),
                    ..ctx.base_options()
                };
                Ok(decode(&policy, i, eval.source[i].ids(), &opts)?)
            })
            .collect::<Result<_>>()?;
        let refs_t: Vec<&DecodeTrace> = traces.iter().collect();
        let mut row = vec![format!("{tau:.2}")];
        row.extend(trace_cells(&ctx, &refs_t)?);
        sweep.push(row);
    }

    ctx.write("deletion_init.tsv", &inits.render())?;
    ctx.write("deletion_threshold.tsv", &sweep.render())
}
