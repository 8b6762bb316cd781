//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes whitespace-separated BPE text and returns a JSON
//! string; errors surface as a rejected call with a one-line message.

use levt_core::corpus::Vocab;
use levt_core::diagnostics::{bleu, BleuLevel, BleuReport};
use levt_core::{decode, optimal_edit_labels, DecodeOptions, Init, OraclePolicy};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn vocab_for(texts: &[&str]) -> Vocab {
    Vocab::from_surfaces(texts.iter().flat_map(|t| t.split_whitespace()))
}

fn surfaces(vocab: &Vocab, ids: &[u32]) -> Vec<String> {
    ids.iter()
        .map(|&i| vocab.surface_of(i).unwrap_or("<unk>").to_string())
        .collect()
}

/// Minimal deletions and insertions turning `rollin` into `reference`.
pub fn edit_labels_json(rollin: &str, reference: &str) -> Result<Value, String> {
    let vocab = vocab_for(&[rollin, reference]);
    let (a, b) = (vocab.encode(rollin), vocab.encode(reference));
    let labels = optimal_edit_labels(a.ids(), b.ids()).map_err(|e| e.to_string())?;
    let tokens = surfaces(&vocab, a.ids());
    Ok(json!({
        "tokens": tokens,
        "delete": labels.del_labels,
        "insert": labels.ins_counts,
        "fills": labels
            .fills_per_gap()
            .iter()
            .map(|g| surfaces(&vocab, g))
            .collect::<Vec<_>>(),
        "deletions": labels.deletions(),
        "insertions": labels.insertions(),
    }))
}

/// Refinement trace of the oracle policy decoding towards `reference`,
/// starting from `init` (empty text starts from nothing).
pub fn oracle_trace_json(reference: &str, init: &str, max_rounds: usize) -> Result<Value, String> {
    let vocab = vocab_for(&[reference, init]);
    let target = vocab.encode(reference);
    let policy = OraclePolicy::new(vec![target.ids().to_vec()], vocab.len());
    let start = vocab.encode(init);
    let opts = DecodeOptions {
        max_rounds,
        init: if start.is_empty() {
            Init::Empty
        } else {
            Init::Given(start.into_ids())
        },
        ..Default::default()
    };
    let trace = decode(&policy, 0, target.ids(), &opts).map_err(|e| e.to_string())?;
    Ok(json!({
        "stages": trace
            .stages
            .iter()
            .map(|s| json!({"tag": s.tag(), "tokens": surfaces(&vocab, &s.tokens)}))
            .collect::<Vec<_>>(),
        "rounds": trace.rounds,
        "termination": trace.termination.name(),
        "final": surfaces(&vocab, &trace.final_tokens),
    }))
}

fn report_json(r: &BleuReport) -> Value {
    json!({
        "score": r.score,
        "precisions": r.precisions,
        "brevity_penalty": r.brevity_penalty,
        "hyp_len": r.hyp_len,
        "ref_len": r.ref_len,
    })
}

/// BLEU of one hypothesis per line against the reference on the same line,
/// on BPE tokens and on merged words.
pub fn bleu_json(hyps: &str, refs: &str) -> Result<Value, String> {
    let vocab = vocab_for(&[hyps, refs]);
    let lines = |t: &str| t.lines().map(|l| vocab.encode(l)).collect::<Vec<_>>();
    let (h, r) = (lines(hyps), lines(refs));
    let bpe = bleu(&h, &r, BleuLevel::Bpe, &vocab).map_err(|e| e.to_string())?;
    let word = bleu(&h, &r, BleuLevel::Word, &vocab).map_err(|e| e.to_string())?;
    Ok(json!({"bpe": report_json(&bpe), "word": report_json(&word)}))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn edit_labels(rollin: &str, reference: &str) -> Result<String, JsError> {
    to_js(edit_labels_json(rollin, reference))
}

#[wasm_bindgen]
pub fn oracle_trace(reference: &str, init: &str, max_rounds: usize) -> Result<String, JsError> {
    to_js(oracle_trace_json(reference, init, max_rounds))
}

#[wasm_bindgen]
pub fn bleu_report(hyps: &str, refs: &str) -> Result<String, JsError> {
    to_js(bleu_json(hyps, refs))
}
