use std::io::{BufRead, Write};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TokenId};
use crate::edit_oracle::{apply_edit, labels_from_drop, optimal_edit_labels, DropMask, EditLabels};
use crate::error::{Error, Result};
use crate::rng::{sentence_rng, split_seed};

use super::FillToken;

/// Deletion ratios for the subword and full-word probes.
pub const PROBE_RATIOS_WORD: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];
/// Deletion ratios for the random-token probe.
pub const PROBE_RATIOS_RANDOM: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// Only pieces of multi-piece words are deleted.
    Subword,
    /// Only single-piece words are deleted.
    Fullword,
    Random,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 3] = [ProbeKind::Subword, ProbeKind::Fullword, ProbeKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Subword => "subword",
            ProbeKind::Fullword => "fullword",
            ProbeKind::Random => "random",
        }
    }

    fn eligible(self, s: &Sentence, i: usize) -> bool {
        match self {
            ProbeKind::Subword => s.is_subword_token(i),
            ProbeKind::Fullword => !s.is_subword_token(i),
            ProbeKind::Random => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    /// Index of the reference.
    pub index: usize,
    pub init: Sentence,
    /// Reference positions that were deleted, ascending.
    pub deleted: Vec<usize>,
    pub gold_counts: Vec<usize>,
    pub gold_fills: Vec<Vec<TokenId>>,
}

impl Probe {
    pub fn gold_labels(&self) -> EditLabels {
        EditLabels {
            del_labels: vec![0; self.init.len()],
            ins_counts: self.gold_counts.clone(),
            fills: self.gold_fills.concat(),
            mask_fills: Vec::new(),
        }
    }

    /// Gold fills per gap, classified by their position in `reference`.
    pub fn gold_classified(&self, reference: &Sentence) -> Vec<Vec<FillToken>> {
        let mut at = 0;
        let mut out = Vec::with_capacity(self.gold_counts.len());
        for &c in &self.gold_counts {
            out.push(
                (at..at + c)
                    .map(|i| FillToken {
                        id: reference.ids()[i],
                        subword: reference.is_subword_token(i),
                    })
                    .collect(),
            );
            // skip the kept token closing the gap
            at += c + 1;
        }
        out
    }

    /// The reference rebuilt from the initialization and the gold labels.
    pub fn rebuild(&self) -> Result<Vec<TokenId>> {
        apply_edit(self.init.ids(), &self.gold_labels())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub kind: ProbeKind,
    pub ratio: f64,
    pub seed: u64,
    pub probes: Vec<Probe>,
    /// References with no eligible token; their probe is the unchanged
    /// reference.
    pub skipped: Vec<usize>,
}

fn kind_stream(kind: ProbeKind, ratio: f64) -> u64 {
    split_seed(0x0070_726f_6265, kind as u64, ratio.to_bits())
}

/// Deletes `ceil(ratio * eligible)` uniformly chosen eligible tokens from
/// every reference. Gold insertion counts and fills are read off the
/// deletion positions and checked against a minimal edit script.
pub fn make_probe_set(
    references: &[Sentence],
    kind: ProbeKind,
    ratio: f64,
    seed: u64,
) -> Result<ProbeSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probe ratio {ratio} outside (0, 1]"
        )));
    }
    let stream = kind_stream(kind, ratio);
    let mut probes = Vec::with_capacity(references.len());
    let mut skipped = Vec::new();
    for (index, reference) in references.iter().enumerate() {
        let eligible: Vec<usize> = (0..reference.len())
            .filter(|&i| kind.eligible(reference, i))
            .collect();
        if eligible.is_empty() {
            skipped.push(index);
        }
        // tolerance keeps e.g. 0.15 * 20 from rounding up to 4
        let k = ((ratio * eligible.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut rng = sentence_rng(seed, stream, index);
        let mut mask = vec![false; reference.len()];
        for j in sample(&mut rng, eligible.len(), k.min(eligible.len())) {
            mask[eligible[j]] = true;
        }
        probes.push(build_probe(index, reference, DropMask(mask))?);
    }
    Ok(ProbeSet {
        kind,
        ratio,
        seed,
        probes,
        skipped,
    })
}

// Gold labels are the minimal script's. They differ from the tracked
// positions only where a deleted token equals a neighbouring kept one, and
// then only in which of the equal tokens counts as inserted.
fn build_probe(index: usize, reference: &Sentence, mask: DropMask) -> Result<Probe> {
    let init = reference.filter_positions(|i| !mask.0[i]);
    let tracked = labels_from_drop(reference.ids(), &mask)?;
    let dp = optimal_edit_labels(init.ids(), reference.ids())?;
    let sorted = |v: &[TokenId]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    };
    if dp.cost() != tracked.cost()
        || dp.deletions() != 0
        || sorted(&dp.fills) != sorted(&tracked.fills)
    {
        return Err(Error::Contract(format!(
            "probe {index}: tracked script costs {}, minimal script {}",
            tracked.cost(),
            dp.cost()
        )));
    }
    let probe = Probe {
        index,
        deleted: (0..mask.len()).filter(|&i| mask.0[i]).collect(),
        gold_fills: dp.fills_per_gap(),
        gold_counts: dp.ins_counts,
        init,
    };
    if probe.rebuild()? != reference.ids() {
        return Err(Error::Contract(format!(
            "probe {index} does not rebuild its reference"
        )));
    }
    Ok(probe)
}

impl ProbeSet {
    /// One JSON header line followed by one line per probe.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "kind": self.kind,
            "ratio": self.ratio,
            "seed": self.seed,
            "skipped": self.skipped,
        });
        let io = |e| Error::ModelFormat(format!("probe set write failed: {e}"));
        writeln!(out, "{header}").map_err(io)?;
        for p in &self.probes {
            let line = serde_json::to_string(p).map_err(|e| Error::ModelFormat(e.to_string()))?;
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            kind: ProbeKind,
            ratio: f64,
            seed: u64,
            skipped: Vec<usize>,
        }
        let bad = |e: &dyn std::fmt::Display| Error::ModelFormat(format!("probe set: {e}"));
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| bad(&"empty input"))?
            .map_err(|e| bad(&e))?;
        let h: Header = serde_json::from_str(&first).map_err(|e| bad(&e))?;
        let mut probes = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(&e))?;
            probes.push(serde_json::from_str(&line).map_err(|e| bad(&e))?);
        }
        Ok(ProbeSet {
            kind: h.kind,
            ratio: h.ratio,
            seed: h.seed,
            probes,
            skipped: h.skipped,
        })
    }
}
