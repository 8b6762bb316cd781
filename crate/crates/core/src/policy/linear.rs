use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::rng::softmax;

use super::features::{features_with, Alignment};
use super::{check_query, Head, Policy, PolicyScores, Query, PLD_CLASSES};

const MAGIC: &[u8; 8] = b"LEVTLIN\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConfig {
    /// Weight table size per head is `2^hash_bits`.
    pub hash_bits: u32,
    pub learning_rate: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            hash_bits: 18,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HeadTable {
    classes: usize,
    bias: Vec<f64>,
    weights: Vec<f64>,
}

impl HeadTable {
    fn zeros(classes: usize, dim: usize) -> Self {
        HeadTable {
            classes,
            bias: vec![0.0; classes],
            weights: vec![0.0; dim],
        }
    }
}

/// Featurized training example for one head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadExample {
    pub features: Vec<u32>,
    pub label: usize,
}

/// Sparse gradient of a head loss: merged `(weight index, value)` pairs in
/// index order plus the dense bias gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<(usize, f64)>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn weight(&self, index: usize) -> f64 {
        self.weights
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.weights[k].1)
            .unwrap_or(0.0)
    }
}

/// Multiclass linear model per head over hashed `(feature, class)` pairs.
///
/// The score of class `c` is `bias[c] + sum_f w[slot(f, c)]`, where
/// `slot` permutes the feature index by a per-class key, so every head
/// needs a single table of `2^hash_bits` weights regardless of its class
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    hash_bits: u32,
    vocab_size: usize,
    learning_rate: f64,
    tables: [HeadTable; 3],
}

fn class_key(class: usize) -> u64 {
    let mut z = (class as u64).wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z ^ (z >> 33)
}

fn head_index(head: Head) -> usize {
    match head {
        Head::Del => 0,
        Head::Pld => 1,
        Head::Tok => 2,
    }
}

impl LinearPolicy {
    pub fn new(vocab_size: usize, config: LinearConfig) -> Self {
        let dim = 1usize << config.hash_bits;
        LinearPolicy {
            hash_bits: config.hash_bits,
            vocab_size,
            learning_rate: config.learning_rate,
            tables: [
                HeadTable::zeros(2, dim),
                HeadTable::zeros(PLD_CLASSES, dim),
                HeadTable::zeros(vocab_size, dim),
            ],
        }
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn dim(&self) -> usize {
        1 << self.hash_bits
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn classes(&self, head: Head) -> usize {
        self.table(head).classes
    }

    fn table(&self, head: Head) -> &HeadTable {
        &self.tables[head_index(head)]
    }

    fn table_mut(&mut self, head: Head) -> &mut HeadTable {
        &mut self.tables[head_index(head)]
    }

    pub fn weight(&self, head: Head, index: usize) -> f64 {
        self.table(head).weights[index]
    }

    pub fn set_weight(&mut self, head: Head, index: usize, value: f64) {
        self.table_mut(head).weights[index] = value;
    }

    pub fn bias(&self, head: Head, class: usize) -> f64 {
        self.table(head).bias[class]
    }

    pub fn set_bias(&mut self, head: Head, class: usize, value: f64) {
        self.table_mut(head).bias[class] = value;
    }

    /// Weight index of a `(feature, class)` pair.
    pub fn slot(&self, feature: u32, class: usize) -> usize {
        ((feature as u64 ^ class_key(class)) & (self.dim() as u64 - 1)) as usize
    }

    pub fn class_scores(&self, head: Head, features: &[u32]) -> Vec<f64> {
        let table = self.table(head);
        (0..table.classes)
            .map(|c| {
                table.bias[c]
                    + features
                        .iter()
                        .map(|&f| table.weights[self.slot(f, c)])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Positions scored by `head` on a sentinel-wrapped state: content
    /// positions, gaps, or `<pld>` slots.
    pub(crate) fn positions(query: &Query, head: Head) -> Vec<usize> {
        match head {
            Head::Del => (1..query.state.len() - 1).collect(),
            Head::Pld => (0..query.state.len() - 1).collect(),
            Head::Tok => query.slots(),
        }
    }

    /// Features for every position `head` scores on the query state.
    pub fn featurize_all(&self, query: &Query, head: Head) -> Vec<Vec<u32>> {
        let align = Alignment::new(query.state, query.source);
        Self::positions(query, head)
            .into_iter()
            .map(|p| features_with(&align, query.state, query.source, p, head, self.hash_bits))
            .collect()
    }

    /// Pairs each scored position with its label.
    pub fn examples(
        &self,
        query: &Query,
        head: Head,
        labels: &[usize],
    ) -> Result<Vec<HeadExample>> {
        let feats = self.featurize_all(query, head);
        if feats.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} {} positions but {} labels",
                feats.len(),
                head.name(),
                labels.len()
            )));
        }
        let classes = self.classes(head);
        feats
            .into_iter()
            .zip(labels)
            .map(|(features, &label)| {
                if label >= classes {
                    return Err(Error::Shape(format!(
                        "{} label {label} out of {classes} classes",
                        head.name()
                    )));
                }
                Ok(HeadExample { features, label })
            })
            .collect()
    }

    /// Mean cross-entropy over the examples (0 when there are none).
    pub fn head_loss(&self, head: Head, examples: &[HeadExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let total: f64 = examples
            .iter()
            .map(|ex| {
                let scores = self.class_scores(head, &ex.features);
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                lse - scores[ex.label]
            })
            .sum();
        total / examples.len() as f64
    }

    /// Analytic gradient of [`LinearPolicy::head_loss`].
    pub fn head_gradient(&self, head: Head, examples: &[HeadExample]) -> Gradient {
        let classes = self.classes(head);
        let mut bias = vec![0.0; classes];
        let mut entries: Vec<(usize, f64)> = Vec::new();
        if examples.is_empty() {
            return Gradient {
                weights: entries,
                bias,
            };
        }
        let scale = 1.0 / examples.len() as f64;
        for ex in examples {
            let probs = softmax(&self.class_scores(head, &ex.features));
            for (c, p) in probs.into_iter().enumerate() {
                let g = (p - if c == ex.label { 1.0 } else { 0.0 }) * scale;
                if g == 0.0 {
                    continue;
                }
                bias[c] += g;
                for &f in &ex.features {
                    entries.push((self.slot(f, c), g));
                }
            }
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for (i, g) in entries {
            match weights.last_mut() {
                Some((j, acc)) if *j == i => *acc += g,
                _ => weights.push((i, g)),
            }
        }
        Gradient { weights, bias }
    }

    /// Plain SGD step.
    pub fn apply_gradient(&mut self, head: Head, gradient: &Gradient, learning_rate: f64) {
        let table = self.table_mut(head);
        for &(i, g) in &gradient.weights {
            table.weights[i] -= learning_rate * g;
        }
        for (b, g) in table.bias.iter_mut().zip(&gradient.bias) {
            *b -= learning_rate * g;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.hash_bits)?;
        w.write_u32::<LittleEndian>(self.vocab_size as u32)?;
        w.write_u32::<LittleEndian>(crate::MAX_INSERT as u32)?;
        w.write_f64::<LittleEndian>(self.learning_rate)?;
        for table in &self.tables {
            w.write_u32::<LittleEndian>(table.classes as u32)?;
            for &b in &table.bias {
                w.write_f64::<LittleEndian>(b)?;
            }
            for &x in &table.weights {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Format(msg) => Error::ModelFormat(msg),
        })
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self, ReadError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ReadError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(ReadError::Format(format!("unsupported version {version}")));
        }
        let hash_bits = r.read_u32::<LittleEndian>()?;
        if !(1..=30).contains(&hash_bits) {
            return Err(ReadError::Format(format!(
                "hash bits {hash_bits} out of range"
            )));
        }
        let vocab_size = r.read_u32::<LittleEndian>()? as usize;
        let lmax = r.read_u32::<LittleEndian>()? as usize;
        if lmax != crate::MAX_INSERT {
            return Err(ReadError::Format(format!(
                "insertion limit {lmax}, expected 255"
            )));
        }
        let learning_rate = r.read_f64::<LittleEndian>()?;
        let dim = 1usize << hash_bits;
        let expected = [2, PLD_CLASSES, vocab_size];
        let mut tables = Vec::with_capacity(3);
        for want in expected {
            let classes = r.read_u32::<LittleEndian>()? as usize;
            if classes != want {
                return Err(ReadError::Format(format!(
                    "table has {classes} classes, expected {want}"
                )));
            }
            let mut table = HeadTable::zeros(classes, dim);
            r.read_f64_into::<LittleEndian>(&mut table.bias)?;
            r.read_f64_into::<LittleEndian>(&mut table.weights)?;
            if table
                .bias
                .iter()
                .chain(&table.weights)
                .any(|x| !x.is_finite())
            {
                return Err(ReadError::Format("non-finite weight".into()));
            }
            tables.push(table);
        }
        let mut tables = tables.into_iter();
        Ok(LinearPolicy {
            hash_bits,
            vocab_size,
            learning_rate,
            tables: [
                tables.next().unwrap(),
                tables.next().unwrap(),
                tables.next().unwrap(),
            ],
        })
    }
}

enum ReadError {
    Io(std::io::Error),
    Format(String),
}

impl From<std::io::Error> for ReadError {
    fn from(e: std::io::Error) -> Self {
        ReadError::Io(e)
    }
}

impl Policy for LinearPolicy {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn score(&self, query: &Query, head: Head) -> Result<PolicyScores> {
        check_query(query, head)?;
        let rows: Vec<Vec<f64>> = self
            .featurize_all(query, head)
            .iter()
            .map(|f| self.class_scores(head, f))
            .collect();
        Ok(match head {
            Head::Del => PolicyScores::del(rows.into_iter().map(|r| [r[0], r[1]]).collect()),
            Head::Pld => PolicyScores::pld(rows),
            Head::Tok => PolicyScores::tok(rows),
        })
    }
}
