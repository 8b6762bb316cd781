//! Parallel text ingestion, the shared vocabulary, and BPE conventions.
//!
//! Corpus files hold one sentence per line with tokens separated by spaces.
//! A token ending in `@@` continues into the next token, so `a@@ b@@ c`
//! spells the single word `abc` in three pieces.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const PLD: TokenId = 2;
pub const UNK: TokenId = 3;
/// Ids below this value are reserved and never produced by the token head.
pub const NUM_RESERVED: usize = 4;

pub const BOS_SURFACE: &str = "<s>";
pub const EOS_SURFACE: &str = "</s>";
pub const PLD_SURFACE: &str = "<pld>";
pub const UNK_SURFACE: &str = "<unk>";

/// BPE continuation marker.
pub const CONTINUATION: &str = "@@";

pub fn is_reserved(id: TokenId) -> bool {
    (id as usize) < NUM_RESERVED
}

fn has_continuation(surface: &str) -> bool {
    surface.ends_with(CONTINUATION)
}

/// Bijection between token surfaces and dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
    continues: Vec<bool>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// A vocabulary holding only the reserved ids.
    pub fn new() -> Self {
        let mut vocab = Vocab {
            surfaces: Vec::new(),
            index: HashMap::new(),
            continues: Vec::new(),
        };
        for s in [BOS_SURFACE, EOS_SURFACE, PLD_SURFACE, UNK_SURFACE] {
            vocab.insert(s);
        }
        vocab
    }

    /// Builds a vocabulary from non-reserved surfaces, in id order.
    /// Duplicates and reserved surfaces are skipped.
    pub fn from_surfaces<I, S>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::new();
        for s in surfaces {
            vocab.insert(s.as_ref());
        }
        vocab
    }

    /// Adds `surface` if absent and returns its id.
    pub fn insert(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        self.continues
            .push(!is_reserved(id) && has_continuation(surface));
        id
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface_of(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn is_continuation(&self, id: TokenId) -> bool {
        self.continues.get(id as usize).copied().unwrap_or(false)
    }

    /// Non-reserved surfaces in id order.
    pub fn content_surfaces(&self) -> impl Iterator<Item = &str> {
        self.surfaces[NUM_RESERVED..].iter().map(String::as_str)
    }

    /// Encodes one whitespace-tokenized line. Unknown surfaces become
    /// `<unk>` but keep the continuation flag of the original surface.
    pub fn encode(&self, line: &str) -> Sentence {
        self.encode_tokens(split_tokens(line))
    }

    pub fn encode_tokens<I, S>(&self, tokens: I) -> Sentence
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ids = Vec::new();
        let mut continues = Vec::new();
        for t in tokens {
            let t = t.as_ref();
            ids.push(self.id_of(t).unwrap_or(UNK));
            continues.push(has_continuation(t));
        }
        Sentence { ids, continues }
    }

    /// Wraps decoder output, taking continuation flags from the surfaces.
    pub fn sentence(&self, ids: Vec<TokenId>) -> Sentence {
        let continues = ids.iter().map(|&id| self.is_continuation(id)).collect();
        Sentence { ids, continues }
    }

    /// Space-joined surfaces; ids out of range print as `<unk>`.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface_of(id).unwrap_or(UNK_SURFACE))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One non-reserved surface per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for s in self.content_surfaces() {
            out.push_str(s);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        Ok(Vocab::from_surfaces(lines.iter().map(|l| l.trim())))
    }
}

/// Token ids of one sentence with their BPE continuation flags.
///
/// Sentinels are never stored; the engine adds them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    ids: Vec<TokenId>,
    continues: Vec<bool>,
}

impl Sentence {
    pub fn new(ids: Vec<TokenId>, continues: Vec<bool>) -> Result<Self> {
        if ids.len() != continues.len() {
            return Err(Error::Shape(format!(
                "{} ids but {} continuation flags",
                ids.len(),
                continues.len()
            )));
        }
        Ok(Sentence { ids, continues })
    }

    pub fn empty() -> Self {
        Sentence {
            ids: Vec::new(),
            continues: Vec::new(),
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn continues(&self) -> &[bool] {
        &self.continues
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// True when the token at `index` is a piece of a multi-piece word: it
    /// carries the marker or follows a token that does.
    ///
    /// Panics if `index` is out of range.
    pub fn is_subword_token(&self, index: usize) -> bool {
        self.continues[index] || index > 0 && self.continues[index - 1]
    }

    pub fn subword_count(&self) -> usize {
        (0..self.len())
            .filter(|&i| self.is_subword_token(i))
            .count()
    }

    /// Token ranges of the words, each ending at the first piece without a
    /// continuation marker (or at the sentence end).
    pub fn word_groups(&self) -> Vec<Range<usize>> {
        let mut groups = Vec::new();
        let mut start = 0;
        for (i, &c) in self.continues.iter().enumerate() {
            if !c {
                groups.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < self.len() {
            groups.push(start..self.len());
        }
        groups
    }

    /// Keeps the tokens whose index satisfies `keep`.
    pub fn filter_positions(&self, mut keep: impl FnMut(usize) -> bool) -> Sentence {
        let mut ids = Vec::new();
        let mut continues = Vec::new();
        for i in 0..self.len() {
            if keep(i) {
                ids.push(self.ids[i]);
                continues.push(self.continues[i]);
            }
        }
        Sentence { ids, continues }
    }

    /// Concatenates token ranges of `self` in the given order.
    pub fn gather(&self, ranges: &[Range<usize>]) -> Sentence {
        let mut out = Sentence::empty();
        for r in ranges {
            out.ids.extend_from_slice(&self.ids[r.clone()]);
            out.continues.extend_from_slice(&self.continues[r.clone()]);
        }
        out
    }
}

/// Result of [`merge_to_words`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedWords {
    pub words: Vec<String>,
    /// The last token still carried a continuation marker.
    pub dangling: bool,
}

fn strip_marker(surface: &str) -> &str {
    surface.strip_suffix(CONTINUATION).unwrap_or(surface)
}

/// Joins BPE pieces into words, dropping the `@@` markers. A trailing
/// piece that still continues becomes its own word and sets `dangling`.
pub fn merge_to_words(sentence: &Sentence, vocab: &Vocab) -> MergedWords {
    let words = sentence
        .word_groups()
        .into_iter()
        .map(|g| merged_word(sentence, g, vocab))
        .collect();
    MergedWords {
        words,
        dangling: sentence.continues.last().copied().unwrap_or(false),
    }
}

fn merged_word(sentence: &Sentence, group: Range<usize>, vocab: &Vocab) -> String {
    group
        .map(|i| {
            let surface = vocab.surface_of(sentence.ids[i]).unwrap_or(UNK_SURFACE);
            if sentence.continues[i] {
                strip_marker(surface)
            } else {
                surface
            }
        })
        .collect()
}

/// Removes every word group whose merged surface is a stop word.
pub fn strip_stopwords(sentence: &Sentence, vocab: &Vocab, stoplist: &StopList) -> Sentence {
    if stoplist.is_empty() {
        return sentence.clone();
    }
    let kept: Vec<Range<usize>> = sentence
        .word_groups()
        .into_iter()
        .filter(|g| !stoplist.contains(&merged_word(sentence, g.clone(), vocab)))
        .collect();
    sentence.gather(&kept)
}

/// Word-level stop words, matched against merged words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StopList {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    /// One word per line; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        Ok(StopList::from_words(
            lines
                .iter()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty())
                .map(str::to_string),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }
}

/// Word-level lexicon of training targets, used to flag invalid words.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a Sentence>,
        vocab: &Vocab,
    ) -> Self {
        let mut words = HashSet::new();
        for s in sentences {
            words.extend(merge_to_words(s, vocab).words);
        }
        Lexicon { words }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Lexicon {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Splits a line into token surfaces on spaces.
pub fn split_tokens(line: &str) -> impl Iterator<Item = &str> {
    line.trim().split(' ').filter(|t| !t.is_empty())
}

/// Reads a UTF-8 file as lines, without trailing `\r`.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    let mut chunks: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if chunks.last().is_some_and(|c| c.is_empty()) {
        chunks.pop();
    }
    for (n, chunk) in chunks.into_iter().enumerate() {
        let chunk = chunk.strip_suffix(b"\r").unwrap_or(chunk);
        let line = std::str::from_utf8(chunk).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            line: n + 1,
        })?;
        lines.push(line.to_string());
    }
    Ok(lines)
}

type TokenLine = Vec<String>;

/// Tokenized parallel text before vocabulary lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub source: Vec<TokenLine>,
    pub target: Vec<TokenLine>,
    pub alt_target: Option<Vec<TokenLine>>,
}

impl RawCorpus {
    /// Builds a corpus from in-memory lines, applying the same blank-line
    /// rule as [`load_parallel_corpus`].
    pub fn from_lines<S: AsRef<str>>(
        source: &[S],
        target: &[S],
        alt_target: Option<&[S]>,
    ) -> Result<Self> {
        check_counts("source", source.len(), "target", target.len())?;
        if let Some(alt) = alt_target {
            check_counts("target", target.len(), "alternate target", alt.len())?;
        }
        let mut corpus = RawCorpus {
            alt_target: alt_target.map(|_| Vec::new()),
            ..Default::default()
        };
        for i in 0..source.len() {
            let (s, t) = (source[i].as_ref(), target[i].as_ref());
            if s.trim().is_empty() || t.trim().is_empty() {
                continue;
            }
            corpus
                .source
                .push(split_tokens(s).map(str::to_string).collect());
            corpus
                .target
                .push(split_tokens(t).map(str::to_string).collect());
            if let (Some(alt), Some(out)) = (alt_target, corpus.alt_target.as_mut()) {
                out.push(split_tokens(alt[i].as_ref()).map(str::to_string).collect());
            }
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    fn all_lines(&self) -> impl Iterator<Item = &TokenLine> {
        self.source
            .iter()
            .chain(self.target.iter())
            .chain(self.alt_target.iter().flatten())
    }

    pub fn encode(&self, vocab: &Vocab) -> ParallelCorpus {
        let enc = |lines: &Vec<TokenLine>| -> Vec<Sentence> {
            lines.iter().map(|l| vocab.encode_tokens(l)).collect()
        };
        ParallelCorpus {
            source: enc(&self.source),
            target: enc(&self.target),
            alt_target: self.alt_target.as_ref().map(enc),
        }
    }
}

fn check_counts(left: &str, l: usize, right: &str, r: usize) -> Result<()> {
    if l != r {
        return Err(Error::Alignment {
            left_path: PathBuf::from(left),
            left: l,
            right_path: PathBuf::from(right),
            right: r,
        });
    }
    Ok(())
}

/// Loads aligned source/target files and an optional alternate target file
/// (distilled references or translation-memory matches).
///
/// A pair is skipped when its source or target line is blank; a blank
/// alternate line is kept as an empty sentence.
pub fn load_parallel_corpus(
    src_path: &Path,
    tgt_path: &Path,
    alt_tgt_path: Option<&Path>,
) -> Result<RawCorpus> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    let alignment = |lp: &Path, l: usize, rp: &Path, r: usize| Error::Alignment {
        left_path: lp.to_path_buf(),
        left: l,
        right_path: rp.to_path_buf(),
        right: r,
    };
    if src.len() != tgt.len() {
        return Err(alignment(src_path, src.len(), tgt_path, tgt.len()));
    }
    let alt = match alt_tgt_path {
        Some(p) => {
            let alt = read_lines(p)?;
            if alt.len() != tgt.len() {
                return Err(alignment(tgt_path, tgt.len(), p, alt.len()));
            }
            Some(alt)
        }
        None => None,
    };
    RawCorpus::from_lines(&src, &tgt, alt.as_deref())
}

/// Keeps the `cap - 4` most frequent surfaces of all sides of the corpus.
/// Frequency ties go to the surface seen first, scanning source lines,
/// then target lines, then alternate target lines.
pub fn build_vocab(corpus: &RawCorpus, cap: usize) -> Result<Vocab> {
    if cap <= NUM_RESERVED {
        return Err(Error::VocabCap(cap));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    // surface -> (count, first occurrence)
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for line in corpus.all_lines() {
        for tok in line {
            let entry = counts.entry(tok.as_str()).or_insert((0, order));
            entry.0 += 1;
            order += 1;
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .filter(|(s, _)| ![BOS_SURFACE, EOS_SURFACE, PLD_SURFACE, UNK_SURFACE].contains(s))
        .map(|(s, (c, first))| (s, c, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(cap - NUM_RESERVED);
    Ok(Vocab::from_surfaces(ranked.into_iter().map(|(s, _, _)| s)))
}

/// Encoded parallel corpus; all lists are index-aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub source: Vec<Sentence>,
    pub target: Vec<Sentence>,
    pub alt_target: Option<Vec<Sentence>>,
}

impl ParallelCorpus {
    pub fn new(
        source: Vec<Sentence>,
        target: Vec<Sentence>,
        alt_target: Option<Vec<Sentence>>,
    ) -> Result<Self> {
        check_counts("source", source.len(), "target", target.len())?;
        if let Some(alt) = &alt_target {
            check_counts("target", target.len(), "alternate target", alt.len())?;
        }
        Ok(ParallelCorpus {
            source,
            target,
            alt_target,
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Targets used for supervision: the alternate list when present.
    pub fn training_targets(&self) -> &[Sentence] {
        self.alt_target.as_deref().unwrap_or(&self.target)
    }
}
