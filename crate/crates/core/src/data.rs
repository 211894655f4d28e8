//! CoNLL-format ingestion, vocabulary construction, IOB scheme handling, and
//! pretrained-embedding loading.
//!
//! Word lookup folds case according to the vocabulary policy so pretrained
//! embeddings match, while character sequences keep the original casing to
//! preserve the capitalization signal for the character LSTM.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// A sentence as read from disk: surface tokens, string labels, and optional
/// per-token auxiliary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSentence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
    pub aux: Option<Vec<Vec<f64>>>,
}

impl RawSentence {
    pub fn new(tokens: Vec<String>, labels: Vec<String>) -> Self {
        RawSentence {
            tokens,
            labels,
            aux: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A numberized sentence ready for the encoder.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<Vec<usize>>,
    pub gold_labels: Vec<usize>,
    pub aux: Option<Vec<Vec<f64>>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

// ---- CoNLL text format ----

/// Reads whitespace-separated column files: token in column 0, label in
/// `label_column` (default: the last column). Blank lines separate sentences
/// and `-DOCSTART-` lines are skipped. Lines within one sentence must all
/// have the same number of columns.
pub fn read_conll<P: AsRef<Path>>(path: P, label_column: Option<usize>) -> Result<Vec<RawSentence>> {
    let file = File::open(path.as_ref())?;
    read_conll_from(file, label_column)
}

pub fn read_conll_from<R: Read>(reader: R, label_column: Option<usize>) -> Result<Vec<RawSentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut columns: Option<usize> = None;

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<String>| {
        if !tokens.is_empty() {
            sentences.push(RawSentence::new(std::mem::take(tokens), std::mem::take(labels)));
        }
    };

    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut labels);
            columns = None;
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        match columns {
            None => columns = Some(cols.len()),
            Some(n) if n != cols.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "ragged columns within a sentence: expected {n}, found {}",
                        cols.len()
                    ),
                });
            }
            _ => {}
        }
        let label_idx = match label_column {
            Some(c) => {
                if c >= cols.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!(
                            "label column {c} out of range for {} columns",
                            cols.len()
                        ),
                    });
                }
                c
            }
            None => cols.len() - 1,
        };
        tokens.push(cols[0].to_string());
        labels.push(cols[label_idx].to_string());
    }
    flush(&mut tokens, &mut labels);
    Ok(sentences)
}

/// Writes `token label` lines with a blank line after each sentence.
pub fn write_conll<W: Write>(mut writer: W, sentences: &[RawSentence]) -> Result<()> {
    for sentence in sentences {
        for (token, label) in sentence.tokens.iter().zip(&sentence.labels) {
            writeln!(writer, "{token} {label}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

// ---- IOB schemes ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Iob1,
    Iob2,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" => Ok(Scheme::Iob1),
            "iob2" => Ok(Scheme::Iob2),
            other => Err(Error::Config(format!("unknown tagging scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Iob1 => write!(f, "iob1"),
            Scheme::Iob2 => write!(f, "iob2"),
        }
    }
}

/// Splits a label into its tag character and entity type.
fn parse_label(label: &str) -> Result<(char, &str)> {
    if label == "O" {
        return Ok(('O', ""));
    }
    for tag in ['B', 'I'] {
        if let Some(ty) = label.strip_prefix(&format!("{tag}-")) {
            if !ty.is_empty() {
                return Ok((tag, ty));
            }
        }
    }
    Err(Error::Data(format!("invalid IOB label '{label}'")))
}

/// Converts label sequences between IOB1 and IOB2 in place. Entity spans are
/// preserved exactly.
pub fn convert_scheme(sentences: &mut [RawSentence], from: Scheme, to: Scheme) -> Result<()> {
    for sentence in sentences.iter_mut() {
        for label in &sentence.labels {
            parse_label(label)?;
        }
        if from == to {
            continue;
        }
        let old = sentence.labels.clone();
        for t in 0..old.len() {
            let (tag, ty) = parse_label(&old[t])?;
            let prev = if t > 0 { Some(parse_label(&old[t - 1])?) } else { None };
            let same_type_prev = matches!(prev, Some((ptag, pty)) if ptag != 'O' && pty == ty);
            match (from, to) {
                (Scheme::Iob1, Scheme::Iob2) => {
                    // entity-initial I- becomes B-
                    if tag == 'I' && !same_type_prev {
                        sentence.labels[t] = format!("B-{ty}");
                    }
                }
                (Scheme::Iob2, Scheme::Iob1) => {
                    // B- is only kept between adjacent same-type entities
                    if tag == 'B' && !same_type_prev {
                        sentence.labels[t] = format!("I-{ty}");
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(())
}

// ---- vocabularies ----

/// Token-to-index map with reserved `<pad>` (0) and `<unk>` (1) entries.
/// Lookups never fail: unknown tokens fall back to `<unk>`.
#[derive(Debug, Clone)]
pub struct Vocab {
    map: HashMap<String, usize>,
    items: Vec<String>,
    pub lowercase: bool,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    pub fn new(lowercase: bool) -> Self {
        let items = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let map = items
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            map,
            items,
            lowercase,
        }
    }

    /// Rebuilds a vocabulary from a serialized item list.
    pub fn from_items(items: Vec<String>, lowercase: bool) -> Result<Self> {
        if items.len() < 2 || items[0] != PAD_TOKEN || items[1] != UNK_TOKEN {
            return Err(Error::Data(
                "vocabulary items must start with the reserved <pad> and <unk> entries".into(),
            ));
        }
        let mut map = HashMap::with_capacity(items.len());
        for (i, t) in items.iter().enumerate() {
            if map.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary item '{t}'")));
            }
        }
        Ok(Vocab {
            map,
            items,
            lowercase,
        })
    }

    fn fold(&self, token: &str) -> String {
        if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    /// Inserts the (policy-folded) token if new; returns its index.
    pub fn add(&mut self, token: &str) -> usize {
        let folded = self.fold(token);
        if let Some(&idx) = self.map.get(&folded) {
            return idx;
        }
        let idx = self.items.len();
        self.items.push(folded.clone());
        self.map.insert(folded, idx);
        idx
    }

    /// Index of the token under the folding policy, or `UNK`.
    pub fn lookup(&self, token: &str) -> usize {
        self.map.get(&self.fold(token)).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.map.contains_key(&self.fold(token))
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }
}

/// Label string <-> index bijection. Always contains "O".
#[derive(Debug, Clone)]
pub struct LabelSet {
    map: HashMap<String, usize>,
    items: Vec<String>,
}

impl LabelSet {
    /// Collects the distinct labels of a corpus, sorted for determinism.
    pub fn from_sentences(sentences: &[RawSentence]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        for sentence in sentences {
            for label in &sentence.labels {
                parse_label(label)?;
                if !labels.iter().any(|l| l == label) {
                    labels.push(label.clone());
                }
            }
        }
        if !labels.iter().any(|l| l == "O") {
            labels.push("O".to_string());
        }
        labels.sort();
        Self::from_items(labels)
    }

    pub fn from_items(items: Vec<String>) -> Result<Self> {
        if !items.iter().any(|l| l == "O") {
            return Err(Error::Data("label set must contain 'O'".into()));
        }
        let mut map = HashMap::with_capacity(items.len());
        for (i, l) in items.iter().enumerate() {
            parse_label(l)?;
            if map.insert(l.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate label '{l}'")));
            }
        }
        Ok(LabelSet { map, items })
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.map.get(label).copied()
    }

    pub fn outside(&self) -> usize {
        self.map["O"]
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

// ---- pretrained embeddings ----

/// Pretrained word vectors read from a text file: one `token v1 .. vdim`
/// entry per line.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub dim: usize,
    map: HashMap<String, Vec<f64>>,
    order: Vec<String>,
}

impl Embeddings {
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.map.get(token).map(|v| v.as_slice())
    }

    /// Tokens in file order (first occurrence wins).
    pub fn tokens(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn load_embeddings<P: AsRef<Path>>(path: P, dim: usize) -> Result<Embeddings> {
    let file = File::open(path.as_ref())?;
    load_embeddings_from(file, dim)
}

pub fn load_embeddings_from<R: Read>(reader: R, dim: usize) -> Result<Embeddings> {
    let mut map = HashMap::new();
    let mut order = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a first field").to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("invalid float '{p}'"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {dim} floats for token '{token}', found {}",
                    values.len()
                ),
            });
        }
        if let std::collections::hash_map::Entry::Vacant(entry) = map.entry(token.clone()) {
            order.push(token);
            entry.insert(values);
        }
    }
    Ok(Embeddings { dim, map, order })
}

/// Vocabulary built from training tokens plus embedding-file tokens, with the
/// training-vocabulary embedding coverage statistic.
#[derive(Debug)]
pub struct VocabBuild {
    pub vocab: Vocab,
    pub train_tokens: usize,
    pub covered: usize,
}

impl VocabBuild {
    /// Fraction of distinct training tokens found in the embedding file.
    pub fn coverage(&self) -> f64 {
        if self.train_tokens == 0 {
            1.0
        } else {
            self.covered as f64 / self.train_tokens as f64
        }
    }
}

/// Training vocabulary = tokens in the training data plus tokens in the
/// embedding file, in first-occurrence order.
pub fn build_vocab(train: &[RawSentence], embeddings: Option<&Embeddings>, lowercase: bool) -> VocabBuild {
    let mut vocab = Vocab::new(lowercase);
    for sentence in train {
        for token in &sentence.tokens {
            vocab.add(token);
        }
    }
    let train_tokens = vocab.len() - 2;
    let covered = match embeddings {
        Some(emb) => vocab.items()[2..]
            .iter()
            .filter(|t| emb.get(t).is_some())
            .count(),
        None => 0,
    };
    if let Some(emb) = embeddings {
        for token in emb.tokens() {
            vocab.add(token);
        }
    }
    VocabBuild {
        vocab,
        train_tokens,
        covered,
    }
}

/// Character vocabulary over the training tokens (case preserved).
pub fn build_char_vocab(train: &[RawSentence]) -> Vocab {
    let mut vocab = Vocab::new(false);
    let mut buf = [0u8; 4];
    for sentence in train {
        for token in &sentence.tokens {
            for ch in token.chars() {
                vocab.add(ch.encode_utf8(&mut buf));
            }
        }
    }
    vocab
}

/// Builds the V x dim word-embedding table. Rows found in the embedding file
/// are copied; missing rows (including `<unk>`) are drawn uniform in
/// [-0.25, 0.25] from `rng`, in vocabulary index order. The `<pad>` row is
/// zero.
pub fn build_word_table(vocab: &Vocab, embeddings: Option<&Embeddings>, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut table = vec![0.0; vocab.len() * dim];
    for idx in 1..vocab.len() {
        let row = &mut table[idx * dim..(idx + 1) * dim];
        match embeddings.and_then(|e| e.get(vocab.token(idx))) {
            Some(vec) => row.copy_from_slice(vec),
            None => {
                for v in row.iter_mut() {
                    *v = rng.random_range(-0.25..=0.25);
                }
            }
        }
    }
    table
}

// ---- auxiliary vectors ----

/// Reads per-token auxiliary vectors: a `# sentence <i>` header followed by
/// one whitespace-separated float row per token. Sentence indices must be
/// contiguous from zero and all rows must share one width.
pub fn load_aux_vectors<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<Vec<f64>>>> {
    let file = File::open(path.as_ref())?;
    load_aux_vectors_from(file)
}

pub fn load_aux_vectors_from<R: Read>(reader: R) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut sentences: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            let idx: usize = rest
                .strip_prefix("sentence")
                .map(str::trim)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("expected '# sentence <i>' header, found '{trimmed}'"),
                })?;
            if idx != sentences.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "sentence headers must be contiguous: expected {}, found {idx}",
                        sentences.len()
                    ),
                });
            }
            sentences.push(Vec::new());
            continue;
        }
        let row: Vec<f64> = trimmed
            .split_whitespace()
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("invalid float '{p}'"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Data(format!(
                    "auxiliary vector width changed from {w} to {} at line {lineno}",
                    row.len()
                )));
            }
            _ => {}
        }
        let current = sentences.last_mut().ok_or_else(|| Error::Parse {
            line: lineno,
            message: "auxiliary rows before any '# sentence' header".into(),
        })?;
        current.push(row);
    }
    Ok(sentences)
}

/// Attaches loaded auxiliary vectors to the matching sentences.
pub fn attach_aux(sentences: &mut [RawSentence], aux: Vec<Vec<Vec<f64>>>) -> Result<()> {
    if aux.len() != sentences.len() {
        return Err(Error::Data(format!(
            "auxiliary file covers {} sentences, corpus has {}",
            aux.len(),
            sentences.len()
        )));
    }
    for (i, (sentence, vectors)) in sentences.iter_mut().zip(aux).enumerate() {
        if vectors.len() != sentence.tokens.len() {
            return Err(Error::Data(format!(
                "sentence {i}: auxiliary file has {} rows, sentence has {} tokens",
                vectors.len(),
                sentence.tokens.len()
            )));
        }
        sentence.aux = Some(vectors);
    }
    Ok(())
}

// ---- numberizing ----

/// Maps a raw sentence onto vocabulary and label indices. Unknown tokens and
/// characters fall back to `<unk>`; labels missing from the label set map to
/// "O" (prediction paths never read gold labels).
pub fn numberize(raw: &RawSentence, words: &Vocab, chars: &Vocab, labels: &LabelSet) -> Result<Sentence> {
    if raw.tokens.is_empty() {
        return Err(Error::Data("cannot numberize an empty sentence".into()));
    }
    if raw.tokens.len() != raw.labels.len() {
        return Err(Error::Data(format!(
            "sentence has {} tokens but {} labels",
            raw.tokens.len(),
            raw.labels.len()
        )));
    }
    let mut buf = [0u8; 4];
    let word_ids = raw.tokens.iter().map(|t| words.lookup(t)).collect();
    let char_ids = raw
        .tokens
        .iter()
        .map(|t| t.chars().map(|c| chars.lookup(c.encode_utf8(&mut buf))).collect())
        .collect();
    let gold_labels = raw
        .labels
        .iter()
        .map(|l| labels.index(l).unwrap_or_else(|| labels.outside()))
        .collect();
    Ok(Sentence {
        tokens: raw.tokens.clone(),
        word_ids,
        char_ids,
        gold_labels,
        aux: raw.aux.clone(),
    })
}
