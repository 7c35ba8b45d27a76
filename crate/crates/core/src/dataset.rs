//! Categorical sequence corpora: loading, alphabet construction, labels.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input encodings accepted by [`load_sequences`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `>id` headers followed by sequence lines; one character per token.
    Fasta,
    /// One sequence per row, comma-separated tokens, optional trailing label.
    Csv,
    /// One sequence per line. Whitespace-separated tokens when the line has
    /// whitespace, otherwise one character per token.
    Lines,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fasta" => Ok(Self::Fasta),
            "csv" => Ok(Self::Csv),
            "lines" => Ok(Self::Lines),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

/// Ordered set of distinct tokens with a reverse index.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Alphabet {
    fn from(symbols: Vec<String>) -> Self {
        let mut alphabet = Alphabet::default();
        for s in symbols {
            alphabet.intern(&s);
        }
        alphabet
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

impl Alphabet {
    /// Alphabet of the first `size` uppercase letters, then `s26`, `s27`, ...
    pub fn letters(size: usize) -> Self {
        (0..size)
            .map(|i| {
                if i < 26 {
                    char::from(b'A' + i as u8).to_string()
                } else {
                    format!("s{i}")
                }
            })
            .collect::<Vec<_>>()
            .into()
    }

    /// Ordinal id of `symbol`, inserting it if unseen.
    pub fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// A single sequence of ordinal token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSequence {
    pub id: String,
    pub tokens: Vec<u32>,
}

impl CategoricalSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Ordered corpus of sequences over a shared alphabet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceDataset {
    sequences: Vec<CategoricalSequence>,
    alphabet: Alphabet,
    labels: Option<Vec<usize>>,
    label_names: Vec<String>,
    max_length: usize,
}

impl SequenceDataset {
    /// Assemble a dataset, validating ids, lengths, token range and labels.
    ///
    /// `labels`, when given, holds one class id per sequence; `label_names`
    /// maps class ids to display names (generated when empty).
    pub fn new(
        alphabet: Alphabet,
        sequences: Vec<CategoricalSequence>,
        labels: Option<Vec<usize>>,
        mut label_names: Vec<String>,
    ) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::with_capacity(sequences.len());
        for s in &sequences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if s.tokens.is_empty() {
                return Err(Error::EmptySequence { id: s.id.clone() });
            }
            if let Some(&bad) = s.tokens.iter().find(|&&t| t as usize >= alphabet.len()) {
                return Err(Error::InvalidParameter(format!(
                    "sequence `{}` uses token id {bad} outside an alphabet of size {}",
                    s.id,
                    alphabet.len()
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != sequences.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: sequences.len(),
                });
            }
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            if label_names.len() < classes {
                label_names.extend((label_names.len()..classes).map(|c| c.to_string()));
            }
        }
        let max_length = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        Ok(Self {
            sequences,
            alphabet,
            labels,
            label_names,
            max_length,
        })
    }

    pub fn sequences(&self) -> &[CategoricalSequence] {
        &self.sequences
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Number of sequences.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn min_length(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).min().unwrap_or(0)
    }

    pub fn mean_length(&self) -> f64 {
        let total: usize = self.sequences.iter().map(|s| s.len()).sum();
        total as f64 / self.sequences.len() as f64
    }

    pub fn ids(&self) -> Vec<String> {
        self.sequences.iter().map(|s| s.id.clone()).collect()
    }

    /// Tokens of sequence `i` rendered back to symbols.
    pub fn symbols_of(&self, i: usize) -> Vec<&str> {
        self.sequences[i]
            .tokens
            .iter()
            .map(|&t| self.alphabet.symbol(t))
            .collect()
    }

    /// A new dataset containing the sequences at `order`, in that order.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let sequences = order.iter().map(|&i| self.sequences[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| order.iter().map(|&i| l[i]).collect());
        Self::new(
            self.alphabet.clone(),
            sequences,
            labels,
            self.label_names.clone(),
        )
    }

    /// Write the canonical CSV form: one row per sequence, tokens as
    /// symbols, followed by the label name when labels are present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
        for (i, _) in self.sequences.iter().enumerate() {
            let mut record: Vec<&str> = self.symbols_of(i);
            if let Some(labels) = &self.labels {
                record.push(&self.label_names[labels[i]]);
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Incrementally builds a dataset from symbol strings.
#[derive(Debug, Default)]
struct Builder {
    alphabet: Alphabet,
    sequences: Vec<CategoricalSequence>,
    labels: Vec<usize>,
    label_index: Alphabet,
}

impl Builder {
    fn push<'a>(
        &mut self,
        id: String,
        tokens: impl IntoIterator<Item = &'a str>,
        label: Option<&str>,
    ) {
        let tokens = tokens
            .into_iter()
            .map(|t| self.alphabet.intern(t))
            .collect();
        if let Some(label) = label {
            self.labels.push(self.label_index.intern(label) as usize);
        }
        self.sequences.push(CategoricalSequence { id, tokens });
    }

    fn finish(self, with_labels: bool) -> Result<SequenceDataset> {
        let labels = with_labels.then_some(self.labels);
        SequenceDataset::new(
            self.alphabet,
            self.sequences,
            labels,
            self.label_index.symbols().to_vec(),
        )
    }
}

/// Parse a corpus from `source`.
///
/// The alphabet is the set of observed tokens in first-occurrence order and
/// sequence order follows the input. With `label_column`, the last CSV field
/// of each row is taken as the ground-truth class (ignored for other formats).
pub fn load_sequences<R: Read>(
    source: R,
    format: InputFormat,
    label_column: bool,
) -> Result<SequenceDataset> {
    match format {
        InputFormat::Fasta => load_fasta(source),
        InputFormat::Csv => load_csv(source, label_column),
        InputFormat::Lines => load_lines(source),
    }
}

fn load_fasta<R: Read>(source: R) -> Result<SequenceDataset> {
    let mut builder = Builder::default();
    let mut current: Option<(String, String, usize)> = None;

    let flush = |builder: &mut Builder, record: Option<(String, String, usize)>| -> Result<()> {
        if let Some((id, body, line)) = record {
            if body.is_empty() {
                return Err(Error::MalformedFasta {
                    line,
                    reason: format!("record `{id}` has no sequence"),
                });
            }
            let mut buf = [0u8; 4];
            let chars: Vec<String> = body
                .chars()
                .map(|c| c.encode_utf8(&mut buf).to_owned())
                .collect();
            builder.push(id, chars.iter().map(String::as_str), None);
        }
        Ok(())
    };

    for (lineno, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::MalformedFasta {
                    line: lineno + 1,
                    reason: "header without an id".into(),
                });
            }
            flush(&mut builder, current.take())?;
            current = Some((id.to_owned(), String::new(), lineno + 1));
        } else if !line.trim().is_empty() {
            match current.as_mut() {
                Some((_, body, _)) => body.extend(line.chars().filter(|c| !c.is_whitespace())),
                None => {
                    return Err(Error::MalformedFasta {
                        line: lineno + 1,
                        reason: "sequence data before the first header".into(),
                    })
                }
            }
        }
    }
    flush(&mut builder, current.take())?;
    if builder.sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    builder.finish(false)
}

fn load_csv<R: Read>(source: R, label_column: bool) -> Result<SequenceDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut builder = Builder::default();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::BlankToken { line });
        }
        let id = format!("seq{}", builder.sequences.len() + 1);
        let (tokens, label) = if label_column {
            match fields.split_last() {
                Some((label, tokens)) if !tokens.is_empty() => (tokens, Some(*label)),
                _ => return Err(Error::EmptySequence { id }),
            }
        } else {
            (&fields[..], None)
        };
        builder.push(id, tokens.iter().copied(), label);
    }
    if builder.sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    builder.finish(label_column)
}

fn load_lines<R: Read>(source: R) -> Result<SequenceDataset> {
    let mut builder = Builder::default();
    for line in BufReader::new(source).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id = format!("seq{}", builder.sequences.len() + 1);
        if line.contains(char::is_whitespace) {
            builder.push(id, line.split_whitespace(), None);
        } else {
            let mut buf = [0u8; 4];
            let chars: Vec<String> = line
                .chars()
                .map(|c| c.encode_utf8(&mut buf).to_owned())
                .collect();
            builder.push(id, chars.iter().map(String::as_str), None);
        }
    }
    if builder.sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    builder.finish(false)
}

/// Default window size: `round(sqrt(mean length))`, clamped to
/// `[1, min length - 1]`.
pub fn default_window(ds: &SequenceDataset) -> Result<usize> {
    if let Some(short) = ds.sequences().iter().find(|s| s.len() < 2) {
        return Err(Error::TooShortForWindow {
            id: short.id.clone(),
            length: short.len(),
        });
    }
    let n = ds.mean_length().sqrt().round() as usize;
    Ok(n.clamp(1, ds.min_length() - 1))
}
