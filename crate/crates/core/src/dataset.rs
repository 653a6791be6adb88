//! Labeled sentence corpora: import, export and a seeded synthetic generator.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown label token '{token}' (expected pos or neg)")]
    UnknownLabel { line: usize, token: String },
    #[error("line {line}: unknown split token '{token}' (expected train or test)")]
    UnknownSplit { line: usize, token: String },
    #[error("line {line}: empty text")]
    EmptyText { line: usize },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("empty corpus")]
    Empty,
    #[error("corpus '{name}' has no {label} items")]
    MissingLabel { name: String, label: Label },
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    /// Output logit index: `Neg = 0`, `Pos = 1`.
    pub fn index(self) -> usize {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 1 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "pos",
            Label::Neg => "neg",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" | "positive" => Ok(Label::Pos),
            "neg" | "negative" => Ok(Label::Neg),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub split: Split,
}

/// An ordered, immutable collection of labeled sentences with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    items: Vec<LabeledSentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown corpus format '{other}'")),
        }
    }
}

impl Corpus {
    /// Validates ids and texts. Empty input is rejected.
    pub fn new(
        name: impl Into<String>,
        items: Vec<LabeledSentence>,
    ) -> Result<Corpus, DatasetError> {
        if items.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.text.trim().is_empty() {
                return Err(DatasetError::EmptyText { line: i + 1 });
            }
            if !seen.insert(item.id.as_str()) {
                return Err(DatasetError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            items,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn items(&self) -> &[LabeledSentence] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSentence> {
        self.items.iter()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSentence> {
        self.items.iter().find(|s| s.id == id)
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &LabeledSentence> {
        self.items.iter().filter(move |s| s.label == label)
    }

    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &LabeledSentence> {
        self.items.iter().filter(move |s| s.split == split)
    }

    /// Checks that both labels are present, as required for training.
    pub fn require_both_labels(&self) -> Result<(), DatasetError> {
        for label in [Label::Pos, Label::Neg] {
            if self.with_label(label).next().is_none() {
                return Err(DatasetError::MissingLabel {
                    name: self.name.clone(),
                    label,
                });
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W, format: Format) -> Result<(), DatasetError> {
        match format {
            Format::Jsonl => {
                for item in &self.items {
                    serde_json::to_writer(&mut out, &JsonRecordOut::from(item))
                        .map_err(std::io::Error::from)?;
                    out.write_all(b"\n")?;
                }
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["id", "text", "label", "split"])
                    .map_err(csv_io)?;
                for item in &self.items {
                    w.write_record([
                        item.id.as_str(),
                        item.text.as_str(),
                        item.label.as_str(),
                        item.split.as_str(),
                    ])
                    .map_err(csv_io)?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    pub fn export(&self, path: impl AsRef<Path>, format: Format) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write(&mut buf, format)?;
        buf.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    text: &'a str,
    label: Label,
    split: Split,
}

impl<'a> From<&'a LabeledSentence> for JsonRecordOut<'a> {
    fn from(s: &'a LabeledSentence) -> Self {
        JsonRecordOut {
            id: &s.id,
            text: &s.text,
            label: s.label,
            split: s.split,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecordIn {
    id: Option<String>,
    text: String,
    label: String,
    split: Option<String>,
}

fn parse_label(token: &str, line: usize) -> Result<Label, DatasetError> {
    token.parse().map_err(|_| DatasetError::UnknownLabel {
        line,
        token: token.to_string(),
    })
}

fn parse_split(token: Option<&str>, line: usize) -> Result<Split, DatasetError> {
    match token.map(str::trim) {
        None | Some("") => Ok(Split::Train),
        Some(t) => t.parse().map_err(|_| DatasetError::UnknownSplit {
            line,
            token: t.to_string(),
        }),
    }
}

/// Reads a corpus file. Missing ids become the 1-based line number and a
/// missing split defaults to `Train`.
pub fn import_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus, DatasetError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    read_corpus(file, format, name)
}

pub fn read_corpus<R: Read>(
    input: R,
    format: Format,
    name: impl Into<String>,
) -> Result<Corpus, DatasetError> {
    let items = match format {
        Format::Jsonl => read_jsonl(input)?,
        Format::Csv => read_csv(input)?,
    };
    Corpus::new(name, items)
}

fn read_jsonl<R: Read>(input: R) -> Result<Vec<LabeledSentence>, DatasetError> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecordIn = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if rec.text.trim().is_empty() {
            return Err(DatasetError::EmptyText { line: line_no });
        }
        items.push(LabeledSentence {
            id: rec.id.unwrap_or_else(|| line_no.to_string()),
            label: parse_label(&rec.label, line_no)?,
            split: parse_split(rec.split.as_deref(), line_no)?,
            text: rec.text,
        });
    }
    Ok(items)
}

struct CsvColumns {
    id: Option<usize>,
    text: usize,
    label: usize,
    split: Option<usize>,
}

fn header_columns(record: &csv::StringRecord) -> Option<CsvColumns> {
    let find = |name: &str| {
        record
            .iter()
            .position(|f| f.trim().eq_ignore_ascii_case(name))
    };
    Some(CsvColumns {
        text: find("text")?,
        label: find("label")?,
        id: find("id"),
        split: find("split"),
    })
}

fn read_csv<R: Read>(input: R) -> Result<Vec<LabeledSentence>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut columns = CsvColumns {
        id: None,
        text: 0,
        label: 1,
        split: Some(2),
    };
    let mut items = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
            reason: e.to_string(),
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if i == 0 {
            if let Some(cols) = header_columns(&record) {
                columns = cols;
                continue;
            }
        }
        let field = |idx: usize| record.get(idx);
        let text = field(columns.text).ok_or_else(|| DatasetError::Parse {
            line: line_no,
            reason: "missing text field".into(),
        })?;
        let label = field(columns.label).ok_or_else(|| DatasetError::Parse {
            line: line_no,
            reason: "missing label field".into(),
        })?;
        if text.trim().is_empty() {
            return Err(DatasetError::EmptyText { line: line_no });
        }
        let id = columns
            .id
            .and_then(field)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| line_no.to_string());
        items.push(LabeledSentence {
            id,
            text: text.to_string(),
            label: parse_label(label, line_no)?,
            split: parse_split(columns.split.and_then(field), line_no)?,
        });
    }
    Ok(items)
}

const POS_OPENERS: &[&str] = &[
    "", "hey, ", "excuse me, ", "quick question, ", "honestly, ", "so ", "wait, ", "ok ",
];
const POS_CORES: &[&str] = &[
    "are you a robot",
    "am i talking to a human",
    "are you a real person",
    "is this a chatbot",
    "are you an ai",
    "am i chatting with a bot",
    "are you human",
    "is this an automated system",
    "are you a machine",
    "can you tell me if you are a chatbot",
    "do i speak with a real human",
    "is there a person on the other end",
    "are you a computer program",
    "was that answer written by a bot",
];
const POS_CLOSERS: &[&str] = &["?", " right now?", " or not?", " by any chance?", " for real?"];

const NEG_OPENERS: &[&str] = &["", "please ", "hey, ", "can you ", "i want to ", "quickly "];
const NEG_CORES: &[&str] = &[
    "check the weather for tomorrow",
    "recommend a good pasta recipe",
    "reset my account password",
    "find the opening hours of the store",
    "book a table for two tonight",
    "play some relaxing music",
    "tell me how far the airport is",
    "share a joke about cats",
    "name the capital of france",
    "remind me to call my mother",
    "count the calories in an apple",
    "translate hello into spanish",
    "order new running shoes",
    "plan a trip to the mountains",
];
const NEG_CLOSERS: &[&str] = &["", ".", " today.", " soon.", " if possible.", " thanks!"];

fn compose(rng: &mut rng::Rng, openers: &[&str], cores: &[&str], closers: &[&str]) -> String {
    let o = openers.choose(rng).copied().unwrap_or("");
    let c = cores.choose(rng).copied().unwrap_or("");
    let z = closers.choose(rng).copied().unwrap_or("");
    let mut s = format!("{o}{c}{z}");
    if let Some(first) = s.get(0..1) {
        let upper = first.to_uppercase();
        s.replace_range(0..1, &upper);
    }
    s
}

/// Deterministic two-intent corpus: identity questions (`Pos`) against
/// unrelated assistant requests (`Neg`). Every fifth item of each class
/// is placed in the test split.
pub fn synth_corpus(n_per_class: usize, seed: u64) -> Corpus {
    let n = n_per_class.max(1);
    let mut items = Vec::with_capacity(2 * n);
    for (label, openers, cores, closers) in [
        (Label::Pos, POS_OPENERS, POS_CORES, POS_CLOSERS),
        (Label::Neg, NEG_OPENERS, NEG_CORES, NEG_CLOSERS),
    ] {
        let mut rng = rng::stream(seed, label.as_str(), 0);
        for i in 0..n {
            items.push(LabeledSentence {
                id: format!("{}-{:04}", label.as_str(), i),
                text: compose(&mut rng, openers, cores, closers),
                label,
                split: if i % 5 == 4 { Split::Test } else { Split::Train },
            });
        }
    }
    Corpus::new(format!("synth-{n}-{seed}"), items).expect("synthetic corpus is valid")
}
