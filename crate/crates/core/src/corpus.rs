//! Sentence corpora: JSONL interchange, importers, splits, and summaries.
//!
//! Canonical on-disk form is JSONL, one record per line:
//! `{"id": "...", "text": "...", "split": "train|dev|test"}` where `id` and
//! `split` are optional (missing ids are assigned from line numbers, missing
//! splits default to `test`). Importers convert native dataset formats into
//! this shape.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textops::NerPort;

/// Source dataset tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Pc,
    Qnli,
    Altlex,
    Synthetic,
}

impl DatasetId {
    /// Train/dev/test percentages used when a dataset is split from scratch.
    pub fn default_ratios(self) -> (u8, u8, u8) {
        match self {
            DatasetId::Pc => (82, 9, 9),
            DatasetId::Qnli => (95, 0, 5),
            DatasetId::Altlex => (0, 0, 100),
            DatasetId::Synthetic => (82, 9, 9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// One sentence with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub dataset: DatasetId,
    pub split: Split,
}

#[derive(Debug, Deserialize)]
struct RawLine {
    id: Option<String>,
    text: Option<String>,
    split: Option<String>,
}

fn parse_split(s: &str, line: usize) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "dev" | "valid" | "validation" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        other => Err(Error::MalformedLine {
            line,
            msg: format!("unknown split {other:?}"),
        }),
    }
}

/// Streaming JSONL reader; malformed lines surface as errors that name the
/// offending line number.
pub struct JsonlReader<R: BufRead> {
    reader: R,
    dataset: DatasetId,
    line_no: usize,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R, dataset: DatasetId) -> Self {
        Self { reader, dataset, line_no: 0 }
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<SentenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut buf = String::new();
            self.line_no += 1;
            match self.reader.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            let line = buf.trim();
            if line.is_empty() {
                continue; // blank lines are tolerated
            }
            let raw: RawLine = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(Error::MalformedLine {
                        line: self.line_no,
                        msg: e.to_string(),
                    }))
                }
            };
            let text = match raw.text {
                Some(t) if !t.trim().is_empty() => t,
                _ => {
                    return Some(Err(Error::MalformedLine {
                        line: self.line_no,
                        msg: "missing or empty \"text\"".into(),
                    }))
                }
            };
            let split = match raw.split.as_deref() {
                Some(s) => match parse_split(s, self.line_no) {
                    Ok(sp) => sp,
                    Err(e) => return Some(Err(e)),
                },
                None => Split::Test,
            };
            return Some(Ok(SentenceRecord {
                id: raw.id.unwrap_or_else(|| self.line_no.to_string()),
                text,
                dataset: self.dataset,
                split,
            }));
        }
    }
}

/// Load a JSONL corpus file eagerly.
pub fn load_dataset(path: impl AsRef<Path>, dataset: DatasetId) -> Result<Vec<SentenceRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    JsonlReader::new(std::io::BufReader::new(file), dataset).collect()
}

/// Write records as JSONL.
pub fn save_dataset(path: impl AsRef<Path>, records: &[SentenceRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Retag records with train/dev/test splits.
///
/// Deterministic: a seed-keyed shuffle followed by contiguous partition, so
/// the same `(records, ratios, seed)` always yields the same assignment.
/// Ratios are percentages and must sum to 100.
pub fn apply_split(
    mut records: Vec<SentenceRecord>,
    ratios: (u8, u8, u8),
    seed: u64,
) -> Result<Vec<SentenceRecord>> {
    let (r_train, r_dev, r_test) = ratios;
    if r_train as u32 + r_dev as u32 + r_test as u32 != 100 {
        return Err(Error::Config(format!(
            "split ratios must sum to 100, got {ratios:?}"
        )));
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let c1 = round_half_up(n as f64 * r_train as f64 / 100.0);
    let c2 = round_half_up(n as f64 * (r_train + r_dev) as f64 / 100.0);
    for (rank, &idx) in order.iter().enumerate() {
        records[idx].split = if rank < c1 {
            Split::Train
        } else if rank < c2 {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(records)
}

/// Deterministic subset of size `round(fraction * N)`, order preserved.
pub fn sample_fraction(
    records: &[SentenceRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<SentenceRecord>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = records.len();
    let k = round_half_up(fraction * n as f64).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| records[i].clone()).collect())
}

/// Per-split record counts.
pub fn split_counts(records: &[SentenceRecord]) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for r in records {
        match r.split {
            Split::Train => c.0 += 1,
            Split::Dev => c.1 += 1,
            Split::Test => c.2 += 1,
        }
    }
    c
}

/// Records belonging to one split.
pub fn of_split(records: &[SentenceRecord], split: Split) -> Vec<SentenceRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

/// Corpus-level statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub sentence_count: usize,
    /// Mean whitespace word count per sentence.
    pub avg_sentence_length: f64,
    /// Distinct lowercase entity surfaces found by the NER port.
    pub unique_named_entities: usize,
    /// (train, dev, test) record counts.
    pub split_ratio: (usize, usize, usize),
}

/// Summarize a corpus; word counts are whitespace tokens of the lowercased
/// text, entities come from the supplied NER port.
pub fn summarize(records: &[SentenceRecord], ner: &dyn NerPort) -> DatasetSummary {
    let sentence_count = records.len();
    let total_words: usize = records
        .iter()
        .map(|r| r.text.to_lowercase().split_whitespace().count())
        .sum();
    let mut entities: BTreeSet<String> = BTreeSet::new();
    for r in records {
        for e in ner.recognize(&r.text) {
            entities.insert(e.surface.to_lowercase());
        }
    }
    DatasetSummary {
        sentence_count,
        avg_sentence_length: if sentence_count == 0 {
            0.0
        } else {
            total_words as f64 / sentence_count as f64
        },
        unique_named_entities: entities.len(),
        split_ratio: split_counts(records),
    }
}

// ---------------------------------------------------------------------------
// Importers
// ---------------------------------------------------------------------------

/// Flatten dialog JSON into one record per utterance.
///
/// Accepts `{"train": [...], "valid": [...], "test": [...]}` where each
/// dialog is either a list of utterance strings or an object with an
/// `"utterances"` string list; also accepts a bare list of dialogs (tagged
/// `test`).
pub fn import_dialog_json(json: &str) -> Result<Vec<SentenceRecord>> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let mut out = Vec::new();

    let mut add_dialogs = |dialogs: &[serde_json::Value], split: Split, tag: &str| -> Result<()> {
        for (di, dialog) in dialogs.iter().enumerate() {
            let utterances: Vec<&str> = match dialog {
                serde_json::Value::Array(items) => {
                    items.iter().filter_map(|v| v.as_str()).collect()
                }
                serde_json::Value::Object(map) => match map.get("utterances") {
                    Some(serde_json::Value::Array(items)) => {
                        items.iter().filter_map(|v| v.as_str()).collect()
                    }
                    _ => {
                        return Err(Error::Data(format!(
                            "dialog {tag}/{di} has no \"utterances\" list"
                        )))
                    }
                },
                _ => return Err(Error::Data(format!("dialog {tag}/{di} is not a list"))),
            };
            for (ui, text) in utterances.iter().enumerate() {
                if text.trim().is_empty() {
                    continue;
                }
                out.push(SentenceRecord {
                    id: format!("pc-{tag}-{di}-{ui}"),
                    text: text.to_string(),
                    dataset: DatasetId::Pc,
                    split,
                });
            }
        }
        Ok(())
    };

    match &value {
        serde_json::Value::Object(map) => {
            for (key, split) in [
                ("train", Split::Train),
                ("valid", Split::Dev),
                ("dev", Split::Dev),
                ("test", Split::Test),
            ] {
                if let Some(serde_json::Value::Array(dialogs)) = map.get(key) {
                    add_dialogs(dialogs, split, key)?;
                }
            }
            if out.is_empty() {
                return Err(Error::Data(
                    "dialog JSON object has no train/valid/dev/test lists".into(),
                ));
            }
        }
        serde_json::Value::Array(dialogs) => add_dialogs(dialogs, Split::Test, "all")?,
        _ => return Err(Error::Data("dialog JSON must be an object or a list".into())),
    }
    Ok(out)
}

/// Import QNLI-style TSV: header `index\tquestion\tsentence\tlabel`; both the
/// question and the sentence become records.
pub fn import_qnli_tsv(tsv: &str) -> Result<Vec<SentenceRecord>> {
    let mut out = Vec::new();
    let mut lines = tsv.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(Error::Data("empty TSV".into())),
    };
    let cols: Vec<&str> = header.split('\t').collect();
    let qi = cols.iter().position(|c| *c == "question");
    let si = cols.iter().position(|c| *c == "sentence");
    let (qi, si) = match (qi, si) {
        (Some(q), Some(s)) => (q, s),
        _ => {
            return Err(Error::Data(
                "TSV header must contain \"question\" and \"sentence\" columns".into(),
            ))
        }
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() <= qi.max(si) {
            return Err(Error::MalformedLine {
                line: i + 1,
                msg: format!("expected at least {} tab-separated fields", qi.max(si) + 1),
            });
        }
        for (suffix, field) in [("q", qi), ("s", si)] {
            let text = fields[field].trim();
            if !text.is_empty() {
                out.push(SentenceRecord {
                    id: format!("qnli-{}-{suffix}", i + 1),
                    text: text.to_string(),
                    dataset: DatasetId::Qnli,
                    split: Split::Train,
                });
            }
        }
    }
    Ok(out)
}

/// Import plain text, one sentence per line (AltLex-style evaluation sets).
pub fn import_text_lines(text: &str, dataset: DatasetId) -> Vec<SentenceRecord> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| SentenceRecord {
            id: format!("line-{}", i + 1),
            text: l.trim().to_string(),
            dataset,
            split: Split::Test,
        })
        .collect()
}
