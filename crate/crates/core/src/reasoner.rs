//! Few-shot masking client: prompts an instruction-tuned LLM to produce
//! (masked, alternative) variants of sentences, parses and validates the
//! responses, and never drops a sample silently.
//!
//! Transports are pluggable and record/replay-capable, so the whole masking
//! pipeline can run offline from a recorded session.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SentenceRecord;
use crate::error::{Error, Result};

/// System prompt for the GLM-4 family (ends with the explicit response-format
/// reminder).
pub const GLM4_SYSTEM_PROMPT: &str = include_str!("../data/prompt_glm4_system.txt");
/// System prompt for the Llama-3 family.
pub const LLAMA3_SYSTEM_PROMPT: &str = include_str!("../data/prompt_llama3_system.txt");

pub const GLM4_ID: &str = "glm-4-9b-chat";
pub const LLAMA3_ID: &str = "llama-3.1-8b-instruct";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerFamily {
    Glm4,
    Llama3,
}

impl ReasonerFamily {
    pub fn for_id(id: &str) -> Result<Self> {
        match id {
            GLM4_ID => Ok(Self::Glm4),
            LLAMA3_ID => Ok(Self::Llama3),
            other => Err(Error::Config(format!("unknown reasoner id {other:?}"))),
        }
    }

    pub fn system_prompt(self) -> &'static str {
        match self {
            Self::Glm4 => GLM4_SYSTEM_PROMPT,
            Self::Llama3 => LLAMA3_SYSTEM_PROMPT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    pub reasoner_id: String,
    pub batch_size: usize,
    pub top_k: usize,
    pub max_length: usize,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self { reasoner_id: GLM4_ID.into(), batch_size: 128, top_k: 1, max_length: 2500 }
    }
}

/// (system, user) prompt pair for one sentence.
pub fn build_prompt(reasoner_id: &str, original: &str) -> Result<(String, String)> {
    let family = ReasonerFamily::for_id(reasoner_id)?;
    Ok((
        family.system_prompt().to_string(),
        format!("Please provide both masked and alternative versions for the following text: \"{original}\""),
    ))
}

/// One placeholder occurrence in the masked text (char offsets, half-open).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// A validated (original, masked, alternative) sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTriple {
    pub original: String,
    pub masked: String,
    pub alternative: String,
    pub placeholders: Vec<Placeholder>,
    pub reasoner_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectionCode {
    /// Response has no `[SEP]` separator.
    NoSeparator,
    /// Masked text differs from the original yet contains no placeholder.
    NoPlaceholders,
    /// Placeholder tokens leaked into the alternative text.
    PlaceholderInAlternative,
    /// Response or one of its halves is empty.
    Empty,
    /// Transport failed after the retry budget.
    Transport,
}

impl fmt::Display for RejectionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NoSeparator => "NO_SEPARATOR",
            Self::NoPlaceholders => "NO_PLACEHOLDERS",
            Self::PlaceholderInAlternative => "PLACEHOLDER_IN_ALTERNATIVE",
            Self::Empty => "EMPTY",
            Self::Transport => "TRANSPORT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: RejectionCode,
    pub detail: String,
}

/// Parse result: the triple plus non-fatal warnings (e.g. placeholder
/// consistency, which the prompt instructs but cannot be verified).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub triple: MaskedTriple,
    pub warnings: Vec<String>,
}

fn placeholder_regex() -> Regex {
    Regex::new(r"<[A-Z_]+>|\[\[[A-Z_]+\]\]").expect("valid regex")
}

fn byte_to_char_index(s: &str) -> BTreeMap<usize, usize> {
    let mut map: BTreeMap<usize, usize> = s.char_indices().enumerate().map(|(c, (b, _))| (b, c)).collect();
    map.insert(s.len(), s.chars().count());
    map
}

/// All placeholders in `text` with char spans, ascending.
pub fn find_placeholders(text: &str) -> Vec<Placeholder> {
    let re = placeholder_regex();
    let b2c = byte_to_char_index(text);
    re.find_iter(text)
        .map(|m| {
            let raw = m.as_str();
            let label = raw.trim_matches(|c| c == '<' || c == '>' || c == '[' || c == ']');
            Placeholder {
                label: label.to_string(),
                start: b2c[&m.start()],
                end: b2c[&m.end()],
            }
        })
        .collect()
}

fn strip_prefix_label(text: &str, label: &str) -> String {
    let re = Regex::new(&format!(r"(?i)^\s*{label}\s+version\s*:\s*")).expect("valid regex");
    re.replace(text, "").into_owned()
}

/// Split the raw response on the first `[SEP]`, strip the optional
/// "Masked version:"/"Alternative version:" labels, extract placeholders,
/// and validate.
pub fn parse_response(
    raw: &str,
    original: &str,
    reasoner_id: &str,
) -> std::result::Result<ParsedResponse, Rejection> {
    if raw.trim().is_empty() {
        return Err(Rejection { code: RejectionCode::Empty, detail: "empty response".into() });
    }
    let Some((left, right)) = raw.split_once("[SEP]") else {
        return Err(Rejection {
            code: RejectionCode::NoSeparator,
            detail: "response has no [SEP]".into(),
        });
    };
    let masked = strip_prefix_label(left, "masked").trim().to_string();
    let alternative = strip_prefix_label(right, "alternative").trim().to_string();
    if masked.is_empty() || alternative.is_empty() {
        return Err(Rejection {
            code: RejectionCode::Empty,
            detail: "empty masked or alternative half".into(),
        });
    }
    if !find_placeholders(&alternative).is_empty() {
        return Err(Rejection {
            code: RejectionCode::PlaceholderInAlternative,
            detail: format!("alternative still contains placeholders: {alternative:?}"),
        });
    }
    let placeholders = find_placeholders(&masked);
    if placeholders.is_empty() && masked != original {
        return Err(Rejection {
            code: RejectionCode::NoPlaceholders,
            detail: "masked text differs from original but has no placeholders".into(),
        });
    }
    let mut warnings = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &placeholders {
        *seen.entry(p.label.as_str()).or_default() += 1;
    }
    for (label, n) in seen {
        if n > 1 {
            warnings.push(format!(
                "placeholder <{label}> used {n} times; cannot verify the occurrences denote the same entity"
            ));
        }
    }
    Ok(ParsedResponse {
        triple: MaskedTriple {
            original: original.to_string(),
            masked,
            alternative,
            placeholders,
            reasoner_id: reasoner_id.to_string(),
        },
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

/// Chat-style completion port.
pub trait ReasonerTransport {
    fn id(&self) -> &str;
    fn complete(&mut self, system: &str, user: &str) -> Result<String>;
}

fn request_key(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0x1f]);
    h.update(user.as_bytes());
    format!("{:x}", h.finalize())
}

/// In-memory transport keyed by the user prompt (test fixtures, fault
/// injection).
pub struct ScriptedTransport {
    id: String,
    responses: BTreeMap<String, String>,
}

impl ScriptedTransport {
    pub fn new(id: &str) -> Self {
        Self { id: id.to_string(), responses: BTreeMap::new() }
    }

    /// Register the response for the prompt built from `original`.
    pub fn script(&mut self, reasoner_id: &str, original: &str, response: &str) -> Result<()> {
        let (_, user) = build_prompt(reasoner_id, original)?;
        self.responses.insert(user, response.to_string());
        Ok(())
    }

    pub fn script_user_prompt(&mut self, user: &str, response: &str) {
        self.responses.insert(user.to_string(), response.to_string());
    }
}

impl ReasonerTransport for ScriptedTransport {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&mut self, _system: &str, user: &str) -> Result<String> {
        self.responses
            .get(user)
            .cloned()
            .ok_or_else(|| Error::Transport {
                msg: format!("no scripted response for prompt {user:?}"),
                retries: 0,
            })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReplayEntry {
    key: String,
    response: String,
}

/// Replays a recorded session from JSONL, keyed by a hash of (system, user).
pub struct ReplayTransport {
    id: String,
    entries: BTreeMap<String, String>,
}

impl ReplayTransport {
    pub fn load(id: &str, path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(line).map_err(|e| {
                Error::MalformedLine { line: i + 1, msg: e.to_string() }
            })?;
            entries.insert(entry.key, entry.response);
        }
        Ok(Self { id: id.to_string(), entries })
    }
}

impl ReasonerTransport for ReplayTransport {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&mut self, system: &str, user: &str) -> Result<String> {
        let key = request_key(system, user);
        self.entries.get(&key).cloned().ok_or_else(|| Error::Transport {
            msg: format!("no recorded response for request key {key}"),
            retries: 0,
        })
    }
}

/// Wraps another transport and persists every successful response so the run
/// can later be replayed offline.
pub struct RecordingTransport<T: ReasonerTransport> {
    inner: T,
    entries: Vec<ReplayEntry>,
}

impl<T: ReasonerTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, entries: Vec::new() }
    }

    /// Write the recorded session as JSONL and return the inner transport.
    pub fn finish(self, path: impl AsRef<std::path::Path>) -> Result<T> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(self.inner)
    }
}

impl<T: ReasonerTransport> ReasonerTransport for RecordingTransport<T> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&mut self, system: &str, user: &str) -> Result<String> {
        let response = self.inner.complete(system, user)?;
        self.entries.push(ReplayEntry { key: request_key(system, user), response: response.clone() });
        Ok(response)
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

const TRANSPORT_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub index: usize,
    pub record_id: String,
    pub code: RejectionCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningEntry {
    pub index: usize,
    pub record_id: String,
    pub message: String,
}

/// Append-only log of everything that did not become a clean triple.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionLog {
    pub rejected: Vec<RejectedSample>,
    pub warnings: Vec<WarningEntry>,
}

/// Output of [`generate_triples`]: slot `i` holds the triple for record `i`
/// or `None` when that record was rejected (and logged).
pub struct GenerateOutcome {
    pub triples: Vec<Option<MaskedTriple>>,
    pub log: RejectionLog,
}

/// Run the masking task over `records`, preserving order. Each record either
/// yields a triple or a logged rejection; transport failures are retried up
/// to a fixed budget first.
pub fn generate_triples(
    records: &[SentenceRecord],
    cfg: &ReasonerConfig,
    transport: &mut dyn ReasonerTransport,
) -> Result<GenerateOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    ReasonerFamily::for_id(&cfg.reasoner_id)?;
    let mut triples = Vec::with_capacity(records.len());
    let mut log = RejectionLog::default();
    for batch in records.chunks(cfg.batch_size) {
        for record in batch {
            let index = triples.len();
            let (system, user) = build_prompt(&cfg.reasoner_id, &record.text)?;
            let mut response = None;
            let mut last_err = String::new();
            for _attempt in 0..TRANSPORT_RETRIES {
                match transport.complete(&system, &user) {
                    Ok(r) => {
                        response = Some(r);
                        break;
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            let Some(raw) = response else {
                log.rejected.push(RejectedSample {
                    index,
                    record_id: record.id.clone(),
                    code: RejectionCode::Transport,
                    detail: format!("{last_err} (after {TRANSPORT_RETRIES} attempts)"),
                });
                triples.push(None);
                continue;
            };
            match parse_response(&raw, &record.text, &cfg.reasoner_id) {
                Ok(parsed) => {
                    for w in parsed.warnings {
                        log.warnings.push(WarningEntry {
                            index,
                            record_id: record.id.clone(),
                            message: w,
                        });
                    }
                    triples.push(Some(parsed.triple));
                }
                Err(rej) => {
                    log.rejected.push(RejectedSample {
                        index,
                        record_id: record.id.clone(),
                        code: rej.code,
                        detail: rej.detail,
                    });
                    triples.push(None);
                }
            }
        }
    }
    Ok(GenerateOutcome { triples, log })
}

/// Persist triples as JSONL.
pub fn save_triples(path: impl AsRef<std::path::Path>, triples: &[MaskedTriple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_triples(path: impl AsRef<std::path::Path>) -> Result<Vec<MaskedTriple>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
