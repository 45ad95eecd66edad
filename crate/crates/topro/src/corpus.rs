//! Tag sets and CoNLL-style corpora.
//!
//! Corpora are pre-tokenized: one token per line, an optional tab-separated
//! tag, a blank line between sentences. Tokens are taken as given and never
//! re-tokenized. Malformed IOB2 spans are loaded and reported by
//! [`validate_iob2`] rather than rejected, since tokens are scored
//! independently downstream and real corpora contain such spans.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building tag sets or parsing corpora.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: unknown tag `{tag}`")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: expected `token` or `token<TAB>tag`, found {fields} tab-separated fields")]
    RaggedLine { line: usize, fields: usize },
    #[error("no sentences found in corpus input")]
    EmptyCorpus,
    #[error("line {line}: sentence mixes tagged and untagged tokens")]
    MixedTagging { line: usize },
    #[error("sentence `{id}` has no tokens")]
    EmptySentence { id: String },
    #[error("sentence `{id}`: {tokens} tokens but {tags} tags")]
    TagCountMismatch { id: String, tokens: usize, tags: usize },
    #[error("tag set `{task}`: {reason}")]
    InvalidTagSet { task: String, reason: String },
    #[error("unknown task `{0}` (expected `panx` or `udpos`)")]
    UnknownTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How tags are structured: IOB2 span markup or a flat label inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    Iob2,
    Plain,
}

/// The two built-in tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Named entity recognition over IOB2 tags.
    Panx,
    /// Part-of-speech tagging over the universal tag inventory.
    Udpos,
}

impl Task {
    pub fn tagset(self) -> TagSet {
        match self {
            Task::Panx => TagSet::panx(),
            Task::Udpos => TagSet::udpos(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Panx => write!(f, "panx"),
            Task::Udpos => write!(f, "udpos"),
        }
    }
}

impl FromStr for Task {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "panx" => Ok(Task::Panx),
            "udpos" => Ok(Task::Udpos),
            other => Err(CorpusError::UnknownTask(other.to_string())),
        }
    }
}

/// An ordered, canonical label inventory for one task.
///
/// Label order is fixed and meaningful: downstream argmax decoding breaks
/// ties by the first label in this order. Deserialization re-validates the
/// invariants, so no path constructs an inconsistent tag set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTagSet")]
pub struct TagSet {
    task_name: String,
    labels: Vec<String>,
    scheme: TagScheme,
}

#[derive(Deserialize)]
struct RawTagSet {
    task_name: String,
    labels: Vec<String>,
    scheme: TagScheme,
}

impl TryFrom<RawTagSet> for TagSet {
    type Error = CorpusError;

    fn try_from(raw: RawTagSet) -> Result<Self, Self::Error> {
        TagSet::new(raw.task_name, raw.labels, raw.scheme)
    }
}

impl TagSet {
    pub fn new(
        task_name: impl Into<String>,
        labels: Vec<String>,
        scheme: TagScheme,
    ) -> Result<Self, CorpusError> {
        let task_name = task_name.into();
        let invalid = |reason: String| CorpusError::InvalidTagSet {
            task: task_name.clone(),
            reason,
        };
        if labels.is_empty() {
            return Err(invalid("label list is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(invalid("empty label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(invalid(format!("duplicate label `{label}`")));
            }
            if scheme == TagScheme::Iob2
                && label != "O"
                && !(label.starts_with("B-") || label.starts_with("I-"))
            {
                return Err(invalid(format!(
                    "label `{label}` does not match `B-*`/`I-*`/`O` under the IOB2 scheme"
                )));
            }
        }
        Ok(Self {
            task_name,
            labels,
            scheme,
        })
    }

    /// The 7 IOB2 named-entity tags, in canonical order.
    pub fn panx() -> Self {
        Self::new(
            "panx",
            ["B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-PER", "I-PER", "O"]
                .into_iter()
                .map(String::from)
                .collect(),
            TagScheme::Iob2,
        )
        .expect("built-in tag set is valid")
    }

    /// The 17 universal part-of-speech tags, in canonical order.
    pub fn udpos() -> Self {
        Self::new(
            "udpos",
            [
                "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART",
                "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            TagScheme::Plain,
        )
        .expect("built-in tag set is valid")
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn scheme(&self) -> TagScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.labels.iter().any(|l| l == tag)
    }

    /// Position of `tag` in canonical order.
    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == tag)
    }

    /// The task's catch-all label: `O` under IOB2, `X` for flat inventories
    /// when present, otherwise the last label.
    pub fn catch_all(&self) -> &str {
        let preferred = match self.scheme {
            TagScheme::Iob2 => "O",
            TagScheme::Plain => "X",
        };
        if self.contains(preferred) {
            preferred
        } else {
            self.labels.last().expect("tag set is non-empty")
        }
    }
}

/// A pre-tokenized sentence with one gold tag per token when labeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSentence")]
pub struct LabeledSentence {
    sentence_id: String,
    tokens: Vec<String>,
    tags: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawSentence {
    sentence_id: String,
    tokens: Vec<String>,
    tags: Option<Vec<String>>,
}

impl TryFrom<RawSentence> for LabeledSentence {
    type Error = CorpusError;

    fn try_from(raw: RawSentence) -> Result<Self, Self::Error> {
        LabeledSentence::new(raw.sentence_id, raw.tokens, raw.tags)
    }
}

impl LabeledSentence {
    pub fn new(
        sentence_id: impl Into<String>,
        tokens: Vec<String>,
        tags: Option<Vec<String>>,
    ) -> Result<Self, CorpusError> {
        let sentence_id = sentence_id.into();
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence { id: sentence_id });
        }
        if let Some(tags) = &tags {
            if tags.len() != tokens.len() {
                return Err(CorpusError::TagCountMismatch {
                    id: sentence_id,
                    tokens: tokens.len(),
                    tags: tags.len(),
                });
            }
        }
        Ok(Self {
            sentence_id,
            tokens,
            tags,
        })
    }

    /// Convenience constructor for tests and synthetic data.
    pub fn labeled(id: &str, tokens: &[&str], tags: &[&str]) -> Result<Self, CorpusError> {
        Self::new(
            id,
            tokens.iter().map(|t| t.to_string()).collect(),
            Some(tags.iter().map(|t| t.to_string()).collect()),
        )
    }

    pub fn sentence_id(&self) -> &str {
        &self.sentence_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref()
    }

    pub fn tag(&self, index: usize) -> Option<&str> {
        self.tags.as_ref().and_then(|t| t.get(index)).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface text: tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Which portion of a dataset a file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitName::Train => write!(f, "train"),
            SplitName::Dev => write!(f, "dev"),
            SplitName::Test => write!(f, "test"),
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// All sentences of one split in one language.
///
/// Immutable after construction and safe to share across concurrent readers.
/// The language code lives here, not on the sentence, because source datasets
/// are organized as per-language files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    name: SplitName,
    language: String,
    sentences: Vec<LabeledSentence>,
}

impl CorpusSplit {
    pub fn new(name: SplitName, language: impl Into<String>, sentences: Vec<LabeledSentence>) -> Self {
        Self {
            name,
            language: language.into(),
            sentences,
        }
    }

    pub fn name(&self) -> SplitName {
        self.name
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// True when every sentence carries tags.
    pub fn is_labeled(&self) -> bool {
        self.sentences.iter().all(|s| s.tags().is_some())
    }
}

/// Parse a CoNLL-style stream into a split.
///
/// One token per line, `token<TAB>tag` or bare `token` for unlabeled data; a
/// blank line ends a sentence and lines starting with `#` are skipped. A
/// trailing sentence without a final blank line is included. Sentence ids are
/// assigned as `{language}-{split}-{counter}` in input order.
pub fn parse_conll(
    reader: impl BufRead,
    tagset: &TagSet,
    name: SplitName,
    language: &str,
) -> Result<CorpusSplit, CorpusError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut untagged_lines = 0usize;

    let mut flush = |tokens: &mut Vec<String>,
                     tags: &mut Vec<String>,
                     untagged: &mut usize|
     -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let id = format!("{language}-{name}-{:06}", sentences.len());
        let sentence_tags = if *untagged == tokens.len() {
            None
        } else {
            Some(std::mem::take(tags))
        };
        sentences.push(LabeledSentence::new(
            id,
            std::mem::take(tokens),
            sentence_tags,
        )?);
        *untagged = 0;
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = line?;
        let line = raw.strip_suffix('\r').unwrap_or(raw.as_str());
        if line.is_empty() {
            flush(&mut tokens, &mut tags, &mut untagged_lines)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [token] => {
                if !tags.is_empty() {
                    return Err(CorpusError::MixedTagging { line: line_no });
                }
                untagged_lines += 1;
                tokens.push(token.to_string());
            }
            [token, tag] => {
                if untagged_lines > 0 {
                    return Err(CorpusError::MixedTagging { line: line_no });
                }
                if !tagset.contains(tag) {
                    return Err(CorpusError::UnknownTag {
                        line: line_no,
                        tag: tag.to_string(),
                    });
                }
                tokens.push(token.to_string());
                tags.push(tag.to_string());
            }
            fields => {
                return Err(CorpusError::RaggedLine {
                    line: line_no,
                    fields: fields.len(),
                })
            }
        }
    }
    flush(&mut tokens, &mut tags, &mut untagged_lines)?;

    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(CorpusSplit::new(name, language, sentences))
}

/// Render a split back to CoNLL text: sentences separated by blank lines,
/// one trailing newline.
pub fn serialize_conll(split: &CorpusSplit) -> String {
    let mut out = String::new();
    for (i, sentence) in split.sentences().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (j, token) in sentence.tokens().iter().enumerate() {
            out.push_str(token);
            if let Some(tag) = sentence.tag(j) {
                out.push('\t');
                out.push_str(tag);
            }
            out.push('\n');
        }
    }
    out
}

/// Counting summary for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: String,
    pub language: String,
    pub sentences: usize,
    pub tokens: usize,
    /// Distinct tags observed in the split's labeled sentences.
    pub distinct_labels: usize,
    /// Tag -> occurrence count over labeled sentences.
    pub label_histogram: BTreeMap<String, usize>,
}

/// Counting summaries for a set of splits, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub splits: Vec<SplitStats>,
}

/// Exact sentence, token, and label counts per split.
pub fn dataset_stats(splits: &[CorpusSplit]) -> StatsReport {
    let splits = splits
        .iter()
        .map(|split| {
            let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
            let mut tokens = 0usize;
            for sentence in split.sentences() {
                tokens += sentence.len();
                if let Some(tags) = sentence.tags() {
                    for tag in tags {
                        *histogram.entry(tag.clone()).or_insert(0) += 1;
                    }
                }
            }
            SplitStats {
                split: split.name().to_string(),
                language: split.language().to_string(),
                sentences: split.len(),
                tokens,
                distinct_labels: histogram.len(),
                label_histogram: histogram,
            }
        })
        .collect();
    StatsReport { splits }
}

/// One ill-formed IOB2 position: an `I-X` tag whose predecessor is neither
/// `B-X` nor `I-X`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iob2Violation {
    pub index: usize,
    pub tag: String,
    pub previous: Option<String>,
}

/// Report every IOB2 violation in a sentence; an empty list means the tag
/// sequence is well-formed. Unlabeled sentences report nothing.
pub fn validate_iob2(sentence: &LabeledSentence) -> Vec<Iob2Violation> {
    let Some(tags) = sentence.tags() else {
        return Vec::new();
    };
    let mut violations = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        let Some(entity) = tag.strip_prefix("I-") else {
            continue;
        };
        let previous = if i > 0 { Some(tags[i - 1].as_str()) } else { None };
        let continues = matches!(
            previous,
            Some(prev) if prev.strip_prefix("B-") == Some(entity) || prev.strip_prefix("I-") == Some(entity)
        );
        if !continues {
            violations.push(Iob2Violation {
                index: i,
                tag: tag.clone(),
                previous: previous.map(String::from),
            });
        }
    }
    violations
}
