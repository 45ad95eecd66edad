//! Pattern-verbalizer pairs and prompt rendering.
//!
//! A [`PromptTemplate`] is data, not code: an ordered list of literal
//! segments and `SENTENCE` / `TOKEN` / `MASK` placeholders. Decomposition
//! renders one prompt per token of a sentence, so a sentence of `m` tokens
//! always yields exactly `m` prompt instances. A [`Verbalizer`] is the
//! bijective tag-to-word half of the pair; its word list, in canonical tag
//! order, is the candidate set scored at the mask position.
//!
//! Masked prompts carry the neutral `[MASK]` literal; backend adapters own
//! the substitution to their model-specific mask symbol.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{CorpusSplit, LabeledSentence, TagSet, Task};

/// Neutral mask literal used in rendered masked-mode prompts.
pub const MASK_PLACEHOLDER: &str = "[MASK]";

const SENTENCE_MARKER: &str = "{SENTENCE}";
const TOKEN_MARKER: &str = "{TOKEN}";
const MASK_MARKER: &str = "{MASK}";

/// Errors raised by template construction and prompt rendering.
#[derive(Debug, Error)]
pub enum PvpError {
    #[error("token index {index} out of range for sentence of {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("template `{name}`: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("verbalizer: {0}")]
    InvalidVerbalizer(String),
    #[error("sentence `{0}` has no tags")]
    MissingTags(String),
    #[error("pvp override: {0}")]
    InvalidOverride(String),
}

/// How a template is consumed downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateMode {
    /// Cloze prompt with a mask position scored over candidate words.
    Masked,
    /// Text-to-text input whose target is generated.
    Seq2seq,
    /// Instruction prompt for generative models, no parameter updates.
    Icl,
}

/// One template segment: a literal string or a placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Sentence,
    Token,
    Mask,
}

impl Segment {
    /// Parse the config-file spelling: `{SENTENCE}`, `{TOKEN}`, `{MASK}`,
    /// anything else is a literal.
    pub fn from_marker(s: &str) -> Segment {
        match s {
            SENTENCE_MARKER => Segment::Sentence,
            TOKEN_MARKER => Segment::Token,
            MASK_MARKER => Segment::Mask,
            literal => Segment::Literal(literal.to_string()),
        }
    }

    pub fn to_marker(&self) -> String {
        match self {
            Segment::Literal(s) => s.clone(),
            Segment::Sentence => SENTENCE_MARKER.to_string(),
            Segment::Token => TOKEN_MARKER.to_string(),
            Segment::Mask => MASK_MARKER.to_string(),
        }
    }
}

impl Serialize for Segment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_marker())
    }
}

impl<'de> Deserialize<'de> for Segment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Segment::from_marker(&s))
    }
}

/// A prompt pattern: ordered segments plus the mode they serve.
/// Deserialization re-validates the placeholder counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct PromptTemplate {
    name: String,
    mode: TemplateMode,
    segments: Vec<Segment>,
}

#[derive(Deserialize)]
struct RawTemplate {
    name: String,
    mode: TemplateMode,
    segments: Vec<Segment>,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = PvpError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.name, raw.mode, raw.segments)
    }
}

impl PromptTemplate {
    /// Build a template, enforcing the placeholder counts for its mode:
    /// exactly one `SENTENCE` and one `TOKEN` always, and exactly one `MASK`
    /// in masked mode (none otherwise).
    pub fn new(
        name: impl Into<String>,
        mode: TemplateMode,
        segments: Vec<Segment>,
    ) -> Result<Self, PvpError> {
        let name = name.into();
        let count = |wanted: fn(&Segment) -> bool| segments.iter().filter(|s| wanted(s)).count();
        let sentences = count(|s| matches!(s, Segment::Sentence));
        let tokens = count(|s| matches!(s, Segment::Token));
        let masks = count(|s| matches!(s, Segment::Mask));
        fn invalid(name: &str, reason: String) -> PvpError {
            PvpError::InvalidTemplate {
                name: name.to_string(),
                reason,
            }
        }
        if sentences != 1 {
            return Err(invalid(
                &name,
                format!("expected exactly one SENTENCE placeholder, found {sentences}"),
            ));
        }
        if tokens != 1 {
            return Err(invalid(
                &name,
                format!("expected exactly one TOKEN placeholder, found {tokens}"),
            ));
        }
        let expected_masks = match mode {
            TemplateMode::Masked => 1,
            TemplateMode::Seq2seq | TemplateMode::Icl => 0,
        };
        if masks != expected_masks {
            return Err(invalid(
                &name,
                format!("expected {expected_masks} MASK placeholder(s) in this mode, found {masks}"),
            ));
        }
        Ok(Self { name, mode, segments })
    }

    /// Built-in masked template for named-entity tagging.
    pub fn panx_masked() -> Self {
        Self::new(
            "panx",
            TemplateMode::Masked,
            vec![
                Segment::Sentence,
                Segment::Literal(" The named entity of ".into()),
                Segment::Token,
                Segment::Literal(" is a kind of: ".into()),
                Segment::Mask,
                Segment::Literal(".".into()),
            ],
        )
        .expect("built-in template is valid")
    }

    /// Built-in masked template for part-of-speech tagging.
    pub fn udpos_masked() -> Self {
        Self::new(
            "udpos",
            TemplateMode::Masked,
            vec![
                Segment::Sentence,
                Segment::Literal(" The pos tag of ".into()),
                Segment::Token,
                Segment::Literal(" is a kind of: ".into()),
                Segment::Mask,
                Segment::Literal(".".into()),
            ],
        )
        .expect("built-in template is valid")
    }

    /// Built-in instruction template for named-entity tagging with
    /// generative models. The candidate-word line is part of the pattern
    /// text and is reproduced verbatim, including the `organisation`
    /// spelling; label parsing maps that spelling back to `B-ORG`.
    pub fn panx_icl() -> Self {
        Self::new(
            "panx-icl",
            TemplateMode::Icl,
            vec![
                Segment::Literal(
                    "Named entity type: location organisation person place body name other\nSentence: "
                        .into(),
                ),
                Segment::Sentence,
                Segment::Literal("\nNamed entity type of ".into()),
                Segment::Token,
                Segment::Literal(" in the sentence is".into()),
            ],
        )
        .expect("built-in template is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mode(&self) -> TemplateMode {
        self.mode
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
}

/// Bijective tag-to-word mapping, entries held in canonical tag order.
///
/// Every word is non-empty, whitespace-free, and maps back to exactly one
/// tag. Serializes as its `(tag, word)` entry list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    entries: Vec<(String, String)>,
    word_to_tag: BTreeMap<String, String>,
}

impl Serialize for Verbalizer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Verbalizer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<(String, String)>::deserialize(deserializer)?;
        let word_to_tag: BTreeMap<String, String> = entries
            .iter()
            .map(|(tag, word)| (word.clone(), tag.clone()))
            .collect();
        if word_to_tag.len() != entries.len() {
            return Err(D::Error::custom("verbalizer entries share a word"));
        }
        Ok(Self { entries, word_to_tag })
    }
}

impl Verbalizer {
    /// Validate `pairs` against `tagset` and store them in canonical tag
    /// order: the mapping must cover every label exactly once and no two
    /// tags may share a word.
    pub fn new(
        tagset: &TagSet,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, PvpError> {
        let mut by_tag: BTreeMap<String, String> = BTreeMap::new();
        for (tag, word) in pairs {
            if !tagset.contains(&tag) {
                return Err(PvpError::InvalidVerbalizer(format!(
                    "tag `{tag}` is not in the `{}` tag set",
                    tagset.task_name()
                )));
            }
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(PvpError::InvalidVerbalizer(format!(
                    "word `{word}` for tag `{tag}` must be non-empty and whitespace-free"
                )));
            }
            if by_tag.insert(tag.clone(), word).is_some() {
                return Err(PvpError::InvalidVerbalizer(format!("tag `{tag}` mapped twice")));
            }
        }
        let mut entries = Vec::with_capacity(tagset.len());
        let mut word_to_tag = BTreeMap::new();
        for label in tagset.labels() {
            let word = by_tag.remove(label).ok_or_else(|| {
                PvpError::InvalidVerbalizer(format!("no word for tag `{label}`"))
            })?;
            if let Some(previous) = word_to_tag.insert(word.clone(), label.clone()) {
                return Err(PvpError::InvalidVerbalizer(format!(
                    "word `{word}` is shared by tags `{previous}` and `{label}`"
                )));
            }
            entries.push((label.clone(), word));
        }
        Ok(Self { entries, word_to_tag })
    }

    pub fn word_for(&self, tag: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, w)| w.as_str())
    }

    pub fn tag_for(&self, word: &str) -> Option<&str> {
        self.word_to_tag.get(word).map(|s| s.as_str())
    }

    /// Candidate words in canonical tag order.
    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|(_, w)| w.clone()).collect()
    }

    /// `(tag, word)` pairs in canonical tag order.
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Built-in mapping for the named-entity tags: a hypernym for each
    /// span-initial tag and a hyponym for its continuation.
    pub fn panx() -> Self {
        Self::new(
            &TagSet::panx(),
            [
                ("B-LOC", "location"),
                ("I-LOC", "place"),
                ("B-ORG", "organization"),
                ("I-ORG", "body"),
                ("B-PER", "person"),
                ("I-PER", "name"),
                ("O", "other"),
            ]
            .into_iter()
            .map(|(t, w)| (t.to_string(), w.to_string())),
        )
        .expect("built-in verbalizer is valid")
    }

    /// Built-in mapping for the universal part-of-speech tags.
    pub fn udpos() -> Self {
        Self::new(
            &TagSet::udpos(),
            [
                ("ADJ", "modification"),
                ("ADP", "position"),
                ("ADV", "verbal"),
                ("AUX", "auxiliar"),
                ("CCONJ", "link"),
                ("DET", "determine"),
                ("INTJ", "mode"),
                ("NOUN", "thing"),
                ("NUM", "number"),
                ("PART", "functional"),
                ("PRON", "reference"),
                ("PROPN", "name"),
                ("PUNCT", "punct"),
                ("SCONJ", "condition"),
                ("SYM", "symbol"),
                ("VERB", "verb"),
                ("X", "other"),
            ]
            .into_iter()
            .map(|(t, w)| (t.to_string(), w.to_string())),
        )
        .expect("built-in verbalizer is valid")
    }
}

/// One rendered prompt tied to its source token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub sentence_id: String,
    pub token_index: usize,
    pub text: String,
    pub gold_tag: Option<String>,
}

/// Render the template for one token. `SENTENCE` becomes the tokens joined
/// by single spaces, `TOKEN` the target surface, `MASK` the `[MASK]` literal.
pub fn render_prompt(
    template: &PromptTemplate,
    sentence: &LabeledSentence,
    token_index: usize,
) -> Result<PromptInstance, PvpError> {
    render_prompt_window(template, sentence, token_index, 0, sentence.len())
}

/// Render for one token with the sentence clipped to at most `max_units`
/// whitespace units in the rendered text. Sentence tokens are dropped from
/// the end farthest from the target token until the prompt fits; the
/// template literals, the target token, and the mask are never dropped.
pub fn render_prompt_truncated(
    template: &PromptTemplate,
    sentence: &LabeledSentence,
    token_index: usize,
    max_units: usize,
) -> Result<PromptInstance, PvpError> {
    if token_index >= sentence.len() {
        return Err(PvpError::IndexOutOfRange {
            index: token_index,
            len: sentence.len(),
        });
    }
    let full = render_prompt(template, sentence, token_index)?;
    if full.text.split_whitespace().count() <= max_units {
        return Ok(full);
    }
    let overhead = {
        let probe = render_prompt_window(template, sentence, token_index, token_index, token_index + 1)?;
        probe.text.split_whitespace().count()
    };
    let budget = max_units.saturating_sub(overhead) + 1; // the target token itself stays
    let mut lo = 0usize;
    let mut hi = sentence.len() - 1;
    while hi - lo + 1 > budget.max(1) {
        if token_index - lo >= hi - token_index {
            lo += 1;
        } else {
            hi -= 1;
        }
    }
    render_prompt_window(template, sentence, token_index, lo, hi + 1)
}

fn render_prompt_window(
    template: &PromptTemplate,
    sentence: &LabeledSentence,
    token_index: usize,
    window_start: usize,
    window_end: usize,
) -> Result<PromptInstance, PvpError> {
    let tokens = sentence.tokens();
    if token_index >= tokens.len() {
        return Err(PvpError::IndexOutOfRange {
            index: token_index,
            len: tokens.len(),
        });
    }
    let mut text = String::new();
    for segment in template.segments() {
        match segment {
            Segment::Literal(s) => text.push_str(s),
            Segment::Sentence => {
                let window = &tokens[window_start..window_end];
                for (i, token) in window.iter().enumerate() {
                    if i > 0 {
                        text.push(' ');
                    }
                    text.push_str(token);
                }
            }
            Segment::Token => text.push_str(&tokens[token_index]),
            Segment::Mask => text.push_str(MASK_PLACEHOLDER),
        }
    }
    Ok(PromptInstance {
        sentence_id: sentence.sentence_id().to_string(),
        token_index,
        text,
        gold_tag: sentence.tag(token_index).map(String::from),
    })
}

/// Decompose a sentence into one prompt per token, in token order. Gold tags
/// are copied onto the instances when present.
pub fn decompose(
    template: &PromptTemplate,
    sentence: &LabeledSentence,
) -> Result<Vec<PromptInstance>, PvpError> {
    (0..sentence.len())
        .map(|i| render_prompt(template, sentence, i))
        .collect()
}

/// [`decompose`] with truncation to `max_units` when given.
pub fn decompose_truncated(
    template: &PromptTemplate,
    sentence: &LabeledSentence,
    max_units: Option<usize>,
) -> Result<Vec<PromptInstance>, PvpError> {
    match max_units {
        None => decompose(template, sentence),
        Some(limit) => (0..sentence.len())
            .map(|i| render_prompt_truncated(template, sentence, i, limit))
            .collect(),
    }
}

/// Decompose every sentence of a split. Runs data-parallel when the
/// `parallel` feature is enabled; sentence order is preserved either way.
pub fn decompose_split(
    template: &PromptTemplate,
    split: &CorpusSplit,
    max_units: Option<usize>,
) -> Result<Vec<Vec<PromptInstance>>, PvpError> {
    crate::parallel::try_map_ordered(split.sentences(), |sentence| {
        decompose_truncated(template, sentence, max_units)
    })
}

/// Sequential twin of [`decompose_split`].
pub fn decompose_split_seq(
    template: &PromptTemplate,
    split: &CorpusSplit,
    max_units: Option<usize>,
) -> Result<Vec<Vec<PromptInstance>>, PvpError> {
    crate::parallel::try_map_ordered_seq(split.sentences(), |sentence| {
        decompose_truncated(template, sentence, max_units)
    })
}

/// The built-in pattern-verbalizer pair for a task name.
pub fn builtin_pvp(task: &str) -> Result<(PromptTemplate, Verbalizer), PvpError> {
    match task.parse::<Task>() {
        Ok(Task::Panx) => Ok((PromptTemplate::panx_masked(), Verbalizer::panx())),
        Ok(Task::Udpos) => Ok((PromptTemplate::udpos_masked(), Verbalizer::udpos())),
        Err(_) => Err(PvpError::UnknownTask(task.to_string())),
    }
}

/// The built-in instruction-prompt pair for named-entity tagging: the
/// verbatim candidate-line template plus the standard verbalizer used to map
/// generated words back to tags.
pub fn builtin_icl_pvp() -> (PromptTemplate, Verbalizer) {
    (PromptTemplate::panx_icl(), Verbalizer::panx())
}

/// Which generative rendering to use per token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerativePromptKind {
    Seq2seq,
    Icl,
}

fn topro_suffix_phrase(task: Task) -> &'static str {
    match task {
        Task::Panx => "The named entity of",
        Task::Udpos => "The pos tag of",
    }
}

/// Text-to-text rendering of one token's prompt: the sentence followed by
/// the per-token question, with the raw tag string as the target when the
/// sentence is labeled.
pub fn render_seq2seq_topro(
    sentence: &LabeledSentence,
    token_index: usize,
    task: Task,
) -> Result<(String, Option<String>), PvpError> {
    let tokens = sentence.tokens();
    if token_index >= tokens.len() {
        return Err(PvpError::IndexOutOfRange {
            index: token_index,
            len: tokens.len(),
        });
    }
    let input = format!(
        "{} {} {} is:",
        sentence.text(),
        topro_suffix_phrase(task),
        tokens[token_index]
    );
    let target = sentence.tag(token_index).map(String::from);
    Ok((input, target))
}

/// Text-to-text rendering of a whole labeled sentence: a task-description
/// prefix on the input and `TAG: token` fragments joined by ` $$ ` as the
/// target.
pub fn render_seq2seq_vanilla(
    sentence: &LabeledSentence,
    task: Task,
) -> Result<(String, String), PvpError> {
    let Some(tags) = sentence.tags() else {
        return Err(PvpError::MissingTags(sentence.sentence_id().to_string()));
    };
    let prefix = match task {
        Task::Panx => "NER tagging:",
        Task::Udpos => "POS tagging:",
    };
    let input = format!("{prefix} {}", sentence.text());
    let target = sentence
        .tokens()
        .iter()
        .zip(tags)
        .map(|(token, tag)| format!("{tag}: {token}"))
        .collect::<Vec<_>>()
        .join(" $$ ");
    Ok((input, target))
}

/// Instruction prompt for one token: a candidate-word line built from the
/// verbalizer in canonical tag order, the sentence, and the question line.
pub fn render_icl_prompt(
    sentence: &LabeledSentence,
    token_index: usize,
    verbalizer: &Verbalizer,
) -> Result<String, PvpError> {
    let tokens = sentence.tokens();
    if token_index >= tokens.len() {
        return Err(PvpError::IndexOutOfRange {
            index: token_index,
            len: tokens.len(),
        });
    }
    Ok(format!(
        "Named entity type: {}\nSentence: {}\nNamed entity type of {} in the sentence is",
        verbalizer.words().join(" "),
        sentence.text(),
        tokens[token_index]
    ))
}

/// Render the generative input for one token under the chosen prompt kind.
/// An explicit instruction template takes precedence for the `Icl` kind.
pub fn render_generative_input(
    sentence: &LabeledSentence,
    token_index: usize,
    task: Task,
    kind: GenerativePromptKind,
    icl_template: Option<&PromptTemplate>,
    verbalizer: &Verbalizer,
) -> Result<String, PvpError> {
    match kind {
        GenerativePromptKind::Seq2seq => {
            Ok(render_seq2seq_topro(sentence, token_index, task)?.0)
        }
        GenerativePromptKind::Icl => match icl_template {
            Some(template) => Ok(render_prompt(template, sentence, token_index)?.text),
            None => render_icl_prompt(sentence, token_index, verbalizer),
        },
    }
}

/// One defect found while checking raw verbalizer entries against a model
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerbalizerViolation {
    /// The word does not tokenize to a single vocabulary piece.
    MultiPiece { word: String, pieces: usize },
    /// Two tags share the word, breaking bijectivity.
    Duplicate { word: String },
}

/// Check raw `(tag, word)` entries: every word must be a single vocabulary
/// piece under `probe`, and no word may appear twice.
pub fn validate_verbalizer(
    entries: &[(String, String)],
    probe: impl Fn(&str) -> usize,
) -> Vec<VerbalizerViolation> {
    let mut violations = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, word) in entries {
        *seen.entry(word.as_str()).or_insert(0) += 1;
    }
    let mut reported: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (_, word) in entries {
        if seen[word.as_str()] > 1 && reported.insert(word.as_str()) {
            violations.push(VerbalizerViolation::Duplicate { word: word.clone() });
        }
    }
    for (_, word) in entries {
        if reported.contains(word.as_str()) {
            continue;
        }
        let pieces = probe(word);
        if pieces != 1 {
            violations.push(VerbalizerViolation::MultiPiece {
                word: word.clone(),
                pieces,
            });
        }
    }
    violations
}

#[derive(Deserialize)]
struct OverrideTemplateDoc {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    mode: Option<TemplateMode>,
    segments: Vec<String>,
}

#[derive(Deserialize)]
struct OverrideDoc {
    template: OverrideTemplateDoc,
    verbalizer: BTreeMap<String, String>,
}

/// Load a pattern-verbalizer override from its TOML document. The template
/// is given as `template.segments` (a list of literals and
/// `{SENTENCE}`/`{TOKEN}`/`{MASK}` markers) and the verbalizer as
/// `verbalizer.<TAG> = word` entries covering the tag set.
pub fn load_pvp_override(doc: &str, tagset: &TagSet) -> Result<(PromptTemplate, Verbalizer), PvpError> {
    let parsed: OverrideDoc =
        toml::from_str(doc).map_err(|e| PvpError::InvalidOverride(e.to_string()))?;
    let segments = parsed
        .template
        .segments
        .iter()
        .map(|s| Segment::from_marker(s))
        .collect();
    let template = PromptTemplate::new(
        parsed.template.name.unwrap_or_else(|| "override".into()),
        parsed.template.mode.unwrap_or(TemplateMode::Masked),
        segments,
    )?;
    let verbalizer = Verbalizer::new(tagset, parsed.verbalizer)?;
    Ok((template, verbalizer))
}

impl fmt::Display for PromptInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}: {}", self.sentence_id, self.token_index, self.text)
    }
}
