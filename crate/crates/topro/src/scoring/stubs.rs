//! Stub generators for exercising the generative decoding path.

use std::collections::HashMap;

use super::{Generator, ScoringError};
use crate::corpus::{CorpusSplit, Task};
use crate::pvp::{render_generative_input, GenerativePromptKind, PromptTemplate, PvpError, Verbalizer};

fn truncate_units(text: &str, max_units: usize) -> String {
    text.split_whitespace()
        .take(max_units)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Answers every known input with the gold tag string of the token it was
/// rendered from; unknown inputs yield an empty string. Inputs are keyed by
/// exact prompt text, so construction must use the same prompt kind and
/// template as the caller.
#[derive(Debug, Clone)]
pub struct EchoGoldGenerator {
    answers: HashMap<String, String>,
}

impl EchoGoldGenerator {
    pub fn from_split(
        split: &CorpusSplit,
        task: Task,
        kind: GenerativePromptKind,
        icl_template: Option<&PromptTemplate>,
        verbalizer: &Verbalizer,
    ) -> Result<Self, PvpError> {
        let mut answers = HashMap::new();
        for sentence in split.sentences() {
            for i in 0..sentence.len() {
                if let Some(tag) = sentence.tag(i) {
                    let input =
                        render_generative_input(sentence, i, task, kind, icl_template, verbalizer)?;
                    answers.insert(input, tag.to_string());
                }
            }
        }
        Ok(Self { answers })
    }
}

impl Generator for EchoGoldGenerator {
    fn generate(
        &self,
        input: &str,
        max_target_length: usize,
        _beam_width: usize,
    ) -> Result<String, ScoringError> {
        Ok(self
            .answers
            .get(input)
            .map(|tag| truncate_units(tag, max_target_length))
            .unwrap_or_default())
    }
}

/// Always generates the empty string, the worst-case malformed output.
#[derive(Debug, Clone, Copy, Default)]
pub struct SilentGenerator;

impl Generator for SilentGenerator {
    fn generate(&self, _: &str, _: usize, _: usize) -> Result<String, ScoringError> {
        Ok(String::new())
    }
}

/// Generates the same text for every input.
#[derive(Debug, Clone)]
pub struct FixedGenerator(pub String);

impl Generator for FixedGenerator {
    fn generate(
        &self,
        _: &str,
        max_target_length: usize,
        _: usize,
    ) -> Result<String, ScoringError> {
        Ok(truncate_units(&self.0, max_target_length))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledSentence, SplitName};

    #[test]
    fn echo_generator_returns_gold_tags() {
        let sentence =
            LabeledSentence::labeled("s", &["Paris", "lives"], &["B-LOC", "O"]).unwrap();
        let split = CorpusSplit::new(SplitName::Test, "en", vec![sentence.clone()]);
        let verbalizer = Verbalizer::panx();
        let echo = EchoGoldGenerator::from_split(
            &split,
            Task::Panx,
            GenerativePromptKind::Seq2seq,
            None,
            &verbalizer,
        )
        .unwrap();
        let input = render_generative_input(
            &sentence,
            0,
            Task::Panx,
            GenerativePromptKind::Seq2seq,
            None,
            &verbalizer,
        )
        .unwrap();
        assert_eq!(echo.generate(&input, 150, 3).unwrap(), "B-LOC");
        assert_eq!(echo.generate("unseen prompt", 150, 3).unwrap(), "");
    }

    #[test]
    fn output_respects_the_length_bound() {
        let generator = FixedGenerator("one two three four".into());
        assert_eq!(generator.generate("x", 2, 1).unwrap(), "one two");
        assert_eq!(SilentGenerator.generate("x", 2, 1).unwrap(), "");
    }
}
