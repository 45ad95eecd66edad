//! Synthetic corpora for desk-scale verification.
//!
//! Real checkpoint-backed runs are not reproducible on a desk, so the
//! pipeline is verified on generated data instead: small flat tag sets,
//! sentences drawn from a closed vocabulary, and — for convergence checks —
//! a separable task where the tag is a deterministic function of the token
//! surface.

use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusSplit, LabeledSentence, SplitName, TagScheme, TagSet};
use crate::pvp::{PromptTemplate, Segment, TemplateMode, Verbalizer};

/// A generated task: tag set, masked template, and verbalizer.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub tagset: TagSet,
    pub template: PromptTemplate,
    pub verbalizer: Verbalizer,
}

impl SyntheticTask {
    /// Flat tags `T0..T{n-1}` verbalized as `w0..w{n-1}`.
    pub fn new(num_tags: usize) -> Self {
        assert!(num_tags >= 1, "a task needs at least one tag");
        let labels: Vec<String> = (0..num_tags).map(|i| format!("T{i}")).collect();
        let tagset = TagSet::new("synthetic", labels.clone(), TagScheme::Plain)
            .expect("generated labels are valid");
        let template = PromptTemplate::new(
            "synthetic",
            TemplateMode::Masked,
            vec![
                Segment::Sentence,
                Segment::Literal(" The tag of ".into()),
                Segment::Token,
                Segment::Literal(" is a kind of: ".into()),
                Segment::Mask,
                Segment::Literal(".".into()),
            ],
        )
        .expect("generated template is valid");
        let verbalizer = Verbalizer::new(
            &tagset,
            labels.iter().enumerate().map(|(i, tag)| (tag.clone(), format!("w{i}"))),
        )
        .expect("generated verbalizer is valid");
        Self {
            tagset,
            template,
            verbalizer,
        }
    }
}

fn vocabulary(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("tok{i:03}")).collect()
}

/// The tag a surface deterministically carries in separable splits.
pub fn separable_tag(task: &SyntheticTask, surface: &str) -> String {
    let index: usize = surface.trim_start_matches("tok").parse().unwrap_or(0);
    task.tagset.labels()[index % task.tagset.len()].clone()
}

fn draw_sentences(
    n_sentences: usize,
    lengths: RangeInclusive<usize>,
    vocab: &[String],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    (0..n_sentences)
        .map(|_| {
            let len = rng.gen_range(lengths.clone());
            (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                .collect()
        })
        .collect()
}

/// A labeled split where the tag of every token is a fixed function of its
/// surface, so the task is separable by construction.
pub fn separable_split(
    task: &SyntheticTask,
    split: &str,
    language: &str,
    n_sentences: usize,
    lengths: RangeInclusive<usize>,
    vocab_size: usize,
    seed: u64,
) -> CorpusSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(vocab_size);
    let sentences = draw_sentences(n_sentences, lengths, &vocab, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(i, tokens)| {
            let tags: Vec<String> = tokens.iter().map(|t| separable_tag(task, t)).collect();
            LabeledSentence::new(format!("{language}-{split}-{i:06}"), tokens, Some(tags))
                .expect("generated sentences are non-empty")
        })
        .collect();
    CorpusSplit::new(
        SplitName::from_str(split).unwrap_or(SplitName::Train),
        language,
        sentences,
    )
}

/// A labeled split with uniformly random tags, unrelated to the surfaces.
pub fn random_labeled_split(
    task: &SyntheticTask,
    split: &str,
    language: &str,
    n_sentences: usize,
    lengths: RangeInclusive<usize>,
    vocab_size: usize,
    seed: u64,
) -> CorpusSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(vocab_size);
    let sentences = draw_sentences(n_sentences, lengths, &vocab, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(i, tokens)| {
            let tags: Vec<String> = tokens
                .iter()
                .map(|_| task.tagset.labels()[rng.gen_range(0..task.tagset.len())].clone())
                .collect();
            LabeledSentence::new(format!("{language}-{split}-{i:06}"), tokens, Some(tags))
                .expect("generated sentences are non-empty")
        })
        .collect();
    CorpusSplit::new(
        SplitName::from_str(split).unwrap_or(SplitName::Train),
        language,
        sentences,
    )
}

/// Unlabeled sentences for decomposition and robustness checks.
pub fn unlabeled_split(
    split: &str,
    language: &str,
    n_sentences: usize,
    lengths: RangeInclusive<usize>,
    vocab_size: usize,
    seed: u64,
) -> CorpusSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(vocab_size);
    let sentences = draw_sentences(n_sentences, lengths, &vocab, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(i, tokens)| {
            LabeledSentence::new(format!("{language}-{split}-{i:06}"), tokens, None)
                .expect("generated sentences are non-empty")
        })
        .collect();
    CorpusSplit::new(
        SplitName::from_str(split).unwrap_or(SplitName::Test),
        language,
        sentences,
    )
}
