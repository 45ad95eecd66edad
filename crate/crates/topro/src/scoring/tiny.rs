//! Trainable reference models over deterministic hashed features.
//!
//! These are desk-scale stand-ins for pretrained backends: linear-softmax
//! models whose features are stable hashes of surface tokens, so runs are
//! reproducible across platforms with no tokenizer or weight files. Weights
//! start at zero, which makes a fresh model score every candidate uniformly.

use std::collections::BTreeMap;

use super::linear::{Example, LinearSoftmax, SparseFeatures};
use super::{BatchLoss, MaskDistribution, MaskScorer, ScoringError, TrainableScorer};
use crate::corpus::{LabeledSentence, TagSet};
use crate::pvp::{PromptInstance, Verbalizer, MASK_PLACEHOLDER};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Probes per (slot, word) pair; two probes make accidental full collisions
/// between distinct surfaces negligible at practical feature dimensions.
const HASH_PROBES: u64 = 2;

fn fnv1a64(seed: u64, slot: u64, word: &str, probe: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for chunk in [slot.to_le_bytes(), probe.to_le_bytes()] {
        for b in chunk {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    for b in word.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn hashed_features<'a>(
    feature_dim: usize,
    seed: u64,
    slotted_words: impl Iterator<Item = (u64, &'a str)>,
) -> SparseFeatures {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (slot, word) in slotted_words {
        for probe in 0..HASH_PROBES {
            let index = (fnv1a64(seed, slot, word, probe) % feature_dim as u64) as usize;
            *acc.entry(index).or_insert(0.0) += 1.0;
        }
    }
    acc.into_iter().collect()
}

/// Trainable masked-prompt scorer: hashed features of the target token and a
/// bounded window of prompt context feeding a linear-softmax head over the
/// verbalizer words.
///
/// Scoring is a pure function of the prompt text, so equal prompt texts
/// always receive equal distributions.
#[derive(Debug, Clone)]
pub struct TinyTrainableScorer {
    feature_dim: usize,
    context_window: usize,
    hash_seed: u64,
    classes: Vec<String>,
    class_index: BTreeMap<String, usize>,
    model: LinearSoftmax,
}

impl TinyTrainableScorer {
    /// A fresh zero-weight model. `rng_seed` seeds the deterministic feature
    /// hash, so two scorers built with the same seed produce identical
    /// features, parameters, and scores.
    pub fn new(
        feature_dim: usize,
        tagset: &TagSet,
        verbalizer: &Verbalizer,
        rng_seed: u64,
    ) -> Result<Self, ScoringError> {
        if feature_dim == 0 {
            return Err(ScoringError::InvalidDistribution {
                reason: "feature_dim must be at least 1".into(),
            });
        }
        if verbalizer.len() != tagset.len() {
            return Err(ScoringError::Protocol {
                reason: format!(
                    "verbalizer covers {} tags but the tag set has {}",
                    verbalizer.len(),
                    tagset.len()
                ),
            });
        }
        let classes = verbalizer.words();
        let class_index = classes
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let model = LinearSoftmax::new(classes.len(), feature_dim);
        Ok(Self {
            feature_dim,
            context_window: 8,
            hash_seed: rng_seed,
            classes,
            class_index,
            model,
        })
    }

    /// Override the bounded context window (in whitespace tokens before the
    /// mask position).
    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window.max(1);
        self
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Candidate words in canonical order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Features of one prompt text: the window of whitespace tokens
    /// immediately before the mask position, each hashed with its distance
    /// from the mask.
    fn prompt_features(&self, text: &str) -> SparseFeatures {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let anchor = tokens
            .iter()
            .position(|t| t.contains(MASK_PLACEHOLDER))
            .unwrap_or(tokens.len());
        let start = anchor.saturating_sub(self.context_window);
        hashed_features(
            self.feature_dim,
            self.hash_seed,
            tokens[start..anchor]
                .iter()
                .enumerate()
                .map(|(i, word)| ((anchor - (start + i)) as u64, *word)),
        )
    }

    fn class_of(&self, word: &str) -> Result<usize, ScoringError> {
        self.class_index
            .get(word)
            .copied()
            .ok_or_else(|| ScoringError::UnknownCandidate {
                word: word.to_string(),
            })
    }

    pub(crate) fn examples_from(
        &self,
        prompts: &[PromptInstance],
        gold_words: &[String],
    ) -> Result<Vec<Example>, ScoringError> {
        if prompts.len() != gold_words.len() {
            return Err(ScoringError::Protocol {
                reason: format!(
                    "{} prompts but {} gold words",
                    prompts.len(),
                    gold_words.len()
                ),
            });
        }
        prompts
            .iter()
            .zip(gold_words)
            .map(|(prompt, gold)| {
                Ok(Example {
                    features: self.prompt_features(&prompt.text),
                    gold: self.class_of(gold)?,
                })
            })
            .collect()
    }

    /// Summed loss of a batch at the current parameters, without touching
    /// the gradient accumulator.
    pub fn batch_loss(
        &self,
        prompts: &[PromptInstance],
        gold_words: &[String],
    ) -> Result<f64, ScoringError> {
        Ok(self.model.batch_loss(&self.examples_from(prompts, gold_words)?))
    }

    /// Loss over pre-featurized examples; featurization does not depend on
    /// parameters, so finite-difference probes reuse it.
    pub(crate) fn examples_loss(&self, examples: &[Example]) -> f64 {
        self.model.batch_loss(examples)
    }

    /// Summed analytic gradient of a batch, ordered like [`params`](Self::params).
    pub fn batch_gradient(
        &self,
        prompts: &[PromptInstance],
        gold_words: &[String],
    ) -> Result<Vec<f64>, ScoringError> {
        Ok(self.model.batch_gradient(&self.examples_from(prompts, gold_words)?))
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        self.model.params()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.model.set_params(params);
    }

    /// `(weights, bias)` for serialization.
    pub fn export_params(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, b) = self.model.raw_parts();
        (w.to_vec(), b.to_vec())
    }

    pub fn import_params(&mut self, weights: Vec<f64>, bias: Vec<f64>) {
        self.model.restore_parts(weights, bias);
    }
}

impl MaskScorer for TinyTrainableScorer {
    fn score_batch(
        &self,
        prompts: &[PromptInstance],
        candidates: &[String],
    ) -> Result<Vec<MaskDistribution>, ScoringError> {
        let candidate_classes: Vec<usize> = candidates
            .iter()
            .map(|c| self.class_of(c))
            .collect::<Result<_, _>>()?;
        prompts
            .iter()
            .map(|prompt| {
                let probs = self.model.probabilities(&self.prompt_features(&prompt.text));
                MaskDistribution::from_weights(
                    candidates
                        .iter()
                        .zip(&candidate_classes)
                        .map(|(word, &class)| (word.clone(), probs[class])),
                )
            })
            .collect()
    }

    fn vocabulary_probe(&self, word: &str) -> Option<usize> {
        // One whitespace unit is one piece for this model.
        Some(word.split_whitespace().count().max(1))
    }
}

impl TrainableScorer for TinyTrainableScorer {
    fn accumulate_batch(
        &mut self,
        prompts: &[PromptInstance],
        gold_words: &[String],
        candidates: &[String],
    ) -> Result<BatchLoss, ScoringError> {
        for candidate in candidates {
            self.class_of(candidate)?;
        }
        if candidates.len() != self.classes.len() {
            return Err(ScoringError::Protocol {
                reason: format!(
                    "training candidates must cover all {} classes, got {}",
                    self.classes.len(),
                    candidates.len()
                ),
            });
        }
        let examples = self.examples_from(prompts, gold_words)?;
        let mut value = 0.0;
        let mut clamped = 0;
        for example in &examples {
            let (loss, clip) = self.model.accumulate_example(example);
            value += loss;
            clamped += usize::from(clip);
        }
        Ok(BatchLoss { value, clamped })
    }

    fn apply_step(&mut self, learning_rate: f64) {
        self.model.apply_step(learning_rate);
    }
}

/// Per-token classifier for the no-prompt baseline: the same hashed feature
/// stack applied to a window of sentence context around the target token,
/// with a softmax head over the tags themselves.
#[derive(Debug, Clone)]
pub struct TinyTokenClassifier {
    feature_dim: usize,
    context_radius: usize,
    hash_seed: u64,
    classes: Vec<String>,
    class_index: BTreeMap<String, usize>,
    model: LinearSoftmax,
}

impl TinyTokenClassifier {
    pub fn new(feature_dim: usize, tagset: &TagSet, rng_seed: u64) -> Result<Self, ScoringError> {
        if feature_dim == 0 {
            return Err(ScoringError::InvalidDistribution {
                reason: "feature_dim must be at least 1".into(),
            });
        }
        let classes: Vec<String> = tagset.labels().to_vec();
        let class_index = classes
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let model = LinearSoftmax::new(classes.len(), feature_dim);
        Ok(Self {
            feature_dim,
            context_radius: 2,
            hash_seed: rng_seed,
            classes,
            class_index,
            model,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Tags in canonical order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn token_features(&self, sentence: &LabeledSentence, index: usize) -> SparseFeatures {
        let tokens = sentence.tokens();
        let radius = self.context_radius as i64;
        hashed_features(
            self.feature_dim,
            self.hash_seed,
            (-radius..=radius).filter_map(|rel| {
                let j = index as i64 + rel;
                if j < 0 || j >= tokens.len() as i64 {
                    None
                } else {
                    Some(((rel + radius) as u64, tokens[j as usize].as_str()))
                }
            }),
        )
    }

    fn class_of(&self, tag: &str) -> Result<usize, ScoringError> {
        self.class_index
            .get(tag)
            .copied()
            .ok_or_else(|| ScoringError::UnknownCandidate {
                word: tag.to_string(),
            })
    }

    /// Tag probabilities for one token, in class order.
    pub fn probabilities(&self, sentence: &LabeledSentence, index: usize) -> Vec<f64> {
        self.model.probabilities(&self.token_features(sentence, index))
    }

    /// Predicted tags and their chosen probabilities for a whole sentence,
    /// ties broken by canonical tag order.
    pub fn predict_sentence(&self, sentence: &LabeledSentence) -> (Vec<String>, Vec<f64>) {
        let mut tags = Vec::with_capacity(sentence.len());
        let mut probs = Vec::with_capacity(sentence.len());
        for i in 0..sentence.len() {
            let p = self.probabilities(sentence, i);
            let mut best = 0;
            for (c, value) in p.iter().enumerate() {
                if *value > p[best] {
                    best = c;
                }
            }
            tags.push(self.classes[best].clone());
            probs.push(p[best]);
        }
        (tags, probs)
    }

    /// Accumulate gradients for `(sentence, token index, gold tag)` triples.
    pub fn accumulate_tokens(
        &mut self,
        examples: &[(&LabeledSentence, usize, &str)],
    ) -> Result<BatchLoss, ScoringError> {
        let mut value = 0.0;
        let mut clamped = 0;
        for (sentence, index, gold) in examples {
            let example = Example {
                features: self.token_features(sentence, *index),
                gold: self.class_of(gold)?,
            };
            let (loss, clip) = self.model.accumulate_example(&example);
            value += loss;
            clamped += usize::from(clip);
        }
        Ok(BatchLoss { value, clamped })
    }

    pub fn apply_step(&mut self, learning_rate: f64) {
        self.model.apply_step(learning_rate);
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        self.model.params()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.model.set_params(params);
    }

    pub fn export_params(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, b) = self.model.raw_parts();
        (w.to_vec(), b.to_vec())
    }

    pub fn import_params(&mut self, weights: Vec<f64>, bias: Vec<f64>) {
        self.model.restore_parts(weights, bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvp::{decompose, PromptTemplate};

    fn scorer(seed: u64) -> TinyTrainableScorer {
        TinyTrainableScorer::new(
            256,
            &crate::corpus::TagSet::udpos(),
            &Verbalizer::udpos(),
            seed,
        )
        .unwrap()
    }

    fn prompt(text: &str) -> PromptInstance {
        PromptInstance {
            sentence_id: "s".into(),
            token_index: 0,
            text: text.into(),
            gold_tag: None,
        }
    }

    #[test]
    fn fresh_model_scores_uniformly() {
        let s = scorer(7);
        let candidates = Verbalizer::udpos().words();
        let d = s
            .score_mask(&prompt("Works as stated ! The pos tag of Works is a kind of: [MASK]."), &candidates)
            .unwrap();
        for word in &candidates {
            assert!((d.probability(word) - 1.0 / 17.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_means_identical_scorers() {
        let sentence = LabeledSentence::labeled(
            "s",
            &["Works", "as", "stated", "!"],
            &["VERB", "ADP", "VERB", "PUNCT"],
        )
        .unwrap();
        let prompts = decompose(&PromptTemplate::udpos_masked(), &sentence).unwrap();
        let golds: Vec<String> = prompts
            .iter()
            .map(|p| Verbalizer::udpos().word_for(p.gold_tag.as_ref().unwrap()).unwrap().to_string())
            .collect();
        let candidates = Verbalizer::udpos().words();

        let mut a = scorer(42);
        let mut b = scorer(42);
        for _ in 0..3 {
            let la = a.train_step(&prompts, &golds, &candidates, 0.1).unwrap();
            let lb = b.train_step(&prompts, &golds, &candidates, 0.1).unwrap();
            assert_eq!(la.value.to_bits(), lb.value.to_bits());
        }
        assert_eq!(a.params(), b.params());
        let da = a.score_batch(&prompts, &candidates).unwrap();
        let db = b.score_batch(&prompts, &candidates).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn candidate_order_does_not_change_probabilities() {
        let mut s = scorer(3);
        // Nudge away from uniform first.
        let sentence = LabeledSentence::labeled("s", &["Hi"], &["INTJ"]).unwrap();
        let prompts = decompose(&PromptTemplate::udpos_masked(), &sentence).unwrap();
        s.train_step(&prompts, &["mode".to_string()], &Verbalizer::udpos().words(), 0.5)
            .unwrap();

        let candidates = Verbalizer::udpos().words();
        let mut reversed = candidates.clone();
        reversed.reverse();
        let p = prompt("Hi The pos tag of Hi is a kind of: [MASK].");
        let d1 = s.score_mask(&p, &candidates).unwrap();
        let d2 = s.score_mask(&p, &reversed).unwrap();
        for word in &candidates {
            assert_eq!(d1.probability(word).to_bits(), d2.probability(word).to_bits());
        }
    }

    #[test]
    fn unknown_candidates_are_rejected() {
        let s = scorer(1);
        let err = s.score_mask(&prompt("x [MASK]"), &["nonsense".to_string()]);
        assert!(matches!(err, Err(ScoringError::UnknownCandidate { .. })));
    }

    #[test]
    fn equal_prompt_texts_get_equal_distributions() {
        let s = scorer(5);
        let candidates = Verbalizer::udpos().words();
        let a = PromptInstance {
            sentence_id: "one".into(),
            token_index: 0,
            text: "zu Teilnahme zu The pos tag of zu is a kind of: [MASK].".into(),
            gold_tag: None,
        };
        let b = PromptInstance {
            sentence_id: "two".into(),
            token_index: 2,
            text: a.text.clone(),
            gold_tag: None,
        };
        assert_eq!(
            s.score_mask(&a, &candidates).unwrap(),
            s.score_mask(&b, &candidates).unwrap()
        );
    }

    #[test]
    fn separable_task_trains_to_perfect_argmax_accuracy() {
        // 100 distinct surfaces, 3 tags, tag a fixed function of the
        // surface. The most-frequent-tag table is the independent
        // separability check; the trained model must then recover every
        // training tag exactly.
        let task = crate::synth::SyntheticTask::new(3);
        let split = crate::synth::separable_split(&task, "train", "en", 120, 4..=10, 100, 21);
        let mut table: std::collections::BTreeMap<&str, &str> = std::collections::BTreeMap::new();
        for sentence in split.sentences() {
            for (i, token) in sentence.tokens().iter().enumerate() {
                let tag = sentence.tag(i).unwrap();
                assert_eq!(*table.entry(token).or_insert(tag), tag);
            }
        }

        let mut scorer = TinyTrainableScorer::new(8192, &task.tagset, &task.verbalizer, 3).unwrap();
        let candidates = task.verbalizer.words();
        let prompts: Vec<PromptInstance> = split
            .sentences()
            .iter()
            .flat_map(|s| decompose(&task.template, s).unwrap())
            .collect();
        let golds: Vec<String> = prompts
            .iter()
            .map(|p| task.verbalizer.word_for(p.gold_tag.as_ref().unwrap()).unwrap().to_string())
            .collect();
        for _ in 0..40 {
            for (chunk, gold_chunk) in prompts.chunks(8).zip(golds.chunks(8)) {
                scorer.train_step(chunk, gold_chunk, &candidates, 0.5).unwrap();
            }
        }

        let distributions = scorer.score_batch(&prompts, &candidates).unwrap();
        for (prompt, dist) in prompts.iter().zip(&distributions) {
            let mut best = candidates[0].as_str();
            for word in &candidates {
                if dist.probability(word) > dist.probability(best) {
                    best = word;
                }
            }
            assert_eq!(
                task.verbalizer.tag_for(best),
                prompt.gold_tag.as_deref(),
                "prompt {prompt}"
            );
        }
    }

    #[test]
    fn classifier_learns_a_single_class_quickly() {
        let tagset = crate::corpus::TagSet::udpos();
        let mut clf = TinyTokenClassifier::new(128, &tagset, 0).unwrap();
        let sentence = LabeledSentence::labeled("s", &["a", "b", "c"], &["NOUN", "NOUN", "NOUN"]).unwrap();
        let examples: Vec<(&LabeledSentence, usize, &str)> =
            (0..3).map(|i| (&sentence, i, "NOUN")).collect();
        for _ in 0..30 {
            clf.accumulate_tokens(&examples).unwrap();
            clf.apply_step(0.5);
        }
        let (tags, probs) = clf.predict_sentence(&sentence);
        assert_eq!(tags, ["NOUN", "NOUN", "NOUN"]);
        assert!(probs.iter().all(|p| *p > 0.9));
    }
}
