//! Central finite-difference verification of analytic gradients.

use super::{ScoringError, TinyTrainableScorer};
use crate::pvp::PromptInstance;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub checked_coordinates: usize,
}

/// Compare `analytic` against central finite differences of `loss_at` around
/// `params`, coordinate by coordinate.
///
/// The per-coordinate error is `|a - n| / max(|a|, |n|)`, with differences
/// below an absolute floor of `1e-8` counted as exact so that coordinates
/// the batch never touches (both gradients zero) compare clean. Fails with
/// [`ScoringError::GradientMismatch`] when the worst coordinate exceeds
/// `tolerance`.
pub fn finite_difference_gradient_check(
    mut loss_at: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradientCheckReport, ScoringError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut work = params.to_vec();
    let mut max_relative_error = 0.0f64;
    let mut worst_coordinate = 0usize;
    for j in 0..params.len() {
        work[j] = params[j] + epsilon;
        let up = loss_at(&work);
        work[j] = params[j] - epsilon;
        let down = loss_at(&work);
        work[j] = params[j];
        let numeric = (up - down) / (2.0 * epsilon);
        let diff = (analytic[j] - numeric).abs();
        let relative = if diff <= 1e-8 {
            0.0
        } else {
            diff / analytic[j].abs().max(numeric.abs())
        };
        if relative > max_relative_error {
            max_relative_error = relative;
            worst_coordinate = j;
        }
    }
    let report = GradientCheckReport {
        max_relative_error,
        worst_coordinate,
        checked_coordinates: params.len(),
    };
    if max_relative_error > tolerance {
        return Err(ScoringError::GradientMismatch {
            max_relative_error,
            worst_coordinate,
            tolerance,
        });
    }
    Ok(report)
}

/// Run the finite-difference check on a trainable scorer's analytic batch
/// gradient. Differences are evaluated on a private clone, so the scorer is
/// left untouched.
pub fn check_scorer_gradients(
    scorer: &TinyTrainableScorer,
    prompts: &[PromptInstance],
    gold_words: &[String],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradientCheckReport, ScoringError> {
    let params = scorer.params();
    let analytic = scorer.batch_gradient(prompts, gold_words)?;
    let examples = scorer.examples_from(prompts, gold_words)?;
    let mut probe = scorer.clone();
    finite_difference_gradient_check(
        |p| {
            probe.set_params(p);
            probe.examples_loss(&examples)
        },
        &params,
        &analytic,
        epsilon,
        tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TagSet;
    use crate::pvp::{decompose, PromptTemplate, Verbalizer};
    use crate::scoring::TrainableScorer;

    fn batch() -> (TinyTrainableScorer, Vec<PromptInstance>, Vec<String>) {
        let tagset = TagSet::panx();
        let verbalizer = Verbalizer::panx();
        let mut scorer = TinyTrainableScorer::new(32, &tagset, &verbalizer, 11).unwrap();
        let sentence = crate::corpus::LabeledSentence::labeled(
            "s",
            &["Paris", "loves", "Berlin", "dearly", "today"],
            &["B-LOC", "O", "B-LOC", "O", "O"],
        )
        .unwrap();
        let prompts = decompose(&PromptTemplate::panx_masked(), &sentence).unwrap();
        let golds: Vec<String> = prompts
            .iter()
            .map(|p| verbalizer.word_for(p.gold_tag.as_ref().unwrap()).unwrap().to_string())
            .collect();
        // Move off the all-zero point so gradients are generic.
        scorer
            .train_step(&prompts, &golds, &verbalizer.words(), 0.3)
            .unwrap();
        (scorer, prompts, golds)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (scorer, prompts, golds) = batch();
        let report = check_scorer_gradients(&scorer, &prompts, &golds, 1e-5, 1e-4).unwrap();
        assert!(report.max_relative_error <= 1e-4);
        assert_eq!(report.checked_coordinates, scorer.param_count());
    }

    #[test]
    fn untouched_coordinates_have_zero_gradient_both_ways() {
        let (scorer, prompts, golds) = batch();
        let analytic = scorer.batch_gradient(&prompts, &golds).unwrap();
        let examples = scorer.examples_from(&prompts, &golds).unwrap();
        let touched: std::collections::BTreeSet<usize> = examples
            .iter()
            .flat_map(|e| e.features.iter().map(|(j, _)| *j))
            .collect();
        let dim = scorer.feature_dim();
        let mut checked = 0;
        for (j, g) in analytic.iter().enumerate().take(scorer.classes().len() * dim) {
            if !touched.contains(&(j % dim)) {
                assert_eq!(*g, 0.0, "coordinate {j}");
                checked += 1;
            }
        }
        assert!(checked > 0, "batch touched every feature, widen feature_dim");
        // Numeric side: perturbing an untouched weight cannot change the loss.
        let mut probe = scorer.clone();
        let untouched = (0..dim).find(|j| !touched.contains(j)).unwrap();
        let mut params = scorer.params();
        let base = probe.batch_loss(&prompts, &golds).unwrap();
        params[untouched] += 1e-3;
        probe.set_params(&params);
        assert_eq!(probe.batch_loss(&prompts, &golds).unwrap(), base);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (scorer, prompts, golds) = batch();
        let original = scorer.params();
        let mut analytic = scorer.batch_gradient(&prompts, &golds).unwrap();
        analytic[0] += 1.0;
        let examples = scorer.examples_from(&prompts, &golds).unwrap();
        let mut probe = scorer.clone();
        let err = finite_difference_gradient_check(
            |p| {
                probe.set_params(p);
                probe.examples_loss(&examples)
            },
            &original,
            &analytic,
            1e-5,
            1e-4,
        );
        assert!(matches!(err, Err(ScoringError::GradientMismatch { .. })));
    }
}
