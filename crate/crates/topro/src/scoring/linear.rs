//! Linear-softmax classifier over sparse features, with analytic gradients.

use super::PROBABILITY_FLOOR;

/// Sparse feature vector: `(feature index, value)` pairs with unique indices.
pub(crate) type SparseFeatures = Vec<(usize, f64)>;

/// A labeled example ready for the linear model.
pub(crate) struct Example {
    pub features: SparseFeatures,
    pub gold: usize,
}

/// Zero-initialized linear model with a softmax head and plain gradient
/// descent. Steps use the mean of the accumulated gradient, so the learning
/// rate is independent of batch size and accumulation span.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearSoftmax {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    grad_weights: Vec<f64>,
    grad_bias: Vec<f64>,
    pending_examples: usize,
}

impl LinearSoftmax {
    pub fn new(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            grad_weights: vec![0.0; classes * dim],
            grad_bias: vec![0.0; classes],
            pending_examples: 0,
        }
    }

    fn logits(&self, features: &SparseFeatures) -> Vec<f64> {
        let mut logits = self.bias.clone();
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            for &(j, v) in features {
                *logit += row[j] * v;
            }
        }
        logits
    }

    /// Softmax probabilities over the classes.
    pub fn probabilities(&self, features: &SparseFeatures) -> Vec<f64> {
        let logits = self.logits(features);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for e in &mut exps {
            *e /= sum;
        }
        exps
    }

    /// Negative log-likelihood of one example; `true` when the probability
    /// hit the clamp floor.
    pub fn example_loss(&self, example: &Example) -> (f64, bool) {
        let p = self.probabilities(&example.features)[example.gold];
        let clamped = p < PROBABILITY_FLOOR;
        (-(p.max(PROBABILITY_FLOOR)).ln(), clamped)
    }

    /// Summed loss over a batch.
    pub fn batch_loss(&self, batch: &[Example]) -> f64 {
        batch.iter().map(|e| self.example_loss(e).0).sum()
    }

    /// Summed analytic gradient over a batch, laid out as
    /// `[weights.., bias..]` to match [`params`](Self::params).
    ///
    /// The gradient is that of the true negative log-likelihood. The clamp
    /// floor only guards reported loss values; the softmax gradient itself
    /// is bounded, so no guard is needed here. Finite-difference checks
    /// therefore apply at points where the floor is inactive, i.e. anywhere
    /// a gold probability exceeds 1e-12.
    pub fn batch_gradient(&self, batch: &[Example]) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        let (gw, gb) = grad.split_at_mut(self.classes * self.dim);
        for example in batch {
            let probs = self.probabilities(&example.features);
            for (c, p) in probs.iter().enumerate() {
                let delta = p - if c == example.gold { 1.0 } else { 0.0 };
                for &(j, v) in &example.features {
                    gw[c * self.dim + j] += delta * v;
                }
                gb[c] += delta;
            }
        }
        grad
    }

    /// Add one example's gradient and loss to the accumulator.
    pub fn accumulate_example(&mut self, example: &Example) -> (f64, bool) {
        let probs = self.probabilities(&example.features);
        for (c, p) in probs.iter().enumerate() {
            let delta = p - if c == example.gold { 1.0 } else { 0.0 };
            for &(j, v) in &example.features {
                self.grad_weights[c * self.dim + j] += delta * v;
            }
            self.grad_bias[c] += delta;
        }
        let p = probs[example.gold];
        let clamped = p < PROBABILITY_FLOOR;
        self.pending_examples += 1;
        (-(p.max(PROBABILITY_FLOOR)).ln(), clamped)
    }

    /// Gradient-descent step on the mean accumulated gradient, then reset
    /// the accumulator.
    pub fn apply_step(&mut self, learning_rate: f64) {
        let scale = learning_rate / self.pending_examples.max(1) as f64;
        for (w, g) in self.weights.iter_mut().zip(&mut self.grad_weights) {
            *w -= scale * *g;
            *g = 0.0;
        }
        for (b, g) in self.bias.iter_mut().zip(&mut self.grad_bias) {
            *b -= scale * *g;
            *g = 0.0;
        }
        self.pending_examples = 0;
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter length mismatch");
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn raw_parts(&self) -> (&[f64], &[f64]) {
        (&self.weights, &self.bias)
    }

    pub fn restore_parts(&mut self, weights: Vec<f64>, bias: Vec<f64>) {
        assert_eq!(weights.len(), self.weights.len());
        assert_eq!(bias.len(), self.bias.len());
        self.weights = weights;
        self.bias = bias;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let model = LinearSoftmax::new(4, 8);
        let probs = model.probabilities(&vec![(0, 1.0), (3, 2.0)]);
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn a_step_moves_probability_toward_gold() {
        let mut model = LinearSoftmax::new(3, 4);
        let example = Example {
            features: vec![(1, 1.0)],
            gold: 2,
        };
        let before = model.probabilities(&example.features)[2];
        model.accumulate_example(&example);
        model.apply_step(0.5);
        let after = model.probabilities(&example.features)[2];
        assert!(after > before);
    }

    #[test]
    fn params_round_trip() {
        let mut model = LinearSoftmax::new(2, 3);
        let mut p = model.params();
        p[0] = 1.5;
        p[7] = -0.5;
        model.set_params(&p);
        assert_eq!(model.params(), p);
    }
}
