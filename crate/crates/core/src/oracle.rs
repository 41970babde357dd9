//! Exact verification of the distribution-correction identities on finite
//! generative models.
//!
//! A [`PairedCorruption`] makes the joint law of clean and noisy samples
//! explicit as a three-way coupling `p(x, y, noisy)`; both marginal models
//! and every conditional table follow from it by enumeration. On such
//! models the posterior-corrected expectation of a score gradient equals
//! the clean-distribution expectation exactly, the conditional (ratio) form
//! agrees per sample, and substituting the scorer's own predictions for the
//! clean label posterior turns the correction into the gradient of the
//! forward-corrected loss. [`verify_suite`] checks all of this on random
//! instances and reports the worst deviations.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exhaustive joint probability table over a finite feature x label space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointModel<S: Scalar> {
    joint: Array2<S>,
}

impl<S: Scalar> DiscreteJointModel<S> {
    pub fn new(joint: Array2<S>) -> Result<Self> {
        if joint.nrows() == 0 || joint.ncols() == 0 {
            return Err(Error::Config("joint table must be non-empty".into()));
        }
        if joint.iter().any(|&v| v < S::zero()) {
            return Err(Error::Config("joint table has negative entries".into()));
        }
        let total = joint.sum();
        if (total - S::one()).abs() > S::from_f64(1e-12) {
            return Err(Error::Config(format!(
                "joint table sums to {total}, not 1"
            )));
        }
        Ok(Self { joint })
    }

    pub fn feature_count(&self) -> usize {
        self.joint.nrows()
    }

    pub fn label_count(&self) -> usize {
        self.joint.ncols()
    }

    pub fn prob(&self, x: usize, y: usize) -> S {
        self.joint[(x, y)]
    }

    pub fn joint(&self) -> &Array2<S> {
        &self.joint
    }

    pub fn feature_marginal(&self, x: usize) -> S {
        self.joint.row(x).sum()
    }

    /// `p(y | x)` by row normalization; zero-mass features have no posterior.
    pub fn label_posterior_given_feature(&self, x: usize) -> Result<Array1<S>> {
        if x >= self.feature_count() {
            return Err(Error::Index(format!(
                "feature {x} out of range 0..{}",
                self.feature_count()
            )));
        }
        let mass = self.feature_marginal(x);
        if mass <= S::zero() {
            return Err(Error::Domain(format!(
                "feature {x} has zero mass; posterior undefined"
            )));
        }
        Ok(self.joint.row(x).mapv(|v| v / mass))
    }
}

/// A clean model, its corrupted counterpart, and the explicit three-way
/// coupling `p(x, y, noisy)` tying them together. Both marginals share the
/// same feature distribution by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorruption<S: Scalar> {
    clean: DiscreteJointModel<S>,
    noisy: DiscreteJointModel<S>,
    coupling: Array3<S>,
}

impl<S: Scalar> PairedCorruption<S> {
    /// Build from a full coupling tensor `[x, y, noisy]`; the marginal models
    /// are derived from it.
    pub fn from_coupling(coupling: Array3<S>) -> Result<Self> {
        if coupling.iter().any(|&v| v < S::zero()) {
            return Err(Error::Config("coupling has negative entries".into()));
        }
        let (xs, ys, yts) = coupling.dim();
        if ys != yts {
            return Err(Error::Shape(format!(
                "coupling label axes disagree: {ys} vs {yts}"
            )));
        }
        let clean = Array2::from_shape_fn((xs, ys), |(x, y)| {
            (0..yts).map(|yt| coupling[(x, y, yt)]).sum()
        });
        let noisy = Array2::from_shape_fn((xs, yts), |(x, yt)| {
            (0..ys).map(|y| coupling[(x, y, yt)]).sum()
        });
        Ok(Self {
            clean: DiscreteJointModel::new(clean)?,
            noisy: DiscreteJointModel::new(noisy)?,
            coupling,
        })
    }

    /// Random instance: feature marginal first, then per-feature clean label
    /// distributions, then per-(x, y) corruption kernels. All draws are
    /// bounded away from zero so every conditional is defined.
    pub fn random(rng: &mut ChaCha8Rng, feature_count: usize, label_count: usize) -> Self {
        let feature = random_distribution(rng, feature_count, 0.2);
        let mut coupling = Array3::zeros((feature_count, label_count, label_count));
        for x in 0..feature_count {
            let label_dist = random_distribution(rng, label_count, 0.05);
            for y in 0..label_count {
                let kernel = random_distribution(rng, label_count, 0.05);
                for yt in 0..label_count {
                    coupling[(x, y, yt)] =
                        S::from_f64(feature[x] * label_dist[y] * kernel[yt]);
                }
            }
        }
        Self::from_coupling(coupling).expect("random construction is valid")
    }

    pub fn clean(&self) -> &DiscreteJointModel<S> {
        &self.clean
    }

    pub fn noisy(&self) -> &DiscreteJointModel<S> {
        &self.noisy
    }

    pub fn coupling(&self) -> &Array3<S> {
        &self.coupling
    }

    pub fn feature_count(&self) -> usize {
        self.coupling.dim().0
    }

    pub fn label_count(&self) -> usize {
        self.coupling.dim().1
    }

    /// `post[x, y, noisy] = p(clean (x, y) | noisy (x, noisy))`, defined
    /// wherever the noisy cell has mass.
    pub fn posterior_table(&self) -> CorrectionTable<S> {
        let (xs, ys, yts) = self.coupling.dim();
        let mut values = Array3::zeros((xs, ys, yts));
        let mut defined = Array2::from_elem((xs, yts), false);
        for x in 0..xs {
            for yt in 0..yts {
                let mass = self.noisy.prob(x, yt);
                if mass > S::zero() {
                    defined[(x, yt)] = true;
                    for y in 0..ys {
                        values[(x, y, yt)] = self.coupling[(x, y, yt)] / mass;
                    }
                }
            }
        }
        CorrectionTable { values, defined }
    }

    /// `cond[x, y, noisy] = p(noisy (x, noisy) | clean (x, y))`, defined
    /// wherever the clean cell has mass.
    pub fn conditional_table(&self) -> CorrectionTable<S> {
        let (xs, ys, yts) = self.coupling.dim();
        let mut values = Array3::zeros((xs, ys, yts));
        let mut defined = Array2::from_elem((xs, ys), false);
        for x in 0..xs {
            for y in 0..ys {
                let mass = self.clean.prob(x, y);
                if mass > S::zero() {
                    defined[(x, y)] = true;
                    for yt in 0..yts {
                        values[(x, y, yt)] = self.coupling[(x, y, yt)] / mass;
                    }
                }
            }
        }
        CorrectionTable { values, defined }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(floor..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// A conditional probability tensor plus the mask of cells it conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTable<S: Scalar> {
    pub values: Array3<S>,
    /// For a posterior table this masks `(x, noisy)`; for a conditional
    /// table it masks `(x, y)`.
    pub defined: Array2<bool>,
}

/// Tiny softmax classifier over enumerated (one-hot) features: the
/// differentiable log-likelihood map whose gradients the oracle averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer<S: Scalar> {
    weights: Array2<S>,
}

impl<S: Scalar> Scorer<S> {
    pub fn new(weights: Array2<S>) -> Self {
        Self { weights }
    }

    pub fn random(label_count: usize, feature_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: Array2::from_shape_fn((label_count, feature_count), |_| {
                S::from_f64(rng.random_range(-1.0..1.0))
            }),
        }
    }

    /// Maximum-likelihood weights for a model: logits equal to the log label
    /// posterior of each feature, floored far below any reachable mass.
    pub fn ml_optimum(model: &DiscreteJointModel<S>) -> Result<Self> {
        let mut weights = Array2::zeros((model.label_count(), model.feature_count()));
        for x in 0..model.feature_count() {
            let posterior = model.label_posterior_given_feature(x)?;
            for y in 0..model.label_count() {
                weights[(y, x)] = posterior[y].max(S::from_f64(1e-300)).ln();
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &Array2<S> {
        &self.weights
    }

    pub fn label_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.weights.ncols()
    }

    /// `p(y | x)`: softmax over the logits of feature `x`.
    pub fn probs(&self, x: usize) -> Array1<S> {
        let col = self.weights.column(x);
        let max = col.iter().cloned().fold(S::neg_infinity(), S::max);
        let exp: Array1<S> = col.mapv(|v| (v - max).exp());
        let sum = exp.sum();
        exp / sum
    }

    /// `d log p(y | x) / dW`: nonzero only in column `x`.
    pub fn log_prob_grad(&self, x: usize, y: usize) -> Array2<S> {
        let probs = self.probs(x);
        let mut grad = Array2::zeros(self.weights.dim());
        for j in 0..self.label_count() {
            let indicator = if j == y { S::one() } else { S::zero() };
            grad[(j, x)] = indicator - probs[j];
        }
        grad
    }

    /// Chain a gradient in probability space through the softmax of feature
    /// `x`, yielding a weight-shaped gradient.
    pub fn backprop_probs_grad(&self, x: usize, dloss_dprobs: &Array1<S>) -> Array2<S> {
        let probs = self.probs(x);
        let inner: S = dloss_dprobs
            .iter()
            .zip(probs.iter())
            .map(|(&g, &p)| g * p)
            .sum();
        let mut grad = Array2::zeros(self.weights.dim());
        for j in 0..self.label_count() {
            grad[(j, x)] = probs[j] * (dloss_dprobs[j] - inner);
        }
        grad
    }
}

/// `sum_{x,y} p_clean(x, y) * d log p(y|x) / dW`, by exhaustive enumeration.
pub fn expected_gradient_clean<S: Scalar>(
    model: &DiscreteJointModel<S>,
    scorer: &Scorer<S>,
) -> Array2<S> {
    let mut total = Array2::zeros(scorer.weights.dim());
    for x in 0..model.feature_count() {
        for y in 0..model.label_count() {
            let mass = model.prob(x, y);
            if mass > S::zero() {
                total = total + scorer.log_prob_grad(x, y).mapv(|v| v * mass);
            }
        }
    }
    total
}

/// Posterior-form corrected gradient for one noisy sample `(x, noisy)`:
/// `sum_y post(x, y, noisy) * d log p(y|x)`.
pub fn posterior_sample_gradient<S: Scalar>(
    pair: &PairedCorruption<S>,
    posterior: &CorrectionTable<S>,
    scorer: &Scorer<S>,
    x: usize,
    noisy_label: usize,
) -> Result<Array2<S>> {
    if !posterior.defined[(x, noisy_label)] {
        return Err(Error::Oracle(format!(
            "posterior undefined at (x={x}, noisy={noisy_label})"
        )));
    }
    let mut total = Array2::zeros(scorer.weights().dim());
    for y in 0..pair.label_count() {
        let w = posterior.values[(x, y, noisy_label)];
        if w > S::zero() {
            total = total + scorer.log_prob_grad(x, y).mapv(|v| v * w);
        }
    }
    Ok(total)
}

/// Conditional-form corrected gradient for one noisy sample, using the true
/// clean label posterior: the ratio of `sum_y cond * p_clean(y|x) * grad`
/// over `sum_y cond * p_clean(y|x)`.
pub fn conditional_sample_gradient<S: Scalar>(
    pair: &PairedCorruption<S>,
    conditional: &CorrectionTable<S>,
    scorer: &Scorer<S>,
    x: usize,
    noisy_label: usize,
) -> Result<Array2<S>> {
    let clean_posterior = pair.clean().label_posterior_given_feature(x)?;
    let mut numerator: Array2<S> = Array2::zeros(scorer.weights().dim());
    let mut denominator = S::zero();
    for y in 0..pair.label_count() {
        let weight_prior = clean_posterior[y];
        if weight_prior <= S::zero() {
            continue; // zero-mass clean cell: conditional undefined, weight zero
        }
        if !conditional.defined[(x, y)] {
            return Err(Error::Oracle(format!(
                "conditional undefined at clean cell (x={x}, y={y}) with positive mass"
            )));
        }
        let w = conditional.values[(x, y, noisy_label)] * weight_prior;
        denominator = denominator + w;
        if w > S::zero() {
            numerator = numerator + scorer.log_prob_grad(x, y).mapv(|v| v * w);
        }
    }
    if denominator <= S::zero() {
        return Err(Error::Oracle(format!(
            "conditional correction denominator is zero at (x={x}, noisy={noisy_label})"
        )));
    }
    Ok(numerator.mapv(|v| v / denominator))
}

/// Expectation of the posterior-form correction over the noisy joint.
pub fn posterior_corrected_expectation<S: Scalar>(
    pair: &PairedCorruption<S>,
    scorer: &Scorer<S>,
) -> Result<Array2<S>> {
    let posterior = pair.posterior_table();
    let mut total = Array2::zeros(scorer.weights().dim());
    for x in 0..pair.feature_count() {
        for yt in 0..pair.label_count() {
            let mass = pair.noisy().prob(x, yt);
            if mass <= S::zero() {
                continue;
            }
            let sample = posterior_sample_gradient(pair, &posterior, scorer, x, yt)?;
            total = total + sample.mapv(|v| v * mass);
        }
    }
    Ok(total)
}

/// Expectation of the conditional-form correction over the noisy joint.
pub fn conditional_corrected_expectation<S: Scalar>(
    pair: &PairedCorruption<S>,
    scorer: &Scorer<S>,
) -> Result<Array2<S>> {
    let conditional = pair.conditional_table();
    let mut total = Array2::zeros(scorer.weights().dim());
    for x in 0..pair.feature_count() {
        for yt in 0..pair.label_count() {
            let mass = pair.noisy().prob(x, yt);
            if mass <= S::zero() {
                continue;
            }
            let sample = conditional_sample_gradient(pair, &conditional, scorer, x, yt)?;
            total = total + sample.mapv(|v| v * mass);
        }
    }
    Ok(total)
}

/// Conditional correction with the scorer's own predictions substituted for
/// the clean label posterior — the skeptical move. Algebraically this is
/// `d/dW log sum_y cond(x, y, noisy) p(y|x; W)`; it is computed here in the
/// ratio form so the identity can be checked against finite differences.
pub fn self_substituted_gradient<S: Scalar>(
    pair: &PairedCorruption<S>,
    conditional: &CorrectionTable<S>,
    scorer: &Scorer<S>,
    x: usize,
    noisy_label: usize,
) -> Result<Array2<S>> {
    let probs = scorer.probs(x);
    let mut numerator: Array2<S> = Array2::zeros(scorer.weights().dim());
    let mut denominator = S::zero();
    for y in 0..pair.label_count() {
        if !conditional.defined[(x, y)] {
            continue;
        }
        let w = conditional.values[(x, y, noisy_label)] * probs[y];
        denominator = denominator + w;
        if w > S::zero() {
            numerator = numerator + scorer.log_prob_grad(x, y).mapv(|v| v * w);
        }
    }
    if denominator <= S::zero() {
        return Err(Error::Oracle(format!(
            "self-substituted denominator is zero at (x={x}, noisy={noisy_label})"
        )));
    }
    Ok(numerator.mapv(|v| v / denominator))
}

/// The mixed probability `sum_y cond(x, y, noisy) p(y|x; W)` whose log the
/// self-substituted correction differentiates.
pub fn mixed_log_likelihood<S: Scalar>(
    conditional: &CorrectionTable<S>,
    scorer: &Scorer<S>,
    x: usize,
    noisy_label: usize,
) -> S {
    let probs = scorer.probs(x);
    let mut mixed = S::zero();
    for y in 0..scorer.label_count() {
        if conditional.defined[(x, y)] {
            mixed = mixed + conditional.values[(x, y, noisy_label)] * probs[y];
        }
    }
    mixed.ln()
}

fn max_abs_diff<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs().to_f64())
        .fold(0.0, f64::max)
}

/// Tolerances of [`verify_suite`], also used by the acceptance checks.
pub mod tolerances {
    /// Posterior-corrected expectation vs clean expectation.
    pub const IDENTITY: f64 = 1e-10;
    /// Conditional vs posterior form, per noisy sample.
    pub const CHAIN: f64 = 1e-12;
    /// Posterior recomposition of the clean label distribution.
    pub const RECOMPOSITION: f64 = 1e-12;
    /// Bayes reconstruction of the posterior table from the conditional one.
    pub const BAYES: f64 = 1e-12;
    /// Self-substituted correction vs finite differences of the mixed log.
    pub const FORWARD_FD: f64 = 1e-6;
    /// Self-substituted correction vs the forward-corrected-loss gradient.
    pub const FORWARD_LOSS: f64 = 1e-10;
}

/// Worst observed deviations over a randomized run.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub trials: usize,
    pub max_identity_dev: f64,
    pub max_chain_dev: f64,
    pub max_recomposition_dev: f64,
    pub max_bayes_dev: f64,
    pub max_forward_fd_dev: f64,
    pub max_forward_loss_dev: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_identity_dev < tolerances::IDENTITY
            && self.max_chain_dev < tolerances::CHAIN
            && self.max_recomposition_dev < tolerances::RECOMPOSITION
            && self.max_bayes_dev < tolerances::BAYES
            && self.max_forward_fd_dev < tolerances::FORWARD_FD
            && self.max_forward_loss_dev < tolerances::FORWARD_LOSS
    }

    pub fn lines(&self) -> Vec<String> {
        let row = |name: &str, dev: f64, tol: f64| {
            format!(
                "{}: max deviation {dev:.3e} (tolerance {tol:.0e}) -> {}",
                name,
                if dev < tol { "pass" } else { "FAIL" }
            )
        };
        vec![
            row("posterior identity   ", self.max_identity_dev, tolerances::IDENTITY),
            row("conditional chain    ", self.max_chain_dev, tolerances::CHAIN),
            row("label recomposition  ", self.max_recomposition_dev, tolerances::RECOMPOSITION),
            row("bayes recomposition  ", self.max_bayes_dev, tolerances::BAYES),
            row("forward equiv (fd)   ", self.max_forward_fd_dev, tolerances::FORWARD_FD),
            row("forward equiv (loss) ", self.max_forward_loss_dev, tolerances::FORWARD_LOSS),
        ]
    }
}

/// Run the full randomized verification suite: `trials` random corruptions
/// with `|X|, |Y| <= 4` and a fresh random scorer each.
pub fn verify_suite<S: Scalar>(trials: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        trials,
        max_identity_dev: 0.0,
        max_chain_dev: 0.0,
        max_recomposition_dev: 0.0,
        max_bayes_dev: 0.0,
        max_forward_fd_dev: 0.0,
        max_forward_loss_dev: 0.0,
    };
    for trial in 0..trials {
        let feature_count = rng.random_range(2..=4);
        let label_count = rng.random_range(2..=4);
        let pair = PairedCorruption::<S>::random(&mut rng, feature_count, label_count);
        let scorer = Scorer::<S>::random(label_count, feature_count, seed ^ (trial as u64) << 17);
        let posterior = pair.posterior_table();
        let conditional = pair.conditional_table();

        // Posterior identity: corrected noisy expectation == clean expectation.
        let clean_expect = expected_gradient_clean(pair.clean(), &scorer);
        let corrected = posterior_corrected_expectation(&pair, &scorer)?;
        report.max_identity_dev = report
            .max_identity_dev
            .max(max_abs_diff(&clean_expect, &corrected));

        for x in 0..feature_count {
            let clean_posterior = pair.clean().label_posterior_given_feature(x)?;
            let noisy_posterior = pair.noisy().label_posterior_given_feature(x)?;

            // Recomposition: sum_noisy post * p_noisy(noisy|x) == p_clean(y|x).
            for y in 0..label_count {
                let mut recomposed = S::zero();
                for yt in 0..label_count {
                    if posterior.defined[(x, yt)] {
                        recomposed =
                            recomposed + posterior.values[(x, y, yt)] * noisy_posterior[yt];
                    }
                }
                report.max_recomposition_dev = report
                    .max_recomposition_dev
                    .max((recomposed - clean_posterior[y]).abs().to_f64());
            }

            // Bayes recomposition of the posterior table from the conditional.
            for yt in 0..label_count {
                let mut denom = S::zero();
                for y in 0..label_count {
                    denom = denom + conditional.values[(x, y, yt)] * clean_posterior[y];
                }
                if denom > S::zero() {
                    for y in 0..label_count {
                        let recomposed =
                            conditional.values[(x, y, yt)] * clean_posterior[y] / denom;
                        report.max_bayes_dev = report
                            .max_bayes_dev
                            .max((recomposed - posterior.values[(x, y, yt)]).abs().to_f64());
                    }
                }
            }

            for yt in 0..label_count {
                if pair.noisy().prob(x, yt) <= S::zero() {
                    continue;
                }
                // Chain: conditional ratio form == posterior form per sample.
                let post_grad = posterior_sample_gradient(&pair, &posterior, &scorer, x, yt)?;
                let cond_grad = conditional_sample_gradient(&pair, &conditional, &scorer, x, yt)?;
                report.max_chain_dev =
                    report.max_chain_dev.max(max_abs_diff(&post_grad, &cond_grad));

                // Forward equivalence, numeric route: finite differences of
                // the mixed log-likelihood.
                let self_grad =
                    self_substituted_gradient(&pair, &conditional, &scorer, x, yt)?;
                let fd = finite_difference_mixed_log(&conditional, &scorer, x, yt);
                report.max_forward_fd_dev =
                    report.max_forward_fd_dev.max(max_abs_diff(&self_grad, &fd));

                // Forward equivalence, shared-fixture route: the transition
                // matrix built from this conditional slice feeds the
                // forward-corrected loss; its gradient chained through the
                // scorer softmax must be the negated self-substituted one.
                let t_slice = Array2::from_shape_fn((label_count, label_count), |(row, col)| {
                    conditional.values[(x, col, row)]
                });
                let t = crate::transition::TransitionMatrix::new(t_slice)?;
                let probs = scorer.probs(x);
                let loss = crate::loss::forward_corrected_loss(&probs, yt, &t)?;
                let loss_grad = scorer.backprop_probs_grad(x, &loss.dloss_dprobs);
                let negated = loss_grad.mapv(|v| -v);
                report.max_forward_loss_dev = report
                    .max_forward_loss_dev
                    .max(max_abs_diff(&self_grad, &negated));
            }
        }
    }
    Ok(report)
}

const FD_STEP: f64 = 1e-5;

fn finite_difference_mixed_log<S: Scalar>(
    conditional: &CorrectionTable<S>,
    scorer: &Scorer<S>,
    x: usize,
    noisy_label: usize,
) -> Array2<S> {
    let mut grad = Array2::zeros(scorer.weights().dim());
    let step = S::from_f64(FD_STEP);
    for j in 0..scorer.label_count() {
        for c in 0..scorer.feature_count() {
            let mut plus = scorer.clone();
            plus.weights[(j, c)] = plus.weights[(j, c)] + step;
            let mut minus = scorer.clone();
            minus.weights[(j, c)] = minus.weights[(j, c)] - step;
            let hi = mixed_log_likelihood(conditional, &plus, x, noisy_label);
            let lo = mixed_log_likelihood(conditional, &minus, x, noisy_label);
            grad[(j, c)] = (hi - lo) / (step + step);
        }
    }
    grad
}
