//! Per-sample losses: log, unhinged, backward- and forward-corrected, and
//! the skeptical loss with its magnification function.
//!
//! Every function returns the loss value together with its gradient with
//! respect to the predictive probabilities, ready to be pushed through
//! [`crate::network::backprop_per_sample`]. All losses follow one "minimize"
//! convention; the skeptical objective, which the derivation maximizes, is
//! emitted as `L_SK(1) - L_SK(p) >= 0`.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::network::softmax;
use crate::scalar::Scalar;
use crate::transition::TransitionMatrix;

/// The training objective selected for a run.
#[derive(Debug, Clone)]
pub enum LossKind<S: Scalar> {
    Log,
    Unhinged,
    Backward(TransitionMatrix<S>),
    Forward(TransitionMatrix<S>),
    Skeptical {
        transition: TransitionMatrix<S>,
        /// Magnification exponent, strictly in (0, 1).
        beta: S,
        /// Label mass estimate, strictly in (0, 1); 1/|Y| for balanced data.
        k: S,
    },
}

impl<S: Scalar> LossKind<S> {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Log => "log",
            LossKind::Unhinged => "unhinged",
            LossKind::Backward(_) => "backward",
            LossKind::Forward(_) => "forward",
            LossKind::Skeptical { .. } => "skeptical",
        }
    }

    pub fn transition(&self) -> Option<&TransitionMatrix<S>> {
        match self {
            LossKind::Log | LossKind::Unhinged => None,
            LossKind::Backward(t) | LossKind::Forward(t) => Some(t),
            LossKind::Skeptical { transition, .. } => Some(transition),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Skeptical { beta, k, .. } = self {
            check_unit_open("beta", *beta)?;
            check_unit_open("k", *k)?;
        }
        Ok(())
    }
}

/// Loss value plus its gradient with respect to the predictive probabilities
/// (before the softmax chain). `clamped` flags that a probability hit the
/// 1e-12 floor, i.e. the output saturated.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<S: Scalar> {
    pub value: S,
    pub dloss_dprobs: Array1<S>,
    pub clamped: bool,
}

fn check_label<S: Scalar>(probs: &Array1<S>, label: usize) -> Result<()> {
    if label >= probs.len() {
        return Err(Error::Index(format!(
            "label {label} out of range 0..{}",
            probs.len()
        )));
    }
    Ok(())
}

fn check_unit_open<S: Scalar>(name: &str, v: S) -> Result<()> {
    if !(v > S::zero() && v < S::one()) {
        return Err(Error::Domain(format!(
            "{name} must lie strictly inside (0, 1), got {v}"
        )));
    }
    Ok(())
}

/// Negative log-likelihood of the observed label.
pub fn log_loss<S: Scalar>(probs: &Array1<S>, noisy_label: usize) -> Result<LossOutput<S>> {
    check_label(probs, noisy_label)?;
    let floor = S::prob_floor();
    let p = probs[noisy_label];
    let clamped = p < floor;
    let p = p.max(floor);
    let mut grad = Array1::zeros(probs.len());
    grad[noisy_label] = -S::one() / p;
    Ok(LossOutput {
        value: -p.ln(),
        dloss_dprobs: grad,
        clamped,
    })
}

/// Multiclass unhinged loss on raw logits: `1 - logit[label] + mean of the
/// other logits`. The gradient is constant in logit space; it is emitted in
/// probability space as the exact preimage under the softmax Jacobian
/// (`g_probs = g_logits / probs`), which backprop maps back to the constant
/// logit gradient whenever no probability sits below the 1e-12 floor.
pub fn unhinged_loss<S: Scalar>(logits: &Array1<S>, noisy_label: usize) -> Result<LossOutput<S>> {
    unhinged_loss_with_probs(logits, &softmax(logits), noisy_label)
}

pub(crate) fn unhinged_loss_with_probs<S: Scalar>(
    logits: &Array1<S>,
    probs: &Array1<S>,
    noisy_label: usize,
) -> Result<LossOutput<S>> {
    check_label(logits, noisy_label)?;
    let n = logits.len();
    if n < 2 {
        return Err(Error::Shape("unhinged loss needs at least 2 labels".into()));
    }
    let others = S::from_f64(n as f64 - 1.0);
    let mean_rest = (logits.sum() - logits[noisy_label]) / others;
    let value = S::one() - logits[noisy_label] + mean_rest;

    let floor = S::prob_floor();
    let mut clamped = false;
    let grad = Array1::from_shape_fn(n, |j| {
        let g_logit = if j == noisy_label {
            -S::one()
        } else {
            S::one() / others
        };
        let p = probs[j];
        if p < floor {
            clamped = true;
        }
        g_logit / p.max(floor)
    });
    Ok(LossOutput {
        value,
        dloss_dprobs: grad,
        clamped,
    })
}

/// Backward correction: the inverse transition matrix reweights the vector
/// of per-class log losses.
pub fn backward_corrected_loss<S: Scalar>(
    probs: &Array1<S>,
    noisy_label: usize,
    transition: &TransitionMatrix<S>,
) -> Result<LossOutput<S>> {
    check_label(probs, noisy_label)?;
    if probs.len() != transition.label_count() {
        return Err(Error::Shape(format!(
            "{} probabilities but transition matrix over {} labels",
            probs.len(),
            transition.label_count()
        )));
    }
    let inv = transition.inverse()?;
    let floor = S::prob_floor();
    let mut value = S::zero();
    let mut clamped = false;
    let mut grad = Array1::zeros(probs.len());
    for y in 0..probs.len() {
        let p = probs[y];
        if p < floor {
            clamped = true;
        }
        let p = p.max(floor);
        let w = inv[(noisy_label, y)];
        value = value - w * p.ln();
        grad[y] = -w / p;
    }
    Ok(LossOutput {
        value,
        dloss_dprobs: grad,
        clamped,
    })
}

/// Forward (conditional) correction: predictions are mixed through the
/// transition row before the logarithm.
pub fn forward_corrected_loss<S: Scalar>(
    probs: &Array1<S>,
    noisy_label: usize,
    transition: &TransitionMatrix<S>,
) -> Result<LossOutput<S>> {
    check_label(probs, noisy_label)?;
    if probs.len() != transition.label_count() {
        return Err(Error::Shape(format!(
            "{} probabilities but transition matrix over {} labels",
            probs.len(),
            transition.label_count()
        )));
    }
    let (mixed, clamped) = mixed_probability(probs, noisy_label, transition);
    let grad = Array1::from_shape_fn(probs.len(), |y| {
        -transition.prob(noisy_label, y) / mixed
    });
    Ok(LossOutput {
        value: -mixed.ln(),
        dloss_dprobs: grad,
        clamped,
    })
}

/// `sum_y T[noisy, y] * probs[y]`, floored at 1e-12.
fn mixed_probability<S: Scalar>(
    probs: &Array1<S>,
    noisy_label: usize,
    transition: &TransitionMatrix<S>,
) -> (S, bool) {
    let mut mixed = S::zero();
    for y in 0..probs.len() {
        mixed = mixed + transition.prob(noisy_label, y) * probs[y];
    }
    let floor = S::prob_floor();
    if mixed < floor {
        (floor, true)
    } else {
        (mixed, false)
    }
}

/// Magnification function `f(p; k, beta) = p^(1-k^beta) / (1 - k^beta ln p)`.
///
/// Estimates the conditional-correction denominator from the mixed
/// probability itself: the skeptical gradient is the forward-correction
/// gradient divided by this factor. Removable endpoints are fixed to their
/// limits: `f(0) = 0`, `f(1) = 1`.
pub fn magnification<S: Scalar>(p: S, k: S, beta: S) -> Result<S> {
    if !(p >= S::zero() && p <= S::one()) {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    check_unit_open("k", k)?;
    check_unit_open("beta", beta)?;
    if p == S::zero() {
        return Ok(S::zero());
    }
    if p == S::one() {
        return Ok(S::one());
    }
    let a = k.powf(beta);
    Ok(p.powf(S::one() - a) / (S::one() - a * p.ln()))
}

/// The skeptical objective term `L_SK(p) = p^a (2/a - ln p)`, `a = k^beta`.
/// Increasing in `p` on [0, 1], bounded by `L_SK(1) = 2/a`; the removable
/// point at `p = 0` evaluates to its limit 0.
pub fn skeptical_objective<S: Scalar>(p: S, k: S, beta: S) -> Result<S> {
    if !(p >= S::zero() && p <= S::one()) {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    check_unit_open("k", k)?;
    check_unit_open("beta", beta)?;
    if p == S::zero() {
        return Ok(S::zero());
    }
    let a = k.powf(beta);
    Ok(p.powf(a) * (S::from_f64(2.0) / a - p.ln()))
}

/// `dL_SK/dp = p^(a-1) (1 - a ln p)`; the inverse of the magnification
/// function on (0, 1).
pub fn skeptical_objective_derivative<S: Scalar>(p: S, k: S, beta: S) -> Result<S> {
    if !(p > S::zero() && p <= S::one()) {
        return Err(Error::Domain(format!("p must lie in (0, 1], got {p}")));
    }
    check_unit_open("k", k)?;
    check_unit_open("beta", beta)?;
    let a = k.powf(beta);
    Ok(p.powf(a - S::one()) * (S::one() - a * p.ln()))
}

/// Skeptical loss on the transition-mixed probability.
///
/// The emitted value is `L_SK(1) - L_SK(p)`, a non-negative quantity whose
/// minimization maximizes the objective term.
pub fn skeptical_loss<S: Scalar>(
    probs: &Array1<S>,
    noisy_label: usize,
    transition: &TransitionMatrix<S>,
    k: S,
    beta: S,
) -> Result<LossOutput<S>> {
    check_label(probs, noisy_label)?;
    if probs.len() != transition.label_count() {
        return Err(Error::Shape(format!(
            "{} probabilities but transition matrix over {} labels",
            probs.len(),
            transition.label_count()
        )));
    }
    check_unit_open("k", k)?;
    check_unit_open("beta", beta)?;
    let (mixed, clamped) = mixed_probability(probs, noisy_label, transition);
    let mixed = mixed.min(S::one());
    let a = k.powf(beta);
    let ceiling = S::from_f64(2.0) / a;
    let objective = mixed.powf(a) * (ceiling - mixed.ln());
    let dobjective_dp = mixed.powf(a - S::one()) * (S::one() - a * mixed.ln());
    let grad = Array1::from_shape_fn(probs.len(), |y| {
        -dobjective_dp * transition.prob(noisy_label, y)
    });
    Ok(LossOutput {
        value: ceiling - objective,
        dloss_dprobs: grad,
        clamped,
    })
}

/// Evaluate the configured loss for one sample.
pub fn compute<S: Scalar>(
    kind: &LossKind<S>,
    logits: &Array1<S>,
    probs: &Array1<S>,
    noisy_label: usize,
) -> Result<LossOutput<S>> {
    match kind {
        LossKind::Log => log_loss(probs, noisy_label),
        LossKind::Unhinged => unhinged_loss_with_probs(logits, probs, noisy_label),
        LossKind::Backward(t) => backward_corrected_loss(probs, noisy_label, t),
        LossKind::Forward(t) => forward_corrected_loss(probs, noisy_label, t),
        LossKind::Skeptical {
            transition,
            beta,
            k,
        } => skeptical_loss(probs, noisy_label, transition, *k, *beta),
    }
}
