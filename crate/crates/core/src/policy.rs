//! Stationary randomized policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::scalar::Real;

/// A stationary policy that can report `pi(. | s)`.
pub trait ActionPolicy<F> {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Writes `pi(. | state)` into `out` (length `n_actions`).
    fn action_probs_into(&self, state: usize, out: &mut [F]);
}

/// Tabular softmax policy, `pi(a|s) = exp(theta[s,a]) / sum_b exp(theta[s,b])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct SoftmaxPolicy<F> {
    n_states: usize,
    n_actions: usize,
    /// Row-major `S x A` logits.
    theta: Vec<F>,
}

impl<F: Real> SoftmaxPolicy<F> {
    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, theta: vec![F::zero(); n_states * n_actions] }
    }

    pub fn from_theta(n_states: usize, n_actions: usize, theta: Vec<F>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("policy needs at least one state and one action"));
        }
        if theta.len() != n_states * n_actions {
            return Err(invalid(format!(
                "theta: expected {} entries, got {}",
                n_states * n_actions,
                theta.len()
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(invalid("theta contains a non-finite entry"));
        }
        Ok(Self { n_states, n_actions, theta })
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [F] {
        &mut self.theta
    }

    pub fn logits(&self, state: usize) -> &[F] {
        &self.theta[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// `pi(. | state)`.
    pub fn probs(&self, state: usize) -> Result<Vec<F>> {
        self.check_state(state)?;
        let mut out = vec![F::zero(); self.n_actions];
        softmax_into(self.logits(state), &mut out);
        Ok(out)
    }

    /// `grad_theta log pi(action | state)`.
    pub fn score_gradient(&self, state: usize, action: usize) -> Result<ScoreGradient<F>> {
        self.check_state(state)?;
        if action >= self.n_actions {
            return Err(domain(format!("action {action} out of range 0..{}", self.n_actions)));
        }
        let mut row = vec![F::zero(); self.n_actions];
        softmax_into(self.logits(state), &mut row);
        Ok(ScoreGradient::from_probs(self.n_states, state, action, row))
    }

    /// Draws `a ~ pi(. | state)`, reusing `scratch` for the probabilities.
    pub(crate) fn sample_action<R: Rng + ?Sized>(
        &self,
        state: usize,
        scratch: &mut [F],
        rng: &mut R,
    ) -> usize {
        softmax_into(self.logits(state), scratch);
        sample_index(scratch, rng)
    }

    /// Adds `scale * grad` to theta.
    pub fn apply(&mut self, grad: &ScoreGradient<F>, scale: F) {
        let start = grad.state * self.n_actions;
        for (t, &g) in self.theta[start..start + self.n_actions].iter_mut().zip(&grad.row) {
            *t = *t + scale * g;
        }
    }

    pub fn max_abs_theta(&self) -> F {
        self.theta.iter().fold(F::zero(), |m, x| m.max(x.abs()))
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.n_states {
            return Err(domain(format!("state {state} out of range 0..{}", self.n_states)));
        }
        Ok(())
    }
}

impl<F: Real> ActionPolicy<F> for SoftmaxPolicy<F> {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn action_probs_into(&self, state: usize, out: &mut [F]) {
        softmax_into(self.logits(state), out);
    }
}

/// Deterministic policy, one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub n_actions: usize,
    pub actions: Vec<usize>,
}

impl<F: Real> ActionPolicy<F> for DeterministicPolicy {
    fn n_states(&self) -> usize {
        self.actions.len()
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn action_probs_into(&self, state: usize, out: &mut [F]) {
        out.fill(F::zero());
        out[self.actions[state]] = F::one();
    }
}

/// Score function `grad_theta log pi(a|s)` of a tabular softmax policy.
///
/// Only row `s` of the `S x A` gradient table is nonzero, so just that row
/// is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGradient<F> {
    n_states: usize,
    state: usize,
    row: Vec<F>,
}

impl<F: Real> ScoreGradient<F> {
    /// Turns `pi(.|state)` into the score row for `action` in place.
    pub(crate) fn from_probs(n_states: usize, state: usize, action: usize, mut probs: Vec<F>) -> Self {
        for (b, p) in probs.iter_mut().enumerate() {
            *p = if b == action { F::one() - *p } else { -*p };
        }
        Self { n_states, state, row: probs }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// The nonzero row of the gradient.
    pub fn row(&self) -> &[F] {
        &self.row
    }

    /// Dense row-major `S x A` table.
    pub fn to_table(&self) -> Vec<F> {
        let a = self.row.len();
        let mut out = vec![F::zero(); self.n_states * a];
        out[self.state * a..(self.state + 1) * a].copy_from_slice(&self.row);
        out
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_into<F: Real>(logits: &[F], out: &mut [F]) {
    let max = logits.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
    let mut total = F::zero();
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Inverse-CDF draw from a probability vector.
///
/// Rounding slack at the top end falls on the last index with positive mass.
pub(crate) fn sample_index<F: Real, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            cum += p;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}
