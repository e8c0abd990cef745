//! Episode sampling and discounted returns.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::mdp::{check_distribution, TabularMdp, TransitionModel};
use crate::policy::{sample_index, ActionPolicy, ScoreGradient, SoftmaxPolicy};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Step<F> {
    pub state: usize,
    pub action: usize,
    pub cost: F,
    pub constraint_cost: F,
    /// `grad_theta log pi(action | state)` under the sampling policy.
    pub score: ScoreGradient<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<F> {
    pub steps: Vec<Step<F>>,
    pub horizon: usize,
    /// State reached after the last step.
    pub final_state: usize,
}

impl<F: Real> Trajectory<F> {
    pub fn costs(&self) -> impl DoubleEndedIterator<Item = F> + '_ {
        self.steps.iter().map(|s| s.cost)
    }

    pub fn constraint_costs(&self) -> impl DoubleEndedIterator<Item = F> + '_ {
        self.steps.iter().map(|s| s.constraint_cost)
    }

    /// `(g, h)`: discounted cost and constraint-cost returns.
    pub fn returns(&self, discount: F) -> (F, F) {
        (
            discounted_sum(self.costs(), discount),
            discounted_sum(self.constraint_costs(), discount),
        )
    }
}

/// Samples a fixed-horizon episode: `s0 ~ p0`, `a ~ pi(.|s)`, `s' ~ model(s,a)`.
///
/// Every transition row drawn from `model` is validated before use.
pub fn sample_trajectory<F, M, R>(
    mdp: &TabularMdp<F>,
    policy: &SoftmaxPolicy<F>,
    model: &M,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory<F>>
where
    F: Real,
    M: TransitionModel<F> + ?Sized,
    R: Rng + ?Sized,
{
    let n = mdp.n_states();
    if model.n_states() != n || model.n_actions() != mdp.n_actions() {
        return Err(invalid("transition model dimensions do not match the MDP"));
    }
    if policy.n_states() != n || policy.n_actions() != mdp.n_actions() {
        return Err(invalid("policy dimensions do not match the MDP"));
    }
    let mut steps = Vec::with_capacity(horizon);
    let mut probs = vec![F::zero(); mdp.n_actions()];
    let mut state = sample_index(mdp.initial_dist(), rng);
    for _ in 0..horizon {
        let action = policy.sample_action(state, &mut probs, rng);
        let score = ScoreGradient::from_probs(n, state, action, probs.clone());
        let row = model.row(state, action);
        if check_distribution(row, n, "").is_err() {
            check_distribution(row, n, &format!("transition source row ({state},{action})"))?;
        }
        steps.push(Step {
            state,
            action,
            cost: mdp.cost(state, action),
            constraint_cost: mdp.constraint_cost(state),
            score,
        });
        state = sample_index(row, rng);
    }
    Ok(Trajectory { steps, horizon, final_state: state })
}

/// Rolls out `policy` and returns only `(g, h)`, skipping score gradients.
pub fn rollout_returns<F, M, R>(
    mdp: &TabularMdp<F>,
    policy: &SoftmaxPolicy<F>,
    model: &M,
    horizon: usize,
    rng: &mut R,
) -> (F, F)
where
    F: Real,
    M: TransitionModel<F> + ?Sized,
    R: Rng + ?Sized,
{
    let gamma = mdp.discount();
    let mut probs = vec![F::zero(); mdp.n_actions()];
    let mut state = sample_index(mdp.initial_dist(), rng);
    let (mut g, mut h, mut weight) = (F::zero(), F::zero(), F::one());
    for _ in 0..horizon {
        let action = policy.sample_action(state, &mut probs, rng);
        g = g + weight * mdp.cost(state, action);
        h = h + weight * mdp.constraint_cost(state);
        weight = weight * gamma;
        state = sample_index(model.row(state, action), rng);
    }
    (g, h)
}

/// `sum_t discount^t * values[t]`.
pub fn discounted_return<F: Real>(values: &[F], discount: F) -> F {
    discounted_sum(values.iter().copied(), discount)
}

/// Backward recursion `acc <- x_t + discount * acc`.
fn discounted_sum<F: Real>(values: impl DoubleEndedIterator<Item = F>, discount: F) -> F {
    values.rev().fold(F::zero(), |acc, x| x + discount * acc)
}
