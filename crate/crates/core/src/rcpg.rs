//! Robust-constrained policy gradient.
//!
//! Each episode is simulated under a stationary adversarial model built from
//! a robust critic of the current policy. The backward pass then applies a
//! Monte-Carlo Lagrangian policy-gradient step to `theta` (fast timescale)
//! and projected dual ascent to `lambda` (slow timescale) at every step.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguitySet, Sense, ValueOrder};
use crate::error::{domain, invalid, Error, Result};
use crate::mdp::{TabularMdp, TransitionModel, TransitionTable};
use crate::policy::SoftmaxPolicy;
use crate::rng::{domain as streams, RunSeed};
use crate::robust_dp::{robust_value_iteration, robust_value_iteration_from, IterationOptions, ValueFunction, ValueKind};
use crate::scalar::Real;
use crate::trajectory::{sample_trajectory, Trajectory};

/// `zeta(k) = scale / (1 + k)^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl StepSchedule {
    pub fn at<F: Real>(&self, k: usize) -> Result<F> {
        step_size(*self, k)
    }
}

pub fn step_size<F: Real>(schedule: StepSchedule, k: usize) -> Result<F> {
    if !(schedule.scale > 0.0) || !schedule.scale.is_finite() {
        return Err(domain(format!("step scale must be positive, got {}", schedule.scale)));
    }
    if !(schedule.exponent >= 0.0) {
        return Err(domain(format!("step exponent must be nonnegative, got {}", schedule.exponent)));
    }
    Ok(F::of(schedule.scale / (1.0 + k as f64).powf(schedule.exponent)))
}

/// Which adversarial model trajectories are sampled from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adversary {
    /// Worst case for the cost value `v`.
    #[default]
    Cost,
    /// Worst case for the constraint value `u`.
    Constraint,
    /// The nominal estimate itself.
    Nominal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonRobustUnconstrained,
    RobustUnconstrained,
    #[default]
    RobustConstrained,
}

impl Mode {
    pub fn is_robust(self) -> bool {
        !matches!(self, Mode::NonRobustUnconstrained)
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Mode::RobustConstrained)
    }
}

/// Per-step weight on the return-to-go in the `theta` update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientWeighting {
    /// `discount^t * G_t`: unbiased for the gradient of the discounted objective.
    #[default]
    Discounted,
    /// `G_t` alone, as in the per-step listing of the algorithm.
    Undiscounted,
}

/// When the multiplier takes its ascent step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaUpdate {
    /// Once per episode with the full constraint return `h(xi) - d0`.
    #[default]
    Episode,
    /// At every backward step with the partial return-to-go `h_t - d0`.
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub d0: f64,
    pub lambda0: f64,
    pub theta_step: StepSchedule,
    pub lambda_step: StepSchedule,
    pub lambda_max: f64,
    pub adversary: Adversary,
    pub sense: Sense,
    pub mode: Mode,
    pub critic_refresh: usize,
    pub critic: IterationOptions,
    pub weighting: GradientWeighting,
    pub lambda_update: LambdaUpdate,
    /// Abort once any `|theta|` exceeds this.
    pub theta_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            horizon: 200,
            d0: 0.0,
            lambda0: 0.0,
            theta_step: StepSchedule { scale: 1e-3, exponent: 0.6 },
            lambda_step: StepSchedule { scale: 1e-2, exponent: 0.9 },
            lambda_max: 100.0,
            adversary: Adversary::Cost,
            sense: Sense::Maximize,
            mode: Mode::RobustConstrained,
            critic_refresh: 10,
            critic: IterationOptions::default(),
            weighting: GradientWeighting::Discounted,
            lambda_update: LambdaUpdate::Episode,
            theta_limit: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(invalid(m));
        if self.episodes == 0 || self.horizon == 0 {
            return fail("episodes and horizon must be positive".into());
        }
        if !(self.d0 >= 0.0) {
            return fail(format!("d0 must be nonnegative, got {}", self.d0));
        }
        if !(self.lambda_max >= 0.0) || !(self.lambda0 >= 0.0 && self.lambda0 <= self.lambda_max) {
            return fail(format!("need 0 <= lambda0 <= lambda_max, got {} and {}", self.lambda0, self.lambda_max));
        }
        let (kt, kl) = (self.theta_step.exponent, self.lambda_step.exponent);
        if !(kl > 0.5 && kl <= 1.0) {
            return fail(format!("lambda step exponent must lie in (0.5, 1], got {kl}"));
        }
        if !(kt > 0.0 && kt < kl) {
            return fail(format!("theta step exponent must lie in (0, {kl}), got {kt}"));
        }
        if !(self.theta_step.scale > 0.0 && self.lambda_step.scale > 0.0) {
            return fail("step scales must be positive".into());
        }
        if self.critic_refresh == 0 {
            return fail("critic_refresh must be positive".into());
        }
        if !(self.theta_limit > 0.0) {
            return fail("theta_limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct EpisodeRecord<F> {
    pub episode: usize,
    /// Discounted cost return of the sampled episode.
    pub g: F,
    /// Discounted constraint-cost return of the sampled episode.
    pub h: F,
    /// Multiplier after the episode's updates.
    pub lambda: F,
    /// Sup norm of the change in theta over the episode.
    pub theta_change: F,
}

/// Expected discounted values of a policy from the initial distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct EvaluationSummary<F> {
    pub robust_cost: F,
    pub robust_constraint: F,
    pub nominal_cost: F,
    pub nominal_constraint: F,
    pub d0: F,
    /// `robust_constraint <= d0`.
    pub constraint_satisfied: bool,
}

impl<F: Real> EvaluationSummary<F> {
    pub fn evaluate(
        mdp: &TabularMdp<F>,
        amb: &AmbiguitySet<F>,
        policy: &SoftmaxPolicy<F>,
        d0: F,
        options: IterationOptions,
    ) -> Result<Self> {
        let p0 = mdp.initial_dist();
        let nominal = amb.without_uncertainty();
        let value = |set: &AmbiguitySet<F>, kind| {
            robust_value_iteration(mdp, set, kind, Some(policy), options).map(|v| v.expected(p0))
        };
        let robust_constraint = value(amb, ValueKind::Constraint)?;
        Ok(Self {
            robust_cost: value(amb, ValueKind::Cost)?,
            robust_constraint,
            nominal_cost: value(&nominal, ValueKind::Cost)?,
            nominal_constraint: value(&nominal, ValueKind::Constraint)?,
            d0,
            constraint_satisfied: robust_constraint <= d0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct TrainReport<F> {
    pub episodes: Vec<EpisodeRecord<F>>,
    pub summary: EvaluationSummary<F>,
}

impl<F: Real> TrainReport<F> {
    /// `episode,g,h,lambda,theta_change` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,g,h,lambda,theta_change\n");
        for r in &self.episodes {
            out.push_str(&format!("{},{},{},{},{}\n", r.episode, r.g, r.h, r.lambda, r.theta_change));
        }
        out
    }
}

/// Stationary adversarial model: for every `(s,a)`, the distribution in the
/// ambiguity ball optimizing `p^T critic` in direction `sense`.
pub fn worst_case_transition_model<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    critic: &ValueFunction<F>,
    sense: Sense,
) -> Result<TransitionTable<F>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if amb.n_states() != ns || amb.n_actions() != na || critic.values.len() != ns {
        return Err(invalid("critic or ambiguity set does not match the MDP"));
    }
    if critic.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("critic has a non-finite entry"));
    }
    let order = ValueOrder::new(&critic.values, sense);
    let mut table = TransitionTable::from_parts_unchecked(ns, na, vec![F::zero(); ns * na * ns]);
    for s in 0..ns {
        for a in 0..na {
            order.solve_into(amb.nominal().row(s, a), amb.budget(s, a), &critic.values, table.row_mut(s, a));
        }
    }
    Ok(table)
}

/// Per-step `(weight * (G_t + lambda H_t))` multipliers of the score
/// functions, for a fixed `lambda`.
pub fn step_multipliers<F: Real>(
    trajectory: &Trajectory<F>,
    lambda: F,
    discount: F,
    weighting: GradientWeighting,
) -> Vec<F> {
    let weights = step_weights(trajectory.steps.len(), discount, weighting);
    let (mut g, mut h) = (F::zero(), F::zero());
    let mut out = vec![F::zero(); trajectory.steps.len()];
    for (t, step) in trajectory.steps.iter().enumerate().rev() {
        g = step.cost + discount * g;
        h = step.constraint_cost + discount * h;
        out[t] = weights[t] * (g + lambda * h);
    }
    out
}

/// Single-episode estimate of `grad_theta L` (dense `S x A`) with `lambda` held fixed.
pub fn gradient_estimate<F: Real>(
    trajectory: &Trajectory<F>,
    lambda: F,
    discount: F,
    weighting: GradientWeighting,
) -> Vec<F> {
    let mults = step_multipliers(trajectory, lambda, discount, weighting);
    let mut grad: Vec<F> = Vec::new();
    for (step, m) in trajectory.steps.iter().zip(mults) {
        let table = step.score.to_table();
        if grad.is_empty() {
            grad = vec![F::zero(); table.len()];
        }
        for (acc, x) in grad.iter_mut().zip(table) {
            *acc = *acc + m * x;
        }
    }
    grad
}

fn step_weights<F: Real>(len: usize, discount: F, weighting: GradientWeighting) -> Vec<F> {
    let mut w = Vec::with_capacity(len);
    let mut acc = F::one();
    for _ in 0..len {
        w.push(acc);
        if weighting == GradientWeighting::Discounted {
            acc = acc * discount;
        }
    }
    w
}

/// Episode-by-episode driver; [`train`] runs it to completion.
pub struct Trainer<'a, F: Real> {
    mdp: &'a TabularMdp<F>,
    amb: &'a AmbiguitySet<F>,
    config: TrainConfig,
    seed: RunSeed,
    policy: SoftmaxPolicy<F>,
    lambda: F,
    critic: Option<ValueFunction<F>>,
    model: TransitionTable<F>,
    episode: usize,
    records: Vec<EpisodeRecord<F>>,
}

impl<'a, F: Real> Trainer<'a, F> {
    pub fn new(mdp: &'a TabularMdp<F>, amb: &'a AmbiguitySet<F>, config: TrainConfig, seed: RunSeed) -> Result<Self> {
        config.validate()?;
        if amb.n_states() != mdp.n_states() || amb.n_actions() != mdp.n_actions() {
            return Err(invalid("ambiguity set dimensions do not match the MDP"));
        }
        let lambda = if config.mode.is_constrained() { F::of(config.lambda0) } else { F::zero() };
        Ok(Self {
            mdp,
            amb,
            policy: SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()),
            lambda,
            critic: None,
            model: amb.nominal().clone(),
            episode: 0,
            records: Vec::with_capacity(config.episodes),
            config,
            seed,
        })
    }

    pub fn policy(&self) -> &SoftmaxPolicy<F> {
        &self.policy
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }

    /// The model the next episode will be sampled from.
    pub fn sampling_model(&self) -> &TransitionTable<F> {
        &self.model
    }

    pub fn records(&self) -> &[EpisodeRecord<F>] {
        &self.records
    }

    fn uses_adversary(&self) -> bool {
        self.config.mode.is_robust() && self.config.adversary != Adversary::Nominal
    }

    fn refresh_critic(&mut self) -> Result<()> {
        let kind = match self.config.adversary {
            Adversary::Constraint => ValueKind::Constraint,
            _ => ValueKind::Cost,
        };
        let start = self.critic.take().unwrap_or_else(|| ValueFunction::zeros(kind, self.mdp.n_states()));
        let (critic, _) =
            robust_value_iteration_from(self.mdp, self.amb, Some(&self.policy), start, self.config.critic)?;
        self.model = worst_case_transition_model(self.mdp, self.amb, &critic, self.config.sense)?;
        self.critic = Some(critic);
        Ok(())
    }

    /// Simulates and learns from one episode.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord<F>> {
        let k = self.episode;
        if self.uses_adversary() && k % self.config.critic_refresh == 0 {
            self.refresh_critic()?;
        }
        let mut rng = self.seed.stream(streams::TRAIN, k as u64);
        let traj = sample_trajectory(self.mdp, &self.policy, &self.model, self.config.horizon, &mut rng)?;

        let gamma = self.mdp.discount();
        let zeta_theta: F = self.config.theta_step.at(k)?;
        let zeta_lambda: F = self.config.lambda_step.at(k)?;
        let (d0, lambda_max) = (F::of(self.config.d0), F::of(self.config.lambda_max));
        let constrained = self.config.mode.is_constrained();
        let per_step = self.config.lambda_update == LambdaUpdate::Step;
        let project = |x: F| x.max(F::zero()).min(lambda_max);
        let weights = step_weights(traj.steps.len(), gamma, self.config.weighting);
        let before = self.policy.theta().to_vec();

        let (mut g, mut h) = (F::zero(), F::zero());
        for (t, step) in traj.steps.iter().enumerate().rev() {
            g = step.cost + gamma * g;
            h = step.constraint_cost + gamma * h;
            let scale = -(zeta_theta * weights[t] * (g + self.lambda * h));
            self.policy.apply(&step.score, scale);
            if constrained && per_step {
                self.lambda = project(self.lambda + zeta_lambda * (h - d0));
            }
        }
        if constrained && !per_step {
            self.lambda = project(self.lambda + zeta_lambda * (h - d0));
        }

        let theta_change = before
            .iter()
            .zip(self.policy.theta())
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let max_theta = self.policy.max_abs_theta();
        if !g.is_finite() || !h.is_finite() || !max_theta.is_finite() || max_theta > F::of(self.config.theta_limit) {
            return Err(Error::Divergence {
                episode: k,
                detail: format!("g={g}, h={h}, lambda={}, max|theta|={max_theta}", self.lambda),
            });
        }
        let record = EpisodeRecord { episode: k, g, h, lambda: self.lambda, theta_change };
        self.records.push(record.clone());
        self.episode += 1;
        Ok(record)
    }

    pub fn finish(self) -> Result<(SoftmaxPolicy<F>, TrainReport<F>)> {
        let summary =
            EvaluationSummary::evaluate(self.mdp, self.amb, &self.policy, F::of(self.config.d0), self.config.critic)?;
        Ok((self.policy, TrainReport { episodes: self.records, summary }))
    }
}

/// Runs all configured episodes; deterministic given `seed`.
pub fn train<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    config: &TrainConfig,
    seed: RunSeed,
) -> Result<(SoftmaxPolicy<F>, TrainReport<F>)> {
    let mut trainer = Trainer::new(mdp, amb, config.clone(), seed)?;
    for _ in 0..config.episodes {
        trainer.run_episode()?;
    }
    trainer.finish()
}
