//! Tabular robust constrained Markov decision processes.
//!
//! The crate covers the whole pipeline for finite MDPs whose transition
//! kernel is only known through samples:
//!
//! * [`ambiguity`]: nominal estimates and Hoeffding-sized L1 balls, with an
//!   exact greedy solver for the adversary's inner problem ([`lp`] holds the
//!   simplex oracle it is checked against);
//! * [`robust_dp`]: robust Bellman operators, value iteration and the
//!   Lagrangian `v + lambda (u - d0)`;
//! * [`rcpg`]: the two-timescale robust-constrained policy-gradient trainer;
//! * [`envs`]: inventory control and a test chain.
//!
//! All numerics are generic over [`Real`]; the aliases below fix `f64`.

pub mod ambiguity;
pub mod envs;
pub mod error;
pub mod lp;
pub mod mdp;
pub mod policy;
pub mod rcpg;
pub mod rng;
pub mod robust_dp;
pub mod scalar;
pub mod trajectory;

pub use ambiguity::{
    estimate_nominal, hoeffding_budget, hoeffding_budget_unclamped, worst_case_distribution, AmbiguitySet, Sense,
    TransitionDataset,
};
pub use envs::{build_chain_mdp, build_inventory_mdp, generate_dataset, robust_constraint_range, BudgetRule, InventorySpec};
pub use error::{Error, Result};
pub use lp::{lp_oracle, lp_oracle_exact};
pub use mdp::{TabularMdp, TransitionModel, TransitionTable};
pub use policy::{ActionPolicy, DeterministicPolicy, ScoreGradient, SoftmaxPolicy};
pub use rcpg::{
    step_size, train, worst_case_transition_model, Adversary, EpisodeRecord, EvaluationSummary, GradientWeighting,
    LambdaUpdate, Mode, StepSchedule, TrainConfig, TrainReport, Trainer,
};
pub use rng::RunSeed;
pub use robust_dp::{
    lagrangian_value, robust_bellman_optimal, robust_bellman_policy, robust_value_iteration, IterationOptions,
    ValueFunction, ValueKind,
};
pub use scalar::{LpField, Real};
pub use trajectory::{discounted_return, sample_trajectory, Trajectory};

pub type Mdp = TabularMdp<f64>;
pub type Policy = SoftmaxPolicy<f64>;
pub type Ambiguity = AmbiguitySet<f64>;
pub type Transitions = TransitionTable<f64>;
pub type Values = ValueFunction<f64>;
pub type Report = TrainReport<f64>;
pub type Summary = EvaluationSummary<f64>;
