//! Robust dynamic programming over `(s,a)`-rectangular L1 ambiguity sets.
//!
//! Both operators take the adversarial expectation per state-action pair:
//!
//! ```text
//! q(s,a)       = stage(s,a) + discount * max_{p in P(s,a)} p^T v
//! (T v)(s)     = min_a q(s,a)
//! (T^pi v)(s)  = sum_a pi(a|s) q(s,a)
//! ```
//!
//! The stage cost is `c(s,a)` for [`ValueKind::Cost`] and `d(s)` for
//! [`ValueKind::Constraint`]. Both are sup-norm contractions with modulus
//! `discount`.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguitySet, Sense, ValueOrder};
use crate::error::{domain, invalid, Error, Result};
use crate::mdp::{TabularMdp, TransitionModel};
use crate::policy::{ActionPolicy, DeterministicPolicy};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// Discounted cost, `v`.
    Cost,
    /// Discounted constraint cost, `u`.
    Constraint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct ValueFunction<F> {
    pub kind: ValueKind,
    pub values: Vec<F>,
}

impl<F: Real> ValueFunction<F> {
    pub fn zeros(kind: ValueKind, n_states: usize) -> Self {
        Self { kind, values: vec![F::zero(); n_states] }
    }

    /// `sum_s p0(s) v(s)`.
    pub fn expected(&self, initial_dist: &[F]) -> F {
        self.values.iter().zip(initial_dist).map(|(&v, &p)| v * p).sum()
    }

    pub fn sup_distance(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(&other.values)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iters: 100_000 }
    }
}

#[inline]
fn stage_cost<F: Real>(mdp: &TabularMdp<F>, kind: ValueKind, s: usize, a: usize) -> F {
    match kind {
        ValueKind::Cost => mdp.cost(s, a),
        ValueKind::Constraint => mdp.constraint_cost(s),
    }
}

fn check_shapes<F: Real>(mdp: &TabularMdp<F>, amb: &AmbiguitySet<F>, v: &[F]) -> Result<()> {
    if amb.n_states() != mdp.n_states() || amb.n_actions() != mdp.n_actions() {
        return Err(invalid("ambiguity set dimensions do not match the MDP"));
    }
    if v.len() != mdp.n_states() {
        return Err(invalid(format!("value function has {} entries, MDP has {} states", v.len(), mdp.n_states())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("value function has a non-finite entry"));
    }
    Ok(())
}

fn check_policy<F: Real>(mdp: &TabularMdp<F>, policy: &dyn ActionPolicy<F>) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(invalid("policy dimensions do not match the MDP"));
    }
    Ok(())
}

/// Fills `q` (row-major `S x A`) with the robust state-action values of `v`.
fn robust_q<F: Real>(mdp: &TabularMdp<F>, amb: &AmbiguitySet<F>, v: &ValueFunction<F>, q: &mut [F], scratch: &mut [F]) {
    let order = ValueOrder::new(&v.values, Sense::Maximize);
    let gamma = mdp.discount();
    let na = mdp.n_actions();
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let worst = order.solve_into(amb.nominal().row(s, a), amb.budget(s, a), &v.values, scratch);
            q[s * na + a] = stage_cost(mdp, v.kind, s, a) + gamma * worst;
        }
    }
}

/// Minimizing action per state; ties go to the lowest index.
fn argmin_row<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (a, &x) in row.iter().enumerate().skip(1) {
        if x < row[best] {
            best = a;
        }
    }
    best
}

/// One application of the optimal robust Bellman operator.
pub fn robust_bellman_optimal<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    v: &ValueFunction<F>,
) -> Result<ValueFunction<F>> {
    check_shapes(mdp, amb, &v.values)?;
    Ok(Sweeper::new(mdp).optimal(mdp, amb, v))
}

/// One application of the robust policy-evaluation operator.
pub fn robust_bellman_policy<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    policy: &dyn ActionPolicy<F>,
    v: &ValueFunction<F>,
) -> Result<ValueFunction<F>> {
    check_shapes(mdp, amb, &v.values)?;
    check_policy(mdp, policy)?;
    Ok(Sweeper::new(mdp).policy(mdp, amb, policy, v))
}

/// Greedy deterministic policy with respect to the robust q-values of `v`.
pub fn greedy_policy<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    v: &ValueFunction<F>,
) -> Result<DeterministicPolicy> {
    check_shapes(mdp, amb, &v.values)?;
    let mut sweeper = Sweeper::new(mdp);
    robust_q(mdp, amb, v, &mut sweeper.q, &mut sweeper.scratch);
    let na = mdp.n_actions();
    let actions = (0..mdp.n_states()).map(|s| argmin_row(&sweeper.q[s * na..(s + 1) * na])).collect();
    Ok(DeterministicPolicy { n_actions: na, actions })
}

struct Sweeper<F> {
    q: Vec<F>,
    scratch: Vec<F>,
    probs: Vec<F>,
}

impl<F: Real> Sweeper<F> {
    fn new(mdp: &TabularMdp<F>) -> Self {
        Self {
            q: vec![F::zero(); mdp.n_states() * mdp.n_actions()],
            scratch: vec![F::zero(); mdp.n_states()],
            probs: vec![F::zero(); mdp.n_actions()],
        }
    }

    fn optimal(&mut self, mdp: &TabularMdp<F>, amb: &AmbiguitySet<F>, v: &ValueFunction<F>) -> ValueFunction<F> {
        robust_q(mdp, amb, v, &mut self.q, &mut self.scratch);
        let na = mdp.n_actions();
        let values = (0..mdp.n_states())
            .map(|s| {
                let row = &self.q[s * na..(s + 1) * na];
                row[argmin_row(row)]
            })
            .collect();
        ValueFunction { kind: v.kind, values }
    }

    fn policy(
        &mut self,
        mdp: &TabularMdp<F>,
        amb: &AmbiguitySet<F>,
        policy: &dyn ActionPolicy<F>,
        v: &ValueFunction<F>,
    ) -> ValueFunction<F> {
        robust_q(mdp, amb, v, &mut self.q, &mut self.scratch);
        let na = mdp.n_actions();
        let values = (0..mdp.n_states())
            .map(|s| {
                policy.action_probs_into(s, &mut self.probs);
                self.probs.iter().zip(&self.q[s * na..(s + 1) * na]).map(|(&p, &q)| p * q).sum()
            })
            .collect();
        ValueFunction { kind: v.kind, values }
    }
}

/// Fixed point of the optimal operator (no policy) or of the policy
/// operator, starting from zero.
pub fn robust_value_iteration<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    kind: ValueKind,
    policy: Option<&dyn ActionPolicy<F>>,
    options: IterationOptions,
) -> Result<ValueFunction<F>> {
    let start = ValueFunction::zeros(kind, mdp.n_states());
    robust_value_iteration_from(mdp, amb, policy, start, options).map(|(v, _)| v)
}

/// Value iteration warm-started at `start`; also returns the sweep count.
pub fn robust_value_iteration_from<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    policy: Option<&dyn ActionPolicy<F>>,
    start: ValueFunction<F>,
    options: IterationOptions,
) -> Result<(ValueFunction<F>, usize)> {
    if !(options.tolerance > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {}", options.tolerance)));
    }
    check_shapes(mdp, amb, &start.values)?;
    if let Some(p) = policy {
        check_policy(mdp, p)?;
    }
    let tol = F::of(options.tolerance);
    let mut sweeper = Sweeper::new(mdp);
    let mut v = start;
    let mut residual = F::infinity();
    for it in 1..=options.max_iters {
        let next = match policy {
            Some(p) => sweeper.policy(mdp, amb, p, &v),
            None => sweeper.optimal(mdp, amb, &v),
        };
        residual = next.sup_distance(&v);
        v = next;
        if residual < tol {
            return Ok((v, it));
        }
    }
    Err(Error::Convergence { iterations: options.max_iters, residual: residual.as_f64() })
}

/// `sum_s p0(s) [v(s) + lambda (u(s) - d0)]` with robust `v` and `u` of `policy`.
pub fn lagrangian_value<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    policy: &dyn ActionPolicy<F>,
    lambda: F,
    d0: F,
    options: IterationOptions,
) -> Result<F> {
    if !(lambda >= F::zero()) {
        return Err(domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    let v = robust_value_iteration(mdp, amb, ValueKind::Cost, Some(policy), options)?;
    let u = robust_value_iteration(mdp, amb, ValueKind::Constraint, Some(policy), options)?;
    let p0 = mdp.initial_dist();
    Ok(v.expected(p0) + lambda * (u.expected(p0) - d0))
}
