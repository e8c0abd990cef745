//! Finite MDPs with a per-step cost, a state constraint cost and a fixed
//! discount.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Anything that can hand out a next-state distribution for `(s, a)`.
pub trait TransitionModel<F> {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn row(&self, state: usize, action: usize) -> &[F];
}

/// Checks that `p` is a probability vector of the expected length.
pub fn check_distribution<F: Real>(p: &[F], len: usize, what: &str) -> Result<()> {
    if p.len() != len {
        return Err(invalid(format!("{what}: expected {len} entries, got {}", p.len())));
    }
    let mut total = F::zero();
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < F::zero() {
            return Err(invalid(format!("{what}: entry {i} is {x}")));
        }
        total = total + x;
    }
    if (total - F::one()).abs() > F::sum_tolerance() {
        return Err(invalid(format!("{what}: sums to {total}")));
    }
    Ok(())
}

/// Dense `S x A x S` table of next-state distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTable<F> {
    n_states: usize,
    n_actions: usize,
    probs: Vec<F>,
}

impl<F: Real> TransitionTable<F> {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<F>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("transition table needs at least one state and one action"));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(invalid(format!(
                "transition table: expected {} entries, got {}",
                n_states * n_actions * n_states,
                probs.len()
            )));
        }
        let table = Self { n_states, n_actions, probs };
        for s in 0..n_states {
            for a in 0..n_actions {
                check_distribution(table.row(s, a), n_states, &format!("transition row ({s},{a})"))?;
            }
        }
        Ok(table)
    }

    /// Builds a table row by row from a closure.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut row: impl FnMut(usize, usize) -> Vec<F>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                probs.extend(row(s, a));
            }
        }
        Self::new(n_states, n_actions, probs)
    }

    pub(crate) fn from_parts_unchecked(n_states: usize, n_actions: usize, probs: Vec<F>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions * n_states);
        Self { n_states, n_actions, probs }
    }

    pub fn row_mut(&mut self, state: usize, action: usize) -> &mut [F] {
        let n = self.n_states;
        let start = (state * self.n_actions + action) * n;
        &mut self.probs[start..start + n]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.probs
    }

    /// Largest L1 distance between matching rows of two tables.
    pub fn max_l1_distance(&self, other: &Self) -> F {
        let mut worst = F::zero();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let d = self
                    .row(s, a)
                    .iter()
                    .zip(other.row(s, a))
                    .map(|(&x, &y)| (x - y).abs())
                    .sum::<F>();
                worst = worst.max(d);
            }
        }
        worst
    }
}

impl<F> TransitionModel<F> for TransitionTable<F> {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn row(&self, state: usize, action: usize) -> &[F] {
        let n = self.n_states;
        let start = (state * self.n_actions + action) * n;
        &self.probs[start..start + n]
    }
}

/// Finite-state, finite-action MDP with costs `c(s,a)`, constraint costs
/// `d(s)`, an initial distribution and the true transition kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument<F>", into = "MdpDocument<F>")]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct TabularMdp<F: Real> {
    cost: Vec<F>,
    constraint_cost: Vec<F>,
    d_max: F,
    initial_dist: Vec<F>,
    transitions: TransitionTable<F>,
    discount: F,
}

impl<F: Real> TabularMdp<F> {
    pub fn new(
        cost: Vec<F>,
        constraint_cost: Vec<F>,
        d_max: F,
        initial_dist: Vec<F>,
        transitions: TransitionTable<F>,
        discount: F,
    ) -> Result<Self> {
        let s = transitions.n_states();
        let a = transitions.n_actions();
        if cost.len() != s * a {
            return Err(invalid(format!("cost: expected {} entries, got {}", s * a, cost.len())));
        }
        if let Some(i) = cost.iter().position(|c| !c.is_finite()) {
            return Err(invalid(format!("cost entry {i} is not finite")));
        }
        if constraint_cost.len() != s {
            return Err(invalid(format!(
                "constraint_cost: expected {s} entries, got {}",
                constraint_cost.len()
            )));
        }
        if !(d_max >= F::zero()) || !d_max.is_finite() {
            return Err(invalid(format!("d_max must be finite and nonnegative, got {d_max}")));
        }
        for (i, &d) in constraint_cost.iter().enumerate() {
            if !(d >= F::zero() && d <= d_max) {
                return Err(invalid(format!("constraint_cost[{i}] = {d} outside [0, {d_max}]")));
            }
        }
        check_distribution(&initial_dist, s, "initial_dist")?;
        if !(discount > F::zero() && discount < F::one()) {
            return Err(invalid(format!("discount must lie in (0,1), got {discount}")));
        }
        Ok(Self { cost, constraint_cost, d_max, initial_dist, transitions, discount })
    }

    pub fn n_states(&self) -> usize {
        self.transitions.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.n_actions()
    }

    #[inline]
    pub fn cost(&self, state: usize, action: usize) -> F {
        self.cost[state * self.n_actions() + action]
    }

    #[inline]
    pub fn constraint_cost(&self, state: usize) -> F {
        self.constraint_cost[state]
    }

    pub fn costs(&self) -> &[F] {
        &self.cost
    }

    pub fn constraint_costs(&self) -> &[F] {
        &self.constraint_cost
    }

    pub fn d_max(&self) -> F {
        self.d_max
    }

    pub fn initial_dist(&self) -> &[F] {
        &self.initial_dist
    }

    pub fn true_transitions(&self) -> &TransitionTable<F> {
        &self.transitions
    }

    pub fn discount(&self) -> F {
        self.discount
    }

    /// Same model with a different initial distribution.
    pub fn with_initial_dist(mut self, initial_dist: Vec<F>) -> Result<Self> {
        check_distribution(&initial_dist, self.n_states(), "initial_dist")?;
        self.initial_dist = initial_dist;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// On-disk layout: flat row-major tables with explicit dimensions.
#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
struct MdpDocument<F> {
    n_states: usize,
    n_actions: usize,
    cost: Vec<F>,
    constraint_cost: Vec<F>,
    d_max: F,
    initial_dist: Vec<F>,
    transitions: Vec<F>,
    discount: F,
}

impl<F: Real> TryFrom<MdpDocument<F>> for TabularMdp<F> {
    type Error = Error;

    fn try_from(doc: MdpDocument<F>) -> Result<Self> {
        let transitions = TransitionTable::new(doc.n_states, doc.n_actions, doc.transitions)?;
        TabularMdp::new(
            doc.cost,
            doc.constraint_cost,
            doc.d_max,
            doc.initial_dist,
            transitions,
            doc.discount,
        )
    }
}

impl<F: Real> From<TabularMdp<F>> for MdpDocument<F> {
    fn from(mdp: TabularMdp<F>) -> Self {
        MdpDocument {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            cost: mdp.cost,
            constraint_cost: mdp.constraint_cost,
            d_max: mdp.d_max,
            initial_dist: mdp.initial_dist,
            transitions: mdp.transitions.probs,
            discount: mdp.discount,
        }
    }
}
