//! Benchmark environments: single-product inventory control and a small
//! chain with a known optimum, plus sampling of transition datasets.

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::ambiguity::{AmbiguitySet, TransitionDataset};
use crate::error::{domain, Error, Result};
use crate::mdp::{TabularMdp, TransitionModel, TransitionTable};
use crate::policy::sample_index;
use crate::robust_dp::{greedy_policy, robust_value_iteration, IterationOptions, ValueKind};
use crate::scalar::Real;

/// State constraint cost `d(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintRule {
    /// `d(s) = holding_cost * s`.
    HoldingCost,
    /// `d(s) = d_max` when the shelf is empty, else 0.
    StockOut { d_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    Uniform,
    Level { level: usize },
}

/// How the constraint budget `d0` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BudgetRule {
    Fixed { d0: f64 },
    /// A fraction of the expected constraint value of the cost-optimal policy
    /// under the nominal model.
    FractionOfUnconstrained { fraction: f64 },
    /// `u_min + fraction * (u_greedy - u_min)` on robust constraint values,
    /// where `u_min` is the smallest achievable one and `u_greedy` belongs to
    /// the nominal cost-optimal policy.
    RobustInterpolation { fraction: f64 },
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::FractionOfUnconstrained { fraction: 0.8 }
    }
}

impl BudgetRule {
    pub fn resolve<F: Real>(&self, mdp: &TabularMdp<F>, amb: &AmbiguitySet<F>, options: IterationOptions) -> Result<F> {
        match *self {
            BudgetRule::Fixed { d0 } if d0 >= 0.0 => Ok(F::of(d0)),
            BudgetRule::Fixed { d0 } => Err(domain(format!("d0 must be nonnegative, got {d0}"))),
            BudgetRule::FractionOfUnconstrained { fraction } => {
                if !(fraction >= 0.0) {
                    return Err(domain(format!("budget fraction must be nonnegative, got {fraction}")));
                }
                Ok(F::of(fraction) * unconstrained_constraint_value(mdp, amb, options)?)
            }
            BudgetRule::RobustInterpolation { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(domain(format!("interpolation fraction must lie in [0, 1], got {fraction}")));
                }
                let (lo, hi) = robust_constraint_range(mdp, amb, options)?;
                Ok(lo + F::of(fraction) * (hi - lo))
            }
        }
    }
}

/// `E_p0[u]` of the cost-optimal deterministic policy on the nominal model.
pub fn unconstrained_constraint_value<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    options: IterationOptions,
) -> Result<F> {
    let nominal = amb.without_uncertainty();
    let v = robust_value_iteration(mdp, &nominal, ValueKind::Cost, None, options)?;
    let pi = greedy_policy(mdp, &nominal, &v)?;
    let u = robust_value_iteration(mdp, &nominal, ValueKind::Constraint, Some(&pi), options)?;
    Ok(u.expected(mdp.initial_dist()))
}

/// Smallest achievable robust `E_p0[u]` and the robust `E_p0[u]` of the
/// nominal cost-optimal policy.
pub fn robust_constraint_range<F: Real>(
    mdp: &TabularMdp<F>,
    amb: &AmbiguitySet<F>,
    options: IterationOptions,
) -> Result<(F, F)> {
    let p0 = mdp.initial_dist();
    let nominal = amb.without_uncertainty();
    let v = robust_value_iteration(mdp, &nominal, ValueKind::Cost, None, options)?;
    let pi = greedy_policy(mdp, &nominal, &v)?;
    let greedy = robust_value_iteration(mdp, amb, ValueKind::Constraint, Some(&pi), options)?.expected(p0);
    let least = robust_value_iteration(mdp, amb, ValueKind::Constraint, None, options)?.expected(p0);
    Ok((least, greedy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventorySpec {
    pub max_inventory: usize,
    pub purchase_cost: f64,
    pub sale_price: f64,
    pub holding_cost: f64,
    pub demand_mean: f64,
    pub demand_std: f64,
    /// Extra cost of an order that would overflow the shelf; such orders
    /// behave like ordering nothing.
    pub infeasible_penalty: f64,
    pub constraint: ConstraintRule,
    pub budget: BudgetRule,
    pub initial: InitialState,
    pub discount: f64,
}

impl Default for InventorySpec {
    fn default() -> Self {
        Self {
            max_inventory: 10,
            purchase_cost: 2.0,
            sale_price: 3.0,
            holding_cost: 0.2,
            demand_mean: 4.0,
            demand_std: 2.0,
            infeasible_penalty: 5.0,
            constraint: ConstraintRule::HoldingCost,
            budget: BudgetRule::default(),
            initial: InitialState::Uniform,
            discount: 0.99,
        }
    }
}

impl InventorySpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Construction(format!("inventory spec: {m}")));
        if self.max_inventory < 1 {
            return bad("max_inventory must be at least 1");
        }
        if !(self.demand_std > 0.0) || !self.demand_std.is_finite() || !self.demand_mean.is_finite() {
            return bad("demand_std must be positive and demand parameters finite");
        }
        for (name, x) in [
            ("purchase_cost", self.purchase_cost),
            ("sale_price", self.sale_price),
            ("holding_cost", self.holding_cost),
            ("infeasible_penalty", self.infeasible_penalty),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                return bad(&format!("{name} must be finite and nonnegative"));
            }
        }
        if let ConstraintRule::StockOut { d_max } = self.constraint {
            if !(d_max >= 0.0) || !d_max.is_finite() {
                return bad("stock-out d_max must be finite and nonnegative");
            }
        }
        if let InitialState::Level { level } = self.initial {
            if level > self.max_inventory {
                return bad("initial level exceeds max_inventory");
            }
        }
        Ok(())
    }

    /// `P(D = k)` for `k = 0..=max_inventory`: normal mass of the unit bin
    /// around `k`, with both tails folded into the end bins.
    pub fn demand_distribution(&self) -> Vec<f64> {
        let phi = |x: f64| 0.5 * erfc(-(x - self.demand_mean) / (self.demand_std * std::f64::consts::SQRT_2));
        let m = self.max_inventory;
        (0..=m)
            .map(|k| {
                let lo = if k == 0 { 0.0 } else { phi(k as f64 - 0.5) };
                let hi = if k == m { 1.0 } else { phi(k as f64 + 0.5) };
                hi - lo
            })
            .collect()
    }

    /// Expected one-step reward after ordering up to `stock` with `order` units.
    pub fn expected_reward(&self, stock: usize, order: usize, demand: &[f64]) -> f64 {
        let sales: f64 = demand.iter().enumerate().map(|(k, p)| p * k.min(stock) as f64).sum();
        self.sale_price * sales - self.purchase_cost * order as f64 - self.holding_cost * stock as f64
    }
}

/// Inventory control: state is the stock level, action the order size.
///
/// Orders that would overflow the shelf are treated as no order plus
/// `infeasible_penalty`, which keeps the action set rectangular. Costs are
/// negated rewards.
pub fn build_inventory_mdp<F: Real>(spec: &InventorySpec) -> Result<TabularMdp<F>> {
    spec.validate()?;
    let m = spec.max_inventory;
    let (ns, na) = (m + 1, m + 1);
    let demand = spec.demand_distribution();

    let mut cost = Vec::with_capacity(ns * na);
    let mut probs = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            let (order, penalty) = if s + a <= m { (a, 0.0) } else { (0, spec.infeasible_penalty) };
            let stock = s + order;
            cost.push(F::of(penalty - spec.expected_reward(stock, order, &demand)));
            let mut row = vec![0.0; ns];
            for (k, &p) in demand.iter().enumerate() {
                row[stock.saturating_sub(k)] += p;
            }
            probs.extend(row.into_iter().map(F::of));
        }
    }
    let (constraint_cost, d_max): (Vec<f64>, f64) = match spec.constraint {
        ConstraintRule::HoldingCost => {
            ((0..ns).map(|s| spec.holding_cost * s as f64).collect(), spec.holding_cost * m as f64)
        }
        ConstraintRule::StockOut { d_max } => ((0..ns).map(|s| if s == 0 { d_max } else { 0.0 }).collect(), d_max),
    };
    let initial: Vec<F> = match spec.initial {
        InitialState::Uniform => vec![F::of(1.0 / ns as f64); ns],
        InitialState::Level { level } => (0..ns).map(|s| if s == level { F::one() } else { F::zero() }).collect(),
    };
    TabularMdp::new(
        cost,
        constraint_cost.into_iter().map(F::of).collect(),
        F::of(d_max),
        initial,
        TransitionTable::new(ns, na, probs)?,
        F::of(spec.discount),
    )
}

/// Chain of `n_states` states starting at the left end.
///
/// Action 0 moves right with probability `1 - slip` (cost 1); action 1 stays
/// (cost 2). The rightmost state absorbs at zero cost and carries the only
/// constraint cost, `d = 1`.
pub fn build_chain_mdp<F: Real>(n_states: usize, slip: f64, discount: f64) -> Result<TabularMdp<F>> {
    if n_states < 2 {
        return Err(Error::Construction("chain needs at least two states".into()));
    }
    if !(0.0..0.5).contains(&slip) {
        return Err(Error::Construction(format!("slip must lie in [0, 0.5), got {slip}")));
    }
    let goal = n_states - 1;
    let transitions = TransitionTable::from_fn(n_states, 2, |s, a| {
        let mut row = vec![F::zero(); n_states];
        if s == goal || a == 1 {
            row[s] = F::one();
        } else {
            row[s + 1] = F::of(1.0 - slip);
            row[s] = row[s] + F::of(slip);
        }
        row
    })?;
    let cost = (0..n_states)
        .flat_map(|s| if s == goal { [F::zero(), F::zero()] } else { [F::one(), F::of(2.0)] })
        .collect();
    let constraint = (0..n_states).map(|s| if s == goal { F::one() } else { F::zero() }).collect();
    let mut initial = vec![F::zero(); n_states];
    initial[0] = F::one();
    TabularMdp::new(cost, constraint, F::one(), initial, transitions, F::of(discount))
}

/// Draws `n_per_pair` next states from the true model for every `(s,a)`.
pub fn generate_dataset<F: Real, R: Rng + ?Sized>(
    mdp: &TabularMdp<F>,
    n_per_pair: u64,
    delta: f64,
    rng: &mut R,
) -> Result<TransitionDataset> {
    if n_per_pair == 0 {
        return Err(domain("n_per_pair must be at least 1"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut counts = vec![0u64; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.true_transitions().row(s, a);
            let base = (s * na + a) * ns;
            for _ in 0..n_per_pair {
                counts[base + sample_index(row, rng)] += 1;
            }
        }
    }
    TransitionDataset::new(ns, na, counts, delta)
}
