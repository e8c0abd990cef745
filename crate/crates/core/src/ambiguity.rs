//! L1 ambiguity sets around an empirical transition estimate, and the exact
//! greedy solver for the inner worst-case problem
//! `max { p^T v : p in simplex, |p - nominal|_1 <= budget }`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::mdp::{check_distribution, TransitionModel, TransitionTable};
use crate::scalar::Real;

/// L1 diameter of the probability simplex.
pub const MAX_BUDGET: f64 = 2.0;

/// Which way the adversary pushes `p^T v`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// Largest expected value; the adversary for costs.
    #[default]
    Maximize,
    Minimize,
}

/// Hoeffding radius `sqrt(2/n * ln(S * A * 2^S / delta))` before clamping.
pub fn hoeffding_budget_unclamped<F: Real>(
    n: u64,
    n_states: usize,
    n_actions: usize,
    delta: F,
) -> Result<F> {
    if n == 0 {
        return Err(domain("hoeffding budget needs at least one sample"));
    }
    if !(delta > F::zero() && delta < F::one()) {
        return Err(domain(format!("confidence delta must lie in (0,1), got {delta}")));
    }
    if n_states == 0 || n_actions == 0 {
        return Err(domain("hoeffding budget needs nonempty state and action sets"));
    }
    // ln S + ln A + S ln 2 - ln delta; the product itself overflows for large S.
    let log_term = F::of(n_states as f64).ln()
        + F::of(n_actions as f64).ln()
        + F::of(n_states as f64) * F::of(2.0).ln()
        - delta.ln();
    Ok((F::of(2.0) / F::of(n as f64) * log_term).sqrt())
}

/// Hoeffding radius clamped to the simplex diameter.
pub fn hoeffding_budget<F: Real>(n: u64, n_states: usize, n_actions: usize, delta: F) -> Result<F> {
    Ok(hoeffding_budget_unclamped(n, n_states, n_actions, delta)?.min(F::of(MAX_BUDGET)))
}

/// Observed transition counts `counts[s][a][s']` plus the confidence level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `S x A x S`.
    pub counts: Vec<u64>,
    pub delta: f64,
}

impl TransitionDataset {
    pub fn new(n_states: usize, n_actions: usize, counts: Vec<u64>, delta: f64) -> Result<Self> {
        if counts.len() != n_states * n_actions * n_states {
            return Err(invalid(format!(
                "counts: expected {} entries, got {}",
                n_states * n_actions * n_states,
                counts.len()
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("confidence delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { n_states, n_actions, counts, delta })
    }

    pub fn counts_for(&self, state: usize, action: usize) -> &[u64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.counts[start..start + self.n_states]
    }

    /// `n_{s,a}`.
    pub fn samples(&self, state: usize, action: usize) -> u64 {
        self.counts_for(state, action).iter().sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TransitionDataset = serde_json::from_str(text)?;
        Self::new(raw.n_states, raw.n_actions, raw.counts, raw.delta)
    }
}

/// `(s,a)`-rectangular L1 ambiguity set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AmbiguityDocument<F>", into = "AmbiguityDocument<F>")]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
pub struct AmbiguitySet<F: Real> {
    nominal: TransitionTable<F>,
    budgets: Vec<F>,
}

impl<F: Real> AmbiguitySet<F> {
    pub fn new(nominal: TransitionTable<F>, budgets: Vec<F>) -> Result<Self> {
        let pairs = nominal.n_states() * nominal.n_actions();
        if budgets.len() != pairs {
            return Err(invalid(format!("budgets: expected {pairs} entries, got {}", budgets.len())));
        }
        for (i, &b) in budgets.iter().enumerate() {
            if !(b >= F::zero() && b <= F::of(MAX_BUDGET)) {
                return Err(invalid(format!(
                    "budget for pair ({},{}) is {b}, outside [0, 2]",
                    i / nominal.n_actions(),
                    i % nominal.n_actions()
                )));
            }
        }
        Ok(Self { nominal, budgets })
    }

    /// Every pair gets the same radius.
    pub fn uniform(nominal: TransitionTable<F>, budget: F) -> Result<Self> {
        let pairs = nominal.n_states() * nominal.n_actions();
        Self::new(nominal, vec![budget; pairs])
    }

    pub fn n_states(&self) -> usize {
        self.nominal.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.nominal.n_actions()
    }

    pub fn nominal(&self) -> &TransitionTable<F> {
        &self.nominal
    }

    #[inline]
    pub fn budget(&self, state: usize, action: usize) -> F {
        self.budgets[state * self.n_actions() + action]
    }

    pub fn budgets(&self) -> &[F] {
        &self.budgets
    }

    /// Same nominal model with every budget set to zero.
    pub fn without_uncertainty(&self) -> Self {
        Self { nominal: self.nominal.clone(), budgets: vec![F::zero(); self.budgets.len()] }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Real", deserialize = "F: Real"))]
struct AmbiguityDocument<F> {
    n_states: usize,
    n_actions: usize,
    nominal: Vec<F>,
    budgets: Vec<F>,
}

impl<F: Real> TryFrom<AmbiguityDocument<F>> for AmbiguitySet<F> {
    type Error = Error;

    fn try_from(doc: AmbiguityDocument<F>) -> Result<Self> {
        AmbiguitySet::new(TransitionTable::new(doc.n_states, doc.n_actions, doc.nominal)?, doc.budgets)
    }
}

impl<F: Real> From<AmbiguitySet<F>> for AmbiguityDocument<F> {
    fn from(set: AmbiguitySet<F>) -> Self {
        AmbiguityDocument {
            n_states: set.n_states(),
            n_actions: set.n_actions(),
            nominal: set.nominal.as_slice().to_vec(),
            budgets: set.budgets,
        }
    }
}

/// Nominal model (smoothed empirical frequencies) and per-pair Hoeffding
/// budgets. `smoothing` is the Laplace pseudo-count added to every cell.
pub fn estimate_nominal<F: Real>(data: &TransitionDataset, smoothing: F) -> Result<AmbiguitySet<F>> {
    if !(smoothing >= F::zero()) || !smoothing.is_finite() {
        return Err(domain(format!("smoothing must be finite and nonnegative, got {smoothing}")));
    }
    let (ns, na) = (data.n_states, data.n_actions);
    let delta = F::of(data.delta);
    let mut probs = Vec::with_capacity(ns * na * ns);
    let mut budgets = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let n = data.samples(s, a);
            if n == 0 && smoothing == F::zero() {
                return Err(Error::Construction(format!(
                    "state-action pair ({s},{a}) has no samples and smoothing is off"
                )));
            }
            let denom = F::of(n as f64) + smoothing * F::of(ns as f64);
            probs.extend(data.counts_for(s, a).iter().map(|&c| (F::of(c as f64) + smoothing) / denom));
            // With smoothing and no data the ball is the whole simplex.
            budgets.push(if n == 0 { F::of(MAX_BUDGET) } else { hoeffding_budget(n, ns, na, delta)? });
        }
    }
    AmbiguitySet::new(TransitionTable::new(ns, na, probs)?, budgets)
}

/// Sort order of a value vector, shared by every `(s,a)` solve in a sweep.
#[derive(Clone, Debug)]
pub struct ValueOrder {
    /// States from least to most preferred by the adversary; ties by index.
    order: Vec<usize>,
    /// Lowest-index most preferred state.
    target: usize,
    sense: Sense,
}

impl ValueOrder {
    pub fn new<F: Real>(values: &[F], sense: Sense) -> Self {
        let key = |i: usize| match sense {
            Sense::Maximize => values[i],
            Sense::Minimize => -values[i],
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| key(i).partial_cmp(&key(j)).expect("finite values"));
        let best = key(*order.last().expect("nonempty values"));
        let target = (0..values.len()).find(|&i| key(i) == best).expect("best exists");
        Self { order, target, sense }
    }

    /// Greedy solve into `out`; returns `out^T values`.
    ///
    /// Moves up to `budget / 2` mass onto the target state, taking it from
    /// the least preferred states first. Only strictly worse states donate,
    /// so ties leave the nominal untouched.
    pub fn solve_into<F: Real>(&self, nominal: &[F], budget: F, values: &[F], out: &mut [F]) -> F {
        out.copy_from_slice(nominal);
        let key = |i: usize| match self.sense {
            Sense::Maximize => values[i],
            Sense::Minimize => -values[i],
        };
        let best = key(self.target);
        let mut remaining = budget / F::of(2.0);
        for &i in &self.order {
            if remaining <= F::zero() || key(i) >= best {
                break;
            }
            let take = out[i].min(remaining);
            out[i] = out[i] - take;
            out[self.target] = out[self.target] + take;
            remaining = remaining - take;
        }
        out.iter().zip(values).map(|(&p, &v)| p * v).sum()
    }
}

/// Optimizes `p^T values` over `{p in simplex : |p - nominal|_1 <= budget}`.
pub fn worst_case_distribution<F: Real>(
    nominal: &[F],
    budget: F,
    values: &[F],
    sense: Sense,
) -> Result<(Vec<F>, F)> {
    check_distribution(nominal, nominal.len(), "nominal")?;
    check_budget(budget)?;
    check_values(values, nominal.len())?;
    let mut out = vec![F::zero(); nominal.len()];
    let objective = ValueOrder::new(values, sense).solve_into(nominal, budget, values, &mut out);
    Ok((out, objective))
}

pub(crate) fn check_budget<F: Real>(budget: F) -> Result<()> {
    if !(budget >= F::zero()) || !budget.is_finite() {
        return Err(domain(format!("budget must be finite and nonnegative, got {budget}")));
    }
    Ok(())
}

pub(crate) fn check_values<F: Real>(values: &[F], len: usize) -> Result<()> {
    if values.len() != len {
        return Err(domain(format!("values: expected {len} entries, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(domain("values must be finite"));
    }
    Ok(())
}
