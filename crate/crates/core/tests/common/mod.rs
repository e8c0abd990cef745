#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcmdp::{ActionPolicy, Ambiguity, Mdp, TabularMdp, TransitionModel, TransitionTable, ValueKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_distribution(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    // Occasionally zero out entries to exercise boundary cases.
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn random_mdp(ns: usize, na: usize, gamma: f64, rng: &mut impl Rng) -> Mdp {
    let t = TransitionTable::from_fn(ns, na, |_, _| random_distribution(ns, rng)).unwrap();
    let cost = (0..ns * na).map(|_| rng.random_range(-1.0..2.0)).collect();
    let d = (0..ns).map(|_| rng.random_range(0.0..1.0)).collect();
    TabularMdp::new(cost, d, 1.0, random_distribution(ns, rng), t, gamma).unwrap()
}

pub fn random_ambiguity(mdp: &Mdp, rng: &mut impl Rng) -> Ambiguity {
    let nominal = TransitionTable::from_fn(mdp.n_states(), mdp.n_actions(), |_, _| {
        random_distribution(mdp.n_states(), rng)
    })
    .unwrap();
    let budgets = (0..mdp.n_states() * mdp.n_actions()).map(|_| rng.random_range(0.0..2.0)).collect();
    Ambiguity::new(nominal, budgets).unwrap()
}

/// Exact policy evaluation on a fixed model: solves `(I - gamma P_pi) v = c_pi`.
pub fn linear_policy_value(
    mdp: &Mdp,
    model: &TransitionTable<f64>,
    policy: &dyn ActionPolicy<f64>,
    kind: ValueKind,
) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    let mut probs = vec![0.0; na];
    for s in 0..ns {
        policy.action_probs_into(s, &mut probs);
        for a in 0..na {
            let stage = match kind {
                ValueKind::Cost => mdp.cost(s, a),
                ValueKind::Constraint => mdp.constraint_cost(s),
            };
            rhs[s] += probs[a] * stage;
            for (s2, p) in model.row(s, a).iter().enumerate() {
                m[(s, s2)] -= mdp.discount() * probs[a] * p;
            }
        }
    }
    m.lu().solve(&rhs).expect("nonsingular").iter().copied().collect()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
