//! Self-checks against independent oracles.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rcmdp::rng::{domain, StreamRng};
use rcmdp::{
    estimate_nominal, generate_dataset, lp_oracle, robust_bellman_optimal, robust_bellman_policy,
    robust_value_iteration, worst_case_distribution, Ambiguity, IterationOptions, Mdp, Policy, RunSeed, Sense,
    TransitionModel, TransitionTable, ValueFunction, ValueKind,
};

use crate::config::Environment;

/// Inner-problem solver under test: `(nominal, budget, values, sense) -> (p, p^T values)`.
pub type Solver = dyn Fn(&[f64], f64, &[f64], Sense) -> rcmdp::Result<(Vec<f64>, f64)> + Sync;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }

    fn push(&mut self, name: &'static str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check { name, passed, detail });
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub environment: Environment,
    /// Ambiguity set to validate against the environment.
    pub ambiguity: Option<PathBuf>,
    pub seed: u64,
    pub instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            environment: Environment::Chain { n_states: 5, slip: 0.2, discount: 0.9 },
            ambiguity: None,
            seed: 0,
            instances: 1000,
        }
    }
}

/// Runs every check with the library's greedy solver.
pub fn verify(options: &VerifyOptions) -> VerifyReport {
    verify_with(options, &|p, b, v, s| worst_case_distribution(p, b, v, s))
}

pub fn verify_with(options: &VerifyOptions, solver: &Solver) -> VerifyReport {
    let mut report = VerifyReport::default();
    let mut rng = RunSeed(options.seed).stream(domain::EVAL_TRUE, u64::MAX);
    report.push("lp-vs-greedy", solver_matches_lp(solver, options.instances, &mut rng));

    let setup = options
        .environment
        .build()
        .map_err(|e| e.to_string())
        .and_then(|mdp| {
            let mut data_rng = RunSeed(options.seed).stream(domain::DATASET, 0);
            let data = generate_dataset(&mdp, 100, 0.9, &mut data_rng).map_err(|e| e.to_string())?;
            let amb = estimate_nominal(&data, 0.0).map_err(|e| e.to_string())?;
            Ok((mdp, amb))
        });
    match setup {
        Ok((mdp, amb)) => {
            report.push("contraction", contraction(&mdp, &amb, &mut rng));
            report.push("fixed-point", fixed_point(&mdp, &amb));
            report.push("score-gradient", score_gradient(&mdp, &mut rng));
            report.push("linear-solve", linear_solve(&mdp, &amb, &mut rng));
            if let Some(path) = &options.ambiguity {
                report.push("ambiguity-file", ambiguity_file(path, &mdp));
            }
        }
        Err(e) => report.push("environment", Err(e)),
    }
    report
}

fn random_distribution(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn solver_matches_lp(solver: &Solver, instances: usize, rng: &mut StreamRng) -> Result<String, String> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let n = rng.random_range(2..=6);
        let nominal = random_distribution(n, rng);
        let budget = rng.random_range(0.0..=2.0);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
        let (p, obj) = solver(&nominal, budget, &values, sense).map_err(|e| format!("instance {i}: {e}"))?;
        let (_, lp) = lp_oracle(&nominal, budget, &values, sense).map_err(|e| format!("instance {i}: {e}"))?;
        let l1: f64 = p.iter().zip(&nominal).map(|(a, b)| (a - b).abs()).sum();
        let total: f64 = p.iter().sum();
        let dot: f64 = p.iter().zip(&values).map(|(a, b)| a * b).sum();
        if p.iter().any(|&x| x < -1e-12) || (total - 1.0).abs() > 1e-9 || l1 > budget + 1e-9 {
            return Err(format!("instance {i}: infeasible solution (sum {total}, l1 {l1}, budget {budget})"));
        }
        let err = (obj - lp).abs().max((dot - obj).abs());
        worst = worst.max(err);
        if err > 1e-9 {
            return Err(format!("instance {i}: objective {obj} vs LP {lp}"));
        }
    }
    Ok(format!("{instances} instances, max error {worst:.2e}"))
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn contraction(mdp: &Mdp, amb: &Ambiguity, rng: &mut StreamRng) -> Result<String, String> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let policy = Policy::uniform(n, mdp.n_actions());
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let scale = rng.random_range(0.1..100.0);
        let v = ValueFunction { kind: ValueKind::Cost, values: (0..n).map(|_| rng.random_range(-scale..scale)).collect() };
        let w = ValueFunction { kind: ValueKind::Cost, values: (0..n).map(|_| rng.random_range(-scale..scale)).collect() };
        let gap = sup(&v.values, &w.values);
        for (tv, tw) in [
            (robust_bellman_optimal(mdp, amb, &v), robust_bellman_optimal(mdp, amb, &w)),
            (robust_bellman_policy(mdp, amb, &policy, &v), robust_bellman_policy(mdp, amb, &policy, &w)),
        ] {
            let (tv, tw) = (tv.map_err(|e| e.to_string())?, tw.map_err(|e| e.to_string())?);
            let d = sup(&tv.values, &tw.values);
            if d > gamma * gap + 1e-10 {
                return Err(format!("|Tv - Tw| = {d} exceeds gamma |v - w| = {}", gamma * gap));
            }
            if gap > 0.0 {
                worst = worst.max(d / gap);
            }
        }
    }
    Ok(format!("100 pairs, max ratio {worst:.4} <= gamma {gamma}"))
}

fn fixed_point(mdp: &Mdp, amb: &Ambiguity) -> Result<String, String> {
    let v = robust_value_iteration(mdp, amb, ValueKind::Cost, None, IterationOptions::default())
        .map_err(|e| e.to_string())?;
    let next = robust_bellman_optimal(mdp, amb, &v).map_err(|e| e.to_string())?;
    let residual = sup(&v.values, &next.values);
    if residual < 1e-8 {
        Ok(format!("residual {residual:.2e}"))
    } else {
        Err(format!("residual {residual:.2e} >= 1e-8"))
    }
}

fn score_gradient(mdp: &Mdp, rng: &mut StreamRng) -> Result<String, String> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta: Vec<f64> = (0..ns * na).map(|_| rng.random_range(-3.0..3.0)).collect();
        let policy = Policy::from_theta(ns, na, theta.clone()).map_err(|e| e.to_string())?;
        let (s, a) = (rng.random_range(0..ns), rng.random_range(0..na));
        let grad = policy.score_gradient(s, a).map_err(|e| e.to_string())?.to_table();
        for j in 0..ns * na {
            let log_prob = |delta: f64| {
                let mut t = theta.clone();
                t[j] += delta;
                Policy::from_theta(ns, na, t).and_then(|p| p.probs(s)).map(|p| p[a].ln())
            };
            let fd = (log_prob(h).map_err(|e| e.to_string())? - log_prob(-h).map_err(|e| e.to_string())?) / (2.0 * h);
            let err = (fd - grad[j]).abs();
            worst = worst.max(err);
            if err > 1e-6 {
                return Err(format!("d log pi({a}|{s}) / d theta[{j}]: analytic {} vs finite difference {fd}", grad[j]));
            }
        }
    }
    Ok(format!("100 cases, max error {worst:.2e}"))
}

fn linear_solve(mdp: &Mdp, amb: &Ambiguity, rng: &mut StreamRng) -> Result<String, String> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let nominal = amb.without_uncertainty();
    let theta = (0..ns * na).map(|_| rng.random_range(-2.0..2.0)).collect();
    let policy = Policy::from_theta(ns, na, theta).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for kind in [ValueKind::Cost, ValueKind::Constraint] {
        let tight = IterationOptions { tolerance: 1e-12, ..Default::default() };
        let v = robust_value_iteration(mdp, &nominal, kind, Some(&policy), tight)
            .map_err(|e| e.to_string())?;
        let exact = solve_policy_value(mdp, amb.nominal(), &policy, kind)?;
        let err = sup(&v.values, &exact);
        worst = worst.max(err);
        if err > 1e-8 {
            return Err(format!("{kind:?}: value iteration differs from the linear solve by {err:.2e}"));
        }
    }
    Ok(format!("max error {worst:.2e}"))
}

/// Solves `(I - gamma P_pi) v = c_pi`.
fn solve_policy_value(mdp: &Mdp, model: &TransitionTable<f64>, policy: &Policy, kind: ValueKind) -> Result<Vec<f64>, String> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        let probs = policy.probs(s).map_err(|e| e.to_string())?;
        for a in 0..na {
            rhs[s] += probs[a]
                * match kind {
                    ValueKind::Cost => mdp.cost(s, a),
                    ValueKind::Constraint => mdp.constraint_cost(s),
                };
            for (s2, p) in model.row(s, a).iter().enumerate() {
                m[(s, s2)] -= mdp.discount() * probs[a] * p;
            }
        }
    }
    let v = m.lu().solve(&rhs).ok_or("singular policy evaluation system")?;
    Ok(v.iter().copied().collect())
}

fn ambiguity_file(path: &std::path::Path, mdp: &Mdp) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let amb = Ambiguity::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if amb.n_states() != mdp.n_states() || amb.n_actions() != mdp.n_actions() {
        return Err(format!(
            "{}: shape {}x{} does not match the MDP's {}x{}",
            path.display(),
            amb.n_states(),
            amb.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        ));
    }
    Ok(format!("{} is a valid ambiguity set", path.display()))
}
