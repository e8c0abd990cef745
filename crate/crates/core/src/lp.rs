//! Dense-tableau simplex used as an independent oracle for the greedy
//! worst-case solver.
//!
//! The inner problem is written over the positive and negative parts of the
//! deviation from the nominal, `p = nominal + u - w` with `u, w >= 0`:
//!
//! ```text
//! maximize   sum_i k_i (u_i - w_i)
//! subject to w_i - u_i           <= nominal_i   (p_i >= 0)
//!            sum u + sum w       <= budget      (L1 ball)
//!            sum u - sum w       <= 0           (mass conserved)
//!            sum w - sum u       <= 0
//! ```
//!
//! Every right-hand side is nonnegative, so the all-slack basis is feasible
//! and no phase one is needed.

use num_rational::BigRational;

use crate::ambiguity::{check_budget, check_values, Sense};
use crate::error::{Error, Result};
use crate::mdp::check_distribution;
use crate::scalar::{LpField, Real};

/// Solves `max c^T x` s.t. `A x <= b`, `x >= 0` for `b >= 0` with Bland's rule.
///
/// Returns the primal solution and the optimal objective.
pub fn simplex_max<T: LpField>(a: &[Vec<T>], b: &[T], c: &[T]) -> Result<(Vec<T>, T)> {
    let m = b.len();
    let n = c.len();
    if a.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Internal("constraint matrix has the wrong shape".into()));
    }
    if b.iter().any(|x| x.is_negative()) {
        return Err(Error::Internal("right-hand side must be nonnegative".into()));
    }
    let width = n + m;
    // rows[i] = [A | I | b]
    let mut rows: Vec<Vec<T>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, bi))| {
            let mut r = row.clone();
            r.extend((0..m).map(|j| if i == j { T::one() } else { T::zero() }));
            r.push(bi.clone());
            r
        })
        .collect();
    // Reduced costs with the objective value in the last slot.
    let mut z: Vec<T> = c.iter().map(|x| -x.clone()).collect();
    z.extend((0..=m).map(|_| T::zero()));
    let mut basis: Vec<usize> = (n..width).collect();

    let max_pivots = 50 * (width + 1);
    for _ in 0..max_pivots {
        let Some(enter) = (0..width).find(|&j| z[j].is_negative()) else {
            let mut x = vec![T::zero(); n];
            for (i, &var) in basis.iter().enumerate() {
                if var < n {
                    x[var] = rows[i][width].clone();
                }
            }
            return Ok((x, z[width].clone()));
        };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if !rows[i][enter].is_positive() {
                continue;
            }
            leave = match leave {
                None => Some(i),
                Some(l) => {
                    let lhs = rows[i][width].clone() * rows[l][enter].clone();
                    let rhs = rows[l][width].clone() * rows[i][enter].clone();
                    if lhs < rhs || (lhs == rhs && basis[i] < basis[l]) {
                        Some(i)
                    } else {
                        Some(l)
                    }
                }
            };
        }
        let Some(leave) = leave else {
            return Err(Error::Internal("problem is unbounded".into()));
        };
        pivot(&mut rows, &mut z, leave, enter);
        basis[leave] = enter;
    }
    Err(Error::Internal(format!("no optimum after {max_pivots} pivots")))
}

fn pivot<T: LpField>(rows: &mut [Vec<T>], z: &mut [T], leave: usize, enter: usize) {
    let p = rows[leave][enter].clone();
    for x in rows[leave].iter_mut() {
        *x = x.clone() / p.clone();
    }
    let pivot_row = rows[leave].clone();
    let eliminate = |row: &mut [T]| {
        let f = row[enter].clone();
        if f == T::zero() {
            return;
        }
        for (x, y) in row.iter_mut().zip(&pivot_row) {
            *x = x.clone() - f.clone() * y.clone();
        }
    };
    for (i, row) in rows.iter_mut().enumerate() {
        if i != leave {
            eliminate(row);
        }
    }
    eliminate(z);
}

/// Worst-case inner problem solved as an LP over the field `T`.
pub fn lp_oracle_in<T: LpField, F: Real>(
    nominal: &[F],
    budget: F,
    values: &[F],
    sense: Sense,
) -> Result<(Vec<F>, F)> {
    check_distribution(nominal, nominal.len(), "nominal")?;
    check_budget(budget)?;
    check_values(values, nominal.len())?;
    let lift = |x: F| {
        T::from_f64_exact(x.as_f64())
            .ok_or_else(|| Error::Internal(format!("cannot represent {x} in the LP field")))
    };
    let s = nominal.len();
    let nominal_t = nominal.iter().map(|&x| lift(x)).collect::<Result<Vec<_>>>()?;
    let values_t = values.iter().map(|&x| lift(x)).collect::<Result<Vec<_>>>()?;

    let (one, zero) = (T::one(), T::zero());
    let mut a = Vec::with_capacity(s + 3);
    let mut b = Vec::with_capacity(s + 3);
    for (i, p) in nominal_t.iter().enumerate() {
        let mut row = vec![zero.clone(); 2 * s];
        row[i] = -one.clone();
        row[s + i] = one.clone();
        a.push(row);
        b.push(p.clone());
    }
    a.push(vec![one.clone(); 2 * s]);
    b.push(lift(budget)?);
    let balance: Vec<T> = (0..2 * s).map(|j| if j < s { one.clone() } else { -one.clone() }).collect();
    a.push(balance.clone());
    b.push(zero.clone());
    a.push(balance.into_iter().map(|x| -x).collect());
    b.push(zero.clone());

    let k: Vec<T> = values_t
        .iter()
        .map(|v| match sense {
            Sense::Maximize => v.clone(),
            Sense::Minimize => -v.clone(),
        })
        .collect();
    let c: Vec<T> = k.iter().cloned().chain(k.iter().map(|x| -x.clone())).collect();

    let (x, _) = simplex_max(&a, &b, &c)?;
    let p: Vec<T> = (0..s).map(|i| nominal_t[i].clone() + x[i].clone() - x[s + i].clone()).collect();
    let objective = p
        .iter()
        .zip(&values_t)
        .fold(T::zero(), |acc, (pi, vi)| acc + pi.clone() * vi.clone());
    Ok((p.iter().map(|x| F::of(x.to_f64_lossy())).collect(), F::of(objective.to_f64_lossy())))
}

/// Floating point LP oracle.
pub fn lp_oracle<F: Real>(nominal: &[F], budget: F, values: &[F], sense: Sense) -> Result<(Vec<F>, F)> {
    lp_oracle_in::<f64, F>(nominal, budget, values, sense)
}

/// Exact rational LP oracle; inputs are lifted to rationals without rounding.
pub fn lp_oracle_exact<F: Real>(
    nominal: &[F],
    budget: F,
    values: &[F],
    sense: Sense,
) -> Result<(Vec<F>, F)> {
    lp_oracle_in::<BigRational, F>(nominal, budget, values, sense)
}
