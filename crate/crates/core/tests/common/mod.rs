//! Independent reference implementations used by the integration tests.
//! None of these call into the library's numerical routines.

#![allow(dead_code)]

use rand::Rng;

fn distinct(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// VaR straight from its definition: the smallest sample value x with
/// #{X > x}/N ≤ α.
pub fn var_oracle(samples: &[f64], alpha: f64) -> f64 {
    let n = samples.len() as f64;
    distinct(samples)
        .into_iter()
        .filter(|&x| samples.iter().filter(|&&y| y > x).count() as f64 / n <= alpha)
        .fold(f64::INFINITY, f64::min)
}

/// CVaR as the minimum of c + E[(X − c)⁺]/α. The objective is convex and
/// piecewise linear with kinks at the samples, so scanning them is exact.
pub fn cvar_oracle(samples: &[f64], alpha: f64) -> f64 {
    let n = samples.len() as f64;
    distinct(samples)
        .into_iter()
        .map(|c| c + samples.iter().map(|&y| (y - c).max(0.0)).sum::<f64>() / (n * alpha))
        .fold(f64::INFINITY, f64::min)
}

/// min over a ≥ 0 of mean(max(a·y + 1, 0)), scanning every kink a = −1/y
/// by direct evaluation, plus the limit a → ∞.
pub fn buffered_oracle(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let eval = |a: f64| samples.iter().map(|&y| (a * y + 1.0).max(0.0)).sum::<f64>() / n;
    let mut best = eval(0.0);
    for &y in samples {
        if y < 0.0 {
            best = best.min(eval(-1.0 / y));
        }
    }
    if samples.iter().all(|&y| y <= 0.0) {
        best = best.min(samples.iter().filter(|&&y| y == 0.0).count() as f64 / n);
    }
    best
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimises `objective · v` over the vertices of
/// {v : rows·v ≥ rhs, v ≥ 0, eq·v = eq_rhs (optional)}.
fn vertex_min(
    objective: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
    eq: Option<(&[f64], f64)>,
) -> Option<(f64, Vec<f64>)> {
    let n = objective.len();
    let mut all_rows: Vec<Vec<f64>> = rows.to_vec();
    let mut all_rhs: Vec<f64> = rhs.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        all_rows.push(e);
        all_rhs.push(0.0);
    }
    let free = if eq.is_some() { n - 1 } else { n };
    let feasible = |v: &[f64]| {
        all_rows.iter().zip(&all_rhs).all(|(r, b)| {
            let lhs: f64 = r.iter().zip(v).map(|(p, q)| p * q).sum();
            lhs >= b - 1e-9 * (1.0 + b.abs())
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for active in combinations(all_rows.len(), free) {
        let mut a: Vec<Vec<f64>> = active.iter().map(|&i| all_rows[i].clone()).collect();
        let mut b: Vec<f64> = active.iter().map(|&i| all_rhs[i]).collect();
        if let Some((e, r)) = eq {
            a.push(e.to_vec());
            b.push(r);
        }
        let Some(v) = solve_square(a, b) else { continue };
        if !feasible(&v) {
            continue;
        }
        let value: f64 = objective.iter().zip(&v).map(|(c, x)| c * x).sum();
        if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
            best = Some((value, v));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Status and value of `min c'v s.t. A v ≥ b, v ≥ 0` by brute force.
/// The feasible set lies in the non-negative orthant, so it is pointed: it
/// is empty iff it has no vertex, and unbounded below iff some recession
/// direction d ≥ 0, A d ≥ 0, 1'd = 1 has c'd < 0.
pub fn lp_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> (OracleStatus, Option<f64>) {
    let Some((value, _)) = vertex_min(c, a, b, None) else {
        return (OracleStatus::Infeasible, None);
    };
    let ones = vec![1.0; c.len()];
    let zeros = vec![0.0; b.len()];
    if let Some((slope, _)) = vertex_min(c, a, &zeros, Some((&ones, 1.0))) {
        if slope < -1e-9 {
            return (OracleStatus::Unbounded, None);
        }
    }
    (OracleStatus::Optimal, Some(value))
}

pub struct Instance {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

fn entry(rng: &mut impl Rng, integral: bool) -> f64 {
    if integral {
        f64::from(rng.random_range(-5..=5))
    } else {
        rng.random_range(-5.0..=5.0)
    }
}

/// `min c'v s.t. A v ≥ b, v ≥ 0` with m, n ≤ 5 and entries in [−5, 5]; some
/// instances use integer entries to provoke degeneracy.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let m = rng.random_range(1..=5);
    let n = rng.random_range(1..=5);
    let integral = rng.random_bool(0.3);
    Instance {
        c: (0..n).map(|_| entry(rng, integral)).collect(),
        a: (0..m).map(|_| (0..n).map(|_| entry(rng, integral)).collect()).collect(),
        b: (0..m).map(|_| entry(rng, integral)).collect(),
    }
}

/// Two-point total-cost sample: `failures` copies of K + κ and the rest κ.
pub fn two_point_costs(n: usize, failures: usize, k: f64, kappa: f64) -> Vec<f64> {
    let mut out = vec![k + kappa; failures];
    out.resize(n, kappa);
    out
}

/// Mixed-distribution sample sets for randomized identity checks.
pub fn mixed_samples(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let kind = rng.random_range(0..5);
    (0..n)
        .map(|_| match kind {
            0 => rng.random_range(-5.0..5.0),
            1 => {
                let u: f64 = rng.random_range(1e-12..1.0);
                -u.ln()
            }
            2 => {
                let u: f64 = rng.random_range(1e-12..1.0);
                let v: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (-2.0 * u.ln()).sqrt() * v.cos()
            }
            3 => f64::from(rng.random_range(-3..4)),
            _ => {
                if rng.random_bool(0.5) {
                    rng.random_range(-1.0..0.0)
                } else {
                    rng.random_range(2.0..3.0)
                }
            }
        })
        .collect()
}

/// Box–Muller standard normals for tests that need their own generator.
pub fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u.ln()).sqrt();
    (r * v.cos(), r * v.sin())
}
