//! Dense two-phase simplex for `min c'v  s.t.  A v ≥ b,  v ≥ 0`.
//!
//! Each row becomes σᵢ(Aᵢv − sᵢ) = σᵢbᵢ with a surplus sᵢ ≥ 0 and σᵢ chosen
//! so the right-hand side is non-negative; an artificial variable per row
//! gives the phase-one basis. Pivoting follows Bland's rule (lowest-index
//! entering column, lowest-index basic variable among ratio ties), which
//! cannot cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries at or below this magnitude are never pivoted on.
pub const PIVOT_TOLERANCE: f64 = 1e-11;
/// Reduced costs above −tolerance count as non-negative.
const OPTIMALITY_TOLERANCE: f64 = 1e-10;
/// Feasibility slack for phase one and the final point check.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, constraints: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        if n == 0 {
            return Err(Error::EmptyInput("linear program needs a variable"));
        }
        if constraints.is_empty() {
            return Err(Error::EmptyInput("linear program needs a constraint"));
        }
        if rhs.len() != constraints.len() {
            return Err(Error::Dimension {
                expected: constraints.len(),
                found: rhs.len(),
            });
        }
        if let Some(row) = constraints.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: row.len(),
            });
        }
        let all = objective.iter().chain(rhs.iter()).chain(constraints.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("linear program has non-finite data".into()));
        }
        Ok(Self {
            objective,
            constraints,
            rhs,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn scale(&self) -> f64 {
        self.rhs.iter().fold(1.0_f64, |m, b| m.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
    /// Multipliers y ≥ 0 of the `A v ≥ b` rows read off the final basis;
    /// they satisfy A'y ≤ c and b'y = value up to rounding.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn status(&self) -> LpStatus {
        match self {
            LpOutcome::Optimal(_) => LpStatus::Optimal,
            LpOutcome::Infeasible => LpStatus::Infeasible,
            LpOutcome::Unbounded => LpStatus::Unbounded,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal(s) => Some(s.value),
            _ => None,
        }
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    /// `rows` constraint rows followed by the objective row; last column is
    /// the right-hand side.
    cells: Vec<f64>,
    basis: Vec<usize>,
    /// Columns that may enter the basis.
    eligible: Vec<bool>,
    pivots: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn objective_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<()> {
        let w = self.width;
        let p = self.at(r, c);
        if p.abs() <= PIVOT_TOLERANCE {
            return Err(Error::Numeric(format!(
                "pivot {p:e} at row {r}, column {c} is below {PIVOT_TOLERANCE:e}"
            )));
        }
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(Error::Numeric(format!("no convergence after {MAX_PIVOTS} pivots")));
        }
        for v in &mut self.cells[r * w..(r + 1) * w] {
            *v /= p;
        }
        self.cells[r * w + c] = 1.0;
        let pivot_row: Vec<f64> = self.cells[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let factor = self.cells[i * w + c];
            if factor == 0.0 {
                continue;
            }
            for (v, pr) in self.cells[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= factor * pr;
            }
            self.cells[i * w + c] = 0.0;
        }
        self.basis[r] = c;
        Ok(())
    }

    fn entering(&self) -> Option<usize> {
        let obj = self.objective_row();
        (0..self.width - 1).find(|&j| self.eligible[j] && self.at(obj, j) < -OPTIMALITY_TOLERANCE)
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a <= PIVOT_TOLERANCE {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn run(&mut self) -> Result<Step> {
        while let Some(c) = self.entering() {
            match self.leaving(c) {
                Some(r) => self.pivot(r, c)?,
                None => return Ok(Step::Unbounded),
            }
        }
        Ok(Step::Optimal)
    }

    /// Rewrites the objective row for costs `costs` over the current basis.
    fn price(&mut self, costs: &[f64]) {
        let w = self.width;
        let obj = self.objective_row();
        for j in 0..w {
            let mut d = if j < costs.len() { costs[j] } else { 0.0 };
            for i in 0..self.rows {
                let cb = costs.get(self.basis[i]).copied().unwrap_or(0.0);
                d -= cb * self.at(i, j);
            }
            self.cells[obj * w + j] = d;
        }
    }
}

/// Solves the program. Returns a basic optimal solution, or reports
/// infeasibility or unboundedness.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.num_vars();
    let m = lp.num_constraints();
    let art0 = n + m;
    let width = n + 2 * m + 1;
    let mut cells = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let sign = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut cells[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = sign * lp.constraints[i][j];
        }
        row[n + i] = -sign;
        row[art0 + i] = 1.0;
        row[width - 1] = sign * lp.rhs[i];
    }
    let mut tableau = Tableau {
        rows: m,
        width,
        cells,
        basis: (art0..art0 + m).collect(),
        eligible: vec![true; width - 1],
        pivots: 0,
    };

    // Phase one: minimise the sum of artificials.
    let mut phase_one_costs = vec![0.0; art0 + m];
    phase_one_costs[art0..].iter_mut().for_each(|c| *c = 1.0);
    tableau.price(&phase_one_costs);
    tableau.run()?;
    let infeasibility: f64 = (0..m)
        .filter(|&i| tableau.basis[i] >= art0)
        .map(|i| tableau.rhs(i))
        .sum();
    if infeasibility > FEASIBILITY_TOLERANCE * lp.scale() {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive remaining (zero-level) artificials out of the basis. A row with
    // no usable entry is redundant and stays inert.
    for i in 0..m {
        if tableau.basis[i] < art0 {
            continue;
        }
        let column = (0..art0)
            .filter(|&j| tableau.at(i, j).abs() > PIVOT_TOLERANCE)
            .max_by(|&a, &b| tableau.at(i, a).abs().total_cmp(&tableau.at(i, b).abs()));
        if let Some(j) = column {
            tableau.pivot(i, j)?;
        }
    }
    for e in &mut tableau.eligible[art0..] {
        *e = false;
    }

    // Phase two.
    let mut costs = vec![0.0; art0];
    costs[..n].copy_from_slice(&lp.objective);
    tableau.price(&costs);
    if let Step::Unbounded = tableau.run()? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut point = vec![0.0; n];
    for i in 0..m {
        let b = tableau.basis[i];
        if b < n {
            point[b] = tableau.rhs(i);
        }
    }
    for v in &mut point {
        if *v < 0.0 && *v > -FEASIBILITY_TOLERANCE {
            *v = 0.0;
        }
    }
    let obj = tableau.objective_row();
    let duals: Vec<f64> = (0..m).map(|i| tableau.at(obj, n + i)).collect();
    let value: f64 = lp.objective.iter().zip(&point).map(|(c, v)| c * v).sum();

    let scale = lp.scale().max(point.iter().fold(1.0_f64, |a, v| a.max(v.abs())));
    for (i, row) in lp.constraints.iter().enumerate() {
        let lhs: f64 = row.iter().zip(&point).map(|(a, v)| a * v).sum();
        if lhs < lp.rhs[i] - FEASIBILITY_TOLERANCE * scale {
            return Err(Error::Numeric(format!(
                "row {i} violated at the final basis: {lhs} < {} after {} pivots",
                lp.rhs[i], tableau.pivots
            )));
        }
    }
    if let Some(j) = point.iter().position(|v| *v < 0.0) {
        return Err(Error::Numeric(format!(
            "variable {j} negative at the final basis: {}",
            point[j]
        )));
    }
    Ok(LpOutcome::Optimal(LpSolution {
        value,
        point,
        duals,
    }))
}
