//! Linear structural design: the system fails when A·V > x componentwise,
//! the design cost is κ(x) = c'x, and a design is accepted when the failure
//! region {V ≥ 0 : A V ≥ x} lies inside the contour halfspace {u'V > C(u)}.
//!
//! Inclusion is decided by one LP, `min u'V s.t. A V ≥ x, V ≥ 0`: it holds
//! when the LP is infeasible (empty failure region) or its value exceeds
//! C(u) + ε. The LP value is non-decreasing in x, which the design search
//! relies on.

mod simplex;

pub use simplex::{
    lp_solve, LinearProgram, LpOutcome, LpSolution, LpStatus, FEASIBILITY_TOLERANCE,
    PIVOT_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::contour::UnitVector;
use crate::design::{CatalogFunction, CostModel};
use crate::error::{Error, Result};
use crate::risk::RiskLevel;

/// Load matrix, strength costs and bounds, plus the cost-model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDesignProblem {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bounds: Option<Vec<f64>>,
    #[serde(rename = "K")]
    pub failure_cost: f64,
    pub alpha: RiskLevel,
}

impl LinearDesignProblem {
    pub fn new(
        a: Vec<Vec<f64>>,
        c: Vec<f64>,
        lower_bounds: Option<Vec<f64>>,
        failure_cost: f64,
        alpha: RiskLevel,
    ) -> Result<Self> {
        let problem = Self {
            a,
            c,
            lower_bounds,
            failure_cost,
            alpha,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a.len();
        if m == 0 {
            return Err(Error::config("A", "needs at least one row"));
        }
        let n = self.a[0].len();
        if n == 0 {
            return Err(Error::config("A", "needs at least one column"));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config("A", format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config("A", format!("row {i} has a negative or non-finite entry")));
            }
            if row.iter().all(|v| *v == 0.0) {
                return Err(Error::config("A", format!("row {i} is all zero")));
            }
        }
        if self.c.len() != m {
            return Err(Error::config("c", format!("expected {m} entries, got {}", self.c.len())));
        }
        if self.c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("c", "cost coefficients must be positive"));
        }
        if let Some(lb) = &self.lower_bounds {
            if lb.len() != m {
                return Err(Error::config("lower_bounds", format!("expected {m} entries, got {}", lb.len())));
            }
            if lb.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config("lower_bounds", "must be non-negative"));
            }
        }
        if !(self.failure_cost.is_finite() && self.failure_cost > 0.0) {
            return Err(Error::config("K", "must be positive"));
        }
        Ok(())
    }

    /// Number of strengths m.
    pub fn design_dim(&self) -> usize {
        self.a.len()
    }

    /// Number of environmental variables n.
    pub fn env_dim(&self) -> usize {
        self.a[0].len()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.lower_bounds
            .clone()
            .unwrap_or_else(|| vec![0.0; self.design_dim()])
    }

    /// κ(x) = c'x.
    pub fn design_cost(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::linear(self.failure_cost, self.c.clone(), self.alpha)
    }

    /// The failure indicator as a performance function: g = minᵢ((A V)ᵢ − xᵢ).
    pub fn performance_function(&self) -> CatalogFunction {
        CatalogFunction::Linear { a: self.a.clone() }
    }

    /// `min u'V s.t. A V ≥ x, V ≥ 0`.
    pub fn inclusion_lp(&self, x: &[f64], u: &UnitVector) -> Result<LinearProgram> {
        if u.dim() != self.env_dim() {
            return Err(Error::Dimension {
                expected: self.env_dim(),
                found: u.dim(),
            });
        }
        if x.len() != self.design_dim() {
            return Err(Error::Dimension {
                expected: self.design_dim(),
                found: x.len(),
            });
        }
        LinearProgram::new(u.components().to_vec(), self.a.clone(), x.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    /// The LP outcome; when optimal its point is V₀.
    pub outcome: LpOutcome,
}

/// Decides whether {A V ≥ x} ⊆ {u'V > c_u + ε} over V ≥ 0.
pub fn condition_check(
    problem: &LinearDesignProblem,
    x: &[f64],
    u: &UnitVector,
    c_u: f64,
    epsilon: f64,
) -> Result<ConditionCheck> {
    if let Some(i) = problem
        .lower_bounds()
        .iter()
        .zip(x)
        .position(|(lb, v)| v < lb)
    {
        return Err(Error::config("x", format!("component {i} is below its lower bound")));
    }
    let outcome = lp_solve(&problem.inclusion_lp(x, u)?)?;
    let holds = match &outcome {
        LpOutcome::Infeasible => true,
        LpOutcome::Optimal(s) => s.value > c_u + epsilon,
        LpOutcome::Unbounded => false,
    };
    Ok(ConditionCheck { holds, outcome })
}

/// Controls for [`optimize_design`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchControls {
    /// Search rays x = x_lb + t·d. `None` uses the all-ones diagonal followed
    /// by every coordinate axis.
    pub rays: Option<Vec<Vec<f64>>>,
    pub t_max: f64,
    /// Bisection stops when the bracket is below this fraction of its upper end.
    pub relative_tolerance: f64,
    /// Coordinate descent stops when a cycle improves cost by less than this
    /// fraction of the current cost.
    pub polish_tolerance: f64,
    pub max_bisection_steps: usize,
    pub max_polish_cycles: usize,
}

impl Default for SearchControls {
    fn default() -> Self {
        Self {
            rays: None,
            t_max: 1e6,
            relative_tolerance: 1e-6,
            polish_tolerance: 1e-8,
            max_bisection_steps: 200,
            max_polish_cycles: 100,
        }
    }
}

/// A certified design and its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// min u'V over the failure region; `None` when the region is empty.
    pub lp_value: Option<f64>,
    pub direction: Vec<f64>,
}

struct Search<'a> {
    problem: &'a LinearDesignProblem,
    u: &'a UnitVector,
    c_u: f64,
    epsilon: f64,
    controls: &'a SearchControls,
}

impl Search<'_> {
    fn holds(&self, x: &[f64]) -> Result<bool> {
        Ok(condition_check(self.problem, x, self.u, self.c_u, self.epsilon)?.holds)
    }

    fn point(lb: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        lb.iter().zip(d).map(|(l, di)| l + t * di).collect()
    }

    /// Smallest t on the ray (to the relative tolerance) where the condition holds.
    fn ray(&self, lb: &[f64], d: &[f64]) -> Result<Option<Vec<f64>>> {
        if self.holds(lb)? {
            return Ok(Some(lb.to_vec()));
        }
        let t_max = self.controls.t_max;
        let (mut lo, mut hi) = (0.0, 1.0_f64.min(t_max));
        loop {
            if self.holds(&Self::point(lb, d, hi))? {
                break;
            }
            if hi >= t_max {
                return Ok(None);
            }
            lo = hi;
            hi = (2.0 * hi).min(t_max);
        }
        for _ in 0..self.controls.max_bisection_steps {
            if hi - lo <= self.controls.relative_tolerance * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.holds(&Self::point(lb, d, mid))? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(Self::point(lb, d, hi)))
    }

    /// Cyclic coordinate descent toward the lower bounds, keeping the
    /// condition satisfied.
    fn polish(&self, lb: &[f64], mut x: Vec<f64>) -> Result<Vec<f64>> {
        let mut cost = self.problem.design_cost(&x);
        for _ in 0..self.controls.max_polish_cycles {
            let before = cost;
            for i in 0..x.len() {
                if x[i] <= lb[i] {
                    continue;
                }
                let mut trial = x.clone();
                trial[i] = lb[i];
                if self.holds(&trial)? {
                    x = trial;
                    continue;
                }
                let (mut lo, mut hi) = (lb[i], x[i]);
                for _ in 0..self.controls.max_bisection_steps {
                    if hi - lo <= self.controls.relative_tolerance * hi {
                        break;
                    }
                    trial[i] = 0.5 * (lo + hi);
                    if self.holds(&trial)? {
                        hi = trial[i];
                    } else {
                        lo = trial[i];
                    }
                }
                x[i] = hi;
            }
            cost = self.problem.design_cost(&x);
            if before - cost <= self.controls.polish_tolerance * cost || cost == 0.0 {
                break;
            }
        }
        Ok(x)
    }
}

/// Minimises κ(x) = c'x over x ≥ x_lb subject to the inclusion condition.
///
/// Each ray is searched by bisection on t, then polished by coordinate
/// descent; the cheapest result wins, ties going to the earlier ray. The
/// returned design always passes [`condition_check`].
pub fn optimize_design(
    problem: &LinearDesignProblem,
    u: &UnitVector,
    c_u: f64,
    epsilon: f64,
    controls: &SearchControls,
) -> Result<DesignResult> {
    problem.validate()?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::config("epsilon", "must be a non-negative number"));
    }
    if u.dim() != problem.env_dim() {
        return Err(Error::Dimension {
            expected: problem.env_dim(),
            found: u.dim(),
        });
    }
    let m = problem.design_dim();
    let rays = match &controls.rays {
        Some(rays) => {
            if rays.is_empty() {
                return Err(Error::config("rays", "needs at least one ray"));
            }
            for d in rays {
                if d.len() != m || d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || d.iter().all(|v| *v == 0.0) {
                    return Err(Error::config("rays", "each ray needs m non-negative entries, not all zero"));
                }
            }
            rays.clone()
        }
        None => {
            let mut rays = vec![vec![1.0; m]];
            if m > 1 {
                rays.extend((0..m).map(|i| {
                    let mut e = vec![0.0; m];
                    e[i] = 1.0;
                    e
                }));
            }
            rays
        }
    };

    let search = Search {
        problem,
        u,
        c_u,
        epsilon,
        controls,
    };
    let lb = problem.lower_bounds();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for d in &rays {
        let Some(start) = search.ray(&lb, d)? else {
            continue;
        };
        let x = search.polish(&lb, start)?;
        let cost = problem.design_cost(&x);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((x, cost));
        }
    }
    let (x, cost) = best.ok_or(Error::NoFeasibleDesign {
        t_max: controls.t_max,
    })?;
    let check = condition_check(problem, &x, u, c_u, epsilon)?;
    if !check.holds {
        return Err(Error::Numeric("optimised design failed its final check".into()));
    }
    Ok(DesignResult {
        x,
        cost,
        lp_value: check.outcome.value(),
        direction: u.components().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn identity_problem(c: Vec<f64>) -> LinearDesignProblem {
        LinearDesignProblem::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            c,
            None,
            100.0,
            RiskLevel::new(0.1).unwrap(),
        )
        .unwrap()
    }

    fn diagonal() -> UnitVector {
        UnitVector::normalized(&[1.0, 1.0]).unwrap()
    }

    #[test]
    fn condition_check_examples() {
        let p = identity_problem(vec![1.0, 1.0]);
        let check = condition_check(&p, &[1.0, 1.0], &diagonal(), 1.2816, 0.0).unwrap();
        assert!(check.holds);
        assert!((check.outcome.value().unwrap() - SQRT_2).abs() < 1e-12);

        let check = condition_check(&p, &[0.5, 0.5], &diagonal(), 1.2816, 0.0).unwrap();
        assert!(!check.holds);
        assert!((check.outcome.value().unwrap() - 0.5 * SQRT_2).abs() < 1e-12);

        let skew = UnitVector::normalized(&[1.0, -1.0]).unwrap();
        let check = condition_check(&p, &[1.0, 1.0], &skew, 0.0, 0.0).unwrap();
        assert!(!check.holds);
        assert_eq!(check.outcome.status(), LpStatus::Unbounded);

        assert!(condition_check(&p, &[-1.0, 1.0], &diagonal(), 0.0, 0.0).is_err());
    }

    #[test]
    fn optimize_identity_diagonal() {
        let p = identity_problem(vec![1.0, 1.0]);
        let c_u = 1.281_552;
        let r = optimize_design(&p, &diagonal(), c_u, 0.0, &SearchControls::default()).unwrap();
        assert!((r.cost - SQRT_2 * c_u).abs() < 1e-3, "{r:?}");
        assert!((r.x[0] + r.x[1] - SQRT_2 * c_u).abs() < 1e-3);
        assert!(condition_check(&p, &r.x, &diagonal(), c_u, 0.0).unwrap().holds);
    }

    #[test]
    fn degenerate_threshold_boundary() {
        let p = identity_problem(vec![1.0, 1.0]);
        let r = optimize_design(&p, &diagonal(), 0.0, 1e-9, &SearchControls::default()).unwrap();
        assert!((r.cost - SQRT_2 * 1e-9).abs() < 1e-14, "{r:?}");
        let r = optimize_design(&p, &diagonal(), 0.0, 0.0, &SearchControls::default()).unwrap();
        assert!(r.cost < 1e-12 && r.cost > 0.0);
        assert!(r.lp_value.unwrap() > 0.0);
    }

    #[test]
    fn single_constraint_has_no_feasible_design() {
        let p = LinearDesignProblem::new(
            vec![vec![1.0, 1.0]],
            vec![1.0],
            None,
            100.0,
            RiskLevel::new(0.1).unwrap(),
        )
        .unwrap();
        let u = UnitVector::new(vec![1.0, 0.0]).unwrap();
        let err = optimize_design(&p, &u, 1.0, 0.0, &SearchControls::default()).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleDesign { .. }));
    }

    #[test]
    fn axis_rays_find_cheaper_vertex() {
        // Condition 0.8·x₁ + 0.6·x₂ > 1 with costs (1, 3): the optimum puts
        // all strength on x₁, cost 1/0.8 = 1.25.
        let p = identity_problem(vec![1.0, 3.0]);
        let u = UnitVector::new(vec![0.8, 0.6]).unwrap();
        let r = optimize_design(&p, &u, 1.0, 0.0, &SearchControls::default()).unwrap();
        assert!((r.cost - 1.25).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn lower_bounds_already_feasible() {
        let mut p = identity_problem(vec![1.0, 1.0]);
        p.lower_bounds = Some(vec![2.0, 2.0]);
        let r = optimize_design(&p, &diagonal(), 1.0, 0.0, &SearchControls::default()).unwrap();
        assert_eq!(r.x, vec![2.0, 2.0]);
        assert_eq!(r.cost, 4.0);
    }

    #[test]
    fn problem_validation() {
        let level = RiskLevel::new(0.1).unwrap();
        assert!(LinearDesignProblem::new(vec![vec![0.0, 0.0]], vec![1.0], None, 1.0, level).is_err());
        assert!(LinearDesignProblem::new(vec![vec![-1.0]], vec![1.0], None, 1.0, level).is_err());
        assert!(LinearDesignProblem::new(vec![vec![1.0]], vec![0.0], None, 1.0, level).is_err());
        assert!(LinearDesignProblem::new(vec![vec![1.0]], vec![1.0], Some(vec![-1.0]), 1.0, level).is_err());
    }

    #[test]
    fn problem_json_field_names() {
        let json = r#"{"A":[[1,0],[0,1]],"c":[1,1],"lower_bounds":[0,0],"K":100,"alpha":0.1}"#;
        let p: LinearDesignProblem = serde_json::from_str(json).unwrap();
        assert_eq!(p.failure_cost, 100.0);
        assert_eq!(p.alpha.alpha(), 0.1);
        assert!(serde_json::from_str::<LinearDesignProblem>(
            r#"{"A":[[1]],"c":[1],"K":100,"alpha":1.5}"#
        )
        .is_err());
    }
}
