//! Risk of total cost for a structural design, and the sufficient
//! conditions that tie designs to contour halfspaces.
//!
//! Total cost is H = K·1[g(V, x) > 0] + κ(x). Under the empirical quantile
//! convention its value-at-risk is K + κ when p_f > α and κ otherwise; its
//! CVaR is (K/α)·min(p_f, α) + κ. A value g = 0 counts as functioning.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contour::UnitVector;
use crate::envdata::SampleMatrix;
use crate::error::{Error, Result};
use crate::risk::RiskLevel;

/// g(V, x): positive means failed.
pub trait PerformanceFunction {
    fn evaluate(&self, env: &[f64], design: &[f64]) -> f64;

    /// Expected environment dimension, when the function knows it.
    fn env_dim(&self) -> Option<usize> {
        None
    }

    /// Expected design dimension, when the function knows it.
    fn design_dim(&self) -> Option<usize> {
        None
    }
}

impl<F> PerformanceFunction for F
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    fn evaluate(&self, env: &[f64], design: &[f64]) -> f64 {
        self(env, design)
    }
}

/// Closed catalog of performance functions selectable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CatalogFunction {
    /// Fails when every component of A·V exceeds the matching strength:
    /// g = minᵢ((A V)ᵢ − xᵢ).
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
    /// g = u'V − threshold; the design vector is unused.
    Halfspace { u: Vec<f64>, threshold: f64 },
    /// g ≡ value.
    Constant { value: f64 },
}

impl PerformanceFunction for CatalogFunction {
    fn evaluate(&self, env: &[f64], design: &[f64]) -> f64 {
        match self {
            CatalogFunction::Linear { a } => a
                .iter()
                .zip(design)
                .map(|(row, x)| row.iter().zip(env).map(|(p, v)| p * v).sum::<f64>() - x)
                .fold(f64::INFINITY, f64::min),
            CatalogFunction::Halfspace { u, threshold } => {
                u.iter().zip(env).map(|(a, b)| a * b).sum::<f64>() - threshold
            }
            CatalogFunction::Constant { value } => *value,
        }
    }

    fn env_dim(&self) -> Option<usize> {
        match self {
            CatalogFunction::Linear { a } => a.first().map(Vec::len),
            CatalogFunction::Halfspace { u, .. } => Some(u.len()),
            CatalogFunction::Constant { .. } => None,
        }
    }

    fn design_dim(&self) -> Option<usize> {
        match self {
            CatalogFunction::Linear { a } => Some(a.len()),
            _ => None,
        }
    }
}

fn check_dims(g: &dyn PerformanceFunction, x: &[f64], samples: &SampleMatrix) -> Result<()> {
    if let Some(n) = g.env_dim() {
        if n != samples.dim() {
            return Err(Error::Dimension {
                expected: n,
                found: samples.dim(),
            });
        }
    }
    if let Some(m) = g.design_dim() {
        if m != x.len() {
            return Err(Error::Dimension {
                expected: m,
                found: x.len(),
            });
        }
    }
    Ok(())
}

fn check_direction(u: &UnitVector, samples: &SampleMatrix) -> Result<()> {
    if u.dim() != samples.dim() {
        return Err(Error::Dimension {
            expected: samples.dim(),
            found: u.dim(),
        });
    }
    Ok(())
}

/// (1/N)·#{i : g(Vᵢ, x) > 0}.
pub fn failure_probability(
    g: &dyn PerformanceFunction,
    x: &[f64],
    samples: &SampleMatrix,
) -> Result<f64> {
    check_dims(g, x, samples)?;
    let failures = samples.rows().filter(|v| g.evaluate(v, x) > 0.0).count();
    Ok(failures as f64 / samples.len() as f64)
}

/// Failure cost K, design cost κ and risk level α.
pub struct CostModel {
    failure_cost: f64,
    design_cost: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    level: RiskLevel,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("failure_cost", &self.failure_cost)
            .field("level", &self.level)
            .finish_non_exhaustive()
    }
}

impl CostModel {
    pub fn new(
        failure_cost: f64,
        design_cost: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        level: RiskLevel,
    ) -> Result<Self> {
        if !(failure_cost.is_finite() && failure_cost > 0.0) {
            return Err(Error::config("K", format!("must be positive, got {failure_cost}")));
        }
        Ok(Self {
            failure_cost,
            design_cost: Box::new(design_cost),
            level,
        })
    }

    /// κ(x) = c'x.
    pub fn linear(failure_cost: f64, coefficients: Vec<f64>, level: RiskLevel) -> Result<Self> {
        Self::new(
            failure_cost,
            move |x| coefficients.iter().zip(x).map(|(c, v)| c * v).sum(),
            level,
        )
    }

    /// κ(x) ≡ kappa.
    pub fn constant(failure_cost: f64, kappa: f64, level: RiskLevel) -> Result<Self> {
        Self::new(failure_cost, move |_| kappa, level)
    }

    pub fn failure_cost(&self) -> f64 {
        self.failure_cost
    }

    pub fn level(&self) -> RiskLevel {
        self.level
    }

    /// κ(x), checked against 0 ≤ κ < K.
    pub fn design_cost(&self, x: &[f64]) -> Result<f64> {
        let kappa = (self.design_cost)(x);
        if kappa.is_finite() && kappa >= 0.0 && kappa < self.failure_cost {
            Ok(kappa)
        } else {
            Err(Error::ModelViolation {
                kappa,
                failure_cost: self.failure_cost,
            })
        }
    }
}

/// case1: p_f > α. case2: p_f ≤ α.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostCase {
    Case1,
    Case2,
}

impl CostCase {
    pub fn classify(p_f: f64, level: RiskLevel) -> Self {
        if p_f > level.alpha() {
            CostCase::Case1
        } else {
            CostCase::Case2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskOfCostReport {
    pub p_f: f64,
    pub var_cost: f64,
    pub cvar_cost: f64,
    #[serde(rename = "case")]
    pub case_label: CostCase,
}

fn check_probability(p_f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p_f) {
        Ok(())
    } else {
        Err(Error::config("p_f", format!("must lie in [0, 1], got {p_f}")))
    }
}

/// VaR of total cost: K + κ(x) in case 1, κ(x) in case 2.
pub fn var_of_total_cost(p_f: f64, model: &CostModel, x: &[f64]) -> Result<(f64, CostCase)> {
    check_probability(p_f)?;
    let kappa = model.design_cost(x)?;
    Ok(match CostCase::classify(p_f, model.level) {
        CostCase::Case1 => (model.failure_cost + kappa, CostCase::Case1),
        CostCase::Case2 => (kappa, CostCase::Case2),
    })
}

/// CVaR of total cost: K + κ(x) in case 1, K·p_f/α + κ(x) in case 2.
pub fn cvar_of_total_cost(p_f: f64, model: &CostModel, x: &[f64]) -> Result<(f64, CostCase)> {
    check_probability(p_f)?;
    let kappa = model.design_cost(x)?;
    let k = model.failure_cost;
    Ok(match CostCase::classify(p_f, model.level) {
        CostCase::Case1 => (k + kappa, CostCase::Case1),
        CostCase::Case2 => (k * (p_f / model.level.alpha()) + kappa, CostCase::Case2),
    })
}

/// In-sample failure probability plus both closed-form risks of cost.
pub fn risk_of_cost(
    g: &dyn PerformanceFunction,
    x: &[f64],
    samples: &SampleMatrix,
    model: &CostModel,
) -> Result<RiskOfCostReport> {
    let p_f = failure_probability(g, x, samples)?;
    let (var_cost, case_label) = var_of_total_cost(p_f, model, x)?;
    let (cvar_cost, _) = cvar_of_total_cost(p_f, model, x)?;
    Ok(RiskOfCostReport {
        p_f,
        var_cost,
        cvar_cost,
        case_label,
    })
}

/// First sample at which a sufficient condition fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub index: usize,
    pub environment: Vec<f64>,
    pub g_value: f64,
    pub projection: f64,
}

/// In-sample probabilities observed when a condition holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEvidence {
    /// P̂(g > 0).
    pub failure_probability: f64,
    /// P̂(u'V > threshold) for the threshold the condition was checked at.
    pub halfspace_exceedance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionOutcome {
    Holds(ConditionEvidence),
    Violated(Witness),
}

impl ConditionOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionOutcome::Holds(_))
    }
}

fn scan_condition(
    g: &dyn PerformanceFunction,
    x: &[f64],
    u: &UnitVector,
    threshold: f64,
    samples: &SampleMatrix,
    violates: impl Fn(f64, f64) -> bool,
) -> Result<ConditionOutcome> {
    check_dims(g, x, samples)?;
    check_direction(u, samples)?;
    let mut failures = 0usize;
    let mut exceed = 0usize;
    for (index, v) in samples.rows().enumerate() {
        let g_value = g.evaluate(v, x);
        let projection = u.dot(v);
        if violates(g_value, projection) {
            return Ok(ConditionOutcome::Violated(Witness {
                index,
                environment: v.to_vec(),
                g_value,
                projection,
            }));
        }
        failures += usize::from(g_value > 0.0);
        exceed += usize::from(projection > threshold);
    }
    debug_assert!(failures <= exceed);
    let n = samples.len() as f64;
    Ok(ConditionOutcome::Holds(ConditionEvidence {
        failure_probability: failures as f64 / n,
        halfspace_exceedance: exceed as f64 / n,
    }))
}

/// Holds iff g(Vᵢ, x) ≤ 0 for every sample with u'Vᵢ ≤ c_u.
pub fn halfspace_condition(
    g: &dyn PerformanceFunction,
    x: &[f64],
    u: &UnitVector,
    c_u: f64,
    samples: &SampleMatrix,
) -> Result<ConditionOutcome> {
    scan_condition(g, x, u, c_u, samples, |g_value, projection| {
        projection <= c_u && g_value > 0.0
    })
}

/// Holds iff g(Vᵢ, x) ≤ Γ(u, Vᵢ) = u'Vᵢ − C̄(u) for every sample.
pub fn domination_condition(
    g: &dyn PerformanceFunction,
    x: &[f64],
    u: &UnitVector,
    cbar_u: f64,
    samples: &SampleMatrix,
) -> Result<ConditionOutcome> {
    scan_condition(g, x, u, cbar_u, samples, |g_value, projection| {
        g_value > projection - cbar_u
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case2Candidate {
    pub design: Vec<f64>,
    pub p_f: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case1Candidate {
    pub design: Vec<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sufficiency {
    Guaranteed,
    NotGuaranteed {
        case2_index: usize,
        case1_index: usize,
        cost_gap: f64,
        allowance: f64,
    },
}

/// Checks κ(x₂) − κ(x₁) ≤ (K/α)(α − p_f(x₂)) over all case-2/case-1 pairs.
/// When it holds, a CVaR-optimal design keeps p_f ≤ α.
pub fn sufficient_cvar_condition(
    model: &CostModel,
    case2: &[Case2Candidate],
    case1: &[Case1Candidate],
) -> Result<Sufficiency> {
    let alpha = model.level.alpha();
    for (index, c) in case2.iter().enumerate() {
        if !(0.0..=alpha).contains(&c.p_f) {
            return Err(Error::Classification {
                index,
                p_f: c.p_f,
                alpha,
            });
        }
    }
    let scale = model.failure_cost / alpha;
    for (i2, c2) in case2.iter().enumerate() {
        let allowance = scale * (alpha - c2.p_f);
        for (i1, c1) in case1.iter().enumerate() {
            let cost_gap = c2.kappa - c1.kappa;
            if cost_gap > allowance {
                return Ok(Sufficiency::NotGuaranteed {
                    case2_index: i2,
                    case1_index: i1,
                    cost_gap,
                    allowance,
                });
            }
        }
    }
    Ok(Sufficiency::Guaranteed)
}

/// How g responds to an increase in one environmental component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Unknown,
}

/// Admissible sign of one direction component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConstraint {
    /// uᵢ ∈ (0, 1).
    Positive,
    /// uᵢ ∈ (−1, 0).
    Negative,
    Free,
}

impl SignConstraint {
    pub fn admits(self, component: f64) -> bool {
        match self {
            SignConstraint::Positive => component > 0.0,
            SignConstraint::Negative => component < 0.0,
            SignConstraint::Free => true,
        }
    }
}

/// The direction should follow the monotonicity of g in each component.
pub fn choose_u_signs(monotonicity: &[Monotonicity]) -> Vec<SignConstraint> {
    monotonicity
        .iter()
        .map(|m| match m {
            Monotonicity::Nondecreasing => SignConstraint::Positive,
            Monotonicity::Nonincreasing => SignConstraint::Negative,
            Monotonicity::Unknown => SignConstraint::Free,
        })
        .collect()
}

pub fn admits(constraints: &[SignConstraint], u: &UnitVector) -> bool {
    constraints.len() == u.dim()
        && constraints
            .iter()
            .zip(u.components())
            .all(|(s, c)| s.admits(*c))
}

/// `count` unit directions spread uniformly over the admissible set, for
/// n = 1 or n = 2. Open arcs are sampled at cell midpoints, so endpoints
/// (where a constrained component would vanish) are never returned.
pub fn admissible_directions(constraints: &[SignConstraint], count: usize) -> Result<Vec<UnitVector>> {
    if count == 0 {
        return Err(Error::config("sweep", "must be at least 1"));
    }
    match constraints {
        [s] => {
            let mut out = Vec::new();
            if s.admits(1.0) {
                out.push(UnitVector::new(vec![1.0])?);
            }
            if s.admits(-1.0) {
                out.push(UnitVector::new(vec![-1.0])?);
            }
            Ok(out)
        }
        [sx, sy] => {
            let axis = |s: SignConstraint, positive: f64, negative: f64| match s {
                SignConstraint::Positive => Some(positive),
                SignConstraint::Negative => Some(negative),
                SignConstraint::Free => None,
            };
            let (center, half_width) = match (axis(*sx, 0.0, PI), axis(*sy, FRAC_PI_2, -FRAC_PI_2)) {
                (None, None) => {
                    return Ok((0..count)
                        .map(|j| UnitVector::from_angle(TAU * j as f64 / count as f64))
                        .collect())
                }
                (Some(c), None) | (None, Some(c)) => (c, FRAC_PI_2),
                (Some(_), Some(_)) => {
                    let cx = if *sx == SignConstraint::Positive { 1.0 } else { -1.0 };
                    let cy = if *sy == SignConstraint::Positive { 1.0 } else { -1.0 };
                    (f64::atan2(cy, cx), FRAC_PI_4)
                }
            };
            let lo = center - half_width;
            let step = 2.0 * half_width / count as f64;
            Ok((0..count)
                .map(|i| UnitVector::from_angle(lo + (i as f64 + 0.5) * step))
                .filter(|u| admits(constraints, u))
                .collect())
        }
        other => Err(Error::Geometry(format!(
            "direction sweep supports n = 1 or 2, got n = {}",
            other.len()
        ))),
    }
}

/// One concept: a direction, its optimal design and the risk-of-cost value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptReport {
    pub direction: UnitVector,
    pub design: Vec<f64>,
    pub value: f64,
}

/// Index of the smallest risk-of-cost value; ties go to the lowest index.
pub fn compare_concepts(reports: &[ConceptReport]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in reports.iter().enumerate() {
        if r.value.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, v)| r.value < v) {
            best = Some((i, r.value));
        }
    }
    best.map(|(i, _)| i)
        .ok_or(Error::EmptyInput("no concepts to compare"))
}
