//! Empirical value-at-risk, conditional value-at-risk, superquantiles and
//! buffered failure probability.
//!
//! Large values are bad throughout. For a sample y₁ ≥ … ≥ y_N the quantile
//! convention is `inf{x : P̂(X > x) ≤ α}`, which picks the (m+1)-th largest
//! sample where m is the largest integer with m/N ≤ α. CVaR integrates the
//! empirical step function V_u = y_{⌊Nu⌋+1} over u ∈ (0, α] exactly,
//! including the fractional atom at y_{m+1}.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptable level of risk α ∈ (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::config("alpha", format!("must lie in (0, 1), got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// Largest m ≤ n with m/n ≤ α, evaluated exactly as the ratio the
    /// counting checks use.
    pub fn tail_count(self, n: usize) -> usize {
        let nf = n as f64;
        let mut m = ((self.0 * nf).floor() as usize).min(n);
        while m < n && ((m + 1) as f64) / nf <= self.0 {
            m += 1;
        }
        while m > 0 && (m as f64) / nf > self.0 {
            m -= 1;
        }
        m
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<RiskLevel> for f64 {
    fn from(level: RiskLevel) -> f64 {
        level.0
    }
}

fn descending(a: &f64, b: &f64) -> Ordering {
    b.total_cmp(a)
}

/// Finite samples sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted_desc: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("empirical distribution needs a sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("sample {i} is not finite")));
        }
        samples.sort_unstable_by(descending);
        Ok(Self {
            sorted_desc: samples,
        })
    }

    /// Wraps an already sorted (non-increasing) list.
    pub fn from_sorted_desc(sorted_desc: Vec<f64>) -> Result<Self> {
        if sorted_desc.is_empty() {
            return Err(Error::EmptyInput("empirical distribution needs a sample"));
        }
        if sorted_desc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite sample".into()));
        }
        if sorted_desc.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Numeric("samples are not sorted non-increasing".into()));
        }
        Ok(Self { sorted_desc })
    }

    pub fn len(&self) -> usize {
        self.sorted_desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_desc.is_empty()
    }

    pub fn sorted_desc(&self) -> &[f64] {
        &self.sorted_desc
    }

    /// Samplewise image under `f`, re-sorted.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.sorted_desc.iter().map(|&y| f(y)).collect())
    }

    /// P̂(X > x).
    pub fn exceedance(&self, x: f64) -> f64 {
        self.sorted_desc.partition_point(|&y| y > x) as f64 / self.len() as f64
    }

    /// P̂(X ≥ x).
    pub fn at_least(&self, x: f64) -> f64 {
        self.sorted_desc.partition_point(|&y| y >= x) as f64 / self.len() as f64
    }
}

/// α-level value-at-risk `inf{x : P̂(X > x) ≤ α}`.
pub fn var(dist: &EmpiricalDistribution, level: RiskLevel) -> f64 {
    dist.sorted_desc[level.tail_count(dist.len())]
}

/// Same value as [`var`] on the distribution of `values`, computed by
/// selection in O(N). Reorders `values`: afterwards every element before the
/// returned position is ≥ the result.
pub fn var_in_place(values: &mut [f64], level: RiskLevel) -> f64 {
    assert!(!values.is_empty(), "var of an empty sample");
    let m = level.tail_count(values.len());
    let (_, nth, _) = values.select_nth_unstable_by(m, descending);
    *nth
}

/// CVaR (1/α)∫₀^α V_u du on the empirical step function, written as
/// VaR plus the mean excess of the m larger samples, so it never falls below
/// VaR under rounding.
pub fn cvar(dist: &EmpiricalDistribution, level: RiskLevel) -> f64 {
    let y = &dist.sorted_desc;
    let m = level.tail_count(y.len());
    let v = y[m];
    let excess: f64 = y[..m].iter().map(|&yj| yj - v).sum();
    v + excess / (level.alpha() * y.len() as f64)
}

/// Mean of the samples strictly above `threshold`.
pub fn superquantile_above(dist: &EmpiricalDistribution, threshold: f64) -> Result<f64> {
    tail_mean(&dist.sorted_desc, threshold)
}

/// Mean of the entries of `values` strictly above `threshold`, in any order.
pub fn tail_mean(values: &[f64], threshold: f64) -> Result<f64> {
    let (sum, count) = values
        .iter()
        .filter(|&&y| y > threshold)
        .fold((0.0, 0usize), |(s, c), &y| (s + y, c + 1));
    if count == 0 {
        Err(Error::EmptyTail { threshold })
    } else {
        Ok(sum / count as f64)
    }
}

/// Buffered probability that the quantity exceeds 0:
/// `min_{a ≥ 0} (1/N) Σ max(a·yᵢ + 1, 0)`.
///
/// The objective is convex piecewise linear in `a`, so the minimum is taken
/// over `a = 0`, every breakpoint `a = −1/yᵢ` with `yᵢ < 0`, and the limit
/// `a → ∞` (finite only when no sample is positive, where it equals the
/// fraction of zero samples).
pub fn buffered_failure_probability(dist: &EmpiricalDistribution) -> f64 {
    let y = &dist.sorted_desc;
    let n = y.len() as f64;
    let mut best = 1.0_f64;

    if y[0] <= 0.0 {
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        best = best.min(zeros as f64 / n);
    }

    // Prefix sums over the strictly-greater block preceding each value.
    let mut prefix = 0.0;
    let mut i = 0;
    while i < y.len() {
        let value = y[i];
        let block_start = i;
        let block_sum = prefix;
        while i < y.len() && y[i] == value {
            prefix += y[i];
            i += 1;
        }
        if value < 0.0 {
            let a = -1.0 / value;
            // Terms with y > value contribute a·y + 1; the block itself is 0.
            let objective = (block_start as f64 + a * block_sum) / n;
            best = best.min(objective);
        }
    }
    best.clamp(0.0, 1.0)
}

/// Tail-mean scan for [`buffered_failure_probability`]: the largest level p
/// at which the integrated upper tail ∫₀^p V_u du is still non-negative,
/// interpolated linearly inside the crossing step. Agrees with the
/// minimization formula to within 1/N.
pub fn buffered_failure_probability_scan(dist: &EmpiricalDistribution) -> f64 {
    let y = &dist.sorted_desc;
    let n = y.len() as f64;
    if y[0] <= 0.0 {
        let zeros = y.iter().take_while(|&&v| v == 0.0).count();
        return zeros as f64 / n;
    }
    let mut sum = 0.0;
    for (k, &value) in y.iter().enumerate() {
        let next = sum + value;
        if next <= 0.0 {
            // sum > 0 ≥ next, so value < 0.
            let p = (k as f64 + sum / -value) / n;
            return p.clamp(0.0, 1.0);
        }
        sum = next;
    }
    1.0
}
