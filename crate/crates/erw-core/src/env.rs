//! Cookie environments.
//!
//! An environment assigns the same infinite stack of cookie strengths
//! `p_1, p_2, ...` to every lattice site: the walker's j-th visit to a site
//! steps right with probability `p_j`. All environments here are elliptic
//! (every strength strictly inside (0,1)) and have finite total drift
//! `delta = sum_j (2 p_j - 1)`, which is the quantity the classifier runs on.
//!
//! A strength of exactly 1/2 is a placebo: it induces no drift. Environments
//! with finitely many non-placebo cookies are padded with placebos.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Strength rule for user-defined environments. Implementations must be
/// deterministic in `j`, elliptic, and should declare a tail-bound rule:
/// `tail_bound(n)` returns a monotone non-increasing upper bound on
/// `sup_{k >= n} |sum_{j >= k} (2 p_j - 1)|`, or `None` if the rule cannot
/// provide one (which disables total-drift evaluation and classification).
pub trait StrengthRule: Send + Sync {
    fn strength(&self, j: u64) -> f64;
    fn tail_bound(&self, _n: u64) -> Option<f64> {
        None
    }
    fn name(&self) -> &str;
}

#[derive(Clone)]
enum EnvKind {
    /// Explicit head strengths, placebo-padded beyond the list.
    Finite(Vec<f64>),
    /// The built-in critical stack: strength 5/6 for j in {1,2,3}, a weak
    /// negative cookie 1/2 - (1/2)^(m+1) at every j = 4^(4^m), placebo
    /// otherwise. Total drift is exactly 1 while every finite prefix beyond
    /// the head carries drift above 1.
    TransientExample,
    /// Head strengths followed by drift weights 2 p_j - 1 = scale * ratio^i
    /// (i counted from 1 past the head).
    GeometricTail { head: Vec<f64>, scale: f64, ratio: f64 },
    /// A registered rule; capabilities limited to what the rule declares.
    Custom(Arc<dyn StrengthRule>),
}

/// An elliptic cookie environment with finite total drift. Immutable and
/// cheap to clone; all queries are pure functions of `(environment, j)`.
#[derive(Clone)]
pub struct CookieEnvironment {
    kind: EnvKind,
    reflected: bool,
}

/// Total drift together with the tail bound achieved when it was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub value: f64,
    pub error: f64,
}

/// Averaged strength statistics over the first `n` cookies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStats {
    pub n: u64,
    /// Mean strength over the first n cookies.
    pub mean_strength: f64,
    /// Mean of p_j (1 - p_j); tends to 1/4 for finite-drift stacks.
    pub variance_avg: f64,
    /// |variance_avg - 1/4|, the gap that controls variance convergence.
    pub bessel_gap: f64,
}

/// One row of a drift profile table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftPoint {
    pub n: u64,
    pub strength: f64,
    pub delta_prefix: f64,
    pub tail_bound: f64,
}

/// Prefix drifts and tail bounds sampled on a grid, plus the total.
#[derive(Debug, Clone)]
pub struct DriftProfile {
    pub points: Vec<DriftPoint>,
    pub total: DriftEstimate,
}

/// Largest index the negative-cookie counter will scan for custom rules.
const CUSTOM_SCAN_CAP: u64 = 100_000_000;

/// Iteration cap for tail-driven total-drift refinement.
const TOTAL_DRIFT_INDEX_CAP: u64 = 1 << 26;

impl CookieEnvironment {
    /// The all-placebo environment: a simple symmetric random walk.
    pub fn placebo() -> Self {
        Self { kind: EnvKind::Finite(Vec::new()), reflected: false }
    }

    /// Environment with an explicit list of head strengths, placebo beyond.
    pub fn finite(strengths: Vec<f64>) -> Result<Self> {
        for (i, &p) in strengths.iter().enumerate() {
            ensure_elliptic(p, i as u64 + 1)?;
        }
        Ok(Self { kind: EnvKind::Finite(strengths), reflected: false })
    }

    /// The built-in environment with total drift exactly 1 whose walk is
    /// nonetheless transient to the right.
    pub fn transient_example() -> Self {
        Self { kind: EnvKind::TransientExample, reflected: false }
    }

    /// Head strengths followed by a geometric drift tail
    /// `2 p_j - 1 = scale * ratio^(j - head_len)`.
    pub fn geometric_tail(head: Vec<f64>, scale: f64, ratio: f64) -> Result<Self> {
        for (i, &p) in head.iter().enumerate() {
            ensure_elliptic(p, i as u64 + 1)?;
        }
        if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
            return Err(Error::Domain(format!("tail ratio {ratio} outside (0,1)")));
        }
        if !scale.is_finite() || scale.abs() * ratio >= 1.0 {
            return Err(Error::Domain(format!(
                "tail weight scale {scale} makes the first tail cookie leave (0,1)"
            )));
        }
        Ok(Self { kind: EnvKind::GeometricTail { head, scale, ratio }, reflected: false })
    }

    /// Environment backed by a custom strength rule.
    pub fn custom(rule: Arc<dyn StrengthRule>) -> Self {
        Self { kind: EnvKind::Custom(rule), reflected: false }
    }

    /// Strength of the j-th cookie, `j >= 1`.
    pub fn strength(&self, j: u64) -> Result<f64> {
        if j == 0 {
            return Err(Error::Domain("cookie index must be >= 1".into()));
        }
        Ok(self.strength_at(j))
    }

    /// Strength lookup for hot loops; `j` must already be >= 1.
    #[inline]
    pub(crate) fn strength_at(&self, j: u64) -> f64 {
        debug_assert!(j >= 1);
        let p = match &self.kind {
            EnvKind::Finite(head) => head.get((j - 1) as usize).copied().unwrap_or(0.5),
            EnvKind::TransientExample => match j {
                1..=3 => 5.0 / 6.0,
                _ => match transient_negative_order(j) {
                    Some(m) => 0.5 - 0.5f64.powi(m as i32 + 1),
                    None => 0.5,
                },
            },
            EnvKind::GeometricTail { head, scale, ratio } => {
                match head.get((j - 1) as usize) {
                    Some(&p) => p,
                    None => {
                        let i = j - head.len() as u64;
                        0.5 + 0.5 * scale * ratio.powf(i as f64)
                    }
                }
            }
            EnvKind::Custom(rule) => rule.strength(j),
        };
        if self.reflected {
            1.0 - p
        } else {
            p
        }
    }

    /// Drift weight `2 p_j - 1` of the j-th cookie.
    #[inline]
    pub(crate) fn drift_weight_at(&self, j: u64) -> f64 {
        2.0 * self.strength_at(j) - 1.0
    }

    /// Prefix drift `delta_m = sum_{j<=m} (2 p_j - 1)`, compensated.
    pub fn drift_prefix(&self, m: u64) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for j in 1..=m {
            acc.add(self.drift_weight_at(j));
        }
        Ok(acc.value())
    }

    /// Monotone non-increasing upper bound on
    /// `sup_{k >= n} |sum_{j >= k} (2 p_j - 1)|`. Exact geometric remainder
    /// for the built-in families; zero beyond a finite list.
    pub fn tail_bound(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("tail index must be >= 1".into()));
        }
        match &self.kind {
            EnvKind::Finite(head) => Ok(finite_tail_envelope(head, n)),
            EnvKind::TransientExample => Ok(if n <= 256 {
                1.0
            } else if n <= 4_294_967_296 {
                0.5
            } else {
                0.25
            }),
            EnvKind::GeometricTail { head, scale, ratio } => {
                Ok(geometric_tail_envelope(head, *scale, *ratio, n))
            }
            EnvKind::Custom(rule) => rule.tail_bound(n).ok_or_else(|| {
                Error::Unsupported(format!(
                    "strength rule `{}` declares no tail bound",
                    rule.name()
                ))
            }),
        }
    }

    /// Total drift `delta`, evaluated to tolerance `tol`: returns the prefix
    /// at an index whose tail bound is below `tol`, with that bound as the
    /// reported error. Environments with closed-form totals report error 0.
    pub fn total_drift(&self, tol: f64) -> Result<DriftEstimate> {
        if !tol.is_finite() || tol <= 0.0 {
            return Err(Error::Domain(format!("tolerance {tol} must be positive")));
        }
        let sign = if self.reflected { -1.0 } else { 1.0 };
        match &self.kind {
            EnvKind::Finite(head) => {
                let mut acc = CompensatedSum::new();
                for &p in head {
                    acc.add(2.0 * p - 1.0);
                }
                Ok(DriftEstimate { value: sign * acc.value(), error: 0.0 })
            }
            // 2 + sum_m -(1/2)^m telescopes to exactly 1.
            EnvKind::TransientExample => Ok(DriftEstimate { value: sign, error: 0.0 }),
            EnvKind::GeometricTail { .. } | EnvKind::Custom(_) => {
                let mut n = 1u64;
                let mut best = self.tail_bound(n + 1)?;
                while best > tol && n < TOTAL_DRIFT_INDEX_CAP {
                    n = (n * 2).min(TOTAL_DRIFT_INDEX_CAP);
                    best = best.min(self.tail_bound(n + 1)?);
                }
                if best > tol {
                    return Err(Error::Convergence {
                        what: "total drift tail bound",
                        best,
                        requested: tol,
                    });
                }
                // Shrink n back down: the bound is monotone in n.
                let mut lo = n / 2;
                let mut hi = n;
                while lo + 1 < hi {
                    let mid = lo + (hi - lo) / 2;
                    if self.tail_bound(mid + 1)? <= tol {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let achieved = self.tail_bound(hi + 1)?;
                Ok(DriftEstimate { value: self.drift_prefix(hi)?, error: achieved })
            }
        }
    }

    /// Averaged strength statistics over the first `n` cookies. The gap
    /// `|variance_avg - 1/4|` is evaluated through two algebraically equal
    /// routes and cross-checked; disagreement means the strength rule is
    /// not behaving like a function of `j`.
    pub fn stats(&self, n: u64) -> Result<EnvStats> {
        if n == 0 {
            return Err(Error::Domain("stats need n >= 1".into()));
        }
        let mut strength_sum = CompensatedSum::new();
        let mut var_sum = CompensatedSum::new();
        for j in 1..=n {
            let p = self.strength_at(j);
            strength_sum.add(p);
            var_sum.add(p * (1.0 - p));
        }
        // Second pass with fresh strength evaluations: the squared-weight
        // route must agree with |A_n - 1/4| only if the rule really is a
        // function of j.
        let mut sq_weight_sum = CompensatedSum::new();
        for j in 1..=n {
            let w = 2.0 * self.strength_at(j) - 1.0;
            sq_weight_sum.add(w * w);
        }
        let nf = n as f64;
        let mean_strength = strength_sum.value() / nf;
        let variance_avg = var_sum.value() / nf;
        let gap_direct = (variance_avg - 0.25).abs();
        let gap_square = sq_weight_sum.value() / (4.0 * nf);
        let tol = 1e-12 * gap_square.max(1.0) + 5e-16;
        if (gap_direct - gap_square).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "variance gap mismatch at n = {n}: |A_n - 1/4| = {gap_direct:e} \
                 vs squared-weight form {gap_square:e}"
            )));
        }
        Ok(EnvStats { n, mean_strength, variance_avg, bessel_gap: gap_square })
    }

    /// Number of negative-drift cookies among the first `x`.
    pub fn negative_cookie_count(&self, x: u64) -> Result<u64> {
        let below_half = !self.reflected;
        Ok(match &self.kind {
            EnvKind::Finite(head) => head
                .iter()
                .take(x as usize)
                .filter(|&&p| if below_half { p < 0.5 } else { p > 0.5 })
                .count() as u64,
            EnvKind::TransientExample => {
                if below_half {
                    // Negative cookies sit at j = 4^(4^m).
                    let mut count = 0;
                    let mut m = 1u32;
                    while let Some(idx) = 4u128.checked_pow(4u32.pow(m)) {
                        if idx <= x as u128 {
                            count += 1;
                            m += 1;
                        } else {
                            break;
                        }
                    }
                    count
                } else {
                    // Reflected: only the three strong head cookies flip sign.
                    x.min(3)
                }
            }
            EnvKind::GeometricTail { head, scale, .. } => {
                let head_neg = head
                    .iter()
                    .take(x as usize)
                    .filter(|&&p| if below_half { p < 0.5 } else { p > 0.5 })
                    .count() as u64;
                let tail_is_negative = if below_half { *scale < 0.0 } else { *scale > 0.0 };
                let tail_count = if tail_is_negative {
                    x.saturating_sub(head.len() as u64)
                } else {
                    0
                };
                head_neg + tail_count
            }
            EnvKind::Custom(rule) => {
                if x > CUSTOM_SCAN_CAP {
                    return Err(Error::Resource {
                        what: "negative-cookie scan over a custom rule",
                        cap: CUSTOM_SCAN_CAP,
                    });
                }
                let mut count = 0;
                for j in 1..=x {
                    let p = rule.strength(j);
                    let neg = if below_half { p < 0.5 } else { p > 0.5 };
                    if neg {
                        count += 1;
                    }
                }
                count
            }
        })
    }

    /// Environment with every strength replaced by `1 - p_j`. An involution;
    /// negates every prefix drift.
    pub fn reflect(&self) -> Self {
        Self { kind: self.kind.clone(), reflected: !self.reflected }
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    /// Drift profile sampled at the given indices (sorted, deduplicated).
    pub fn drift_profile(&self, indices: &[u64], tol: f64) -> Result<DriftProfile> {
        let mut sorted: Vec<u64> = indices.iter().copied().filter(|&n| n >= 1).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut points = Vec::with_capacity(sorted.len());
        let mut acc = CompensatedSum::new();
        let mut next = 1u64;
        for &n in &sorted {
            while next <= n {
                acc.add(self.drift_weight_at(next));
                next += 1;
            }
            points.push(DriftPoint {
                n,
                strength: self.strength_at(n),
                delta_prefix: acc.value(),
                tail_bound: self.tail_bound(n)?,
            });
        }
        Ok(DriftProfile { points, total: self.total_drift(tol)? })
    }

    /// Short human-readable label used in tables and manifests.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            EnvKind::Finite(head) if head.is_empty() => "placebo".to_string(),
            EnvKind::Finite(head) => {
                let parts: Vec<String> = head.iter().map(|p| format!("{p}")).collect();
                format!("finite[{}]", parts.join(","))
            }
            EnvKind::TransientExample => "transient-example".to_string(),
            EnvKind::GeometricTail { head, scale, ratio } => {
                format!("geometric-tail[head={},scale={scale},ratio={ratio}]", head.len())
            }
            EnvKind::Custom(rule) => format!("custom[{}]", rule.name()),
        };
        if self.reflected {
            format!("{base} reflected")
        } else {
            base
        }
    }
}

impl fmt::Debug for CookieEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CookieEnvironment({})", self.label())
    }
}

fn ensure_elliptic(p: f64, j: u64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "strength {p} at index {j} violates ellipticity (must lie strictly in (0,1))"
        )))
    }
}

/// Is `j = 4^(4^m)` for some m >= 1? Returns `m`. The comparison is done on
/// exponents so the rule stays total for every u64 index even though the
/// cookie positions overflow machine integers past m = 2.
fn transient_negative_order(j: u64) -> Option<u32> {
    if j < 4 || !j.is_power_of_two() {
        return None;
    }
    let tz = j.trailing_zeros();
    if tz % 2 != 0 {
        return None; // power of two but not of four
    }
    let e = tz / 2; // j = 4^e
    if e < 4 || !e.is_power_of_two() {
        return None;
    }
    let etz = e.trailing_zeros();
    if etz % 2 != 0 {
        return None; // e must itself be a power of four
    }
    Some(etz / 2)
}

/// sup_{k >= n} |suffix drift| for a finite head (zero past the list).
fn finite_tail_envelope(head: &[f64], n: u64) -> f64 {
    let len = head.len() as u64;
    if n > len {
        return 0.0;
    }
    let mut acc = CompensatedSum::new();
    let mut best: f64 = 0.0;
    for j in (n..=len).rev() {
        acc.add(2.0 * head[(j - 1) as usize] - 1.0);
        best = best.max(acc.value().abs());
    }
    best
}

/// sup_{k >= n} |suffix drift| for head + geometric tail; the tail remainder
/// past index k has magnitude |scale| ratio^(k-L) / (1-ratio), all one sign.
fn geometric_tail_envelope(head: &[f64], scale: f64, ratio: f64, n: u64) -> f64 {
    let len = head.len() as u64;
    let full_tail = scale * ratio / (1.0 - ratio);
    if n > len {
        let i = (n - len) as f64;
        return scale.abs() * ratio.powf(i) / (1.0 - ratio);
    }
    let mut acc = CompensatedSum::new();
    acc.add(full_tail);
    let mut best = full_tail.abs();
    for j in (n..=len).rev() {
        acc.add(2.0 * head[(j - 1) as usize] - 1.0);
        best = best.max(acc.value().abs());
    }
    best
}

/// Built-in custom rules addressable by name from environment files.
pub fn lookup_rule(name: &str) -> Option<Arc<dyn StrengthRule>> {
    match name {
        "inverse-square" => Some(Arc::new(InverseSquareRule { declare_tail: true })),
        "inverse-square-no-tail" => Some(Arc::new(InverseSquareRule { declare_tail: false })),
        _ => None,
    }
}

/// Names accepted by [`lookup_rule`].
pub fn builtin_rule_names() -> &'static [&'static str] {
    &["inverse-square", "inverse-square-no-tail"]
}

/// Drift weights 1/(2 j^2): total drift pi^2/12. The `-no-tail` variant
/// demonstrates how the library refuses tail-dependent queries when a rule
/// declares no bound.
struct InverseSquareRule {
    declare_tail: bool,
}

impl StrengthRule for InverseSquareRule {
    fn strength(&self, j: u64) -> f64 {
        let jf = j as f64;
        0.5 + 1.0 / (4.0 * jf * jf)
    }

    fn tail_bound(&self, n: u64) -> Option<f64> {
        if !self.declare_tail {
            return None;
        }
        // sum_{j>=n} 1/(2 j^2) < 1/(2(n-1)); all weights positive.
        Some(if n <= 1 {
            std::f64::consts::PI.powi(2) / 12.0
        } else {
            1.0 / (2.0 * (n - 1) as f64)
        })
    }

    fn name(&self) -> &str {
        if self.declare_tail {
            "inverse-square"
        } else {
            "inverse-square-no-tail"
        }
    }
}
