//! Recurrence/transience classification.
//!
//! The verdict is driven by the total drift per site: above 1 the walk
//! escapes right, below -1 it escapes left, strictly inside (-1, 1) it is
//! recurrent, and on the boundary |delta| = 1 recurrence additionally needs
//! the drift tail to vanish faster than 1/log n. The boundary check is a
//! closed-form grid test on the environment's tail bound, never a Monte
//! Carlo estimate: a stochastic test cannot verify an o(1/log n) statement.
//!
//! Alongside the verdict, survival/extinction certificates evaluate the
//! drift/variance ratio theta(n) of the branching-like process against the
//! thresholds 1 + 2/log n and 1 + 1/log n over a grid. Positive survival
//! margins are numerical evidence for escape (and extinction margins for
//! dying out); they are not proofs.

use rayon::prelude::*;

use crate::blp::params_exact;
use crate::env::{CookieEnvironment, DriftEstimate};
use crate::error::{Error, Result};

/// Printed next to certificate tables wherever they are reported.
pub const CERTIFICATE_DISCLAIMER: &str =
    "certificate margins are numerical evidence, not a proof";

/// Largest drift error bound accepted when asserting |delta| = 1: a loose
/// drift estimate must not produce a critical-case verdict.
const CRITICAL_DRIFT_ERROR_CAP: f64 = 1e-6;

/// Tail-condition grid: powers of ten up to this exponent.
const TAIL_GRID_MAX_EXP: u32 = 9;

/// Threshold the scaled tail bound must fall below by n = 10^9.
const TAIL_DECAY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    TransientRight,
    TransientLeft,
    Recurrent,
    /// |delta| = 1 with a verifiably vanishing tail: still recurrent.
    CriticalRecurrent,
    /// The drift estimate or the boundary tail test cannot separate the
    /// cases; certificates may still provide one-sided evidence.
    Undetermined,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::TransientRight => "transient-right",
            Verdict::TransientLeft => "transient-left",
            Verdict::Recurrent => "recurrent",
            Verdict::CriticalRecurrent => "critical-recurrent",
            Verdict::Undetermined => "undetermined",
        };
        f.write_str(s)
    }
}

/// Outcome of the boundary tail test `tail_bound(n) * log n -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailCondition {
    Holds,
    Fails,
    Unknown,
}

impl std::fmt::Display for TailCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TailCondition::Holds => "holds",
            TailCondition::Fails => "fails",
            TailCondition::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Verdict plus the numeric evidence that produced it.
#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub verdict: Verdict,
    pub delta: DriftEstimate,
    pub tail_condition: TailCondition,
    /// Certificate rows, when a certificate run was attached.
    pub evidence: Vec<CertificateRow>,
}

/// One certificate grid point: theta(n) against its threshold.
#[derive(Debug, Clone, Copy)]
pub struct CertificateRow {
    pub n: u64,
    pub theta: f64,
    pub threshold: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Evidence that the branching-like process survives: theta(n) clears
    /// 1 + 2/log n, so the walk escapes.
    Survival,
    /// Evidence that it dies out: theta(n) stays below 1 + 1/log n.
    Extinction,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub rows: Vec<CertificateRow>,
    pub all_margins_positive: bool,
}

/// Classify the environment from its total drift (evaluated to `tol`) and,
/// on the |delta| = 1 boundary, the tail-decay grid test.
pub fn classify(env: &CookieEnvironment, tol: f64) -> Result<ClassificationResult> {
    let delta = env.total_drift(tol)?;
    let tail_condition = tail_condition(env)?;
    let v = delta.value;
    let e = delta.error;
    let verdict = if v - e > 1.0 {
        Verdict::TransientRight
    } else if v + e < -1.0 {
        Verdict::TransientLeft
    } else if v.abs() + e <= 1.0 {
        // The whole drift interval sits inside [-1, 1]. If it reaches the
        // boundary, recurrence additionally needs the tail condition, and
        // asserting the critical case needs a tight drift estimate.
        if (v.abs() - 1.0).abs() <= e {
            if e <= CRITICAL_DRIFT_ERROR_CAP && tail_condition == TailCondition::Holds {
                Verdict::CriticalRecurrent
            } else {
                Verdict::Undetermined
            }
        } else {
            Verdict::Recurrent
        }
    } else {
        // The interval straddles a boundary: the cases cannot be separated.
        Verdict::Undetermined
    };
    Ok(ClassificationResult { verdict, delta, tail_condition, evidence: Vec::new() })
}

/// Closed-form grid test of `tail_bound(n) * log n -> 0` on n = 10^1..10^9:
/// holds when the scaled bound is non-increasing over the upper half of the
/// grid and ends below 10^-3; fails when it is non-decreasing there and ends
/// at or above 1; otherwise unknown.
pub fn tail_condition(env: &CookieEnvironment) -> Result<TailCondition> {
    let mut scaled = Vec::with_capacity(TAIL_GRID_MAX_EXP as usize);
    for k in 1..=TAIL_GRID_MAX_EXP {
        let n = 10u64.pow(k);
        let s = env.tail_bound(n)? * (n as f64).ln();
        scaled.push(s);
    }
    let half = scaled.len() / 2;
    let upper = &scaled[half..];
    let last = *scaled.last().expect("grid non-empty");
    let non_increasing = upper.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    let non_decreasing = upper.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    if non_increasing && last < TAIL_DECAY_THRESHOLD {
        Ok(TailCondition::Holds)
    } else if non_decreasing && last >= 1.0 {
        Ok(TailCondition::Fails)
    } else {
        Ok(TailCondition::Unknown)
    }
}

fn certificate_rows(
    env: &CookieEnvironment,
    n_grid: &[u64],
    eps: f64,
    threshold: impl Fn(f64) -> f64 + Sync,
    margin: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<Vec<CertificateRow>> {
    if n_grid.is_empty() {
        return Err(Error::Domain("certificate grid is empty".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] < 3 {
        return Err(Error::Domain(
            "certificate grid must be strictly increasing with every n >= 3".into(),
        ));
    }
    n_grid
        .par_iter()
        .map(|&n| {
            let params = params_exact(env, n, eps)?;
            let thr = threshold((n as f64).ln());
            Ok(CertificateRow { n, theta: params.theta, threshold: thr, margin: margin(params.theta, thr) })
        })
        .collect()
}

/// Survival certificate: margins theta(n) - (1 + 2/log n) over the grid.
/// All-positive margins are evidence the process survives with positive
/// probability, i.e. the walk escapes.
pub fn certify_survival(
    env: &CookieEnvironment,
    n_grid: &[u64],
    eps: f64,
) -> Result<CertificateReport> {
    let rows = certificate_rows(env, n_grid, eps, |ln_n| 1.0 + 2.0 / ln_n, |theta, thr| theta - thr)?;
    let all = rows.iter().all(|r| r.margin > 0.0);
    Ok(CertificateReport { kind: CertificateKind::Survival, rows, all_margins_positive: all })
}

/// Extinction certificate: margins (1 + 1/log n) - theta(n) over the grid.
/// All-positive margins are evidence the process dies out almost surely.
pub fn certify_extinction(
    env: &CookieEnvironment,
    n_grid: &[u64],
    eps: f64,
) -> Result<CertificateReport> {
    let rows = certificate_rows(env, n_grid, eps, |ln_n| 1.0 + 1.0 / ln_n, |theta, thr| thr - theta)?;
    let all = rows.iter().all(|r| r.margin > 0.0);
    Ok(CertificateReport { kind: CertificateKind::Extinction, rows, all_margins_positive: all })
}
