//! Excited random walk simulation.
//!
//! The walk starts at the origin; on its j-th visit to a site it consumes
//! that site's j-th cookie and steps right with the cookie's strength.
//! Coins are realized lazily per (site, visit index) from the keyed coin
//! source, which has the same joint law as tossing every stack up front and
//! makes trajectories reproducible bit for bit at any thread count.
//!
//! Visited sites of a nearest-neighbor walk form a contiguous interval
//! around the origin, so visit counts live in two dense arms rather than a
//! hash map; the configurable site cap bounds their total length.

use rayon::prelude::*;

use crate::env::CookieEnvironment;
use crate::error::{Error, Result};
use crate::rng::CoinSource;
use crate::stats::binomial_half_width_95;

/// Default bound on distinct visited sites.
pub const DEFAULT_SITE_CAP: usize = 10_000_000;

/// How the per-(site, visit) coin word turns into a step. `Mirrored` draws
/// the complement coin at the negated site, so running the reflected
/// environment in mirrored mode retraces the direct trajectory negated,
/// step for step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinMode {
    Direct,
    Mirrored,
}

/// Visit counts over the contiguous visited interval.
#[derive(Debug, Clone)]
pub struct VisitLedger {
    origin_and_right: Vec<u64>,
    left: Vec<u64>,
    site_cap: usize,
}

impl VisitLedger {
    fn new(site_cap: usize) -> Self {
        Self { origin_and_right: Vec::new(), left: Vec::new(), site_cap }
    }

    /// Visits recorded so far at `site`.
    pub fn count(&self, site: i64) -> u64 {
        if site >= 0 {
            self.origin_and_right.get(site as usize).copied().unwrap_or(0)
        } else {
            self.left.get((-site - 1) as usize).copied().unwrap_or(0)
        }
    }

    pub fn distinct_sites(&self) -> usize {
        self.origin_and_right.len() + self.left.len()
    }

    /// Record one more visit and return the new count.
    fn bump(&mut self, site: i64) -> Result<u64> {
        let total = self.distinct_sites();
        let arm = if site >= 0 { &mut self.origin_and_right } else { &mut self.left };
        let idx = if site >= 0 { site as usize } else { (-site - 1) as usize };
        if idx == arm.len() {
            if total >= self.site_cap {
                return Err(Error::Resource {
                    what: "distinct visited sites",
                    cap: self.site_cap as u64,
                });
            }
            arm.push(0);
        }
        arm[idx] += 1;
        Ok(arm[idx])
    }
}

/// Walker state: position, elapsed steps, and per-site visit counts.
#[derive(Debug, Clone)]
pub struct WalkState {
    pub position: i64,
    pub time: u64,
    pub visits: VisitLedger,
}

impl WalkState {
    pub fn new(site_cap: usize) -> Self {
        Self { position: 0, time: 0, visits: VisitLedger::new(site_cap) }
    }
}

/// One simulation step: consume the next cookie at the current site.
pub fn step(
    state: &mut WalkState,
    env: &CookieEnvironment,
    coins: &CoinSource,
    mode: CoinMode,
) -> Result<()> {
    let site = state.position;
    let visit = state.visits.bump(site)?;
    let p = env.strength_at(visit);
    let right = match mode {
        CoinMode::Direct => coins.coin(site, visit, p),
        CoinMode::Mirrored => coins.mirror_coin(-site, visit, p),
    };
    state.position += if right { 1 } else { -1 };
    state.time += 1;
    Ok(())
}

/// Per-trajectory summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkSummary {
    pub horizon: u64,
    pub returns_to_origin: u64,
    pub first_return_time: Option<u64>,
    pub max_position: i64,
    pub min_position: i64,
    pub final_position: i64,
}

/// Simulation controls; `site_cap` bounds the visit ledger.
#[derive(Debug, Clone, Copy)]
pub struct WalkConfig {
    pub site_cap: usize,
    pub mode: CoinMode,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { site_cap: DEFAULT_SITE_CAP, mode: CoinMode::Direct }
    }
}

/// Run one trajectory for `horizon` steps.
pub fn run(
    env: &CookieEnvironment,
    seed: u64,
    stream: u64,
    horizon: u64,
    config: &WalkConfig,
) -> Result<WalkSummary> {
    run_inner(env, seed, stream, horizon, config, None)
}

/// Run one trajectory, also collecting the position after every step
/// (`trace[t]` is the position at time t, starting from the origin).
pub fn run_with_trace(
    env: &CookieEnvironment,
    seed: u64,
    stream: u64,
    horizon: u64,
    config: &WalkConfig,
) -> Result<(WalkSummary, Vec<i64>)> {
    let mut trace = Vec::with_capacity(horizon as usize + 1);
    let summary = run_inner(env, seed, stream, horizon, config, Some(&mut trace))?;
    Ok((summary, trace))
}

fn run_inner(
    env: &CookieEnvironment,
    seed: u64,
    stream: u64,
    horizon: u64,
    config: &WalkConfig,
    mut trace: Option<&mut Vec<i64>>,
) -> Result<WalkSummary> {
    let coins = CoinSource::new(seed, stream);
    let mut state = WalkState::new(config.site_cap);
    let mut returns = 0u64;
    let mut first_return = None;
    let mut max_pos = 0i64;
    let mut min_pos = 0i64;
    if let Some(t) = trace.as_deref_mut() {
        t.push(0);
    }
    for _ in 0..horizon {
        step(&mut state, env, &coins, config.mode)?;
        if state.position == 0 {
            returns += 1;
            first_return.get_or_insert(state.time);
        }
        max_pos = max_pos.max(state.position);
        min_pos = min_pos.min(state.position);
        if let Some(t) = trace.as_deref_mut() {
            t.push(state.position);
        }
    }
    Ok(WalkSummary {
        horizon,
        returns_to_origin: returns,
        first_return_time: first_return,
        max_position: max_pos,
        min_position: min_pos,
        final_position: state.position,
    })
}

/// First return time to the origin, stopping the trajectory early; `None`
/// when the walk has not returned by the horizon. Also reports the first
/// step's direction, which selects the excursion the branching process
/// tracks.
fn first_return(
    env: &CookieEnvironment,
    seed: u64,
    stream: u64,
    horizon: u64,
    site_cap: usize,
) -> Result<(bool, Option<u64>)> {
    let coins = CoinSource::new(seed, stream);
    let mut state = WalkState::new(site_cap);
    step(&mut state, env, &coins, CoinMode::Direct)?;
    let started_right = state.position > 0;
    while state.time < horizon {
        if state.position == 0 {
            return Ok((started_right, Some(state.time)));
        }
        step(&mut state, env, &coins, CoinMode::Direct)?;
    }
    let returned = if state.position == 0 { Some(state.time) } else { None };
    Ok((started_right, returned))
}

/// Empirical return-probability curve: for each horizon in `horizons`,
/// the fraction of replications that returned to the origin by then, with
/// 95% binomial half-widths. Non-decreasing in the horizon by construction.
#[derive(Debug, Clone)]
pub struct ReturnCurve {
    pub reps: u64,
    pub points: Vec<ReturnCurvePoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReturnCurvePoint {
    pub horizon: u64,
    pub fraction: f64,
    pub half_width: f64,
}

pub fn return_probability_curve(
    env: &CookieEnvironment,
    seed: u64,
    horizons: &[u64],
    reps: u64,
) -> Result<ReturnCurve> {
    if reps < 1 {
        return Err(Error::Domain("return curve needs reps >= 1".into()));
    }
    let mut sorted = horizons.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let max_t = sorted.last().copied().unwrap_or(0);
    let first_returns: Result<Vec<Option<u64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| first_return(env, seed, rep, max_t, DEFAULT_SITE_CAP).map(|(_, r)| r))
        .collect();
    let first_returns = first_returns?;
    let points = sorted
        .iter()
        .map(|&t| {
            let hits = first_returns.iter().filter(|r| matches!(r, Some(h) if *h <= t)).count()
                as u64;
            ReturnCurvePoint {
                horizon: t,
                fraction: hits as f64 / reps as f64,
                half_width: binomial_half_width_95(hits, reps),
            }
        })
        .collect();
    Ok(ReturnCurve { reps, points })
}

/// Where replications ended up relative to the origin at the horizon.
#[derive(Debug, Clone, Copy)]
pub struct DirectionStats {
    pub reps: u64,
    pub right_fraction: f64,
    pub left_fraction: f64,
    pub zero_fraction: f64,
    pub right_half_width: f64,
    pub mean_final_position: f64,
}

pub fn direction_stats(
    env: &CookieEnvironment,
    seed: u64,
    horizon: u64,
    reps: u64,
) -> Result<DirectionStats> {
    if reps < 1 {
        return Err(Error::Domain("direction stats need reps >= 1".into()));
    }
    let finals: Result<Vec<i64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            run(env, seed, rep, horizon, &WalkConfig::default()).map(|s| s.final_position)
        })
        .collect();
    let finals = finals?;
    let right = finals.iter().filter(|&&x| x > 0).count() as u64;
    let left = finals.iter().filter(|&&x| x < 0).count() as u64;
    let zero = reps - right - left;
    let mean = finals.iter().map(|&x| x as f64).sum::<f64>() / reps as f64;
    Ok(DirectionStats {
        reps,
        right_fraction: right as f64 / reps as f64,
        left_fraction: left as f64 / reps as f64,
        zero_fraction: zero as f64 / reps as f64,
        right_half_width: binomial_half_width_95(right, reps),
        mean_final_position: mean,
    })
}

/// Excursion bookkeeping for walk/branching-process cross-validation: how
/// often the walk returns to the origin at all, and how often the excursion
/// opened by a first step right (or left) is still running at the horizon.
#[derive(Debug, Clone, Copy)]
pub struct ExcursionStats {
    pub reps: u64,
    pub returned: u64,
    pub right_starts: u64,
    pub right_no_return: u64,
    pub left_starts: u64,
    pub left_no_return: u64,
}

impl ExcursionStats {
    pub fn return_fraction(&self) -> f64 {
        self.returned as f64 / self.reps as f64
    }

    /// Fraction of first-step-right replications with no return by the
    /// horizon: the finite-horizon proxy for the right excursion surviving.
    pub fn right_escape_fraction(&self) -> f64 {
        if self.right_starts == 0 {
            return f64::NAN;
        }
        self.right_no_return as f64 / self.right_starts as f64
    }

    pub fn left_escape_fraction(&self) -> f64 {
        if self.left_starts == 0 {
            return f64::NAN;
        }
        self.left_no_return as f64 / self.left_starts as f64
    }
}

pub fn excursion_stats(
    env: &CookieEnvironment,
    seed: u64,
    horizon: u64,
    reps: u64,
) -> Result<ExcursionStats> {
    if reps < 1 {
        return Err(Error::Domain("excursion stats need reps >= 1".into()));
    }
    let outcomes: Result<Vec<(bool, Option<u64>)>> = (0..reps)
        .into_par_iter()
        .map(|rep| first_return(env, seed, rep, horizon, DEFAULT_SITE_CAP))
        .collect();
    let outcomes = outcomes?;
    let mut stats = ExcursionStats {
        reps,
        returned: 0,
        right_starts: 0,
        right_no_return: 0,
        left_starts: 0,
        left_no_return: 0,
    };
    for (started_right, returned) in outcomes {
        if returned.is_some() {
            stats.returned += 1;
        }
        if started_right {
            stats.right_starts += 1;
            if returned.is_none() {
                stats.right_no_return += 1;
            }
        } else {
            stats.left_starts += 1;
            if returned.is_none() {
                stats.left_no_return += 1;
            }
        }
    }
    Ok(stats)
}
