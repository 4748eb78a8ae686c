//! The forward branching-like process.
//!
//! Conditioned on the current generation having size `n`, the next
//! generation size is the number of successes in the cookie-strength coin
//! sequence `Ber(p_1), Ber(p_2), ...` before the n-th failure. This module
//! computes that one-step law exactly (a dynamic program over failure
//! counts), samples it, and derives the drift parameters that classification
//! runs on:
//!
//! * `rho(n)`  — expected displacement `E_n[Z_1] - n`
//! * `mu(n)`   — `E_n[Z_1] / n = 1 + rho(n)/n`
//! * `nu(n)`   — `Var_n(Z_1) / n`
//! * `theta(n)` — `2 rho(n) / nu(n)`
//!
//! The trial index of the n-th failure satisfies `T_n = Z_1 + n`, so the
//! absorption-time law and the displacement law are the same object.

use rayon::prelude::*;

use crate::env::CookieEnvironment;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rng::CoinSource;

/// Default truncation for the exact transition law.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-12;

/// Trial cap for the dynamic program and the sampler: residual mass decays
/// geometrically past 2n, so 64n + 10^4 trials is far beyond exhaustion.
pub fn trial_cap(n: u64) -> u64 {
    64 * n + 10_000
}

/// Per-generation size cap for branching-process runs.
pub const DEFAULT_GENERATION_CAP: u64 = 100_000_000;

/// Exact one-step law of the branching-like process from generation size
/// `n`: `masses[m] = P(Z_1 = m)`, truncated once the unabsorbed probability
/// drops below the requested epsilon.
#[derive(Debug, Clone)]
pub struct TransitionDistribution {
    n: u64,
    masses: Vec<f64>,
    tail_mass: f64,
    /// Smallest displacement the truncated-away runs could still produce.
    tail_edge: u64,
    requested_eps: f64,
}

impl TransitionDistribution {
    pub fn n(&self) -> u64 {
        self.n
    }

    /// P(Z_1 = m) for the stored support; zero elsewhere.
    pub fn mass(&self, m: u64) -> f64 {
        self.masses.get(m as usize).copied().unwrap_or(0.0)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Probability not accounted for by the stored support.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn requested_eps(&self) -> f64 {
        self.requested_eps
    }

    /// Largest displacement with stored mass.
    pub fn support_max(&self) -> u64 {
        self.masses.len().saturating_sub(1) as u64
    }

    /// |1 - sum(masses) - tail_mass|: should sit at rounding scale.
    pub fn normalization_residual(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for &m in &self.masses {
            acc.add(m);
        }
        acc.add(self.tail_mass);
        (1.0 - acc.value()).abs()
    }

    /// Mean displacement; truncated mass is assigned to the support edge.
    pub fn mean(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for (m, &mass) in self.masses.iter().enumerate() {
            acc.add(m as f64 * mass);
        }
        acc.add(self.tail_edge as f64 * self.tail_mass);
        acc.value()
    }

    /// Variance around the exact mean (two-pass form), tail at the edge.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let mut acc = CompensatedSum::new();
        for (m, &mass) in self.masses.iter().enumerate() {
            let d = m as f64 - mean;
            acc.add(d * d * mass);
        }
        let d = self.tail_edge as f64 - mean;
        acc.add(d * d * self.tail_mass);
        acc.value()
    }

    /// P(|Z_1 / n - 1| > eps), counting the truncated tail as exceeding.
    /// Evaluated as |m - n| > eps n so the equivalent absorption-time event
    /// |T_n/n - 2| > eps (with T_n = Z_1 + n) gives the identical answer.
    pub fn concentration_tail(&self, eps: f64) -> f64 {
        let threshold = eps * self.n as f64;
        let nf = self.n as f64;
        let mut acc = CompensatedSum::new();
        for (m, &mass) in self.masses.iter().enumerate() {
            if (m as f64 - nf).abs() > threshold {
                acc.add(mass);
            }
        }
        if (self.tail_edge as f64 - nf).abs() > threshold {
            acc.add(self.tail_mass);
        }
        acc.value()
    }
}

/// Exact law of "successes before the n-th failure" over the environment's
/// cookie strengths.
///
/// States are failure counts f < n with a probability window maintained over
/// the live range; trial k sends mass `w(f) p_k` to f and `w(f) (1 - p_k)`
/// to f + 1, and the mass reaching f = n at trial k is absorbed at
/// displacement `m = k - n`. Iterates until the unabsorbed mass (plus any
/// mass trimmed at the window edges) is at most `eps`.
pub fn exact_transition(
    env: &CookieEnvironment,
    n: u64,
    eps: f64,
) -> Result<TransitionDistribution> {
    if n < 1 {
        return Err(Error::Domain("generation size must be >= 1".into()));
    }
    if !eps.is_finite() || eps <= 0.0 || eps >= 1.0 {
        return Err(Error::Domain(format!("truncation eps {eps} outside (0,1)")));
    }
    let cap = trial_cap(n);
    // Mass below this is trimmed at the window edges and charged to the
    // tail; the budget stays orders of magnitude under eps.
    let trim_cut = eps * 2f64.powi(-40);

    let top_state = (n - 1) as usize;
    // w[i] holds the probability of failure count `front + i`.
    let mut w: Vec<f64> = Vec::with_capacity(4096);
    w.push(1.0);
    let mut front = 0usize;
    let mut hi = 0usize;

    let expected_support = (2 * n + 40 * (n as f64).sqrt() as u64 + 64) as usize;
    let mut masses: Vec<f64> = Vec::with_capacity(expected_support.min(1 << 22));
    let mut absorbed = CompensatedSum::new();
    let mut trimmed = 0.0;
    let mut unabsorbed = 1.0;
    let mut k = 0u64;

    while unabsorbed + trimmed > eps && k < cap {
        k += 1;
        let p = env.strength_at(k);
        let q = 1.0 - p;

        if hi == top_state {
            // The n-th failure lands on trial k: displacement k - n.
            let a = w[hi - front] * q;
            if a > 0.0 {
                let m = (k - n) as usize;
                if masses.len() <= m {
                    masses.resize(m + 1, 0.0);
                }
                masses[m] += a;
                absorbed.add(a);
            }
        } else {
            w.push(0.0);
            hi += 1;
        }

        // In-place descending update: new w(f) = w(f) p + w(f-1) q.
        for idx in (1..w.len()).rev() {
            w[idx] = w[idx] * p + w[idx - 1] * q;
        }
        w[0] *= p;

        // Trim negligible edges; trimmed mass is charged to the tail.
        while w.len() > 1 && w[w.len() - 1] < trim_cut {
            trimmed += w.pop().unwrap();
            hi -= 1;
        }
        let mut drop_front = 0;
        while w.len() - drop_front > 1 && w[drop_front] < trim_cut {
            trimmed += w[drop_front];
            drop_front += 1;
        }
        if drop_front > 0 {
            w.drain(..drop_front);
            front += drop_front;
        }

        let mut live = CompensatedSum::new();
        for &x in &w {
            live.add(x);
        }
        unabsorbed = live.value().max(0.0);
    }

    let tail = unabsorbed + trimmed;
    if tail > eps {
        return Err(Error::Convergence {
            what: "transition-law truncation",
            best: tail,
            requested: eps,
        });
    }

    Ok(TransitionDistribution {
        n,
        masses,
        tail_mass: tail,
        tail_edge: k + 1 - n,
        requested_eps: eps,
    })
}

/// Drift parameters of the one-step law at generation size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlpParams {
    pub n: u64,
    pub mu: f64,
    pub rho: f64,
    pub nu: f64,
    pub theta: f64,
    /// Probability mass left unaccounted by the truncated law.
    pub truncation_eps: f64,
}

/// Mean/variance parameters from the exact transition law.
pub fn params_exact(env: &CookieEnvironment, n: u64, eps: f64) -> Result<BlpParams> {
    let dist = exact_transition(env, n, eps)?;
    params_from_distribution(&dist)
}

/// Parameters from an already-computed law (lets callers reuse the DP).
pub fn params_from_distribution(dist: &TransitionDistribution) -> Result<BlpParams> {
    let n = dist.n();
    let nf = n as f64;
    let mean = dist.mean();
    let variance = dist.variance();
    let rho = mean - nf;
    let mu = 1.0 + rho / nf;
    let nu = variance / nf;
    if nu < 1e-9 {
        return Err(Error::DegenerateVariance { nu });
    }
    let theta = 2.0 * rho / nu;
    Ok(BlpParams { n, mu, rho, nu, theta, truncation_eps: dist.tail_mass() })
}

/// Expected prefix drift at the absorption time: `E[delta_{T_n}]`, computed
/// from the absorption-time law `T_n = Z_1 + n`. Agrees with `rho(n)` from
/// the moment route; the two sides come from genuinely different sums.
pub fn rho_via_wald(env: &CookieEnvironment, n: u64, eps: f64) -> Result<f64> {
    let dist = exact_transition(env, n, eps)?;
    let mut delta = CompensatedSum::new();
    for j in 1..=n {
        delta.add(env.drift_weight_at(j));
    }
    let mut acc = CompensatedSum::new();
    for (m, &mass) in dist.masses().iter().enumerate() {
        if m >= 1 {
            delta.add(env.drift_weight_at(n + m as u64));
        }
        acc.add(mass * delta.value());
    }
    // Tail at the support edge, consistent with the moment computation.
    for m in dist.masses().len() as u64..=dist.tail_edge {
        if m >= 1 {
            delta.add(env.drift_weight_at(n + m));
        }
    }
    acc.add(dist.tail_mass() * delta.value());
    Ok(acc.value())
}

/// One sampled transition: draws the coin sequence on `lane` until `n`
/// failures occur and returns the number of successes.
pub fn sample_transition(
    env: &CookieEnvironment,
    n: u64,
    src: &CoinSource,
    lane: i64,
) -> Result<u64> {
    let cap = trial_cap(n);
    let mut failures = 0u64;
    let mut trial = 0u64;
    while failures < n {
        trial += 1;
        if trial > cap {
            return Err(Error::Resource { what: "transition sampling trials", cap });
        }
        if !src.coin(lane, trial, env.strength_at(trial)) {
            failures += 1;
        }
    }
    Ok(trial - n)
}

/// Trajectory of one branching-like run.
#[derive(Debug, Clone, PartialEq)]
pub struct BlpRunRecord {
    /// Generation sizes, starting with the initial size.
    pub generations: Vec<u64>,
    /// Generation at which the process hit zero, if it did.
    pub extinct_at: Option<usize>,
    /// True when the run stopped because a generation exceeded the size cap.
    pub cap_hit: bool,
}

impl BlpRunRecord {
    pub fn survived(&self) -> bool {
        self.extinct_at.is_none()
    }
}

/// Runs the branching-like process from `z0` for at most `max_gen`
/// generations. Generation g consumes the coin lane `g`.
pub fn blp_run(
    env: &CookieEnvironment,
    z0: u64,
    src: &CoinSource,
    max_gen: u32,
    size_cap: u64,
) -> Result<BlpRunRecord> {
    let mut generations = vec![z0];
    if z0 == 0 {
        return Ok(BlpRunRecord { generations, extinct_at: Some(0), cap_hit: false });
    }
    let mut z = z0;
    for g in 1..=max_gen {
        z = sample_transition(env, z, src, g as i64)?;
        generations.push(z);
        if z == 0 {
            return Ok(BlpRunRecord { generations, extinct_at: Some(g as usize), cap_hit: false });
        }
        if z > size_cap {
            return Err(Error::Resource { what: "generation size", cap: size_cap });
        }
    }
    Ok(BlpRunRecord { generations, extinct_at: None, cap_hit: false })
}

/// Monte Carlo extinction estimate with explicit censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionEstimate {
    pub reps: u64,
    pub extinct: u64,
    /// Runs still alive at the generation horizon (counted as surviving).
    pub censored: u64,
    pub fraction: f64,
    pub half_width: f64,
}

impl ExtinctionEstimate {
    pub fn survival_fraction(&self) -> f64 {
        1.0 - self.fraction
    }
}

/// Fraction of replications whose branching-like run dies by `max_gen`,
/// with a 95% binomial half-width. Replications use independent streams and
/// reduce in a fixed order, so the result is thread-count independent.
pub fn extinction_estimate(
    env: &CookieEnvironment,
    z0: u64,
    reps: u64,
    max_gen: u32,
    seed: u64,
) -> Result<ExtinctionEstimate> {
    let outcomes: Result<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let src = CoinSource::new(seed, rep);
            let record = blp_run(env, z0, &src, max_gen, DEFAULT_GENERATION_CAP)?;
            Ok(!record.survived())
        })
        .collect();
    let outcomes = outcomes?;
    let extinct = outcomes.iter().filter(|&&e| e).count() as u64;
    let censored = reps - extinct;
    let fraction = extinct as f64 / reps.max(1) as f64;
    Ok(ExtinctionEstimate {
        reps,
        extinct,
        censored,
        fraction,
        half_width: crate::stats::binomial_half_width_95(extinct, reps),
    })
}

/// One concentration grid point.
#[derive(Debug, Clone, Copy)]
pub struct ConcentrationRow {
    pub n: u64,
    pub eps: f64,
    /// P(|Z_1/n - 1| > eps): exact when reps = 0, else an MC frequency.
    pub tail_prob: f64,
    /// Envelope 2 exp(-C eps^2 n / (2 + eps)) at the fitted C.
    pub envelope: f64,
}

/// Concentration table with the largest constant for which the exponential
/// envelope holds across the whole grid.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
    /// sup { C : tail(n, eps) <= envelope_C(n, eps) on the grid }.
    pub fitted_c: f64,
}

/// Envelope value 2 exp(-C eps^2 n / (2 + eps)).
pub fn concentration_envelope(c: f64, n: u64, eps: f64) -> f64 {
    2.0 * (-c * eps * eps * n as f64 / (2.0 + eps)).exp()
}

/// Tail probabilities of `|Z_1/n - 1|` over a grid, with the fitted
/// envelope constant. `reps = 0` uses the exact law (preferred); otherwise
/// each grid point is a Monte Carlo frequency over `reps` replications.
pub fn concentration_check(
    env: &CookieEnvironment,
    n_list: &[u64],
    eps_list: &[f64],
    reps: u64,
    seed: u64,
    dp_eps: f64,
) -> Result<ConcentrationReport> {
    for &eps in eps_list {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Domain(format!("concentration eps {eps} must be > 0")));
        }
    }
    let mut rows = Vec::with_capacity(n_list.len() * eps_list.len());
    for &n in n_list {
        let tails: Vec<f64> = if reps == 0 {
            let dist = exact_transition(env, n, dp_eps)?;
            eps_list.iter().map(|&e| dist.concentration_tail(e)).collect()
        } else {
            let samples: Result<Vec<u64>> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let src = CoinSource::new(seed, rep);
                    sample_transition(env, n, &src, n as i64)
                })
                .collect();
            let samples = samples?;
            let nf = n as f64;
            eps_list
                .iter()
                .map(|&e| {
                    let threshold = e * nf;
                    let hits = samples
                        .iter()
                        .filter(|&&m| (m as f64 - nf).abs() > threshold)
                        .count();
                    hits as f64 / reps as f64
                })
                .collect()
        };
        for (&eps, &tail_prob) in eps_list.iter().zip(&tails) {
            rows.push(ConcentrationRow { n, eps, tail_prob, envelope: 0.0 });
        }
    }
    // Largest C for which tail <= 2 exp(-C eps^2 n / (2+eps)) everywhere:
    // rows with zero tail impose no constraint.
    let fitted_c = rows
        .iter()
        .filter(|r| r.tail_prob > 0.0)
        .map(|r| (2.0 + r.eps) / (r.eps * r.eps * r.n as f64) * (2.0 / r.tail_prob).ln())
        .fold(f64::INFINITY, f64::min);
    for row in &mut rows {
        row.envelope = concentration_envelope(fitted_c, row.n, row.eps);
    }
    Ok(ConcentrationReport { rows, fitted_c })
}
