//! Reproducible experiment runners. Every experiment is a pure function of
//! (config, seed): re-running writes byte-identical tables at any thread
//! count, and `manifest.csv` records each artifact's checksum.

use anyhow::Result;
use erw_core::blp::{concentration_check, extinction_estimate, params_exact};
use erw_core::classify::{certify_survival, CERTIFICATE_DISCLAIMER};
use erw_core::env::CookieEnvironment;
use erw_core::walk::{direction_stats, excursion_stats};

use crate::spec::{ExperimentConfig, ExperimentId};
use crate::table::{fmt_f64, write_manifest, ArtifactRecord, Table};

/// Convergence-rate comparison columns: n^{-1/2} log^4 n and the
/// gap-driven term b log^4(1/b) (zero when the gap vanishes).
fn rate_sqrt_log4(n: u64) -> f64 {
    let nf = n as f64;
    nf.ln().powi(4) / nf.sqrt()
}

fn rate_gap_log4(gap: f64) -> f64 {
    if gap <= 0.0 {
        0.0
    } else {
        gap * (1.0 / gap).ln().powi(4)
    }
}

/// Parameter table over the n grid: mu, rho, nu, theta with distance-to-
/// limit and rate-comparison columns.
pub fn exp_params_table(config: &ExperimentConfig) -> Result<(String, Table)> {
    let env = &config.env;
    let delta = env.total_drift(config.tol)?;
    let mut table = Table::new(&[
        "n",
        "mu",
        "rho",
        "nu",
        "theta",
        "eps_used",
        "abs_rho_minus_delta",
        "abs_nu_minus_2",
        "rate_sqrt_log4",
        "rate_gap_log4",
    ]);
    table.stamp(&config.config_hash);
    table.comment(format!("env={}", env.label()));
    table.comment(format!("delta={} delta_error={}", fmt_f64(delta.value), fmt_f64(delta.error)));
    table.comment("units: n cookies; mu,rho,nu,theta dimensionless");
    for &n in &config.n_grid {
        let params = params_exact(env, n, config.eps)?;
        let stats = env.stats(n)?;
        table.row(vec![
            n.to_string(),
            fmt_f64(params.mu),
            fmt_f64(params.rho),
            fmt_f64(params.nu),
            fmt_f64(params.theta),
            fmt_f64(params.truncation_eps),
            fmt_f64((params.rho - delta.value).abs()),
            fmt_f64((params.nu - 2.0).abs()),
            fmt_f64(rate_sqrt_log4(n)),
            fmt_f64(rate_gap_log4(stats.bessel_gap)),
        ]);
    }
    Ok(("params_table.csv".to_string(), table))
}

/// Survival certificate + extinction estimates for both excursion
/// directions + walk direction fractions, bundled as three tables.
pub fn exp_transient_certificate(config: &ExperimentConfig) -> Result<Vec<(String, Table)>> {
    let env = &config.env;
    let mut out = Vec::new();

    let report = certify_survival(env, &config.n_grid, config.eps)?;
    let mut cert = Table::new(&["n", "theta", "threshold", "margin"]);
    cert.stamp(&config.config_hash);
    cert.comment(format!("env={}", env.label()));
    cert.comment(CERTIFICATE_DISCLAIMER);
    cert.comment(format!("all_margins_positive={}", report.all_margins_positive));
    for row in &report.rows {
        cert.row(vec![
            row.n.to_string(),
            fmt_f64(row.theta),
            fmt_f64(row.threshold),
            fmt_f64(row.margin),
        ]);
    }
    out.push(("certificate.csv".to_string(), cert));

    let mut ext = Table::new(&[
        "process",
        "reps",
        "max_gen",
        "extinct",
        "censored",
        "extinct_fraction",
        "half_width",
    ]);
    ext.stamp(&config.config_hash);
    ext.comment(format!("env={} z0={}", env.label(), config.z0));
    ext.comment("right = excursions right of the origin; left = reflected environment");
    for (label, e) in [("right", env.clone()), ("left", env.reflect())] {
        let est = extinction_estimate(&e, config.z0, config.reps, config.max_gen, config.seed)?;
        ext.row(vec![
            label.to_string(),
            est.reps.to_string(),
            config.max_gen.to_string(),
            est.extinct.to_string(),
            est.censored.to_string(),
            fmt_f64(est.fraction),
            fmt_f64(est.half_width),
        ]);
    }
    out.push(("extinction.csv".to_string(), ext));

    let stats = direction_stats(env, config.seed, config.horizon, config.reps)?;
    let mut dir = Table::new(&[
        "reps",
        "horizon",
        "right_fraction",
        "left_fraction",
        "zero_fraction",
        "right_half_width",
        "mean_final_position",
    ]);
    dir.stamp(&config.config_hash);
    dir.comment(format!("env={}", env.label()));
    dir.comment("units: positions in lattice steps");
    dir.row(vec![
        stats.reps.to_string(),
        config.horizon.to_string(),
        fmt_f64(stats.right_fraction),
        fmt_f64(stats.left_fraction),
        fmt_f64(stats.zero_fraction),
        fmt_f64(stats.right_half_width),
        fmt_f64(stats.mean_final_position),
    ]);
    out.push(("directions.csv".to_string(), dir));

    Ok(out)
}

/// Concentration tails against the exponential envelope. `reps = 0` in the
/// config selects the exact law; otherwise Monte Carlo frequencies.
pub fn exp_concentration(config: &ExperimentConfig) -> Result<(String, Table)> {
    let report = concentration_check(
        &config.env,
        &config.n_grid,
        &config.eps_grid,
        0, // exact tails: preferred whenever the grid is DP-sized
        config.seed,
        config.eps,
    )?;
    let mut table = Table::new(&["n", "eps", "tail_prob", "envelope_at_fitted_c"]);
    table.stamp(&config.config_hash);
    table.comment(format!("env={}", config.env.label()));
    table.comment(format!("fitted_c={}", fmt_f64(report.fitted_c)));
    table.comment("tail_prob = P(|Z1/n - 1| > eps), exact transition law");
    for row in &report.rows {
        table.row(vec![
            row.n.to_string(),
            fmt_f64(row.eps),
            fmt_f64(row.tail_prob),
            fmt_f64(row.envelope),
        ]);
    }
    Ok(("concentration.csv".to_string(), table))
}

/// The environment suite the consistency experiment sweeps.
pub fn consistency_suite() -> Vec<CookieEnvironment> {
    let strong = CookieEnvironment::finite(vec![5.0 / 6.0; 3]).expect("elliptic");
    vec![
        CookieEnvironment::placebo(),
        CookieEnvironment::finite(vec![0.75]).expect("elliptic"),
        strong.clone(),
        strong.reflect(),
        CookieEnvironment::transient_example(),
    ]
}

/// Paired walk/branching-process table: the walk's empirical return
/// frequency against the return frequency predicted from extinction of the
/// two excursion processes, plus the right-escape/survival pair.
pub fn exp_walk_blp_consistency(config: &ExperimentConfig) -> Result<(String, Table)> {
    let mut table = Table::new(&[
        "env",
        "delta",
        "walk_return_fraction",
        "walk_return_half_width",
        "blp_predicted_return",
        "abs_return_diff",
        "walk_right_escape",
        "blp_right_survival",
        "abs_escape_diff",
        "right_censored",
        "left_censored",
    ]);
    table.stamp(&config.config_hash);
    table.comment(format!(
        "reps={} horizon={} max_gen={} z0={}",
        config.reps, config.horizon, config.max_gen, config.z0
    ));
    table.comment(
        "predicted return = p1 * P(right process extinct) + (1-p1) * P(left process extinct)",
    );
    for env in consistency_suite() {
        let delta = env.total_drift(config.tol)?;
        let walk = excursion_stats(&env, config.seed, config.horizon, config.reps)?;
        let right = extinction_estimate(&env, config.z0, config.reps, config.max_gen, config.seed)?;
        let left = extinction_estimate(
            &env.reflect(),
            config.z0,
            config.reps,
            config.max_gen,
            config.seed + 1,
        )?;
        let p1 = env.strength(1).map_err(|e| anyhow::anyhow!("{e}"))?;
        let predicted_return = p1 * right.fraction + (1.0 - p1) * left.fraction;
        let return_fraction = walk.return_fraction();
        let escape = walk.right_escape_fraction();
        let survival = right.survival_fraction();
        let hw = erw_core::stats::binomial_half_width_95(walk.returned, walk.reps);
        table.row(vec![
            env.label(),
            fmt_f64(delta.value),
            fmt_f64(return_fraction),
            fmt_f64(hw),
            fmt_f64(predicted_return),
            fmt_f64((return_fraction - predicted_return).abs()),
            fmt_f64(escape),
            fmt_f64(survival),
            fmt_f64((escape - survival).abs()),
            right.censored.to_string(),
            left.censored.to_string(),
        ]);
    }
    Ok(("consistency.csv".to_string(), table))
}

/// Run the configured experiment(s), write all tables plus the manifest,
/// and return the artifact records.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ArtifactRecord>> {
    let mut tables: Vec<(String, Table)> = Vec::new();
    let ids: Vec<ExperimentId> = match config.experiment {
        ExperimentId::All => vec![
            ExperimentId::ParamsTable,
            ExperimentId::TransientCertificate,
            ExperimentId::Concentration,
            ExperimentId::WalkBlpConsistency,
        ],
        single => vec![single],
    };
    for id in ids {
        match id {
            ExperimentId::ParamsTable => tables.push(exp_params_table(config)?),
            ExperimentId::TransientCertificate => {
                tables.extend(exp_transient_certificate(config)?)
            }
            ExperimentId::Concentration => tables.push(exp_concentration(config)?),
            ExperimentId::WalkBlpConsistency => tables.push(exp_walk_blp_consistency(config)?),
            ExperimentId::All => unreachable!(),
        }
    }
    let mut artifacts = Vec::new();
    for (name, table) in &tables {
        let (bytes, checksum) = table.write(&config.out_dir.join(name))?;
        artifacts.push(ArtifactRecord { name: name.clone(), bytes, checksum });
    }
    write_manifest(
        &config.out_dir,
        &config.config_hash,
        config.experiment.name(),
        artifacts.clone(),
    )?;
    Ok(artifacts)
}
