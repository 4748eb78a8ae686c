//! Excited random walks in identical, infinitely-stacked cookie
//! environments with finite total drift.
//!
//! The crate has four parts:
//!
//! * [`mod@env`] — cookie environments: strength rules, prefix drifts, tail
//!   bounds, averaged statistics, and reflection.
//! * [`walk`] — the walk simulator built on lazily realized, addressable
//!   coins ([`rng::CoinSource`]), with trajectory statistics.
//! * [`blp`] — the forward branching-like process: the exact one-step law
//!   ("successes before the n-th failure" over the cookie strengths), its
//!   drift parameters, sampling, and concentration tables.
//! * [`classify`] — the drift-based recurrence/transience verdict and the
//!   theta(n)-threshold survival/extinction certificates.

pub mod blp;
pub mod classify;
pub mod env;
pub mod error;
pub mod numeric;
pub mod rng;
pub mod stats;
pub mod walk;

pub use blp::{BlpParams, BlpRunRecord, ExtinctionEstimate, TransitionDistribution};
pub use classify::{ClassificationResult, TailCondition, Verdict};
pub use env::{CookieEnvironment, DriftEstimate, EnvStats};
pub use error::{Error, Result};
pub use rng::CoinSource;
pub use walk::{WalkConfig, WalkSummary};
