//! Shared fixtures for the criterion benches.

use erw_core::env::CookieEnvironment;

pub fn bench_environments() -> Vec<(&'static str, CookieEnvironment)> {
    vec![
        ("placebo", CookieEnvironment::placebo()),
        ("transient-example", CookieEnvironment::transient_example()),
        (
            "geometric",
            CookieEnvironment::geometric_tail(vec![0.8, 0.6], -0.4, 0.5).expect("elliptic"),
        ),
    ]
}
