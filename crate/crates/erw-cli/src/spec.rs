//! Key-value documents: environment spec files, inline environment specs,
//! grid specs, and experiment configs.
//!
//! The file format is line-oriented `key = value` with `#` comments. Parse
//! errors always name the line and the key.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use erw_core::env::{lookup_rule, CookieEnvironment};

use crate::table::fnv1a64;

#[derive(Debug, Clone)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// A parsed key-value document. Keys are unique; duplicates are errors.
#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    pub entries: Vec<KvEntry>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<KvEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line}: expected `key = value`, got `{trimmed}`"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {line}: empty key");
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                bail!("line {line}: key `{key}` already set at line {}", prev.line);
            }
            entries.push(KvEntry { line, key, value });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&KvEntry> {
        self.get(key).ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    /// Error if any key is not in the allowed set.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                bail!(
                    "line {}: unknown key `{}` (expected one of: {})",
                    e.line,
                    e.key,
                    allowed.join(", ")
                );
            }
        }
        Ok(())
    }
}

fn entry_err(entry: &KvEntry, msg: impl fmt::Display) -> anyhow::Error {
    anyhow!("line {}: key `{}`: {msg}", entry.line, entry.key)
}

pub fn parse_f64(entry: &KvEntry) -> Result<f64> {
    entry.value.parse().map_err(|_| entry_err(entry, format!("`{}` is not a number", entry.value)))
}

pub fn parse_u64(entry: &KvEntry) -> Result<u64> {
    entry
        .value
        .parse()
        .map_err(|_| entry_err(entry, format!("`{}` is not a non-negative integer", entry.value)))
}

pub fn parse_bool(entry: &KvEntry) -> Result<bool> {
    match entry.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(entry_err(entry, format!("`{other}` is not a boolean"))),
    }
}

pub fn parse_f64_list(entry: &KvEntry) -> Result<Vec<f64>> {
    if entry.value.is_empty() {
        return Ok(Vec::new());
    }
    entry
        .value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| entry_err(entry, format!("`{}` is not a number", s.trim())))
        })
        .collect()
}

/// Grid of indices: `a,b,c`, `pow2:lo..hi`, or `pow10:lo..hi` (inclusive
/// exponent ranges).
pub fn parse_grid(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    for (prefix, base) in [("pow2:", 2u64), ("pow10:", 10u64)] {
        if let Some(range) = spec.strip_prefix(prefix) {
            let (lo, hi) = range
                .split_once("..")
                .ok_or_else(|| anyhow!("grid `{spec}`: expected `{prefix}lo..hi`"))?;
            let lo: u32 = lo.trim().parse().context("grid exponent")?;
            let hi: u32 = hi.trim().parse().context("grid exponent")?;
            if hi < lo {
                bail!("grid `{spec}`: empty exponent range");
            }
            return Ok((lo..=hi).map(|k| base.pow(k)).collect());
        }
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("grid `{spec}`: `{}` is not an integer", s.trim()))
        })
        .collect()
}

/// Inline environment spec:
/// `placebo`, `transient-example`, `finite:p1,p2,...`,
/// `geometric-tail:scale=S,ratio=R[,head=p1|p2|...]`, `custom:<rule>`,
/// optionally wrapped as `reflect:<spec>`.
pub fn parse_env_inline(spec: &str) -> Result<CookieEnvironment> {
    let spec = spec.trim();
    if let Some(inner) = spec.strip_prefix("reflect:") {
        return Ok(parse_env_inline(inner)?.reflect());
    }
    let (kind, args) = match spec.split_once(':') {
        Some((k, a)) => (k.trim(), a.trim()),
        None => (spec, ""),
    };
    match kind {
        "placebo" => Ok(CookieEnvironment::placebo()),
        "transient-example" => Ok(CookieEnvironment::transient_example()),
        "finite" => {
            let strengths: Vec<f64> = if args.is_empty() {
                Vec::new()
            } else {
                args.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| anyhow!("finite env: `{}` is not a number", s.trim()))
                    })
                    .collect::<Result<_>>()?
            };
            CookieEnvironment::finite(strengths).map_err(|e| anyhow!("{e}"))
        }
        "geometric-tail" => {
            let mut head = Vec::new();
            let mut scale = None;
            let mut ratio = None;
            for part in args.split(',').filter(|p| !p.trim().is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| anyhow!("geometric-tail env: expected `key=value` in `{part}`"))?;
                match k.trim() {
                    "scale" => scale = Some(v.trim().parse::<f64>().context("scale")?),
                    "ratio" => ratio = Some(v.trim().parse::<f64>().context("ratio")?),
                    "head" => {
                        head = v
                            .split('|')
                            .filter(|s| !s.trim().is_empty())
                            .map(|s| s.trim().parse::<f64>().context("head strength"))
                            .collect::<Result<_>>()?;
                    }
                    other => bail!("geometric-tail env: unknown field `{other}`"),
                }
            }
            let scale = scale.ok_or_else(|| anyhow!("geometric-tail env: missing `scale`"))?;
            let ratio = ratio.ok_or_else(|| anyhow!("geometric-tail env: missing `ratio`"))?;
            CookieEnvironment::geometric_tail(head, scale, ratio).map_err(|e| anyhow!("{e}"))
        }
        "custom" => {
            let rule = lookup_rule(args).ok_or_else(|| {
                anyhow!(
                    "unknown custom rule `{args}` (built-ins: {})",
                    erw_core::env::builtin_rule_names().join(", ")
                )
            })?;
            Ok(CookieEnvironment::custom(rule))
        }
        other => bail!(
            "unknown environment kind `{other}` (expected placebo, finite, \
             transient-example, geometric-tail, or custom)"
        ),
    }
}

/// Environment from a spec file. Required key `kind`; the remaining keys
/// depend on the kind. `reflected = true` reflects the result.
pub fn parse_env_doc(doc: &KvDoc) -> Result<CookieEnvironment> {
    doc.check_keys(&["kind", "strengths", "head", "scale", "ratio", "rule", "reflected"])?;
    let kind = doc.require("kind")?;
    let env = match kind.value.as_str() {
        "placebo" => CookieEnvironment::placebo(),
        "transient-example" => CookieEnvironment::transient_example(),
        "finite" => {
            let strengths = doc.require("strengths").and_then(parse_f64_list)?;
            CookieEnvironment::finite(strengths)
                .map_err(|e| entry_err(doc.require("strengths").unwrap(), e))?
        }
        "geometric-tail" => {
            let head = match doc.get("head") {
                Some(e) => parse_f64_list(e)?,
                None => Vec::new(),
            };
            let scale = doc.require("scale").and_then(parse_f64)?;
            let ratio = doc.require("ratio").and_then(parse_f64)?;
            CookieEnvironment::geometric_tail(head, scale, ratio)
                .map_err(|e| entry_err(doc.require("scale").unwrap(), e))?
        }
        "custom" => {
            let rule_entry = doc.require("rule")?;
            let rule = lookup_rule(&rule_entry.value).ok_or_else(|| {
                entry_err(
                    rule_entry,
                    format!(
                        "unknown rule `{}` (built-ins: {})",
                        rule_entry.value,
                        erw_core::env::builtin_rule_names().join(", ")
                    ),
                )
            })?;
            CookieEnvironment::custom(rule)
        }
        other => {
            return Err(entry_err(
                kind,
                format!(
                    "unknown kind `{other}` (expected placebo, finite, transient-example, \
                     geometric-tail, or custom)"
                ),
            ))
        }
    };
    let reflected = match doc.get("reflected") {
        Some(e) => parse_bool(e)?,
        None => false,
    };
    Ok(if reflected { env.reflect() } else { env })
}

pub fn parse_env_file(path: &Path) -> Result<CookieEnvironment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading environment spec {}", path.display()))?;
    let doc = KvDoc::parse(&text)
        .with_context(|| format!("parsing environment spec {}", path.display()))?;
    parse_env_doc(&doc).with_context(|| format!("in environment spec {}", path.display()))
}

/// Resolve the `--env` / `--env-inline` pair common to all subcommands.
pub fn resolve_env(file: Option<&Path>, inline: Option<&str>) -> Result<CookieEnvironment> {
    match (file, inline) {
        (Some(path), None) => parse_env_file(path),
        (None, Some(spec)) => parse_env_inline(spec),
        (None, None) => bail!("an environment is required: pass --env <file> or --env-inline <spec>"),
        (Some(_), Some(_)) => bail!("pass only one of --env and --env-inline"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    ParamsTable,
    TransientCertificate,
    Concentration,
    WalkBlpConsistency,
    All,
}

impl ExperimentId {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::ParamsTable => "params-table",
            ExperimentId::TransientCertificate => "transient-certificate",
            ExperimentId::Concentration => "concentration",
            ExperimentId::WalkBlpConsistency => "walk-blp-consistency",
            ExperimentId::All => "all",
        }
    }
}

/// A fully-resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub env: CookieEnvironment,
    pub n_grid: Vec<u64>,
    pub eps_grid: Vec<f64>,
    /// Truncation epsilon for the exact transition law.
    pub eps: f64,
    /// Tolerance for total-drift evaluation.
    pub tol: f64,
    pub reps: u64,
    pub seed: u64,
    pub horizon: u64,
    pub max_gen: u32,
    pub z0: u64,
    pub out_dir: PathBuf,
    /// FNV-1a hash of the config file bytes, stamped into every artifact.
    pub config_hash: String,
}

const CONFIG_KEYS: &[&str] = &[
    "experiment", "env", "env-inline", "n-grid", "eps-grid", "eps", "tol", "reps", "seed",
    "horizon", "max-gen", "z0", "out-dir",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path, out_dir_override: Option<&Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let doc = KvDoc::parse(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        doc.check_keys(CONFIG_KEYS)?;

        // Hash the canonicalized semantic content. The output directory is
        // where results land, not what they are, so it is excluded: the same
        // experiment re-run into a different directory (or at a different
        // thread count) must produce byte-identical tables.
        let canonical: String = doc
            .entries
            .iter()
            .filter(|e| e.key != "out-dir")
            .map(|e| format!("{}={}\n", e.key, e.value))
            .collect();
        let config_hash = fnv1a64(canonical.as_bytes());

        let experiment = match doc.require("experiment")?.value.as_str() {
            "params-table" => ExperimentId::ParamsTable,
            "transient-certificate" => ExperimentId::TransientCertificate,
            "concentration" => ExperimentId::Concentration,
            "walk-blp-consistency" => ExperimentId::WalkBlpConsistency,
            "all" => ExperimentId::All,
            other => {
                return Err(entry_err(
                    doc.require("experiment").unwrap(),
                    format!("unknown experiment `{other}`"),
                ))
            }
        };

        let env = match (doc.get("env"), doc.get("env-inline")) {
            (Some(e), None) => {
                let env_path = PathBuf::from(&e.value);
                let resolved = if env_path.is_relative() {
                    path.parent().unwrap_or(Path::new(".")).join(env_path)
                } else {
                    env_path
                };
                parse_env_file(&resolved)?
            }
            (None, Some(e)) => parse_env_inline(&e.value).map_err(|err| entry_err(e, err))?,
            (None, None) => CookieEnvironment::transient_example(),
            (Some(_), Some(b)) => {
                return Err(entry_err(b, "set only one of `env` and `env-inline`"))
            }
        };

        let mut n_grid = match doc.get("n-grid") {
            Some(e) => parse_grid(&e.value).map_err(|err| entry_err(e, err))?,
            None => match experiment {
                ExperimentId::TransientCertificate => parse_grid("pow2:7..17").unwrap(),
                ExperimentId::Concentration => vec![50, 200, 1000],
                _ => parse_grid("pow2:4..17").unwrap(),
            },
        };
        n_grid.sort_unstable();
        n_grid.dedup();
        let eps_grid = match doc.get("eps-grid") {
            Some(e) => parse_f64_list(e)?,
            None => vec![0.2, 0.5, 1.0],
        };
        let eps = match doc.get("eps") {
            Some(e) => parse_f64(e)?,
            None => erw_core::blp::DEFAULT_TRUNCATION_EPS,
        };
        let tol = match doc.get("tol") {
            Some(e) => parse_f64(e)?,
            None => 1e-10,
        };
        let reps = match doc.get("reps") {
            Some(e) => parse_u64(e)?,
            None => 10_000,
        };
        let seed = match doc.get("seed") {
            Some(e) => parse_u64(e)?,
            None => 42,
        };
        let horizon = match doc.get("horizon") {
            Some(e) => parse_u64(e)?,
            None => 100_000,
        };
        let max_gen = match doc.get("max-gen") {
            Some(e) => parse_u64(e)? as u32,
            None => 1000,
        };
        let z0 = match doc.get("z0") {
            Some(e) => parse_u64(e)?,
            None => 1,
        };
        let out_dir = match (out_dir_override, doc.get("out-dir")) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(e)) => PathBuf::from(&e.value),
            (None, None) => PathBuf::from("results"),
        };

        Ok(Self {
            experiment,
            env,
            n_grid,
            eps_grid,
            eps,
            tol,
            reps,
            seed,
            horizon,
            max_gen,
            z0,
            out_dir,
            config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_reports_line_and_key() {
        let text = "kind = finite\nstrengths = 0.9, 1.5\n";
        let doc = KvDoc::parse(text).unwrap();
        let err = parse_env_doc(&doc).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("strengths"), "{err}");
    }

    #[test]
    fn kv_rejects_duplicates_and_malformed_lines() {
        let err = KvDoc::parse("a = 1\na = 2\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("already set"), "{err}");
        let err = KvDoc::parse("just some words\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let doc = KvDoc::parse("kind = placebo\nbogus = 1\n").unwrap();
        let err = parse_env_doc(&doc).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn env_docs_round_trip_kinds() {
        let doc = KvDoc::parse("kind = finite\nstrengths = 0.75, 0.75\n").unwrap();
        let env = parse_env_doc(&doc).unwrap();
        assert_eq!(env.strength(1).unwrap(), 0.75);
        assert_eq!(env.strength(3).unwrap(), 0.5);

        let doc =
            KvDoc::parse("kind = geometric-tail\nhead = 0.9\nscale = 1.0\nratio = 0.5\n").unwrap();
        let env = parse_env_doc(&doc).unwrap();
        assert_eq!(env.strength(1).unwrap(), 0.9);
        assert!((env.strength(2).unwrap() - 0.75).abs() < 1e-15);

        let doc = KvDoc::parse("kind = transient-example\nreflected = true\n").unwrap();
        let env = parse_env_doc(&doc).unwrap();
        assert!((env.strength(1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn inline_specs() {
        assert_eq!(parse_env_inline("placebo").unwrap().strength(1).unwrap(), 0.5);
        let env = parse_env_inline("finite:0.8,0.3").unwrap();
        assert_eq!(env.strength(2).unwrap(), 0.3);
        let env = parse_env_inline("reflect:finite:0.8").unwrap();
        assert!((env.strength(1).unwrap() - 0.2).abs() < 1e-15);
        let env = parse_env_inline("geometric-tail:scale=1.0,ratio=0.5,head=0.9|0.2").unwrap();
        assert_eq!(env.strength(2).unwrap(), 0.2);
        assert!(parse_env_inline("custom:inverse-square").is_ok());
        assert!(parse_env_inline("custom:nope").is_err());
        assert!(parse_env_inline("banana").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1, 2, 3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_grid("pow2:4..6").unwrap(), vec![16, 32, 64]);
        assert_eq!(parse_grid("pow10:1..3").unwrap(), vec![10, 100, 1000]);
        assert!(parse_grid("pow2:6..4").is_err());
        assert!(parse_grid("pow2:x..4").is_err());
    }
}
