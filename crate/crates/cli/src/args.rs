use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use trimix::{Projection, Variant};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "trimix",
    version,
    about = "Random walk on unitriangular matrices over Z/mZ"
)]
pub struct Cli {
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "trimix-out")]
    pub out: PathBuf,
    /// Worker threads for replica farms (default: available parallelism).
    /// Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of flag values; flags given on the command line win. A
    /// "command" key supplies the subcommand when none is given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    BackwardsIdentity,
    Decomposition,
    HittingTime,
    Intervals,
    RingCounter,
    Corner,
    GoodIntervals,
    ColumnZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    /// Cycle sum against its closed-form bound over an (x, m) grid.
    Integral,
    /// Gamma tails against (2/e)^k and (6/7)^k.
    Expon,
    /// One-step induction inequality, exact left side against a simulated right side.
    Induction,
    /// Frequency-class terms of the first-row bound.
    QTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TmixMethod {
    /// Exact when the group can be enumerated, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Simulate replicas and write one JSON-lines event log per replica.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value = "continuous")]
        variant: Variant,
        /// Continuous time, or number of steps for the discrete walk.
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact distance to uniform from the identity, as a CSV of (t, tv).
    ExactTv {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value = "discrete")]
        variant: Variant,
        /// Time step of the continuous grid.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
    /// Mixing time of the discrete walk.
    Tmix {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, value_enum, default_value = "auto")]
        method: TmixMethod,
        #[arg(long, default_value = "first-row")]
        projection: Projection,
        #[arg(long, default_value_t = 20_000)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1 << 20)]
        max_steps: u64,
    },
    /// Conditional first-row distance against its Fourier bounds, per replica.
    Spectral {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also fail when 4 tv² exceeds the exponential-form bound.
        #[arg(long)]
        assert_l2_dominance: bool,
    },
    /// Observable analyses on simulated continuous trajectories.
    Observe {
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: u64,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Default 200, or 20000 for the corner check.
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Row index for the backwards identity (default: every row 2..=n).
        #[arg(long)]
        big_i: Option<usize>,
        /// Magnitude threshold for the ring counter.
        #[arg(long, default_value_t = 0)]
        x: u64,
        /// Times for the corner and column checks.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        times: Vec<f64>,
        /// Rows counted from the bottom for the column check (default n - 1).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Mixing-time scaling over a grid of (n, m) with log-log fits.
    Scaling {
        /// Grid points as n:m, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3:3,3:5,3:7,3:9,3:11")]
        grid: Vec<String>,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 20_000)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "first-row")]
        projection: Projection,
        #[arg(long, default_value_t = 1 << 20)]
        max_steps: u64,
        /// Wall-clock budget in seconds; later grid points are skipped once spent.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Numerical checks of the analytic bounds.
    Bounds {
        #[arg(long, value_enum)]
        lemma: Lemma,
        #[arg(long, default_value_t = 200)]
        m_max: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,5,20")]
        x_grid: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        k_max: u32,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,5,20")]
        t_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        k_grid: Vec<f64>,
        #[arg(long, default_value_t = 2_000)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo distance of a projection to uniform, with the exact value
    /// when the group can be enumerated.
    ProjectionTv {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value = "discrete")]
        variant: Variant,
        #[arg(long, default_value = "first-row")]
        projection: Projection,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,16")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        replicas: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a manifest into --out and compare output digests.
    Rerun { manifest: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::ExactTv { .. } => "exact-tv",
            Command::Tmix { .. } => "tmix",
            Command::Spectral { .. } => "spectral",
            Command::Observe { .. } => "observe",
            Command::Scaling { .. } => "scaling",
            Command::Bounds { .. } => "bounds",
            Command::ProjectionTv { .. } => "projection-tv",
            Command::Rerun { .. } => "rerun",
        }
    }

    pub fn seed_arg(&self) -> Option<Option<u64>> {
        match self {
            Command::Simulate { seed, .. }
            | Command::Tmix { seed, .. }
            | Command::Spectral { seed, .. }
            | Command::Observe { seed, .. }
            | Command::Scaling { seed, .. }
            | Command::Bounds { seed, .. }
            | Command::ProjectionTv { seed, .. } => Some(*seed),
            Command::ExactTv { .. } | Command::Rerun { .. } => None,
        }
    }
}

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--out", "--threads", "--config"];

fn is_subcommand(name: &str) -> bool {
    Cli::command()
        .get_subcommands()
        .any(|s| s.get_name() == name)
}

/// Index of the subcommand token in `argv`, skipping global flags.
fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
        } else if is_subcommand(a) {
            return Some(i);
        } else {
            i += 1;
        }
    }
    None
}

fn config_path(argv: &[String]) -> Option<String> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

fn flag_given(argv: &[String], flag: &str) -> bool {
    argv.iter().any(|a| {
        a == flag
            || a.strip_prefix(flag)
                .is_some_and(|rest| rest.starts_with('='))
    })
}

/// Splice the flags of the `--config` file into `argv` right after the
/// subcommand, skipping any flag already present.
pub fn expand_config(argv: &[String]) -> CliResult<(Vec<String>, Option<serde_json::Value>)> {
    let Some(path) = config_path(argv) else {
        return Ok((argv.to_vec(), None));
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.clone(),
            source,
        })?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("config {path} must hold a JSON object")))?;

    let mut out = argv.to_vec();
    let at = match subcommand_index(argv) {
        Some(i) => i + 1,
        None => {
            let cmd = obj.get("command").and_then(|c| c.as_str()).ok_or_else(|| {
                CliError::Usage("no subcommand given on the command line or in the config".into())
            })?;
            if !is_subcommand(cmd) {
                return Err(CliError::Usage(format!(
                    "unknown command {cmd:?} in config {path}"
                )));
            }
            out.insert(1, cmd.to_string());
            2
        }
    };

    let mut extra = Vec::new();
    for (key, v) in obj {
        if key == "command" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if flag_given(argv, &flag) {
            continue;
        }
        match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::String(s) => extra.extend([flag, s.clone()]),
            serde_json::Value::Number(x) => extra.extend([flag, x.to_string()]),
            serde_json::Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|item| match item {
                        serde_json::Value::String(s) => Ok(s.clone()),
                        serde_json::Value::Number(x) => Ok(x.to_string()),
                        _ => Err(CliError::Usage(format!(
                            "config key {key}: list items must be strings or numbers"
                        ))),
                    })
                    .collect::<CliResult<_>>()?;
                extra.extend([flag, parts.join(",")]);
            }
            serde_json::Value::Object(_) => {
                return Err(CliError::Usage(format!(
                    "config key {key}: nested objects are not flags"
                )));
            }
        }
    }
    out.splice(at..at, extra);
    Ok((out, Some(value)))
}

/// `argv` without the program name and the global flags, ready to replay.
pub fn replay_argv(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if GLOBAL_VALUE_FLAGS
            .iter()
            .any(|f| a.starts_with(&format!("{f}=")))
        {
            i += 1;
            continue;
        }
        out.push(a.clone());
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn subcommand_is_found_after_globals() {
        let argv = sv(&[
            "trimix",
            "--out",
            "dir",
            "--threads",
            "2",
            "simulate",
            "--n",
            "3",
        ]);
        assert_eq!(subcommand_index(&argv), Some(5));
        assert_eq!(replay_argv(&argv), sv(&["simulate", "--n", "3"]));
    }

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"command":"simulate","n":3,"m":5,"replicas":2,"horizon":1.5}"#,
        )
        .unwrap();
        let argv = sv(&["trimix", "--config", path.to_str().unwrap(), "--m", "7"]);
        let (out, cfg) = expand_config(&argv).unwrap();
        assert!(cfg.is_some());
        let cli = Cli::try_parse_from(&out).unwrap();
        match cli.command {
            Command::Simulate {
                n,
                m,
                replicas,
                horizon,
                ..
            } => {
                assert_eq!((n, m, replicas, horizon), (3, 7, 2, 1.5));
            }
            other => panic!("{other:?}"),
        }
    }
}
