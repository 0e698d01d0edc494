use std::path::Path;
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use trimix::estimators::{
    expon_tail_check, induction_probe, mc_projection_tv, mc_tmix_bracket, scaling_study,
    ScalingBudget, ScalingMethod,
};
use trimix::exact::{
    continuous_distribution, distribution_at, exact_tv_continuous_on, exact_tv_series, group_order,
    t_mix_exact, tv_to_uniform, GroupTable, ENUMERATION_CAP,
};
use trimix::observables::{
    backwards_identity_check, column_over_z, detect_intervals, good_intervals, ring_counter_a,
    track_z, IntervalKind, RingEval,
};
use trimix::spectral::{
    conditional_exact_tv, l2_bound, plancherel_bound, q_bound_terms, spectral_sum_bound,
    ConditionalSpectrum, INEQUALITY_SLACK,
};
use trimix::{
    chain::decompose_first_row, schedule_eval, ChainConfig, Constants, EventLog, Projection,
    ResidueVector, ScheduleVariant, Trajectory, Variant,
};

use crate::args::{replay_argv, Check, Cli, Command, Lemma, TmixMethod};
use crate::error::{CliError, CliResult};
use crate::output::{
    code_version, fmt_f64 as f, unix_millis, write_manifest, OutputFile, Outputs, RunManifest,
    MANIFEST_NAME, MANIFEST_SCHEMA_VERSION,
};
use crate::SEED_ENV;

type Failures = Vec<String>;

fn resolve_seed(arg: Option<Option<u64>>) -> CliResult<Option<u64>> {
    match arg {
        None => Ok(None),
        Some(Some(s)) => Ok(Some(s)),
        Some(None) => match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(Some(0)),
        },
    }
}

pub fn execute(
    cli: Cli,
    expanded: &[String],
    config: Option<serde_json::Value>,
) -> CliResult<Failures> {
    if let Command::Rerun { manifest } = &cli.command {
        let mismatches = rerun(manifest, &cli.out, cli.threads)?;
        if mismatches.is_empty() {
            println!("all outputs reproduced in {}", cli.out.display());
        }
        return Ok(mismatches
            .into_iter()
            .map(|p| format!("output differs: {p}"))
            .collect());
    }
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    let seed = resolve_seed(cli.command.seed_arg())?;
    let mut argv = replay_argv(expanded);
    if let Some(s) = seed {
        if cli.command.seed_arg() == Some(None) {
            argv.extend(["--seed".to_string(), s.to_string()]);
        }
    }

    let started = unix_millis();
    let mut outputs = Outputs::create(&cli.out)?;
    let failures = pool.install(|| dispatch(&cli.command, seed.unwrap_or(0), &mut outputs))?;
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        command: cli.command.name().to_string(),
        argv,
        args: serde_json::to_value(&cli.command).expect("arguments serialize"),
        config,
        seed,
        threads,
        code_version: code_version(),
        started_unix_ms: started,
        finished_unix_ms: unix_millis(),
        failures: failures.clone(),
        outputs: outputs.files().to_vec(),
    };
    write_manifest(outputs.dir(), &manifest)?;
    println!(
        "{}: wrote {} file(s) and {} to {}",
        manifest.command,
        manifest.outputs.len(),
        MANIFEST_NAME,
        outputs.dir().display()
    );
    Ok(failures)
}

pub fn rerun(manifest_path: &Path, out: &Path, threads: Option<usize>) -> CliResult<Vec<String>> {
    let recorded = RunManifest::load(manifest_path)?;
    let src_dir = manifest_path.parent().unwrap_or(Path::new("."));
    if same_dir(src_dir, out) {
        return Err(CliError::Usage(format!(
            "--out {} would overwrite the run being checked; choose another directory",
            out.display()
        )));
    }
    let mut argv = vec!["trimix".to_string()];
    argv.extend(recorded.argv.iter().cloned());
    argv.extend(["--out".to_string(), out.display().to_string()]);
    if let Some(t) = threads {
        argv.extend(["--threads".to_string(), t.to_string()]);
    }
    let cli =
        <Cli as clap::Parser>::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Rerun { .. }) {
        return Err(CliError::Usage(
            "a manifest cannot replay another rerun".into(),
        ));
    }
    execute(cli, &argv, recorded.config.clone())?;
    let replayed = RunManifest::load(&out.join(MANIFEST_NAME))?;
    Ok(compare_outputs(&recorded.outputs, &replayed.outputs))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn compare_outputs(recorded: &[OutputFile], replayed: &[OutputFile]) -> Vec<String> {
    let mut bad: Vec<String> = recorded
        .iter()
        .filter(|r| {
            !replayed
                .iter()
                .any(|n| n.path == r.path && n.sha256 == r.sha256)
        })
        .map(|r| r.path.clone())
        .collect();
    bad.extend(
        replayed
            .iter()
            .filter(|n| !recorded.iter().any(|r| r.path == n.path))
            .map(|n| format!("{} (not in the original run)", n.path)),
    );
    bad
}

fn dispatch(cmd: &Command, seed: u64, out: &mut Outputs) -> CliResult<Failures> {
    match cmd.clone() {
        Command::Simulate {
            n,
            m,
            variant,
            horizon,
            replicas,
            ..
        } => simulate(n, m, variant, horizon, replicas, seed, out),
        Command::ExactTv {
            n,
            m,
            t_max,
            variant,
            dt,
        } => exact_tv(n, m, t_max, variant, dt, out),
        Command::Tmix {
            n,
            m,
            eps,
            method,
            projection,
            replicas,
            max_steps,
            ..
        } => tmix(
            n, m, eps, method, projection, replicas, seed, max_steps, out,
        ),
        Command::Spectral {
            n,
            m,
            horizon,
            replicas,
            assert_l2_dominance,
            ..
        } => spectral(n, m, horizon, replicas, seed, assert_l2_dominance, out),
        Command::Observe {
            check,
            n,
            m,
            horizon,
            replicas,
            big_i,
            x,
            times,
            k,
            ..
        } => {
            let replicas = replicas.unwrap_or(if check == Check::Corner { 20_000 } else { 200 });
            let p = ObserveParams {
                n,
                m,
                horizon,
                replicas,
                seed,
            };
            observe(check, &p, big_i, x, &times, k, out)
        }
        Command::Scaling {
            grid,
            eps,
            replicas,
            projection,
            max_steps,
            time_limit,
            ..
        } => scaling(
            &grid, eps, replicas, seed, projection, max_steps, time_limit, out,
        ),
        Command::Bounds {
            lemma,
            m_max,
            x_grid,
            k_max,
            trials,
            n,
            m,
            t_grid,
            k_grid,
            replicas,
            ..
        } => match lemma {
            Lemma::Integral => bounds_integral(m_max, &x_grid, out),
            Lemma::Expon => bounds_expon(k_max, trials, seed, out),
            Lemma::Induction => bounds_induction(n, m, &t_grid, replicas, seed, out),
            Lemma::QTerms => bounds_q_terms(n, m, &k_grid, out),
        },
        Command::ProjectionTv {
            n,
            m,
            variant,
            projection,
            times,
            replicas,
            ..
        } => projection_tv(n, m, variant, projection, &times, replicas, seed, out),
        Command::Rerun { .. } => unreachable!("handled before dispatch"),
    }
}

fn simulate(
    n: usize,
    m: u64,
    variant: Variant,
    horizon: f64,
    replicas: u64,
    seed: u64,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let base = ChainConfig::new(n, m, variant, horizon, seed);
    base.validate()?;
    let logs: Vec<String> = (0..replicas)
        .into_par_iter()
        .map(|r| EventLog::generate(&base.clone().with_stream(r)).map(|l| l.to_jsonl()))
        .collect::<trimix::Result<_>>()?;
    for (r, text) in logs.iter().enumerate() {
        out.write(&format!("log_{r:05}.jsonl"), text.as_bytes())?;
    }
    Ok(Vec::new())
}

fn exact_tv(
    n: usize,
    m: u64,
    t_max: f64,
    variant: Variant,
    dt: f64,
    out: &mut Outputs,
) -> CliResult<Failures> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t-max must be finite and non-negative, got {t_max}"
        )));
    }
    let mut failures = Vec::new();
    match variant {
        Variant::Discrete => {
            if t_max.fract() != 0.0 {
                return Err(CliError::Usage(format!(
                    "--t-max must be a whole number of steps, got {t_max}"
                )));
            }
            let series = exact_tv_series(n, m, t_max as u64)?;
            let rows: Vec<Vec<String>> = series
                .iter()
                .enumerate()
                .map(|(t, &tv)| vec![t.to_string(), f(tv)])
                .collect();
            for (t, w) in series.windows(2).enumerate() {
                if w[1] > w[0] + 1e-12 {
                    failures.push(format!("distance increased from step {t} to {}", t + 1));
                }
            }
            out.csv("exact_tv.csv", &["t", "tv"], &rows)?;
        }
        Variant::Continuous => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
            }
            let table = GroupTable::enumerate(n, m)?;
            let steps = (t_max / dt + 1e-9).floor() as u64;
            let mut rows = Vec::new();
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=steps {
                let t = i as f64 * dt;
                let r = exact_tv_continuous_on(&table, t)?;
                if let Some((tv, err)) = prev {
                    if r.tv > tv + err + r.truncation_error + 1e-12 {
                        failures.push(format!("distance increased at t = {t}"));
                    }
                }
                prev = Some((r.tv, r.truncation_error));
                rows.push(vec![f(t), f(r.tv), f(r.truncation_error)]);
            }
            out.csv("exact_tv.csv", &["t", "tv", "truncation_error"], &rows)?;
        }
    }
    Ok(failures)
}

#[allow(clippy::too_many_arguments)]
fn tmix(
    n: usize,
    m: u64,
    eps: f64,
    method: TmixMethod,
    projection: Projection,
    replicas: u64,
    seed: u64,
    max_steps: u64,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let enumerable = group_order(n, m).is_some_and(|c| c <= ENUMERATION_CAP);
    let use_exact = match method {
        TmixMethod::Exact => true,
        TmixMethod::Mc => false,
        TmixMethod::Auto => enumerable,
    };
    let value = if use_exact {
        let t = t_mix_exact(n, m, eps)?;
        serde_json::json!({ "method": "exact", "n": n, "m": m, "eps": eps, "t_mix": t })
    } else {
        let b = mc_tmix_bracket(n, m, projection, eps, replicas, seed, max_steps)?;
        serde_json::json!({
            "method": "monte_carlo_bracket",
            "n": n, "m": m, "eps": eps,
            "projection": projection,
            "replicas": replicas, "seed": seed,
            "t_lo": b.lo, "t_hi": b.hi,
            "tv_hi": f(b.tv_hi), "se_hi": f(b.se_hi),
            "probes": b.probes,
        })
    };
    out.json("tmix.json", &value)?;
    Ok(Vec::new())
}

fn spectral(
    n: usize,
    m: u64,
    horizon: f64,
    replicas: u64,
    seed: u64,
    assert_l2: bool,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let base = ChainConfig::new(n, m, Variant::Continuous, horizon, seed);
    base.validate()?;
    let rows: Vec<(u64, usize, f64, f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let log = EventLog::generate(&base.clone().with_stream(r))?;
            let spectrum = ConditionalSpectrum::from_log(&log, horizon);
            Ok((
                r,
                spectrum.k(),
                conditional_exact_tv(&spectrum)?,
                l2_bound(&spectrum)?,
                plancherel_bound(&spectrum)?,
            ))
        })
        .collect::<trimix::Result<_>>()?;
    let mut failures = Vec::new();
    let mut table = Vec::with_capacity(rows.len());
    for (r, k, tv, l2, pl) in rows {
        let lhs = 4.0 * tv * tv;
        let l2_ok = lhs <= l2 + INEQUALITY_SLACK;
        let pl_ok = lhs <= pl + INEQUALITY_SLACK;
        if !pl_ok {
            failures.push(format!(
                "replica {r}: 4 tv^2 = {lhs} exceeds the Plancherel sum {pl}"
            ));
        }
        if assert_l2 && !l2_ok {
            failures.push(format!(
                "replica {r}: 4 tv^2 = {lhs} exceeds the exponential bound {l2}"
            ));
        }
        table.push(vec![
            r.to_string(),
            k.to_string(),
            f(tv),
            f(lhs),
            f(l2),
            f(pl),
            l2_ok.to_string(),
            pl_ok.to_string(),
        ]);
    }
    out.csv(
        "spectral.csv",
        &[
            "replica",
            "k",
            "tv",
            "four_tv_sq",
            "l2_bound",
            "plancherel_bound",
            "l2_dominates",
            "plancherel_dominates",
        ],
        &table,
    )?;
    Ok(failures)
}

struct ObserveParams {
    n: usize,
    m: u64,
    horizon: f64,
    replicas: u64,
    seed: u64,
}

impl ObserveParams {
    fn base(&self) -> ChainConfig {
        ChainConfig::new(self.n, self.m, Variant::Continuous, self.horizon, self.seed)
    }

    /// Per-replica rows, computed in parallel and returned in replica order.
    fn per_replica<F>(&self, f: F) -> CliResult<Vec<Vec<String>>>
    where
        F: Fn(u64, EventLog) -> CliResult<Vec<Vec<String>>> + Sync,
    {
        let base = self.base();
        base.validate()?;
        let parts: Vec<Vec<Vec<String>>> = (0..self.replicas)
            .into_par_iter()
            .map(|r| f(r, EventLog::generate(&base.clone().with_stream(r))?))
            .collect::<CliResult<_>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

fn top_unit(n: usize, m: u64) -> CliResult<ResidueVector> {
    Ok(ResidueVector::unit(n, n, m)?)
}

fn observe(
    check: Check,
    p: &ObserveParams,
    big_i: Option<usize>,
    x: u64,
    times: &[f64],
    k: Option<usize>,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let (n, m) = (p.n, p.m);
    let mut failures = Vec::new();
    match check {
        Check::BackwardsIdentity => {
            let rows_i: Vec<usize> = match big_i {
                Some(i) => vec![i],
                None => (2..=n).collect(),
            };
            let base = p.base();
            base.validate()?;
            let rows: Vec<Vec<String>> = (0..p.replicas)
                .into_par_iter()
                .map(|r| {
                    let cfg = base.clone().with_stream(r);
                    let mut rng = cfg.rng();
                    let log = EventLog::generate_with(&cfg, &mut rng);
                    let coords: Vec<u64> = (0..n)
                        .map(|j| if j == 0 { 0 } else { rng.random_range(0..m) })
                        .collect();
                    let y = ResidueVector::new(coords, m)?;
                    rows_i
                        .iter()
                        .map(|&i| {
                            let rep = backwards_identity_check(&log, &y, i)?;
                            Ok(vec![
                                r.to_string(),
                                i.to_string(),
                                rep.checks.to_string(),
                                rep.failures.to_string(),
                                rep.first_mismatch.unwrap_or_default(),
                            ])
                        })
                        .collect::<CliResult<Vec<_>>>()
                })
                .collect::<CliResult<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            for row in rows.iter().filter(|row| row[3] != "0") {
                failures.push(format!(
                    "replica {} I = {}: {} mismatches ({})",
                    row[0], row[1], row[3], row[4]
                ));
            }
            out.csv(
                "backwards_identity.csv",
                &["replica", "big_i", "checks", "failures", "first_mismatch"],
                &rows,
            )?;
        }
        Check::Decomposition => {
            let grid: Vec<f64> = (0..=100).map(|q| p.horizon * q as f64 / 100.0).collect();
            let rows = p.per_replica(|r, log| {
                let rep = decompose_first_row(&Trajectory::from_log(log, &grid)?);
                Ok(vec![vec![
                    r.to_string(),
                    rep.checks.to_string(),
                    rep.failures.to_string(),
                    rep.first_mismatch.unwrap_or_default(),
                ]])
            })?;
            for row in rows.iter().filter(|row| row[2] != "0") {
                failures.push(format!(
                    "replica {}: {} mismatches ({})",
                    row[0], row[2], row[3]
                ));
            }
            out.csv(
                "decomposition.csv",
                &["replica", "checks", "failures", "first_mismatch"],
                &rows,
            )?;
        }
        Check::HittingTime => {
            let y = top_unit(n, m)?;
            let rows = p.per_replica(|r, log| {
                let trace = track_z(&log, &y, 2)?;
                Ok(vec![vec![r.to_string(), f(trace.hitting_time())]])
            })?;
            out.csv("hitting_time.csv", &["replica", "t2"], &rows)?;
        }
        Check::Intervals => {
            let y = top_unit(n, m)?;
            let rows = p.per_replica(|r, log| {
                let trace = track_z(&log, &y, 2)?;
                Ok(detect_intervals(&trace)
                    .into_iter()
                    .map(|iv| {
                        vec![
                            r.to_string(),
                            match iv.kind {
                                IntervalKind::Zero => "zero".into(),
                                IntervalKind::Nonzero => "nonzero".into(),
                            },
                            f(iv.start),
                            f(iv.end),
                            iv.censored.to_string(),
                        ]
                    })
                    .collect())
            })?;
            out.csv(
                "intervals.csv",
                &["replica", "kind", "start", "end", "censored"],
                &rows,
            )?;
        }
        Check::RingCounter => {
            let y = top_unit(n, m)?;
            let rows = p.per_replica(|r, log| {
                let pre = ring_counter_a(&log, &y, x, p.horizon, RingEval::Pre)?;
                let post = ring_counter_a(&log, &y, x, p.horizon, RingEval::Post)?;
                Ok(vec![vec![
                    r.to_string(),
                    f(p.horizon),
                    pre.to_string(),
                    post.to_string(),
                ]])
            })?;
            for row in rows.iter().filter(|row| row[2] != row[3]) {
                failures.push(format!(
                    "replica {}: counts differ ({} vs {})",
                    row[0], row[2], row[3]
                ));
            }
            out.csv(
                "ring_counter.csv",
                &["replica", "t", "a_pre", "a_post"],
                &rows,
            )?;
        }
        Check::Corner => {
            let base = ChainConfig::new(n, m, Variant::Continuous, 0.0, p.seed);
            let mut rows = Vec::with_capacity(times.len());
            for &t in times {
                let est = mc_projection_tv(&base, Projection::Corner, t, p.replicas)?;
                rows.push(vec![f(t), f(est.tv), f(est.se), est.replicas.to_string()]);
            }
            out.csv("corner_tv.csv", &["t", "tv", "se", "replicas"], &rows)?;
        }
        Check::GoodIntervals => {
            let schedule =
                schedule_eval(n, m, ScheduleVariant::for_modulus(m), Constants::default());
            let y = top_unit(n, m)?;
            let rows = p.per_replica(|r, log| {
                let trace = track_z(&log, &y, schedule.big_i)?;
                let rep = good_intervals(&trace, &schedule)?;
                Ok(rep
                    .intervals
                    .iter()
                    .zip(&rep.good_counts)
                    .enumerate()
                    .map(|(j, (iv, count))| {
                        vec![
                            r.to_string(),
                            j.to_string(),
                            f(iv.start),
                            f(iv.end),
                            f(iv.nonzero_measure),
                            iv.good.to_string(),
                            count.to_string(),
                        ]
                    })
                    .collect())
            })?;
            out.json("schedule.json", &schedule)?;
            out.csv(
                "good_intervals.csv",
                &[
                    "replica",
                    "index",
                    "start",
                    "end",
                    "nonzero_measure",
                    "good",
                    "good_count",
                ],
                &rows,
            )?;
        }
        Check::ColumnZ => {
            let k = k.unwrap_or(n - 1);
            if !(1..n).contains(&k) {
                return Err(CliError::Usage(format!("--k must lie in 1..{n}, got {k}")));
            }
            let rows = p.per_replica(|r, log| {
                let col = column_over_z(&log);
                Ok(times
                    .iter()
                    .map(|&t| vec![r.to_string(), f(t), k.to_string(), f(col.max_abs(t, k))])
                    .collect())
            })?;
            out.csv("column_z.csv", &["replica", "x", "k", "max_abs"], &rows)?;
        }
    }
    Ok(failures)
}

fn parse_grid(grid: &[String]) -> CliResult<Vec<(usize, u64)>> {
    grid.iter()
        .map(|g| {
            let (a, b) = g.split_once(':').ok_or_else(|| {
                CliError::Usage(format!("grid point {g:?} is not of the form n:m"))
            })?;
            let n = a
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad n in grid point {g:?}")))?;
            let m = b
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad m in grid point {g:?}")))?;
            Ok((n, m))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn scaling(
    grid: &[String],
    eps: f64,
    replicas: u64,
    seed: u64,
    projection: Projection,
    max_steps: u64,
    time_limit: Option<f64>,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let grid = parse_grid(grid)?;
    let time_limit = match time_limit {
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            return Err(CliError::Usage(format!(
                "--time-limit must be positive, got {s}"
            )))
        }
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let budget = ScalingBudget {
        replicas,
        seed,
        projection,
        max_steps,
        time_limit,
    };
    let study = scaling_study(&grid, eps, &budget)?;
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.m.to_string(),
                match r.method {
                    ScalingMethod::Exact => "exact".into(),
                    ScalingMethod::MonteCarloBracket => "monte_carlo_bracket".into(),
                },
                f(r.t_mix),
                f(r.t_lo),
                f(r.t_hi),
                f(r.se),
                r.replicas.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    out.csv(
        "scaling_rows.csv",
        &[
            "n", "m", "method", "t_mix", "t_lo", "t_hi", "se", "replicas", "seed",
        ],
        &rows,
    )?;
    let fits: Vec<Vec<String>> = study
        .fits
        .iter()
        .map(|a| {
            let (lo, hi) =
                a.ci.map_or((String::new(), String::new()), |(lo, hi)| (f(lo), f(hi)));
            vec![
                a.axis.clone(),
                a.fixed.to_string(),
                a.points.to_string(),
                f(a.exponent),
                f(a.intercept),
                f(a.se),
                lo,
                hi,
            ]
        })
        .collect();
    out.csv(
        "scaling_fits.csv",
        &[
            "axis",
            "fixed",
            "points",
            "exponent",
            "intercept",
            "se",
            "ci_lo",
            "ci_hi",
        ],
        &fits,
    )?;
    if study.partial {
        eprintln!(
            "warning: time limit reached after {} of {} grid points",
            study.rows.len(),
            grid.len()
        );
    }
    out.json(
        "scaling.json",
        &serde_json::json!({ "eps": eps, "partial": study.partial, "points": grid.len(), "measured": study.rows.len() }),
    )?;
    Ok(Vec::new())
}

fn bounds_integral(m_max: u64, x_grid: &[f64], out: &mut Outputs) -> CliResult<Failures> {
    if m_max < 2 {
        return Err(CliError::Usage(format!(
            "--m-max must be at least 2, got {m_max}"
        )));
    }
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for &x in x_grid {
        for m in 2..=m_max {
            let (lhs, rhs) = spectral_sum_bound(x, m)?;
            let ok = lhs <= rhs + INEQUALITY_SLACK;
            if !ok {
                failures.push(format!("x = {x}, m = {m}: {lhs} > {rhs}"));
            }
            rows.push(vec![f(x), m.to_string(), f(lhs), f(rhs), ok.to_string()]);
        }
    }
    out.csv("integral.csv", &["x", "m", "lhs", "rhs", "holds"], &rows)?;
    Ok(failures)
}

fn bounds_expon(k_max: u32, trials: u64, seed: u64, out: &mut Outputs) -> CliResult<Failures> {
    if k_max == 0 {
        return Err(CliError::Usage("--k-max must be at least 1".into()));
    }
    let ks: Vec<u32> = (1..=k_max).collect();
    let rep = expon_tail_check(&ks, trials, seed)?;
    let mut failures = Vec::new();
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            if !r.bounds_hold() {
                failures.push(format!("k = {}: exact tails exceed their bounds", r.k));
            }
            vec![
                r.k.to_string(),
                f(r.upper_exact),
                f(r.upper_bound),
                f(r.upper_mc),
                f(r.upper_se),
                f(r.lower_exact),
                f(r.lower_bound),
                f(r.lower_mc),
                f(r.lower_se),
                r.bounds_hold().to_string(),
            ]
        })
        .collect();
    out.csv(
        "expon.csv",
        &[
            "k",
            "upper_exact",
            "upper_bound",
            "upper_mc",
            "upper_se",
            "lower_exact",
            "lower_bound",
            "lower_mc",
            "lower_se",
            "holds",
        ],
        &rows,
    )?;
    Ok(failures)
}

fn bounds_induction(
    n: usize,
    m: u64,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for &t in t_grid {
        let r = induction_probe(n, m, t, replicas, seed)?;
        if !r.holds() {
            failures.push(format!(
                "t = {t}: lhs {} > rhs {} + 3 se {}",
                r.lhs, r.rhs, r.q_se
            ));
        }
        rows.push(vec![
            r.n.to_string(),
            r.m.to_string(),
            f(r.t),
            f(r.lhs),
            f(r.d_prev),
            f(r.q_mean),
            f(r.q_se),
            f(r.rhs),
            f(r.slack),
            r.replicas.to_string(),
            r.holds().to_string(),
        ]);
    }
    out.csv(
        "induction.csv",
        &[
            "n", "m", "t", "lhs", "d_prev", "q_mean", "q_se", "rhs", "slack", "replicas", "holds",
        ],
        &rows,
    )?;
    Ok(failures)
}

fn bounds_q_terms(n: usize, m: u64, k_grid: &[f64], out: &mut Outputs) -> CliResult<Failures> {
    let schedule = schedule_eval(n, m, ScheduleVariant::for_modulus(m), Constants::default());
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for &k in k_grid {
        let b = q_bound_terms(n, m, k, &schedule)?;
        if b.term_e1 > b.term_e1_bound + INEQUALITY_SLACK {
            failures.push(format!(
                "k = {k}: cycle sum {} exceeds its bound {}",
                b.term_e1, b.term_e1_bound
            ));
        }
        rows.push(vec![
            f(k),
            f(b.term_e1),
            f(b.term_e1_bound),
            f(b.term_p2),
            f(b.term_qi),
            f(b.term_wi),
            f(b.total),
        ]);
    }
    out.json("schedule.json", &schedule)?;
    out.csv(
        "q_terms.csv",
        &[
            "k",
            "term_e1",
            "term_e1_bound",
            "term_p2",
            "term_qi",
            "term_wi",
            "total",
        ],
        &rows,
    )?;
    Ok(failures)
}

#[allow(clippy::too_many_arguments)]
fn projection_tv(
    n: usize,
    m: u64,
    variant: Variant,
    projection: Projection,
    times: &[f64],
    replicas: u64,
    seed: u64,
    out: &mut Outputs,
) -> CliResult<Failures> {
    let base = ChainConfig::new(n, m, variant, 0.0, seed);
    let table = match group_order(n, m) {
        Some(c) if c <= ENUMERATION_CAP => Some(GroupTable::enumerate(n, m)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let est = mc_projection_tv(&base, projection, t, replicas)?;
        let exact = match &table {
            Some(table) => {
                let dist = match variant {
                    Variant::Discrete => distribution_at(table, table.identity_index(), t as u64)?,
                    Variant::Continuous => continuous_distribution(table, t)?.0,
                };
                Some(tv_to_uniform(&table.project(&dist, projection)?))
            }
            None => None,
        };
        rows.push(vec![
            f(t),
            f(est.tv),
            f(est.se),
            est.replicas.to_string(),
            est.cells.to_string(),
            exact.map(f).unwrap_or_default(),
            exact
                .map(|e| ((est.tv - e).abs() <= 3.0 * est.se).to_string())
                .unwrap_or_default(),
        ]);
    }
    out.csv(
        "projection_tv.csv",
        &[
            "t",
            "tv",
            "se",
            "replicas",
            "cells",
            "exact_tv",
            "within_3se",
        ],
        &rows,
    )?;
    Ok(Vec::new())
}
