//! Monte Carlo estimators built on many independent replicas.
//!
//! Replica `r` of a run always draws from stream `r` of the run seed, and
//! replicas are processed in fixed-size chunks whose results are merged in
//! order, so every estimate is independent of the number of worker threads.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma, StudentsT};

use crate::chain::{replica_rng, sample_final_state, ChainConfig, EventLog, Variant};
use crate::error::{Error, Result};
use crate::exact::{
    exact_tv_continuous, group_order, t_mix_exact, tv_to_uniform, GroupTable, ENUMERATION_CAP,
};
use crate::projection::Projection;
use crate::spectral::{conditional_exact_tv, ConditionalSpectrum};

/// Replicas per work unit.
pub const CHUNK: u64 = 1024;
/// Largest projection codomain an empirical distribution may cover.
pub const CODOMAIN_CAP: u64 = 1_000_000;
/// Fewest replicas accepted by the projection estimator.
pub const MIN_REPLICAS: u64 = 1_000;
/// Bootstrap resamples behind every reported standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Stream reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// Run `f` over `0..replicas` in chunks, returning chunk results in order.
pub fn replica_chunks<T, F>(replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
{
    let chunks: Vec<std::ops::Range<u64>> = (0..replicas.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(replicas))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        chunks.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunks.into_iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalDist {
    pub counts: Vec<u64>,
    pub replicas: u64,
}

impl EmpiricalDist {
    pub fn new(cells: usize) -> Self {
        EmpiricalDist {
            counts: vec![0; cells],
            replicas: 0,
        }
    }

    pub fn add(&mut self, cell: usize) {
        self.counts[cell] += 1;
        self.replicas += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalDist) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.replicas += other.replicas;
    }

    pub fn probs(&self) -> Vec<f64> {
        let total = self.replicas.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Plug-in TV to uniform; biased upward by roughly `√(cells / replicas)`.
    pub fn tv_to_uniform(&self) -> f64 {
        tv_to_uniform(&self.probs())
    }

    /// Multinomial resample with the same replica count, drawn as a chain of
    /// conditional binomials.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> EmpiricalDist {
        let mut left = self.replicas;
        let mut mass_left = 1.0;
        let total = self.replicas as f64;
        let mut counts = vec![0; self.counts.len()];
        for (slot, &c) in counts.iter_mut().zip(&self.counts) {
            if left == 0 || c == 0 {
                continue;
            }
            let p = (c as f64 / total / mass_left).clamp(0.0, 1.0);
            let draw = Binomial::new(left, p)
                .expect("valid probability")
                .sample(rng);
            *slot = draw;
            left -= draw;
            mass_left -= c as f64 / total;
        }
        EmpiricalDist {
            counts,
            replicas: self.replicas,
        }
    }

    /// Bootstrap standard error of `stat`.
    pub fn bootstrap_se<R: Rng + ?Sized>(
        &self,
        resamples: usize,
        rng: &mut R,
        stat: impl Fn(&EmpiricalDist) -> f64,
    ) -> f64 {
        let values: Vec<f64> = (0..resamples).map(|_| stat(&self.resample(rng))).collect();
        sample_sd(&values)
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    if k < 2.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / k;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    (
        mean,
        sample_sd(values) / (values.len().max(1) as f64).sqrt(),
    )
}

fn replica_config(base: &ChainConfig, t: f64, r: u64) -> ChainConfig {
    let mut cfg = base.clone().with_stream(r);
    cfg.horizon = t;
    cfg
}

/// Empirical law of a projection of `X_t` over `replicas` runs of `base`
/// (its horizon is replaced by `t`, its stream by the replica index).
pub fn sample_projection(
    base: &ChainConfig,
    projection: Projection,
    t: f64,
    replicas: u64,
) -> Result<EmpiricalDist> {
    let cells = projection.codomain_size(base.n, base.m)?;
    if cells > CODOMAIN_CAP {
        return Err(Error::TooLarge {
            count: cells as u128,
            cap: CODOMAIN_CAP as u128,
        });
    }
    replica_config(base, t, 0).validate()?;
    let parts = replica_chunks(replicas, |range| {
        let mut d = EmpiricalDist::new(cells as usize);
        for r in range {
            let cfg = replica_config(base, t, r);
            let x = sample_final_state(&cfg, &mut cfg.rng());
            d.add(projection.index(&x));
        }
        d
    });
    let mut dist = EmpiricalDist::new(cells as usize);
    for p in &parts {
        dist.merge(p);
    }
    Ok(dist)
}

/// Empirical law of the full state, indexed by `table`.
pub fn sample_states(
    table: &GroupTable,
    base: &ChainConfig,
    t: f64,
    replicas: u64,
) -> Result<EmpiricalDist> {
    if base.n != table.n() || base.m != table.m() {
        return Err(Error::InvalidArgument(
            "configuration does not match the group table".into(),
        ));
    }
    replica_config(base, t, 0).validate()?;
    let parts = replica_chunks(replicas, |range| {
        let mut d = EmpiricalDist::new(table.len());
        for r in range {
            let cfg = replica_config(base, t, r);
            let x = sample_final_state(&cfg, &mut cfg.rng());
            d.add(table.index_of(&x).expect("state of the same group"));
        }
        d
    });
    let mut dist = EmpiricalDist::new(table.len());
    for p in &parts {
        dist.merge(p);
    }
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionTv {
    pub projection: Projection,
    pub t: f64,
    pub tv: f64,
    /// Bootstrap standard error.
    pub se: f64,
    pub replicas: u64,
    pub cells: u64,
}

/// Plug-in TV between the empirical projected law at `t` and uniform, with a
/// bootstrap SE. It estimates a lower bound on the full TV.
pub fn mc_projection_tv(
    base: &ChainConfig,
    projection: Projection,
    t: f64,
    replicas: u64,
) -> Result<ProjectionTv> {
    if replicas < MIN_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    let dist = sample_projection(base, projection, t, replicas)?;
    let mut rng = replica_rng(base.seed, BOOTSTRAP_STREAM);
    let se = dist.bootstrap_se(BOOTSTRAP_RESAMPLES, &mut rng, EmpiricalDist::tv_to_uniform);
    Ok(ProjectionTv {
        projection,
        t,
        tv: dist.tv_to_uniform(),
        se,
        replicas,
        cells: dist.counts.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson goodness of fit of observed counts to `expected_probs`. Cells with
/// expected count below 5 are pooled into one bin.
pub fn chi_squared_test(dist: &EmpiricalDist, expected_probs: &[f64]) -> Result<ChiSquaredTest> {
    if dist.counts.len() != expected_probs.len() {
        return Err(Error::DimensionMismatch(
            dist.counts.len(),
            expected_probs.len(),
        ));
    }
    let total = dist.replicas as f64;
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in dist.counts.iter().zip(expected_probs) {
        let e = p * total;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    if bins < 2 {
        return Err(Error::InvalidArgument(
            "chi-squared test needs at least two bins".into(),
        ));
    }
    let dof = (bins - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    Ok(ChiSquaredTest {
        statistic: stat,
        dof,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponRow {
    pub k: u32,
    /// `P(Σ B_i > 2k)` from the Gamma CDF.
    pub upper_exact: f64,
    /// `(2/e)^k`
    pub upper_bound: f64,
    pub upper_mc: f64,
    pub upper_se: f64,
    /// `P(Σ B_i < k/2)` from the Gamma CDF.
    pub lower_exact: f64,
    /// `(6/7)^k`
    pub lower_bound: f64,
    pub lower_mc: f64,
    pub lower_se: f64,
}

impl ExponRow {
    pub fn bounds_hold(&self) -> bool {
        self.upper_exact <= self.upper_bound && self.lower_exact <= self.lower_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponReport {
    pub trials: u64,
    pub rows: Vec<ExponRow>,
}

impl ExponReport {
    pub fn bounds_hold(&self) -> bool {
        self.rows.iter().all(ExponRow::bounds_hold)
    }
}

/// Tails of a sum of `k` unit exponentials against `(2/e)^k` and `(6/7)^k`,
/// both exactly and by simulation.
pub fn expon_tail_check(k_values: &[u32], trials: u64, seed: u64) -> Result<ExponReport> {
    let unit = Exp::new(1.0).expect("unit rate");
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let kf = k as f64;
        let gamma = Gamma::new(kf, 1.0).expect("positive shape");
        let hits = replica_chunks(trials, |range| {
            let (mut up, mut low) = (0u64, 0u64);
            for r in range {
                let mut rng = replica_rng(seed ^ ((k as u64) << 32), r);
                let s: f64 = (0..k).map(|_| unit.sample(&mut rng)).sum();
                up += (s > 2.0 * kf) as u64;
                low += (s < kf / 2.0) as u64;
            }
            (up, low)
        });
        let (up, low) = hits.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let prop = |h: u64| {
            let p = h as f64 / trials.max(1) as f64;
            (p, (p * (1.0 - p) / trials.max(1) as f64).sqrt())
        };
        let ((upper_mc, upper_se), (lower_mc, lower_se)) = (prop(up), prop(low));
        rows.push(ExponRow {
            k,
            upper_exact: gamma.sf(2.0 * kf),
            upper_bound: (2.0 / std::f64::consts::E).powi(k as i32),
            upper_mc,
            upper_se,
            lower_exact: gamma.cdf(kf / 2.0),
            lower_bound: (6.0f64 / 7.0).powi(k as i32),
            lower_mc,
            lower_se,
        });
    }
    Ok(ExponReport { trials, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InductionReport {
    pub n: usize,
    pub m: u64,
    pub t: f64,
    /// `d_n(t)`, exact.
    pub lhs: f64,
    /// `d_{n-1}(t)`, exact.
    pub d_prev: f64,
    /// Monte Carlo mean of the conditional first-row distance.
    pub q_mean: f64,
    pub q_se: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
    pub replicas: u64,
}

impl InductionReport {
    /// `lhs <= rhs + 3 SE`, allowing for the uniformization error.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.q_se + 1e-12
    }
}

/// Compare `d_n(t)` with `d_{n-1}(t) + E‖q_t - u‖` for the continuous walk,
/// where `q_t` is the first-row law given the rows below.
pub fn induction_probe(
    n: usize,
    m: u64,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<InductionReport> {
    if n < 3 {
        return Err(Error::InvalidDimension(n));
    }
    if replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    let lhs = exact_tv_continuous(n, m, t)?;
    let prev = exact_tv_continuous(n - 1, m, t)?;
    let base = ChainConfig::new(n, m, Variant::Continuous, t, seed);
    base.validate()?;
    let parts = replica_chunks(replicas, |range| {
        range
            .map(|r| {
                let log = EventLog::generate(&base.clone().with_stream(r))?;
                conditional_exact_tv(&ConditionalSpectrum::from_log(&log, t))
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut values = Vec::with_capacity(replicas as usize);
    for p in parts {
        values.extend(p?);
    }
    let (q_mean, q_se) = mean_and_se(&values);
    let rhs = prev.tv + q_mean;
    Ok(InductionReport {
        n,
        m,
        t,
        lhs: lhs.tv,
        d_prev: prev.tv,
        q_mean,
        q_se,
        rhs,
        slack: rhs - lhs.tv,
        replicas,
    })
}

/// Bracket `lo < t_mix <= hi` for the discrete walk's projected distance,
/// found by doubling then bisection on whole steps. Every probe reuses the
/// same seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TmixBracket {
    pub lo: u64,
    pub hi: u64,
    /// Estimate and SE at `hi`.
    pub tv_hi: f64,
    pub se_hi: f64,
    pub probes: u32,
}

pub fn mc_tmix_bracket(
    n: usize,
    m: u64,
    projection: Projection,
    eps: f64,
    replicas: u64,
    seed: u64,
    max_steps: u64,
) -> Result<TmixBracket> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let base = ChainConfig::new(n, m, Variant::Discrete, 0.0, seed);
    let mut probes = 0;
    let mut probe = |t: u64| -> Result<ProjectionTv> {
        probes += 1;
        mc_projection_tv(&base, projection, t as f64, replicas)
    };
    let (mut lo, mut hi) = (0u64, 1u64);
    let mut at_hi = probe(hi)?;
    while at_hi.tv > eps {
        if hi >= max_steps {
            return Err(Error::InvalidArgument(format!(
                "projected distance still above {eps} after {max_steps} steps"
            )));
        }
        lo = hi;
        hi = (hi * 2).min(max_steps);
        at_hi = probe(hi)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let at_mid = probe(mid)?;
        if at_mid.tv > eps {
            lo = mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    Ok(TmixBracket {
        lo,
        hi,
        tv_hi: at_hi.tv,
        se_hi: at_hi.se,
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMethod {
    Exact,
    MonteCarloBracket,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub m: u64,
    pub method: ScalingMethod,
    /// Exact value, or the bracket midpoint.
    pub t_mix: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Half the bracket width for Monte Carlo rows, zero for exact rows.
    pub se: f64,
    pub replicas: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisFit {
    /// `"m"` when `n` is fixed, `"n"` when `m` is fixed.
    pub axis: String,
    pub fixed: u64,
    pub points: usize,
    pub exponent: f64,
    pub intercept: f64,
    pub se: f64,
    /// 95% confidence interval; absent with only two points.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub eps: f64,
    pub rows: Vec<ScalingRow>,
    pub fits: Vec<AxisFit>,
    /// The budget ran out before every grid point was measured.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingBudget {
    pub replicas: u64,
    pub seed: u64,
    pub projection: Projection,
    pub max_steps: u64,
    pub time_limit: Option<Duration>,
}

impl Default for ScalingBudget {
    fn default() -> Self {
        ScalingBudget {
            replicas: 20_000,
            seed: 0,
            projection: Projection::FirstRow,
            max_steps: 1 << 20,
            time_limit: None,
        }
    }
}

/// Ordinary least squares of `log y` on `log x`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64, Option<(f64, f64)>)> {
    let k = xs.len();
    if k < 2 || ys.len() != k {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let kf = k as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / kf, ly.iter().sum::<f64>() / kf);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if k == 2 {
        return Some((slope, intercept, f64::NAN, None));
    }
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (rss / (kf - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, kf - 2.0)
        .expect("positive dof")
        .inverse_cdf(0.975);
    Some((slope, intercept, se, Some((slope - q * se, slope + q * se))))
}

/// `t_mix(eps)` of the discrete walk over a grid of `(n, m)`: exact where the
/// group can be enumerated, otherwise a Monte Carlo bracket for a projection
/// (a lower bound on the full mixing time). Fits a log-log slope along every
/// axis with at least two distinct values.
pub fn scaling_study(
    grid: &[(usize, u64)],
    eps: f64,
    budget: &ScalingBudget,
) -> Result<ScalingStudy> {
    let started = Instant::now();
    let mut rows = Vec::with_capacity(grid.len());
    let mut partial = false;
    for &(n, m) in grid {
        if budget
            .time_limit
            .is_some_and(|limit| started.elapsed() > limit)
        {
            partial = true;
            break;
        }
        let enumerable = group_order(n, m).is_some_and(|c| c <= ENUMERATION_CAP);
        let row = if enumerable {
            let t = t_mix_exact(n, m, eps)? as f64;
            ScalingRow {
                n,
                m,
                method: ScalingMethod::Exact,
                t_mix: t,
                t_lo: t,
                t_hi: t,
                se: 0.0,
                replicas: 0,
                seed: budget.seed,
            }
        } else {
            let b = mc_tmix_bracket(
                n,
                m,
                budget.projection,
                eps,
                budget.replicas,
                budget.seed,
                budget.max_steps,
            )?;
            ScalingRow {
                n,
                m,
                method: ScalingMethod::MonteCarloBracket,
                t_mix: 0.5 * (b.lo + b.hi) as f64,
                t_lo: b.lo as f64,
                t_hi: b.hi as f64,
                se: 0.5 * (b.hi - b.lo) as f64,
                replicas: budget.replicas,
                seed: budget.seed,
            }
        };
        rows.push(row);
    }
    Ok(ScalingStudy {
        eps,
        fits: fit_axes(&rows),
        rows,
        partial,
    })
}

fn fit_axes(rows: &[ScalingRow]) -> Vec<AxisFit> {
    let mut fits = Vec::new();
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut ms: Vec<u64> = rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut push = |axis: &str, fixed: u64, pts: Vec<(f64, f64)>| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if let Some((exponent, intercept, se, ci)) = log_log_fit(&xs, &ys) {
            fits.push(AxisFit {
                axis: axis.into(),
                fixed,
                points: xs.len(),
                exponent,
                intercept,
                se,
                ci,
            });
        }
    };
    for &n in &ns {
        let pts = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| (r.m as f64, r.t_mix))
            .collect();
        push("m", n as u64, pts);
    }
    for &m in &ms {
        let pts = rows
            .iter()
            .filter(|r| r.m == m)
            .map(|r| (r.n as f64, r.t_mix))
            .collect();
        push("n", m, pts);
    }
    fits
}
