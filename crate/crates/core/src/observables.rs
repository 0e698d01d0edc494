//! Processes the mixing argument watches along a single trajectory.
//!
//! For an observable `y` (first coordinate zero), `Z_y^t = X_t y`. Since a
//! ring of clock `r` adds `±row r` to row `r-1`, the column `Z_y` evolves on
//! its own: `Z(r-1) += ±Z(r)`. Every trace here replays an [`EventLog`] with
//! that rule, so it is exact and carries no time discretization.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::chain::EventLog;
use crate::error::{Error, Result};
use crate::modular::{centered, ElementaryMatrix, ResidueVector, Sign, UniUpperMatrix};
use crate::report::CheckReport;
use crate::schedule::Schedule;

fn check_observable(log: &EventLog, y: &ResidueVector) -> Result<()> {
    if y.len() != log.n() {
        return Err(Error::DimensionMismatch(y.len(), log.n()));
    }
    if y.modulus() != log.m() {
        return Err(Error::ModulusMismatch(y.modulus(), log.m()));
    }
    if y.as_slice()[0] != 0 {
        return Err(Error::NonzeroFirstCoordinate);
    }
    Ok(())
}

fn check_row(i: usize, lo: usize, n: usize) -> Result<()> {
    if i < lo || i > n {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo,
            hi: n,
        });
    }
    Ok(())
}

fn signed_add(a: u64, b: u64, sign: Sign, m: u64) -> u64 {
    match sign {
        Sign::Plus => (a + b) % m,
        Sign::Minus => (a + m - b) % m,
    }
}

/// Piecewise-constant trace of `Z_y^t(i)`; `changes` holds `(time, new value)`
/// at every time the value actually changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTrace {
    pub y: Vec<u64>,
    pub modulus: u64,
    pub row: usize,
    pub horizon: f64,
    pub initial: u64,
    pub changes: Vec<(f64, u64)>,
}

impl ZTrace {
    pub fn value_at(&self, t: f64) -> u64 {
        let k = self.changes.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            self.initial
        } else {
            self.changes[k - 1].1
        }
    }

    /// Value just before `t`.
    pub fn value_before(&self, t: f64) -> u64 {
        let k = self.changes.partition_point(|&(s, _)| s < t);
        if k == 0 {
            self.initial
        } else {
            self.changes[k - 1].1
        }
    }

    /// Constant pieces `(start, end, value)` tiling `[0, horizon]`.
    pub fn segments(&self) -> Vec<(f64, f64, u64)> {
        let mut out = Vec::with_capacity(self.changes.len() + 1);
        let mut start = 0.0;
        let mut value = self.initial;
        for &(t, v) in &self.changes {
            out.push((start, t, value));
            start = t;
            value = v;
        }
        out.push((start, self.horizon, value));
        out
    }

    /// First time the value is nonzero, `+∞` if it never is within the horizon.
    pub fn hitting_time(&self) -> f64 {
        if self.initial != 0 {
            return 0.0;
        }
        self.changes
            .iter()
            .find(|&&(_, v)| v != 0)
            .map_or(f64::INFINITY, |&(t, _)| t)
    }

    /// Lebesgue measure of `{t ∈ [a, b] : Z ≠ 0}`.
    pub fn nonzero_measure(&self, a: f64, b: f64) -> f64 {
        self.segments()
            .into_iter()
            .filter(|&(_, _, v)| v != 0)
            .map(|(s, e, _)| (e.min(b) - s.max(a)).max(0.0))
            .sum()
    }
}

/// Full column `Z_y^t = X_t y` with per-coordinate change points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorTrace {
    pub modulus: u64,
    pub horizon: f64,
    pub initial: Vec<u64>,
    /// `(time, coordinate (1-based), new value)`.
    pub changes: Vec<(f64, usize, u64)>,
}

impl VectorTrace {
    pub fn value_at(&self, t: f64) -> ResidueVector {
        let mut v = self.initial.clone();
        for &(_, i, val) in self.changes.iter().take_while(|c| c.0 <= t) {
            v[i - 1] = val;
        }
        ResidueVector::new(v, self.modulus).expect("reduced values")
    }

    /// Scalar trace of one coordinate.
    pub fn coordinate(&self, i: usize, y: &ResidueVector) -> ZTrace {
        ZTrace {
            y: y.as_slice().to_vec(),
            modulus: self.modulus,
            row: i,
            horizon: self.horizon,
            initial: self.initial[i - 1],
            changes: self
                .changes
                .iter()
                .filter(|c| c.1 == i)
                .map(|&(t, _, v)| (t, v))
                .collect(),
        }
    }
}

/// Replay `Z = X y` for coordinates `lo..=n`.
fn track_column(log: &EventLog, y: &ResidueVector, lo: usize) -> VectorTrace {
    let m = log.m();
    let z0 = log.start_state().mul_vec(y).expect("checked shape");
    let mut z = z0.as_slice().to_vec();
    let mut changes = Vec::new();
    for ev in &log.events {
        let Some(sign) = ev.sign else { continue };
        let target = ev.row - 1;
        if target < lo {
            continue;
        }
        let new = signed_add(z[target - 1], z[ev.row - 1], sign, m);
        if new != z[target - 1] {
            z[target - 1] = new;
            changes.push((ev.time, target, new));
        }
    }
    VectorTrace {
        modulus: m,
        horizon: log.horizon(),
        initial: z0.as_slice().to_vec(),
        changes,
    }
}

/// Exact trace of `Z_y^t(i) = X_t(i) · y`. Only rows `>= i` are replayed.
pub fn track_z(log: &EventLog, y: &ResidueVector, i: usize) -> Result<ZTrace> {
    check_observable(log, y)?;
    check_row(i, 1, log.n())?;
    Ok(track_column(log, y, i).coordinate(i, y))
}

/// Exact trace of the full column `X_t y`.
pub fn track_z_vector(log: &EventLog, y: &ResidueVector) -> Result<VectorTrace> {
    check_observable(log, y)?;
    Ok(track_column(log, y, 1))
}

/// `T_i`: first time `Z_y^t(i) ≠ 0`, `+∞` if never within the horizon.
pub fn hitting_time(log: &EventLog, y: &ResidueVector, i: usize) -> Result<f64> {
    Ok(track_z(log, y, i)?.hitting_time())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Zero,
    Nonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub kind: IntervalKind,
    pub start: f64,
    pub end: f64,
    /// The interval is cut by the horizon, or starts at time 0 rather than at
    /// a transition.
    pub censored: bool,
}

impl IntervalRecord {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Alternating zero / nonzero intervals of the trace tiling `[T, horizon]`,
/// where `T` is the hitting time. Empty if the trace never leaves zero.
pub fn detect_intervals(trace: &ZTrace) -> Vec<IntervalRecord> {
    let t_hit = trace.hitting_time();
    if !t_hit.is_finite() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = t_hit;
    let mut kind = IntervalKind::Nonzero;
    let mut left_censored = t_hit == 0.0;
    for &(t, v) in trace.changes.iter().filter(|c| c.0 > t_hit) {
        let next = if v == 0 {
            IntervalKind::Zero
        } else {
            IntervalKind::Nonzero
        };
        if next != kind {
            out.push(IntervalRecord {
                kind,
                start,
                end: t,
                censored: left_censored,
            });
            start = t;
            kind = next;
            left_censored = false;
        }
    }
    out.push(IntervalRecord {
        kind,
        start,
        end: trace.horizon,
        censored: true,
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodInterval {
    pub start: f64,
    pub end: f64,
    pub nonzero_measure: f64,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodIntervalReport {
    pub l: f64,
    pub g: f64,
    pub t0: f64,
    /// `1/10 + 9/(10 g)`.
    pub good_fraction_x: f64,
    pub intervals: Vec<GoodInterval>,
    /// `M_y^t` after each interval.
    pub good_counts: Vec<usize>,
}

impl GoodIntervalReport {
    pub fn fraction_good(&self) -> f64 {
        if self.intervals.is_empty() {
            return 0.0;
        }
        self.good_counts.last().copied().unwrap_or(0) as f64 / self.intervals.len() as f64
    }

    /// Good intervals completed by time `t`.
    pub fn good_by(&self, t: f64) -> usize {
        let k = self.intervals.partition_point(|iv| iv.end <= t);
        if k == 0 {
            0
        } else {
            self.good_counts[k - 1]
        }
    }
}

/// Split `[t0, horizon]` into windows `[t0 + jL, t0 + (j+1)L]` and flag the
/// ones where the trace is nonzero for at least `L/g` of the time.
pub fn good_intervals_with(trace: &ZTrace, l: f64, g: f64, t0: f64) -> Result<GoodIntervalReport> {
    if !(l > 0.0) || !(g > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need L > 0 and g > 0, got L = {l}, g = {g}"
        )));
    }
    let needed = t0 + 2.0 * l;
    if trace.horizon < needed {
        return Err(Error::HorizonTooShort {
            horizon: trace.horizon,
            needed,
        });
    }
    let count = ((trace.horizon - t0) / l).floor() as usize;
    let mut intervals = Vec::with_capacity(count);
    let mut good_counts = Vec::with_capacity(count);
    let mut seen = 0;
    for j in 0..count {
        let start = t0 + j as f64 * l;
        let end = start + l;
        let nonzero_measure = trace.nonzero_measure(start, end);
        let good = nonzero_measure >= l / g;
        seen += good as usize;
        intervals.push(GoodInterval {
            start,
            end,
            nonzero_measure,
            good,
        });
        good_counts.push(seen);
    }
    Ok(GoodIntervalReport {
        l,
        g,
        t0,
        good_fraction_x: 0.1 + 0.9 / g,
        intervals,
        good_counts,
    })
}

/// Good intervals with `L`, `g` and `t₀` taken from the schedule. The trace
/// should be on row `I` of the schedule.
pub fn good_intervals(trace: &ZTrace, schedule: &Schedule) -> Result<GoodIntervalReport> {
    good_intervals_with(trace, schedule.interval_length(), schedule.g, schedule.t0)
}

/// Whether `Z_y(2)` is read just before or just after a row-2 ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingEval {
    #[default]
    Pre,
    Post,
}

/// `A^t_{y,x}`: row-2 rings `s <= t` with `|Z_y^s(2)| > x` in centered
/// magnitude.
pub fn ring_counter_a(
    log: &EventLog,
    y: &ResidueVector,
    x: u64,
    t: f64,
    eval: RingEval,
) -> Result<u64> {
    check_observable(log, y)?;
    let m = log.m();
    if x > m / 2 {
        return Err(Error::InvalidArgument(format!(
            "threshold {x} exceeds floor(m/2) = {}",
            m / 2
        )));
    }
    let z0 = log.start_state().mul_vec(y)?;
    let mut z = z0.as_slice().to_vec();
    let mut count = 0;
    for ev in log.events.iter().take_while(|e| e.time <= t) {
        let Some(sign) = ev.sign else { continue };
        let is_ring = ev.row == 2;
        if is_ring && eval == RingEval::Pre && centered(z[1], m) > x {
            count += 1;
        }
        z[ev.row - 2] = signed_add(z[ev.row - 2], z[ev.row - 1], sign, m);
        if is_ring && eval == RingEval::Post && centered(z[1], m) > x {
            count += 1;
        }
    }
    Ok(count)
}

fn event_matrix(row: usize, sign: Sign, n: usize, m: u64) -> UniUpperMatrix {
    ElementaryMatrix::new(row - 1, row, sign)
        .and_then(|e| e.to_group(n, m))
        .expect("valid event row")
}

/// Check the decomposition
/// `Z_y^t = Y_{0,t} Z_y^0 + Σ_{s_k <= t} a_k Y_{s_k,t} E(I-1,I) Y_{0,s_k} Z_y^0`,
/// where `s_k` are the rings of clock `I` with `Z_y(I) ≠ 0` and `Y_{t',t}` is
/// the product of all other updates in `(t', t]`.
///
/// `Y_{t',t}` is built as `Y_{T-t}^{-1} Y_{T-t'}` from the backwards process
/// `Y_u` (updates in `(T-u, T]`, latest leftmost). Also checked: that this
/// agrees with the directly accumulated forward product, that the
/// `[1, I-1] × [I, n]` block of every backwards product is zero, and the
/// scalar identity for `Z_y^t(2)`.
pub fn backwards_identity_check(
    log: &EventLog,
    y: &ResidueVector,
    big_i: usize,
) -> Result<CheckReport> {
    check_observable(log, y)?;
    let (n, m) = (log.n(), log.m());
    check_row(big_i, 2, n)?;
    let mut report = CheckReport::new(format!("backwards decomposition (I = {big_i})"));

    // forward pass: qualifying rings, true Z at check times, forward products
    let mut x = log.start_state();
    let z0 = x.mul_vec(y)?;
    let mut forward = UniUpperMatrix::identity(n, m)?;
    let mut rings: Vec<(f64, Sign)> = Vec::new();
    let mut checks: Vec<(f64, ResidueVector, UniUpperMatrix)> =
        vec![(0.0, z0.clone(), forward.clone())];
    for (idx, ev) in log.events.iter().enumerate() {
        let Some(sign) = ev.sign else { continue };
        if ev.row == big_i {
            if x.row(big_i).dot(y)?.value() != 0 {
                rings.push((ev.time, sign));
            }
        } else {
            forward = event_matrix(ev.row, sign, n, m).mul(&forward)?;
        }
        ev.apply(&mut x);
        let last = rings.last().is_some_and(|r| r.0 == ev.time);
        if last || idx % 5 == 4 {
            checks.push((ev.time, x.mul_vec(y)?, forward.clone()));
        }
    }
    checks.push((log.horizon(), x.mul_vec(y)?, forward.clone()));

    // backwards pass: B(t) = product of non-I updates in (t, T]
    let mut wanted: Vec<f64> = checks.iter().map(|c| c.0).collect();
    wanted.sort_by(|a, b| b.total_cmp(a));
    wanted.dedup();
    let mut backward = UniUpperMatrix::identity(n, m)?;
    let mut table: Vec<(f64, UniUpperMatrix)> = Vec::with_capacity(wanted.len());
    let mut evs = log.events.iter().rev().peekable();
    for &t in &wanted {
        while let Some(ev) = evs.next_if(|e| e.time > t) {
            let Some(sign) = ev.sign else { continue };
            if ev.row == big_i {
                continue;
            }
            backward = backward.mul(&event_matrix(ev.row, sign, n, m))?;
            report.record(backward.block_is_zero(1..=big_i - 1, big_i..=n), || {
                format!(
                    "nonzero block in backwards product after update at {}",
                    ev.time
                )
            });
        }
        table.push((t, backward.clone()));
    }
    let b_at = |t: f64| -> &UniUpperMatrix {
        &table
            .iter()
            .find(|(s, _)| *s == t)
            .expect("tabulated time")
            .1
    };
    let b0 = b_at(0.0);
    let y_between = |s: f64, t: f64| -> Result<UniUpperMatrix> { b_at(t).inverse().mul(b_at(s)) };

    for (t, z_true, fwd) in &checks {
        let y0t = b_at(*t).inverse().mul(b0)?;
        report.record(&y0t == fwd, || {
            format!("Y_(0,t) differs from the forward product at t = {t}")
        });
        let mut rhs = y0t.mul_vec(&z0)?;
        for &(s, a) in rings.iter().take_while(|r| r.0 <= *t) {
            let inner = y_between(0.0, s)?.mul_vec(&z0)?;
            let kicked = ElementaryMatrix::new(big_i - 1, big_i, a)?.apply_raw(&inner);
            rhs = rhs.add(&y_between(s, *t)?.mul_vec(&kicked)?);
        }
        report.record(&rhs == z_true, || {
            format!("vector identity fails at t = {t}")
        });
        report.record(rhs.as_slice()[1] == z_true.as_slice()[1], || {
            format!("second coordinate fails at t = {t}")
        });
    }
    Ok(report)
}

/// Trace of the corner entry `X_t(1, n)`.
pub fn corner_process(log: &EventLog) -> ZTrace {
    let y = ResidueVector::unit(log.n(), log.n(), log.m()).expect("valid shape");
    track_column(log, &y, 1).coordinate(1, &y)
}

/// Trace of the last column `X_t e_n` (the East-model projection).
pub fn east_column(log: &EventLog) -> VectorTrace {
    let y = ResidueVector::unit(log.n(), log.n(), log.m()).expect("valid shape");
    track_column(log, &y, 1)
}

/// Integer value that widens to a big integer once `i128` would overflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntValue {
    Small(i128),
    Big(BigInt),
}

impl IntValue {
    pub fn to_bigint(&self) -> BigInt {
        match self {
            IntValue::Small(v) => BigInt::from(*v),
            IntValue::Big(v) => v.clone(),
        }
    }

    pub fn abs_f64(&self) -> f64 {
        match self {
            IntValue::Small(v) => v.unsigned_abs() as f64,
            IntValue::Big(v) => {
                let (_, digits) = v.to_u64_digits();
                digits
                    .iter()
                    .rev()
                    .fold(0.0, |acc, &d| acc * 18446744073709551616.0 + d as f64)
            }
        }
    }
}

/// Last column of the walk computed over `Z` (no reduction mod `m`),
/// starting from `e_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOverZ {
    pub horizon: f64,
    pub initial: Vec<IntValue>,
    /// `(time, coordinate (1-based), new value)`.
    pub changes: Vec<(f64, usize, IntValue)>,
}

impl ColumnOverZ {
    pub fn n(&self) -> usize {
        self.initial.len()
    }

    pub fn value_at(&self, t: f64) -> Vec<BigInt> {
        let mut v: Vec<BigInt> = self.initial.iter().map(IntValue::to_bigint).collect();
        for (_, i, val) in self.changes.iter().take_while(|c| c.0 <= t) {
            v[i - 1] = val.to_bigint();
        }
        v
    }

    /// `max_{s <= x, 1 <= i <= k} |Z_s(n - i)|`.
    pub fn max_abs(&self, x: f64, k: usize) -> f64 {
        let n = self.n();
        let lo = n.saturating_sub(k).max(1);
        let initial = self.initial[lo - 1..n - 1].iter().map(IntValue::abs_f64);
        let later = self
            .changes
            .iter()
            .take_while(|c| c.0 <= x)
            .filter(|c| c.1 >= lo && c.1 < n)
            .map(|c| c.2.abs_f64());
        initial.chain(later).fold(0.0, f64::max)
    }
}

enum IntColumn {
    Small(Vec<i128>),
    Big(Vec<BigInt>),
}

/// Column process over `Z` from `e_n`.
pub fn column_over_z(log: &EventLog) -> ColumnOverZ {
    let mut start = vec![0i128; log.n()];
    start[log.n() - 1] = 1;
    column_over_z_from(log, &start)
}

/// Column process over `Z` from an arbitrary integer start.
pub fn column_over_z_from(log: &EventLog, start: &[i128]) -> ColumnOverZ {
    let mut col = IntColumn::Small(start.to_vec());
    let mut changes = Vec::new();
    for ev in &log.events {
        let Some(sign) = ev.sign else { continue };
        let (dst, src) = (ev.row - 2, ev.row - 1);
        if let IntColumn::Small(v) = &mut col {
            let new = match sign {
                Sign::Plus => v[dst].checked_add(v[src]),
                Sign::Minus => v[dst].checked_sub(v[src]),
            };
            match new {
                Some(val) => {
                    if val != v[dst] {
                        v[dst] = val;
                        changes.push((ev.time, dst + 1, IntValue::Small(val)));
                    }
                    continue;
                }
                None => col = IntColumn::Big(v.iter().map(|&a| BigInt::from(a)).collect()),
            }
        }
        if let IntColumn::Big(v) = &mut col {
            let delta = v[src].clone();
            if delta != BigInt::ZERO {
                match sign {
                    Sign::Plus => v[dst] += delta,
                    Sign::Minus => v[dst] -= delta,
                }
                changes.push((ev.time, dst + 1, IntValue::Big(v[dst].clone())));
            }
        }
    }
    ColumnOverZ {
        horizon: log.horizon(),
        initial: start.iter().map(|&a| IntValue::Small(a)).collect(),
        changes,
    }
}

/// `θ_k`: the largest mass any set of at most `k` points carries, i.e. the
/// sum of the `k` largest point masses.
pub fn theta_k(masses: &[f64], k: usize) -> Result<f64> {
    if k > masses.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the support size {}",
            masses.len()
        )));
    }
    let mut sorted = masses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{count_row2_rings, ChainConfig, Variant};

    fn log(n: usize, m: u64, horizon: f64, seed: u64, stream: u64) -> EventLog {
        EventLog::generate(
            &ChainConfig::new(n, m, Variant::Continuous, horizon, seed).with_stream(stream),
        )
        .unwrap()
    }

    fn unit(n: usize, k: usize, m: u64) -> ResidueVector {
        ResidueVector::unit(n, k, m).unwrap()
    }

    /// Fraction of `hits` out of `total` and its standard error.
    fn proportion(hits: usize, total: usize) -> (f64, f64) {
        let p = hits as f64 / total as f64;
        (p, (p * (1.0 - p) / total as f64).sqrt())
    }

    #[test]
    fn trivial_traces() {
        let l = log(4, 5, 10.0, 1, 0);
        for i in 1..4 {
            assert_eq!(track_z(&l, &unit(4, 4, 5), i).unwrap().initial, 0);
        }
        assert_eq!(track_z(&l, &unit(4, 4, 5), 4).unwrap().initial, 1);
        let diag = track_z(&l, &unit(4, 2, 5), 2).unwrap();
        assert_eq!(diag.initial, 1);
        assert!(diag.changes.is_empty());
        assert_eq!(hitting_time(&l, &unit(4, 4, 5), 4).unwrap(), 0.0);
        assert!(track_z(&l, &ResidueVector::new(vec![1, 0, 0, 0], 5).unwrap(), 2).is_err());
        assert!(track_z(&l, &unit(4, 4, 5), 5).is_err());
    }

    #[test]
    fn trace_matches_brute_force_replay() {
        for stream in 0..30 {
            let (n, m) = (3 + stream as usize % 3, [3, 5, 8][stream as usize % 3]);
            let l = log(n, m, 15.0, 2, stream);
            let coords: Vec<u64> = (0..n)
                .map(|k| {
                    if k == 0 {
                        0
                    } else {
                        (k as u64 * 7 + stream) % m
                    }
                })
                .collect();
            let y = ResidueVector::new(coords, m).unwrap();
            let traces: Vec<ZTrace> = (1..=n).map(|i| track_z(&l, &y, i).unwrap()).collect();
            let column = track_z_vector(&l, &y).unwrap();
            let times: Vec<f64> = (0..100).map(|q| q as f64 * 0.15).collect();
            for (t, x) in times.iter().zip(l.states_at(&times).unwrap()) {
                for i in 1..=n {
                    let expected = x.row(i).dot(&y).unwrap().value();
                    assert_eq!(traces[i - 1].value_at(*t), expected);
                }
                assert_eq!(column.value_at(*t), x.mul_vec(&y).unwrap());
            }
        }
    }

    fn second_row_hitting_times(n: usize, m: u64, horizon: f64, replicas: u64) -> Vec<f64> {
        (0..replicas)
            .map(|r| hitting_time(&log(n, m, horizon, 3, r), &unit(n, n, m), 2).unwrap())
            .collect()
    }

    #[test]
    fn second_row_hitting_time_is_exponential_for_n3() {
        // Z(3) = 1 forever, so Z(2) leaves 0 at the first ring of clock 3
        let replicas = 10_000;
        for m in [3u64, 5] {
            let times = second_row_hitting_times(3, m, 6.0, replicas);
            for s in [0.5, 1.0, 2.0, 3.0] {
                let hits = times.iter().filter(|&&t| t > s).count();
                let (p, se) = proportion(hits, replicas as usize);
                assert!(
                    (p - (-s as f64).exp()).abs() < 3.0 * se.max(1e-3),
                    "m={m} s={s}: {p}"
                );
            }
        }
    }

    #[test]
    fn second_row_hitting_time_is_dominated_by_biased_walk() {
        // The top nonzero coordinate of Z climbs one row at rate 1 and drops
        // back one row at rate at most 1/2 (m odd), so T₂ is stochastically
        // below the time a walk with those rates needs to climb n-2 levels.
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp};
        let replicas = 10_000u64;
        let clock = Exp::new(1.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for n in 4..=6 {
            let times = second_row_hitting_times(n, 5, n as f64 + 3.0, replicas);
            let walk: Vec<f64> = (0..replicas)
                .map(|_| {
                    let (mut level, mut t) = (0i64, 0.0);
                    while level < n as i64 - 2 {
                        t += clock.sample(&mut rng);
                        level += if rand::Rng::random_bool(&mut rng, 2.0 / 3.0) {
                            1
                        } else {
                            -1
                        };
                    }
                    t
                })
                .collect();
            for c in [1.0, 2.0, 3.0] {
                let s = n as f64 - 1.0 + c;
                let (p, se) =
                    proportion(times.iter().filter(|&&t| t > s).count(), replicas as usize);
                let (q, se_q) =
                    proportion(walk.iter().filter(|&&t| t > s).count(), replicas as usize);
                assert!(
                    p <= q + 3.0 * (se * se + se_q * se_q).sqrt(),
                    "n={n} c={c}: {p} vs {q}"
                );
            }
        }
    }

    #[test]
    fn second_row_hitting_tail_exceeds_unit_exponential_at_n5() {
        // returns of Z(n-1) to zero keep P(T₂ > n-1+c) above e^{-c} here
        let replicas = 10_000;
        let times = second_row_hitting_times(5, 5, 8.0, replicas);
        let (p, se) = proportion(
            times.iter().filter(|&&t| t > 6.0).count(),
            replicas as usize,
        );
        assert!(p > (-2.0f64).exp() + 3.0 * se, "{p}");
    }

    #[test]
    fn intervals_tile_after_hitting_time() {
        for stream in 0..50 {
            let l = log(4, 3, 40.0, 5, stream);
            let trace = track_z(&l, &unit(4, 4, 3), 2).unwrap();
            let ivs = detect_intervals(&trace);
            let t2 = trace.hitting_time();
            if !t2.is_finite() {
                assert!(ivs.is_empty());
                continue;
            }
            assert_eq!(ivs[0].start, t2);
            assert_eq!(ivs[0].kind, IntervalKind::Nonzero);
            for w in ivs.windows(2) {
                assert_eq!(w[0].end, w[1].start);
                assert_ne!(w[0].kind, w[1].kind);
                assert!(!w[0].censored || w[0].start == 0.0);
            }
            assert_eq!(ivs.last().unwrap().end, 40.0);
            let total: f64 = ivs.iter().map(IntervalRecord::length).sum();
            assert!((total - (40.0 - t2)).abs() < 1e-9);
            for iv in &ivs {
                let mid = 0.5 * (iv.start + iv.end);
                assert_eq!(trace.value_at(mid) == 0, iv.kind == IntervalKind::Zero);
                if iv.kind == IntervalKind::Zero {
                    assert_ne!(trace.value_before(iv.start), 0);
                }
            }
        }
    }

    #[test]
    fn diagonal_trace_is_one_nonzero_interval() {
        let l = log(3, 4, 10.0, 1, 0);
        let ivs = detect_intervals(&track_z(&l, &unit(3, 2, 4), 2).unwrap());
        assert_eq!(ivs.len(), 1);
        assert_eq!(ivs[0].kind, IntervalKind::Nonzero);
        assert_eq!((ivs[0].start, ivs[0].end), (0.0, 10.0));
    }

    fn pooled_intervals(n: usize, m: u64, kind: IntervalKind, replicas: u64) -> Vec<f64> {
        let mut out = Vec::new();
        for r in 0..replicas {
            let l = log(n, m, 200.0, 6, r);
            let trace = track_z(&l, &unit(n, n, m), 2).unwrap();
            out.extend(
                detect_intervals(&trace)
                    .into_iter()
                    .filter(|iv| iv.kind == kind && !iv.censored)
                    .map(|iv| iv.length()),
            );
        }
        out
    }

    #[test]
    fn zero_interval_tail() {
        for m in [3u64, 5, 7] {
            let lengths = pooled_intervals(4, m, IntervalKind::Zero, 300);
            assert!(lengths.len() > 1000);
            for k in [1.0, 2.0] {
                let hits = lengths.iter().filter(|&&v| v > 13.0 * k).count();
                let (p, se) = proportion(hits, lengths.len());
                assert!(p <= (-k).exp() + 3.0 * se, "m={m} k={k}: {p}");
            }
        }
    }

    #[test]
    fn nonzero_intervals_outlast_a_unit_clock() {
        // a nonzero stretch of Z(2) ends only at a ring of clock 3, so its
        // length dominates an exponential(1) time
        for m in [3u64, 4, 5] {
            let lengths = pooled_intervals(4, m, IntervalKind::Nonzero, 300);
            assert!(lengths.len() > 1000);
            for k in [0.25, 0.5, 1.0, 2.0] {
                let hits = lengths.iter().filter(|&&v| v <= k).count();
                let (p, se) = proportion(hits, lengths.len());
                assert!(p <= 1.0 - (-k).exp() + 3.0 * se, "m={m} k={k}: {p}");
            }
        }
    }

    #[test]
    fn good_interval_extremes() {
        let l = log(4, 5, 30.0, 8, 0);
        let always = track_z(&l, &unit(4, 2, 5), 2).unwrap();
        let rep = good_intervals_with(&always, 5.0, 15.0, 4.0).unwrap();
        assert_eq!(rep.intervals.len(), 5);
        assert!(rep
            .intervals
            .iter()
            .all(|iv| iv.good && (iv.nonzero_measure - 5.0).abs() < 1e-12));
        assert_eq!(rep.fraction_good(), 1.0);
        let never = track_z(&l, &unit(4, 3, 5), 4).unwrap();
        let rep = good_intervals_with(&never, 5.0, 15.0, 4.0).unwrap();
        assert!(rep.intervals.iter().all(|iv| !iv.good));
        assert_eq!(rep.good_by(30.0), 0);
        assert!(matches!(
            good_intervals_with(&never, 20.0, 15.0, 4.0),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn good_counts_are_nondecreasing_and_match_flags() {
        for stream in 0..20 {
            let l = log(5, 5, 120.0, 9, stream);
            let trace = track_z(&l, &unit(5, 5, 5), 3).unwrap();
            let rep = good_intervals_with(&trace, 4.0, 15.0, 5.0).unwrap();
            let mut seen = 0;
            for (iv, &c) in rep.intervals.iter().zip(&rep.good_counts) {
                seen += iv.good as usize;
                assert_eq!(c, seen);
                // brute-force measure on a fine grid of segment endpoints
                let direct: f64 = trace
                    .segments()
                    .iter()
                    .filter(|s| s.2 != 0)
                    .map(|s| (s.1.min(iv.end) - s.0.max(iv.start)).max(0.0))
                    .sum();
                assert!((direct - iv.nonzero_measure).abs() < 1e-12);
            }
            assert!(rep.good_counts.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn good_intervals_use_schedule() {
        use crate::schedule::{schedule_eval, Constants, ScheduleVariant};
        let s = schedule_eval(5, 5, ScheduleVariant::Prime, Constants::default());
        let horizon = s.t0 + 10.0 * s.interval_length();
        let l = log(5, 5, horizon, 10, 0);
        let y = ResidueVector::new(vec![0, 1, 2, 3, 4], 5).unwrap();
        let trace = track_z(&l, &y, s.big_i).unwrap();
        let rep = good_intervals(&trace, &s).unwrap();
        assert_eq!(rep.intervals.len(), 10);
        assert_eq!(rep.g, 15.0);
        assert!((rep.good_fraction_x - s.good_fraction_x).abs() < 1e-15);
    }

    #[test]
    fn ring_counter_edges() {
        let l = log(4, 7, 30.0, 11, 0);
        let y = ResidueVector::new(vec![0, 3, 1, 5], 7).unwrap();
        assert_eq!(ring_counter_a(&l, &y, 3, 30.0, RingEval::Pre).unwrap(), 0);
        assert!(ring_counter_a(&l, &y, 4, 30.0, RingEval::Pre).is_err());
        let diag = unit(4, 2, 7);
        assert_eq!(
            ring_counter_a(&l, &diag, 0, 30.0, RingEval::Pre).unwrap() as usize,
            count_row2_rings(&l, 30.0)
        );
    }

    #[test]
    fn ring_counter_matches_state_replay() {
        for stream in 0..40 {
            let (n, m) = (3 + stream as usize % 3, [5u64, 6, 9][stream as usize % 3]);
            let l = log(n, m, 25.0, 12, stream);
            let coords: Vec<u64> = (0..n)
                .map(|k| {
                    if k == 0 {
                        0
                    } else {
                        (3 * k as u64 + stream) % m
                    }
                })
                .collect();
            let y = ResidueVector::new(coords, m).unwrap();
            for x in 0..=m / 2 {
                let mut state = l.start_state();
                let mut expected = 0;
                for ev in &l.events {
                    if ev.row == 2 && ev.sign.is_some() && ev.time <= 20.0 {
                        expected += state.row(2).dot(&y).unwrap().exceeds(x) as u64;
                    }
                    ev.apply(&mut state);
                }
                let pre = ring_counter_a(&l, &y, x, 20.0, RingEval::Pre).unwrap();
                assert_eq!(pre, expected);
                // a row-2 ring edits row 1 only, so Z(2) is the same on both sides
                assert_eq!(
                    ring_counter_a(&l, &y, x, 20.0, RingEval::Post).unwrap(),
                    pre
                );
            }
        }
    }

    #[test]
    fn ring_counter_monotone() {
        let l = log(4, 9, 40.0, 13, 0);
        let y = ResidueVector::new(vec![0, 2, 7, 1], 9).unwrap();
        for x in 0..=4 {
            let mut prev = 0;
            for t in 0..=40 {
                let a = ring_counter_a(&l, &y, x, t as f64, RingEval::Pre).unwrap();
                assert!(a >= prev);
                prev = a;
                if x > 0 {
                    assert!(a <= ring_counter_a(&l, &y, x - 1, t as f64, RingEval::Pre).unwrap());
                }
            }
        }
    }

    #[test]
    fn backwards_identity_holds() {
        for (n, m) in [(4usize, 3u64), (4, 5), (5, 3), (5, 5)] {
            for r in 0..200 {
                let l = log(n, m, 8.0, 14, r);
                let coords: Vec<u64> = (0..n)
                    .map(|k| if k == 0 { 0 } else { (k as u64 * 2 + r) % m })
                    .collect();
                let y = ResidueVector::new(coords, m).unwrap();
                for big_i in 2..=n {
                    let rep = backwards_identity_check(&l, &y, big_i).unwrap();
                    assert!(rep.passed(), "{rep}");
                    assert!(rep.checks > 0);
                }
            }
        }
    }

    #[test]
    fn backwards_identity_without_qualifying_rings() {
        // y = e_2 and I = 4: Z(4) = 0 throughout, so the sum is empty
        let l = log(4, 5, 10.0, 15, 0);
        let y = unit(4, 2, 5);
        assert!(track_z(&l, &y, 4).unwrap().changes.is_empty());
        assert!(backwards_identity_check(&l, &y, 4).unwrap().passed());
        assert!(backwards_identity_check(&l, &y, 1).is_err());
    }

    #[test]
    fn corner_trivia() {
        let l = log(3, 7, 10.0, 16, 0);
        assert_eq!(corner_process(&l).initial, 0);
        let l2 = log(2, 7, 30.0, 16, 1);
        let corner = corner_process(&l2);
        let mut walk = 0i64;
        for ev in &l2.events {
            walk += ev.sign.unwrap().as_i64();
            assert_eq!(corner.value_at(ev.time), walk.rem_euclid(7) as u64);
        }
    }

    #[test]
    fn east_column_trivia() {
        let l = log(4, 5, 20.0, 17, 0);
        let col = east_column(&l);
        assert_eq!(col.initial, vec![0, 0, 0, 1]);
        assert!(col.changes.iter().all(|c| c.1 < 4));
    }

    #[test]
    fn east_bottom_entry_heat_kernel() {
        // entry (n-1, n) is the rate-1 ±1 walk: E cos(2πaZ/m) = e^{-t(1-cos 2πa/m)}
        let (n, m, t, replicas) = (3usize, 7u64, 1.5, 40_000u64);
        let values: Vec<u64> = (0..replicas)
            .map(|r| east_column(&log(n, m, t, 18, r)).value_at(t).as_slice()[n - 2])
            .collect();
        for a in 1..m {
            let w = 2.0 * std::f64::consts::PI * a as f64 / m as f64;
            let emp = values.iter().map(|&v| (w * v as f64).cos()).sum::<f64>() / replicas as f64;
            let exact = (-t * (1.0 - w.cos())).exp();
            assert!(
                (emp - exact).abs() < 4.0 / (replicas as f64).sqrt(),
                "a={a}"
            );
        }
    }

    #[test]
    fn column_over_z_basics() {
        let (n, t, replicas) = (4usize, 6.0, 20_000u64);
        let mut sum_sq = 0.0;
        let mut rings = 0.0;
        for r in 0..replicas {
            let l = log(n, 3, t, 19, r);
            let col = column_over_z(&l);
            let v = col.value_at(t);
            assert_eq!(v[n - 1], BigInt::from(1));
            let z: i64 = (&v[n - 2]).try_into().unwrap();
            sum_sq += (z * z) as f64;
            rings += l.events.iter().filter(|e| e.row == n).count() as f64;
        }
        // Z(n-1) is a ±1 walk, so E Z² equals the expected number of clock-n rings
        let (ms, mr) = (sum_sq / replicas as f64, rings / replicas as f64);
        assert!((ms - t).abs() < 0.3 && (mr - t).abs() < 0.15, "{ms} {mr}");
    }

    #[test]
    fn column_over_z_widens_on_overflow() {
        let l = log(3, 3, 30.0, 20, 0);
        let start = [0i128, i128::MAX / 3, i128::MAX / 3];
        let col = column_over_z_from(&l, &start);
        assert!(col.changes.iter().any(|c| matches!(c.2, IntValue::Big(_))));
        let mut oracle: Vec<BigInt> = start.iter().map(|&a| BigInt::from(a)).collect();
        for ev in &l.events {
            let delta = oracle[ev.row - 1].clone() * ev.sign.unwrap().as_i64();
            oracle[ev.row - 2] += delta;
            assert_eq!(col.value_at(ev.time), oracle);
        }
    }

    #[test]
    fn column_max_abs() {
        let l = log(4, 3, 10.0, 21, 0);
        let col = column_over_z(&l);
        for k in 1..=3 {
            let mut direct: f64 = 0.0;
            let mut times = vec![0.0];
            times.extend(l.events.iter().map(|e| e.time).filter(|&t| t <= 7.0));
            for t in times {
                let v = col.value_at(t);
                for i in 1..=k {
                    let a: i64 = (&v[4 - i - 1]).try_into().unwrap();
                    direct = direct.max(a.abs() as f64);
                }
            }
            assert_eq!(col.max_abs(7.0, k), direct);
        }
    }

    #[test]
    fn theta_examples() {
        let m = 7;
        let uniform = vec![1.0 / m as f64; m];
        for k in 0..=m {
            assert!((theta_k(&uniform, k).unwrap() - k as f64 / m as f64).abs() < 1e-12);
        }
        let mut point = vec![0.0; m];
        point[3] = 1.0;
        assert_eq!(theta_k(&point, 1).unwrap(), 1.0);
        let masses = [0.4, 0.3, 0.1, 0.1, 0.1, 0.0, 0.0];
        assert!((theta_k(&masses, 2).unwrap() - 0.7).abs() < 1e-12);
        assert!((theta_k(&masses, 7).unwrap() - 1.0).abs() < 1e-12);
        assert!(theta_k(&masses, 8).is_err());
        for k in 1..=7 {
            assert!(theta_k(&masses, k).unwrap() >= theta_k(&masses, k - 1).unwrap());
        }
    }
}
