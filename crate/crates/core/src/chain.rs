//! The two walk variants and their replayable event logs.
//!
//! * Discrete: each step picks a row `i ∈ 2..=n` uniformly and adds it to
//!   row `i - 1` with probability 1/4, subtracts it with probability 1/4,
//!   and otherwise holds.
//! * Continuous: every row `i ∈ 2..=n` carries a rate-1 Poisson clock; on a
//!   ring row `i` is added to or subtracted from row `i - 1` with equal
//!   probability. Simulated as one rate-`(n - 1)` clock with a uniform row
//!   label.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, stream)`, so a
//! replica is fully described by its [`ChainConfig`].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::{check_dimension, check_modulus, ModMatrix, Sign, UniUpperMatrix};
use crate::report::CheckReport;

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Deterministic generator for replica `stream` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Discrete,
    Continuous,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Variant::Discrete),
            "continuous" => Ok(Variant::Continuous),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    pub m: u64,
    /// Continuous time, or a whole number of steps for the discrete walk.
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub variant: Variant,
    /// Strictly-upper entries of the start state; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<u64>>,
}

impl ChainConfig {
    pub fn new(n: usize, m: u64, variant: Variant, horizon: f64, seed: u64) -> Self {
        ChainConfig {
            n,
            m,
            horizon,
            seed,
            stream: 0,
            variant,
            start: None,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_start(mut self, start: &UniUpperMatrix) -> Self {
        self.start = Some(start.upper_entries());
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dimension(self.n)?;
        check_modulus(self.m)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be finite and non-negative, got {}",
                self.horizon
            )));
        }
        if self.variant == Variant::Discrete && self.horizon.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "discrete horizon must be a whole number of steps, got {}",
                self.horizon
            )));
        }
        self.start_state().map(|_| ())
    }

    pub fn start_state(&self) -> Result<UniUpperMatrix> {
        match &self.start {
            None => UniUpperMatrix::identity(self.n, self.m),
            Some(upper) => UniUpperMatrix::from_upper_entries(self.n, self.m, upper),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        replica_rng(self.seed, self.stream)
    }
}

/// One clock ring (continuous) or one step (discrete). `sign == None` is a
/// hold, which only the discrete walk produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub row: usize,
    pub sign: Option<Sign>,
}

impl Event {
    pub fn apply(&self, state: &mut UniUpperMatrix) {
        if let Some(sign) = self.sign {
            state.row_add_unchecked(self.row, sign);
        }
    }
}

/// One discrete step applied in place; `step` is the 1-based step index.
pub fn step_discrete<R: Rng + ?Sized>(state: &mut UniUpperMatrix, step: u64, rng: &mut R) -> Event {
    let n = state.n();
    let row = rng.random_range(2..=n);
    let sign = match rng.random_range(0..4u8) {
        0 => Some(Sign::Plus),
        1 => Some(Sign::Minus),
        _ => None,
    };
    let ev = Event {
        time: step as f64,
        row,
        sign,
    };
    ev.apply(state);
    ev
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> Sign {
    if rng.random_bool(0.5) {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Ring times of the superposed clock on `[0, horizon]`, strictly increasing.
fn continuous_events<R: Rng + ?Sized>(n: usize, horizon: f64, rng: &mut R) -> Vec<Event> {
    let clock = Exp::new((n - 1) as f64).expect("positive rate");
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        let next = t + clock.sample(rng);
        if next <= t {
            // floating-point collision; draw the gap again
            continue;
        }
        if next > horizon {
            break;
        }
        t = next;
        let row = rng.random_range(2..=n);
        let sign = random_sign(rng);
        events.push(Event {
            time: t,
            row,
            sign: Some(sign),
        });
    }
    events
}

fn discrete_events<R: Rng + ?Sized>(n: usize, steps: u64, rng: &mut R) -> Vec<Event> {
    // Rows are independent of the state, so the state can be left to replay.
    let mut scratch = UniUpperMatrix::identity(n, 2).expect("valid");
    (1..=steps)
        .map(|s| step_discrete(&mut scratch, s, rng))
        .collect()
}

/// Time-ordered record of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub config: ChainConfig,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    schema_version: u32,
    config: ChainConfig,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<u64>,
    row: usize,
    sign: i64,
}

impl EventLog {
    /// Draw the full event sequence for `config` from its own stream.
    pub fn generate(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = config.rng();
        Ok(Self::generate_with(config, &mut rng))
    }

    pub fn generate_with<R: Rng + ?Sized>(config: &ChainConfig, rng: &mut R) -> Self {
        let events = match config.variant {
            Variant::Continuous => continuous_events(config.n, config.horizon, rng),
            Variant::Discrete => discrete_events(config.n, config.horizon as u64, rng),
        };
        EventLog {
            config: config.clone(),
            events,
        }
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn m(&self) -> u64 {
        self.config.m
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn start_state(&self) -> UniUpperMatrix {
        self.config.start_state().expect("validated config")
    }

    /// State after every event with time `<= t`.
    pub fn state_at(&self, t: f64) -> UniUpperMatrix {
        let mut x = self.start_state();
        for ev in self.events.iter().take_while(|e| e.time <= t) {
            ev.apply(&mut x);
        }
        x
    }

    /// States at sorted query times in one pass.
    pub fn states_at(&self, query_times: &[f64]) -> Result<Vec<UniUpperMatrix>> {
        check_queries(query_times, self.horizon())?;
        let mut x = self.start_state();
        let mut out = Vec::with_capacity(query_times.len());
        let mut evs = self.events.iter().peekable();
        for &q in query_times {
            while let Some(ev) = evs.next_if(|e| e.time <= q) {
                ev.apply(&mut x);
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Times and signs of the row-2 clock (the only clock that touches row 1).
    pub fn row2_rings(&self) -> impl Iterator<Item = (f64, Sign)> + '_ {
        self.events
            .iter()
            .filter(|e| e.row == 2)
            .filter_map(|e| e.sign.map(|s| (e.time, s)))
    }

    /// Serialize as JSON lines: a header record followed by one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&LogHeader {
            schema_version: LOG_SCHEMA_VERSION,
            config: self.config.clone(),
        })
        .expect("serializable");
        out.push('\n');
        let discrete = self.config.variant == Variant::Discrete;
        for ev in &self.events {
            let line = EventLine {
                t: (!discrete).then_some(ev.time),
                step: discrete.then_some(ev.time as u64),
                row: ev.row,
                sign: ev.sign.map_or(0, Sign::as_i64),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: LogHeader =
            serde_json::from_str(lines.next().ok_or_else(|| Error::Log("empty log".into()))?)
                .map_err(|e| Error::Log(format!("header: {e}")))?;
        if header.schema_version != LOG_SCHEMA_VERSION {
            return Err(Error::Log(format!(
                "unsupported schema_version {}",
                header.schema_version
            )));
        }
        let config = header.config;
        config.validate()?;
        let mut events = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (lineno, line) in lines.enumerate() {
            let rec: EventLine = serde_json::from_str(line)
                .map_err(|e| Error::Log(format!("event {}: {e}", lineno + 1)))?;
            let time = match (rec.t, rec.step, config.variant) {
                (Some(t), None, Variant::Continuous) => t,
                (None, Some(s), Variant::Discrete) => s as f64,
                _ => {
                    return Err(Error::Log(format!(
                        "event {}: wrong time field",
                        lineno + 1
                    )))
                }
            };
            if time <= last || time > config.horizon {
                return Err(Error::Log(format!(
                    "event {}: time {time} out of order",
                    lineno + 1
                )));
            }
            last = time;
            if rec.row < 2 || rec.row > config.n {
                return Err(Error::Log(format!(
                    "event {}: row {} out of range",
                    lineno + 1,
                    rec.row
                )));
            }
            let sign = match rec.sign {
                0 if config.variant == Variant::Discrete => None,
                s => Some(Sign::from_i64(s).ok_or_else(|| {
                    Error::Log(format!("event {}: invalid sign {s}", lineno + 1))
                })?),
            };
            events.push(Event {
                time,
                row: rec.row,
                sign,
            });
        }
        Ok(EventLog { config, events })
    }
}

fn check_queries(query_times: &[f64], horizon: f64) -> Result<()> {
    if query_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("query times must be sorted".into()));
    }
    if let Some(&q) = query_times.iter().find(|&&q| !(0.0..=horizon).contains(&q)) {
        return Err(Error::InvalidArgument(format!(
            "query time {q} outside [0, {horizon}]"
        )));
    }
    Ok(())
}

/// Sampled states plus the log that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub query_times: Vec<f64>,
    pub states: Vec<UniUpperMatrix>,
    pub log: EventLog,
}

impl Trajectory {
    pub fn from_log(log: EventLog, query_times: &[f64]) -> Result<Self> {
        let states = log.states_at(query_times)?;
        Ok(Trajectory {
            query_times: query_times.to_vec(),
            states,
            log,
        })
    }
}

/// Simulate the continuous-time walk and sample it at `query_times`.
pub fn simulate_continuous(config: &ChainConfig, query_times: &[f64]) -> Result<Trajectory> {
    if config.variant != Variant::Continuous {
        return Err(Error::InvalidArgument(
            "config variant is not continuous".into(),
        ));
    }
    check_queries(query_times, config.horizon)?;
    Trajectory::from_log(EventLog::generate(config)?, query_times)
}

/// Simulate the discrete walk and sample it at the given step counts.
pub fn simulate_discrete(config: &ChainConfig, query_steps: &[u64]) -> Result<Trajectory> {
    if config.variant != Variant::Discrete {
        return Err(Error::InvalidArgument(
            "config variant is not discrete".into(),
        ));
    }
    let q: Vec<f64> = query_steps.iter().map(|&s| s as f64).collect();
    check_queries(&q, config.horizon)?;
    Trajectory::from_log(EventLog::generate(config)?, &q)
}

/// Final state only, without keeping a log. Draws the same random sequence
/// as [`EventLog::generate_with`].
pub fn sample_final_state<R: Rng + ?Sized>(config: &ChainConfig, rng: &mut R) -> UniUpperMatrix {
    let mut x = config.start_state().expect("validated config");
    match config.variant {
        Variant::Discrete => {
            for s in 1..=(config.horizon as u64) {
                step_discrete(&mut x, s, rng);
            }
        }
        Variant::Continuous => {
            for ev in continuous_events(config.n, config.horizon, rng) {
                ev.apply(&mut x);
            }
        }
    }
    x
}

/// `N(t)`: number of row-2 rings with time `<= t`.
pub fn count_row2_rings(log: &EventLog, t: f64) -> usize {
    log.row2_rings().take_while(|&(s, _)| s <= t).count()
}

/// Check `X_t = Y_t + Σ_{j ≤ N(t)} a_j E(1,2) Y_{t_j}` at every query time,
/// where `Y` is the walk with its first-row updates suppressed (so row 1 of
/// `Y` stays at its start value).
pub fn decompose_first_row(traj: &Trajectory) -> CheckReport {
    let log = &traj.log;
    let (n, m) = (log.n(), log.m());
    let mut report = CheckReport::new("first-row decomposition");
    let mut y = log.start_state();
    // Σ a_j · (row 2 of Y at t_j), accumulated as the first row of the sum
    let mut first_row_sum = vec![0u64; n];
    let mut evs = log.events.iter().peekable();
    for (q, x) in traj.query_times.iter().zip(&traj.states) {
        while let Some(ev) = evs.next_if(|e| e.time <= *q) {
            let Some(sign) = ev.sign else { continue };
            if ev.row == 2 {
                let r2 = y.row(2);
                for (acc, &v) in first_row_sum.iter_mut().zip(r2.as_slice()) {
                    let term = match sign {
                        Sign::Plus => v,
                        Sign::Minus => (m - v) % m,
                    };
                    *acc = (*acc + term) % m;
                }
            } else {
                y.row_add_unchecked(ev.row, sign);
            }
        }
        let mut rhs = ModMatrix::from(&y);
        let mut e12y = ModMatrix::zero(n, m);
        for (j, &v) in first_row_sum.iter().enumerate() {
            e12y.set(1, j + 1, v);
        }
        rhs.add_assign(&e12y);
        let lhs = ModMatrix::from(x);
        report.record(lhs == rhs, || format!("t = {q}"));
    }
    report
}
