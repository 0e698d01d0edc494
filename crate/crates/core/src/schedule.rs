//! Horizon, interval lengths and thresholds used by the mixing argument.
//!
//! The universal constants are unknown, so every one of them is a field of
//! [`Constants`]; the formulas are evaluated as plain arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    /// Multiplier of the main horizon term.
    pub big_d: f64,
    /// Exponent constant of `e^{C (log m)^{2/3}}` (general modulus).
    pub big_c: f64,
    /// Multiplier of the `m² log log n` term.
    pub c: f64,
    /// Interval length multiplier.
    pub d: f64,
    /// Multiplier of `L₃ = δ log m`.
    pub delta: f64,
    /// Fraction `A⁻¹` of rings that must see a large value.
    pub big_a: f64,
    /// Decay constant in `m e^{-K (log m)^{2/3}}`.
    pub big_k: f64,
    /// Divisor in the `Q_I` threshold `m / K̃`.
    pub k_tilde: f64,
    /// Multiplier of the `P₂` threshold `β √(log m) / 2`.
    pub beta: f64,
    /// Good-interval fraction parameter.
    pub g: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            big_d: 1.0,
            big_c: 1.0,
            c: 1.0,
            d: 1.0,
            delta: 1.0,
            big_a: 1.0,
            big_k: 1.0,
            // m / 1 would exceed every centered magnitude; m / 4 is the
            // smallest divisor for which the Q_I eigenvalue bound is < 1
            k_tilde: 4.0,
            beta: 1.0,
            g: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleVariant {
    Prime,
    General,
}

impl ScheduleVariant {
    pub fn for_modulus(m: u64) -> Self {
        if is_prime(m) {
            ScheduleVariant::Prime
        } else {
            ScheduleVariant::General
        }
    }
}

pub fn is_prime(m: u64) -> bool {
    if m < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= m {
        if m.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub variant: ScheduleVariant,
    pub n: usize,
    pub m: u64,
    pub constants: Constants,
    /// `√(log m)` (prime) or `⌊(log m)^{1/3}⌋` (general, at least 1).
    pub j: f64,
    /// Row index the good intervals are measured on, clamped to `2..=n`.
    pub big_i: usize,
    /// Good-interval length `d m^{4/J}` (prime only).
    pub l_prime: Option<f64>,
    /// `d A_{J,D,m}`, `d m`, `δ log m` (general only).
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    /// `A_{J,D,m} = 2 m^{2/J} / log D` with `D = 20 (J + 1)` (general only).
    pub a_jdm: Option<f64>,
    pub t_nm: f64,
    /// `W_I` threshold: `m/8` (prime) or `m e^{-K (log m)^{2/3}}` (general).
    pub x_threshold: f64,
    /// `Q_I` threshold `m / K̃`.
    pub w_threshold: f64,
    /// `P₂` threshold `β √(log m) / 2`.
    pub p2_threshold: f64,
    pub g: f64,
    /// `1/10 + 9/(10 g)`: the non-zero time fraction behind the good-interval count.
    pub good_fraction_x: f64,
    /// Interval start `t₀ = n`.
    pub t0: f64,
}

impl Schedule {
    /// Interval length used for the good-interval structure of `W_I`.
    pub fn interval_length(&self) -> f64 {
        match self.variant {
            ScheduleVariant::Prime => self.l_prime.expect("prime schedule"),
            ScheduleVariant::General => self.l1.expect("general schedule"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.t_nm,
            self.x_threshold,
            self.w_threshold,
            self.p2_threshold,
            self.g,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "schedule contains non-finite values".into(),
            ));
        }
        if self.big_i < 2 || self.big_i > self.n {
            return Err(Error::InvalidArgument(format!(
                "schedule row index I = {} outside 2..={}",
                self.big_i, self.n
            )));
        }
        if self.x_threshold < 0.0 || self.w_threshold < 0.0 || self.p2_threshold < 0.0 {
            return Err(Error::InvalidArgument(
                "thresholds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluate every schedule quantity for `(n, m)`.
pub fn schedule_eval(n: usize, m: u64, variant: ScheduleVariant, constants: Constants) -> Schedule {
    let k = constants;
    let mf = m as f64;
    let log_m = mf.ln();
    let nf = n as f64;
    let log_log_n = nf.ln().ln();
    let clamp_i = |i: usize| i.clamp(2, n.max(2));
    let p2_threshold = k.beta * log_m.sqrt() / 2.0;
    let w_threshold = mf / k.k_tilde;
    let good_fraction_x = 0.1 + 0.9 / k.g;
    match variant {
        ScheduleVariant::Prime => {
            let j = log_m.sqrt();
            let big_i = clamp_i(2 + j.floor() as usize);
            let t_nm = k.big_d * (mf * mf * nf.ln() + nf * (9.0 * log_m.sqrt()).exp())
                + k.c * mf * mf * log_log_n;
            Schedule {
                variant,
                n,
                m,
                constants,
                j,
                big_i,
                l_prime: Some(k.d * mf.powf(4.0 / j)),
                l1: None,
                l2: None,
                l3: None,
                a_jdm: None,
                t_nm,
                x_threshold: mf / 8.0,
                w_threshold,
                p2_threshold,
                g: k.g,
                good_fraction_x,
                t0: nf,
            }
        }
        ScheduleVariant::General => {
            let j = log_m.cbrt().floor().max(1.0);
            let big_i = clamp_i(1 + j as usize);
            let ah_d = 20.0 * (j + 1.0);
            let a_jdm = 2.0 * mf.powf(2.0 / j) / ah_d.ln();
            let t_nm = k.big_d * (mf * mf * nf.ln() + nf * (k.big_c * log_m.powf(2.0 / 3.0)).exp())
                + k.c * mf * mf * log_log_n;
            Schedule {
                variant,
                n,
                m,
                constants,
                j,
                big_i,
                l_prime: None,
                l1: Some(k.d * a_jdm),
                l2: Some(k.d * mf),
                l3: Some(k.delta * log_m),
                a_jdm: Some(a_jdm),
                t_nm,
                x_threshold: mf * (-k.big_k * log_m.powf(2.0 / 3.0)).exp(),
                w_threshold,
                p2_threshold,
                g: k.g,
                good_fraction_x,
                t0: nf,
            }
        }
    }
}
