//! Fourier analysis of the first row given the second-row history.
//!
//! Conditional on the row-2 clock ringing `k` times while row 2 equals
//! `w_1, …, w_k`, the first row (coordinates `2..=n`) moves by
//! `Σ_s a_s w_s` with independent uniform signs `a_s`. Its Fourier
//! coefficient at a frequency `y` is `Π_s cos(2π⟨y, w_s⟩/m)`.
//!
//! Frequencies are `n`-coordinate vectors with a zero first coordinate. The
//! classes `⟨e₁⟩`, `P₂`, `Q_I`, `W_I` count basis vectors from coordinate 2,
//! so `e₁` here is the vector supported on coordinate 2.

use std::f64::consts::PI;

use num_complex_lite::Complex;
use serde::Serialize;

use crate::chain::EventLog;
use crate::error::{Error, Result};
use crate::modular::{dot_raw, ResidueVector};
use crate::schedule::Schedule;

/// Frequency enumeration cap.
pub const Y_ENUMERATION_CAP: u128 = 1 << 24;
/// Work cap (cells × modulus) for the exact inverse transform.
pub const INVERSION_WORK_CAP: u128 = 1 << 31;
/// Absolute slack for floating-point inequality checks.
pub const INEQUALITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FrequencyClass {
    /// `⟨e₁⟩ \ {0}`
    E1,
    /// `⟨e₁, e₂⟩ \ ⟨e₁⟩`
    P2,
    /// `⟨e₁, …, e_{I-1}⟩ \ ⟨e₁, e₂⟩`
    QI,
    /// everything outside `⟨e₁, …, e_{I-1}⟩`
    WI,
}

/// Class of a nonzero frequency for the row index `big_i`; `None` for `y = 0`.
pub fn classify(y: &ResidueVector, big_i: usize) -> Option<FrequencyClass> {
    let top = y.as_slice().iter().rposition(|&c| c != 0)? + 1;
    Some(match top {
        1 => return None,
        2 => FrequencyClass::E1,
        3 => FrequencyClass::P2,
        t if t <= big_i => FrequencyClass::QI,
        _ => FrequencyClass::WI,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    pub y: ResidueVector,
    pub class: FrequencyClass,
}

impl FrequencyVector {
    pub fn new(y: ResidueVector, big_i: usize) -> Result<Self> {
        if y.as_slice().first().copied().unwrap_or(0) != 0 {
            return Err(Error::NonzeroFirstCoordinate);
        }
        let class = classify(&y, big_i)
            .ok_or_else(|| Error::InvalidArgument("frequency vector must be nonzero".into()))?;
        Ok(FrequencyVector { y, class })
    }
}

/// `cos(2π⟨y, w⟩/m)`.
pub fn eigenvalue(y: &ResidueVector, w: &ResidueVector) -> Result<f64> {
    let d = y.dot(w)?;
    Ok((2.0 * PI * d.value() as f64 / d.modulus() as f64).cos())
}

/// The second-row values `w_1..w_k` seen at the row-2 rings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSpectrum {
    n: usize,
    m: u64,
    ws: Vec<ResidueVector>,
}

impl ConditionalSpectrum {
    pub fn new(n: usize, m: u64, ws: Vec<ResidueVector>) -> Result<Self> {
        for w in &ws {
            if w.len() != n {
                return Err(Error::DimensionMismatch(w.len(), n));
            }
            if w.modulus() != m {
                return Err(Error::ModulusMismatch(w.modulus(), m));
            }
        }
        Ok(ConditionalSpectrum { n, m, ws })
    }

    /// Row 2 at every row-2 ring up to `t`.
    pub fn from_log(log: &EventLog, t: f64) -> Self {
        let mut x = log.start_state();
        let mut ws = Vec::new();
        for ev in log.events.iter().take_while(|e| e.time <= t) {
            if ev.row == 2 && ev.sign.is_some() {
                ws.push(x.row(2));
            }
            ev.apply(&mut x);
        }
        ConditionalSpectrum {
            n: log.n(),
            m: log.m(),
            ws,
        }
    }

    pub fn k(&self) -> usize {
        self.ws.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn ws(&self) -> &[ResidueVector] {
        &self.ws
    }

    fn cells(&self) -> Result<usize> {
        let count = (self.m as u128)
            .checked_pow(self.n as u32 - 1)
            .unwrap_or(u128::MAX);
        if count > Y_ENUMERATION_CAP {
            return Err(Error::TooLarge {
                count,
                cap: Y_ENUMERATION_CAP,
            });
        }
        Ok(count as usize)
    }

    /// `⟨y, w_s⟩` for every frequency index and ring, via a cosine table.
    fn for_each_frequency(&self, mut f: impl FnMut(usize, &[f64])) -> Result<()> {
        let cells = self.cells()?;
        let m = self.m;
        let cos_table: Vec<f64> = (0..m)
            .map(|r| (2.0 * PI * r as f64 / m as f64).cos())
            .collect();
        let mut y = vec![0u64; self.n];
        let mut cosines = vec![0.0; self.k()];
        for idx in 0..cells {
            fill_coords(idx, m, &mut y[1..]);
            for (c, w) in cosines.iter_mut().zip(&self.ws) {
                *c = cos_table[dot_raw(&y, w.as_slice(), m) as usize];
            }
            f(idx, &cosines);
        }
        Ok(())
    }

    /// Fourier coefficients `Π_s cos(2π⟨y, w_s⟩/m)` over all `y`, index 0 is `y = 0`.
    pub fn fourier_coefficients(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cells()?];
        self.for_each_frequency(|idx, cs| out[idx] = cs.iter().product())?;
        Ok(out)
    }
}

fn fill_coords(mut idx: usize, m: u64, coords: &mut [u64]) {
    for c in coords.iter_mut().rev() {
        *c = (idx % m as usize) as u64;
        idx /= m as usize;
    }
}

/// `Σ_{y≠0} exp(-2(k - Σ_s λ_{y,w_s}))`.
pub fn l2_bound(spectrum: &ConditionalSpectrum) -> Result<f64> {
    let k = spectrum.k() as f64;
    let mut total = 0.0;
    spectrum.for_each_frequency(|idx, cs| {
        if idx != 0 {
            total += (-2.0 * (k - cs.iter().sum::<f64>())).exp();
        }
    })?;
    Ok(total)
}

/// `Σ_{y≠0} Π_s λ_{y,w_s}²`, the squared ℓ² distance of the conditional law
/// (relative to uniform), which always dominates `4·TV²`.
pub fn plancherel_bound(spectrum: &ConditionalSpectrum) -> Result<f64> {
    let mut total = 0.0;
    spectrum.for_each_frequency(|idx, cs| {
        if idx != 0 {
            let p: f64 = cs.iter().product();
            total += p * p;
        }
    })?;
    Ok(total)
}

/// Exact law of `Σ_s a_s w_s` on coordinates `2..=n`, by multiplying
/// Fourier coefficients and inverting one axis at a time.
pub fn conditional_distribution(spectrum: &ConditionalSpectrum) -> Result<Vec<f64>> {
    let cells = spectrum.cells()?;
    let m = spectrum.m as usize;
    let work = cells as u128 * m as u128 * (spectrum.n as u128 - 1);
    if work > INVERSION_WORK_CAP {
        return Err(Error::TooLarge {
            count: work,
            cap: INVERSION_WORK_CAP,
        });
    }
    let phi = spectrum.fourier_coefficients()?;
    let mut data: Vec<Complex> = phi.into_iter().map(|re| Complex { re, im: 0.0 }).collect();
    let roots: Vec<Complex> = (0..m)
        .map(|r| {
            let a = 2.0 * PI * r as f64 / m as f64;
            Complex {
                re: a.cos(),
                im: a.sin(),
            }
        })
        .collect();
    let dims = spectrum.n - 1;
    let mut line = vec![Complex::default(); m];
    for axis in 0..dims {
        let stride = m.pow((dims - 1 - axis) as u32);
        for base in 0..cells {
            // visit each line once, from its lowest index along this axis
            if !(base / stride).is_multiple_of(m) {
                continue;
            }
            for (x, slot) in line.iter_mut().enumerate() {
                let mut acc = Complex::default();
                for yv in 0..m {
                    acc = acc.add(data[base + yv * stride].mul(roots[(x * yv) % m]));
                }
                *slot = acc;
            }
            for (x, v) in line.iter().enumerate() {
                data[base + x * stride] = *v;
            }
        }
    }
    let norm = cells as f64;
    Ok(data.into_iter().map(|c| c.re / norm).collect())
}

/// Exact TV between the conditional first-row law and uniform.
pub fn conditional_exact_tv(spectrum: &ConditionalSpectrum) -> Result<f64> {
    let p = conditional_distribution(spectrum)?;
    let u = 1.0 / p.len() as f64;
    Ok(0.5 * p.iter().map(|v| (v - u).abs()).sum::<f64>())
}

/// Both sides of `Σ_{j=1}^{m-1} e^{-2x(1-cos 2πj/m)} ≤ m e^{-2x} + √3 m / (2√(2πx))`.
pub fn spectral_sum_bound(x: f64, m: u64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "x must be positive, got {x}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidModulus(m));
    }
    let mf = m as f64;
    let lhs = cycle_sum(x, m);
    let rhs = mf * (-2.0 * x).exp() + 3f64.sqrt() * mf / (2.0 * (2.0 * PI * x).sqrt());
    Ok((lhs, rhs))
}

fn cycle_sum(x: f64, m: u64) -> f64 {
    (1..m)
        .map(|j| (-2.0 * x * (1.0 - (2.0 * PI * j as f64 / m as f64).cos())).exp())
        .sum()
}

/// The four class terms of the first-row bound after `k` qualifying rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundBreakdown {
    pub k: f64,
    /// `Σ_{y∈⟨e₁⟩\{0}} e^{-2k(1-cos 2πy/m)}`, evaluated exactly.
    pub term_e1: f64,
    /// Right-hand side of the cycle-sum inequality at `x = k`.
    pub term_e1_bound: f64,
    pub term_p2: f64,
    pub term_qi: f64,
    pub term_wi: f64,
    pub total: f64,
}

/// `count · e^{-2k(1 - cos(2π·thr/m))}` computed in log space.
fn class_term(log_count: f64, k: f64, threshold: f64, m: u64) -> f64 {
    let mf = m as f64;
    let angle = 2.0 * PI * threshold.min(mf / 2.0) / mf;
    (log_count - 2.0 * k * (1.0 - angle.cos())).exp()
}

/// Evaluate the class terms: `⟨e₁⟩` exactly, `P₂` with count `m²` and the
/// `P₂` threshold, `W_I` with count `m^n` and the `W_I` threshold, `Q_I` with
/// count `m^I` and threshold `m/K̃`.
pub fn q_bound_terms(n: usize, m: u64, k: f64, schedule: &Schedule) -> Result<BoundBreakdown> {
    schedule.validate()?;
    if schedule.n != n || schedule.m != m {
        return Err(Error::InvalidArgument(format!(
            "schedule is for (n, m) = ({}, {}), not ({n}, {m})",
            schedule.n, schedule.m
        )));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "k must be non-negative, got {k}"
        )));
    }
    let ln_m = (m as f64).ln();
    let term_e1 = cycle_sum(k, m);
    let term_e1_bound = if k > 0.0 {
        spectral_sum_bound(k, m)?.1
    } else {
        f64::INFINITY
    };
    let term_p2 = class_term(2.0 * ln_m, k, schedule.p2_threshold, m);
    let term_wi = class_term(n as f64 * ln_m, k, schedule.x_threshold, m);
    let term_qi = class_term(schedule.big_i as f64 * ln_m, k, schedule.w_threshold, m);
    Ok(BoundBreakdown {
        k,
        term_e1,
        term_e1_bound,
        term_p2,
        term_qi,
        term_wi,
        total: term_e1 + term_p2 + term_qi + term_wi,
    })
}

/// Minimal complex arithmetic for the inverse transform.
mod num_complex_lite {
    #[derive(Debug, Clone, Copy, Default, PartialEq)]
    pub struct Complex {
        pub re: f64,
        pub im: f64,
    }

    impl Complex {
        pub fn add(self, o: Complex) -> Complex {
            Complex {
                re: self.re + o.re,
                im: self.im + o.im,
            }
        }

        pub fn mul(self, o: Complex) -> Complex {
            Complex {
                re: self.re * o.re - self.im * o.im,
                im: self.re * o.im + self.im * o.re,
            }
        }
    }
}
