//! WebAssembly bindings for the browser demo in `www/`.

use trimix::estimators::mc_projection_tv;
use trimix::exact::exact_tv_series;
use trimix::spectral::spectral_sum_bound;
use trimix::{ChainConfig, Error, Projection, Result, Variant};
use wasm_bindgen::prelude::*;

/// Longest exact curve the page will request in one call.
pub const MAX_STEPS: u32 = 100_000;
pub const MAX_REPLICAS: u32 = 200_000;

/// `d(t)` for `t = 0..=t_max` steps of the lazy discrete walk.
pub fn tv_curve(n: usize, m: u64, t_max: u32) -> Result<Vec<f64>> {
    if t_max > MAX_STEPS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_STEPS} steps, got {t_max}"
        )));
    }
    exact_tv_series(n, m, u64::from(t_max))
}

/// Monte Carlo distance of the corner entry to uniform under the continuous
/// walk, as `[tv₀, se₀, tv₁, se₁, …]` over `times`.
pub fn corner_curve(n: usize, m: u64, times: &[f64], replicas: u32, seed: u32) -> Result<Vec<f64>> {
    if replicas > MAX_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_REPLICAS} replicas, got {replicas}"
        )));
    }
    let base = ChainConfig::new(n, m, Variant::Continuous, 0.0, u64::from(seed));
    let mut out = Vec::with_capacity(2 * times.len());
    for &t in times {
        let est = mc_projection_tv(&base, Projection::Corner, t, u64::from(replicas))?;
        out.extend([est.tv, est.se]);
    }
    Ok(out)
}

/// Cycle sum and its closed-form bound for `m = 2..=m_max`, as
/// `[lhs₂, rhs₂, lhs₃, rhs₃, …]`.
pub fn cycle_sum_curve(x: f64, m_max: u32) -> Result<Vec<f64>> {
    if !(2..=10_000).contains(&m_max) {
        return Err(Error::InvalidArgument(format!(
            "m_max must lie in 2..=10000, got {m_max}"
        )));
    }
    let mut out = Vec::with_capacity(2 * (m_max as usize - 1));
    for m in 2..=u64::from(m_max) {
        let (lhs, rhs) = spectral_sum_bound(x, m)?;
        out.extend([lhs, rhs]);
    }
    Ok(out)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = exactTvCurve)]
pub fn exact_tv_curve(n: usize, m: u32, t_max: u32) -> std::result::Result<Vec<f64>, JsError> {
    tv_curve(n, u64::from(m), t_max).map_err(js)
}

#[wasm_bindgen(js_name = cornerDecay)]
pub fn corner_decay(
    n: usize,
    m: u32,
    times: Vec<f64>,
    replicas: u32,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    corner_curve(n, u64::from(m), &times, replicas, seed).map_err(js)
}

#[wasm_bindgen(js_name = cycleSumBound)]
pub fn cycle_sum_bound(x: f64, m_max: u32) -> std::result::Result<Vec<f64>, JsError> {
    cycle_sum_curve(x, m_max).map_err(js)
}
