//! Exact distributions of the walk on small groups.
//!
//! The group is enumerated through its `n(n-1)/2` free entries and the
//! transition operator is only ever applied as a sparse gather: every
//! element has `2(n-1)` row-operation neighbours, and because the `+` and
//! `-` moves of a row are mutually inverse the neighbour set of `b` is also
//! the set of states that move into `b`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::modular::{check_dimension, check_modulus, Sign, UniUpperMatrix};
use crate::projection::Projection;

pub const ENUMERATION_CAP: u128 = 1_000_000;
const MASS_TOLERANCE: f64 = 1e-9;

/// `|G_n(m)| = m^{n(n-1)/2}`, or `None` on overflow.
pub fn group_order(n: usize, m: u64) -> Option<u128> {
    let d = (n * (n - 1) / 2) as u32;
    (m as u128).checked_pow(d)
}

/// All elements of G_n(m), indexed by the mixed-radix value of their
/// strictly-upper entries (row-major, first entry most significant).
#[derive(Debug, Clone)]
pub struct GroupTable {
    n: usize,
    m: u64,
    size: usize,
    /// `2(n-1)` neighbour indices per element: rows 2..=n, `+` then `-`.
    neighbours: Vec<u32>,
}

impl GroupTable {
    pub fn enumerate(n: usize, m: u64) -> Result<Self> {
        check_dimension(n)?;
        check_modulus(m)?;
        let count = group_order(n, m).unwrap_or(u128::MAX);
        if count > ENUMERATION_CAP {
            return Err(Error::TooLarge {
                count,
                cap: ENUMERATION_CAP,
            });
        }
        let size = count as usize;
        let degree = 2 * (n - 1);
        let mut neighbours = vec![0u32; size * degree];
        let fill = |(idx, slot): (usize, &mut [u32])| {
            let x = decode(n, m, idx);
            for i in 2..=n {
                for (s, sign) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
                    let mut y = x.clone();
                    y.row_add_unchecked(i, sign);
                    slot[2 * (i - 2) + s] = encode(&y) as u32;
                }
            }
        };
        #[cfg(feature = "parallel")]
        neighbours.par_chunks_mut(degree).enumerate().for_each(fill);
        #[cfg(not(feature = "parallel"))]
        neighbours.chunks_mut(degree).enumerate().for_each(fill);
        Ok(GroupTable {
            n,
            m,
            size,
            neighbours,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn element(&self, idx: usize) -> UniUpperMatrix {
        decode(self.n, self.m, idx)
    }

    pub fn index_of(&self, x: &UniUpperMatrix) -> Result<usize> {
        if x.n() != self.n || x.modulus() != self.m {
            return Err(Error::DimensionMismatch(x.n(), self.n));
        }
        Ok(encode(x))
    }

    pub fn identity_index(&self) -> usize {
        0
    }

    pub fn neighbours(&self, idx: usize) -> &[u32] {
        let d = 2 * (self.n - 1);
        &self.neighbours[idx * d..(idx + 1) * d]
    }

    pub fn point_mass(&self, idx: usize) -> DistVector {
        let mut probs = vec![0.0; self.size];
        probs[idx] = 1.0;
        DistVector { probs }
    }

    pub fn uniform(&self) -> DistVector {
        DistVector {
            probs: vec![1.0 / self.size as f64; self.size],
        }
    }

    fn gather(&self, dist: &DistVector, stay: f64, move_weight: f64) -> Result<DistVector> {
        if dist.probs.len() != self.size {
            return Err(Error::DimensionMismatch(dist.probs.len(), self.size));
        }
        let p = &dist.probs;
        let cell = |b: usize| {
            let moved: f64 = self.neighbours(b).iter().map(|&a| p[a as usize]).sum();
            stay * p[b] + move_weight * moved
        };
        #[cfg(feature = "parallel")]
        let probs: Vec<f64> = (0..self.size).into_par_iter().map(cell).collect();
        #[cfg(not(feature = "parallel"))]
        let probs: Vec<f64> = (0..self.size).map(cell).collect();
        let out = DistVector { probs };
        out.check_mass()?;
        Ok(out)
    }

    /// One step of the lazy discrete walk.
    pub fn apply_transition(&self, dist: &DistVector) -> Result<DistVector> {
        let w = 1.0 / (4.0 * (self.n - 1) as f64);
        self.gather(dist, 0.5, w)
    }

    /// One jump of the continuous walk: uniform row, uniform sign, no hold.
    pub fn apply_jump(&self, dist: &DistVector) -> Result<DistVector> {
        let w = 1.0 / (2.0 * (self.n - 1) as f64);
        self.gather(dist, 0.0, w)
    }

    /// Marginal law of a projection, as a vector over its codomain.
    pub fn project(&self, dist: &DistVector, projection: Projection) -> Result<Vec<f64>> {
        let size = projection.codomain_size(self.n, self.m)? as usize;
        let mut out = vec![0.0; size];
        for (idx, &p) in dist.probs.iter().enumerate() {
            out[projection.index(&self.element(idx))] += p;
        }
        Ok(out)
    }
}

fn encode(x: &UniUpperMatrix) -> usize {
    let m = x.modulus() as usize;
    x.upper_entries()
        .into_iter()
        .fold(0usize, |acc, e| acc * m + e as usize)
}

fn decode(n: usize, m: u64, mut idx: usize) -> UniUpperMatrix {
    let d = n * (n - 1) / 2;
    let mut upper = vec![0u64; d];
    for slot in upper.iter_mut().rev() {
        *slot = (idx % m as usize) as u64;
        idx /= m as usize;
    }
    UniUpperMatrix::from_upper_entries(n, m, &upper).expect("valid dimensions")
}

/// A probability vector indexed by a [`GroupTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    pub probs: Vec<f64>,
}

impl DistVector {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn check_mass(&self) -> Result<()> {
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE || self.probs.iter().any(|&p| p < -MASS_TOLERANCE) {
            Err(Error::MassDrift(total))
        } else {
            Ok(())
        }
    }

    /// Total variation distance to the uniform law on the same index set.
    pub fn tv_to_uniform(&self) -> f64 {
        tv_to_uniform(&self.probs)
    }
}

/// `½ Σ |p(x) - 1/|X||`, evaluated as `Σ (p(x) - 1/|X|)⁺` (equal for a
/// probability vector, and exact for point masses).
pub fn tv_to_uniform(probs: &[f64]) -> f64 {
    let u = 1.0 / probs.len() as f64;
    probs.iter().map(|p| (p - u).max(0.0)).sum::<f64>()
}

/// `d_n(t)` for `t = 0..=t_max`, from the identity. By vertex-transitivity
/// this equals the worst case over starting states.
pub fn exact_tv_series(n: usize, m: u64, t_max: u64) -> Result<Vec<f64>> {
    let table = GroupTable::enumerate(n, m)?;
    let mut dist = table.point_mass(table.identity_index());
    let mut out = Vec::with_capacity(t_max as usize + 1);
    out.push(dist.tv_to_uniform());
    for _ in 0..t_max {
        dist = table.apply_transition(&dist)?;
        out.push(dist.tv_to_uniform());
    }
    Ok(out)
}

pub fn exact_tv(n: usize, m: u64, t: u64) -> Result<f64> {
    Ok(*exact_tv_series(n, m, t)?.last().expect("non-empty"))
}

/// Law of the discrete walk after `t` steps from `start`.
pub fn distribution_at(table: &GroupTable, start: usize, t: u64) -> Result<DistVector> {
    let mut dist = table.point_mass(start);
    for _ in 0..t {
        dist = table.apply_transition(&dist)?;
    }
    Ok(dist)
}

pub const TMIX_STEP_CAP: u64 = 10_000_000;

/// Smallest `t` with `d_n(t) <= eps`.
pub fn t_mix_exact(n: usize, m: u64, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let table = GroupTable::enumerate(n, m)?;
    t_mix_on(&table, eps)
}

pub fn t_mix_on(table: &GroupTable, eps: f64) -> Result<u64> {
    let mut dist = table.point_mass(table.identity_index());
    let mut t = 0;
    while dist.tv_to_uniform() > eps {
        if t >= TMIX_STEP_CAP {
            return Err(Error::InvalidArgument(format!(
                "distance still above {eps} after {TMIX_STEP_CAP} steps"
            )));
        }
        dist = table.apply_transition(&dist)?;
        t += 1;
    }
    Ok(t)
}

/// Continuous-time distance from the identity via uniformization:
/// `P_t = Σ_j Poisson(j; (n-1)t) K^j` with the jump kernel `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousTv {
    pub tv: f64,
    /// Poisson mass beyond the last term; bounds the error in `tv`.
    pub truncation_error: f64,
    pub terms: u64,
}

pub const UNIFORMIZATION_TAIL: f64 = 1e-13;

pub fn continuous_distribution(table: &GroupTable, t: f64) -> Result<(DistVector, f64, u64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time must be non-negative, got {t}"
        )));
    }
    let rate = (table.n() - 1) as f64 * t;
    let mut power = table.point_mass(table.identity_index());
    let mut acc = vec![0.0; table.len()];
    let mut log_w = -rate; // log Poisson(0; rate)
    let mut covered = 0.0;
    let mut j = 0u64;
    loop {
        let w = log_w.exp();
        for (a, p) in acc.iter_mut().zip(&power.probs) {
            *a += w * p;
        }
        covered += w;
        let tail = (1.0 - covered).max(0.0);
        // past the mode the remaining terms shrink geometrically
        if (j as f64) > rate && tail < UNIFORMIZATION_TAIL {
            return Ok((DistVector { probs: acc }, tail, j + 1));
        }
        if (j as f64) > rate + 40.0 * rate.sqrt() + 100.0 {
            // floating-point cancellation keeps `tail` above tolerance
            return Ok((DistVector { probs: acc }, tail, j + 1));
        }
        j += 1;
        log_w += rate.ln() - (j as f64).ln();
        power = table.apply_jump(&power)?;
    }
}

pub fn exact_tv_continuous(n: usize, m: u64, t: f64) -> Result<ContinuousTv> {
    let table = GroupTable::enumerate(n, m)?;
    exact_tv_continuous_on(&table, t)
}

pub fn exact_tv_continuous_on(table: &GroupTable, t: f64) -> Result<ContinuousTv> {
    let (dist, tail, terms) = continuous_distribution(table, t)?;
    // unnormalized by at most `tail`, so the distance moves by at most that
    Ok(ContinuousTv {
        tv: dist.tv_to_uniform(),
        truncation_error: tail,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn enumeration_sizes() {
        assert_eq!(GroupTable::enumerate(2, 3).unwrap().len(), 3);
        assert_eq!(GroupTable::enumerate(3, 3).unwrap().len(), 27);
        assert_eq!(GroupTable::enumerate(4, 2).unwrap().len(), 64);
    }

    #[test]
    fn size_cap_is_reported() {
        match GroupTable::enumerate(5, 5) {
            Err(Error::TooLarge { count, .. }) => assert_eq!(count, 5u128.pow(10)),
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn enumeration_is_a_bijection() {
        for (n, m) in [(2, 7), (3, 4), (3, 10), (4, 3), (5, 2)] {
            let table = GroupTable::enumerate(n, m).unwrap();
            assert_eq!(table.len() as u128, group_order(n, m).unwrap());
            let mut seen = HashSet::new();
            for idx in 0..table.len() {
                let x = table.element(idx);
                assert_eq!(table.index_of(&x).unwrap(), idx);
                assert!(seen.insert(x.upper_entries()));
            }
        }
    }

    #[test]
    fn row_moves_are_permutations() {
        let table = GroupTable::enumerate(4, 3).unwrap();
        for k in 0..6 {
            let mut hit = vec![false; table.len()];
            for idx in 0..table.len() {
                hit[table.neighbours(idx)[k] as usize] = true;
            }
            assert!(hit.iter().all(|&h| h));
        }
        for idx in 0..table.len() {
            let nb = table.neighbours(idx);
            for r in 0..3 {
                // + then - returns home
                assert_eq!(
                    table.neighbours(nb[2 * r] as usize)[2 * r + 1] as usize,
                    idx
                );
            }
        }
    }

    #[test]
    fn uniform_is_stationary() {
        for (n, m) in [(3, 3), (4, 2), (3, 6)] {
            let table = GroupTable::enumerate(n, m).unwrap();
            let u = table.uniform();
            let next = table.apply_transition(&u).unwrap();
            for (a, b) in next.probs.iter().zip(&u.probs) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_step_from_identity_n2() {
        let table = GroupTable::enumerate(2, 3).unwrap();
        let d = table.apply_transition(&table.point_mass(0)).unwrap();
        assert_eq!(d.probs, vec![0.5, 0.25, 0.25]);
    }

    fn dense_operator(n: usize, m: u64) -> (Vec<Vec<f64>>, HashMap<Vec<u64>, usize>) {
        // built from matrix row operations and a hash index, not the table
        let mut elems = Vec::new();
        let d = n * (n - 1) / 2;
        let size = (m as usize).pow(d as u32);
        for idx in 0..size {
            let mut upper = vec![0u64; d];
            let mut r = idx;
            for k in (0..d).rev() {
                upper[k] = (r % m as usize) as u64;
                r /= m as usize;
            }
            elems.push(UniUpperMatrix::from_upper_entries(n, m, &upper).unwrap());
        }
        let index: HashMap<Vec<u64>, usize> = elems
            .iter()
            .enumerate()
            .map(|(i, x)| (x.upper_entries(), i))
            .collect();
        let mut p = vec![vec![0.0; size]; size];
        for (a, x) in elems.iter().enumerate() {
            p[a][a] += 0.5;
            for i in 2..=n {
                for s in [Sign::Plus, Sign::Minus] {
                    let b = index[&x.row_add(i, s).unwrap().upper_entries()];
                    p[a][b] += 0.25 / (n - 1) as f64;
                }
            }
        }
        (p, index)
    }

    #[test]
    fn operator_is_symmetric() {
        let (p, _) = dense_operator(3, 3);
        for a in 0..27 {
            for b in 0..27 {
                assert_eq!(p[a][b], p[b][a]);
            }
        }
    }

    #[test]
    fn matches_dense_matrix_power_oracle() {
        let (p, _) = dense_operator(3, 3);
        let mut row = vec![0.0; 27];
        row[0] = 1.0;
        for _ in 0..50 {
            let mut next = vec![0.0; 27];
            for a in 0..27 {
                for b in 0..27 {
                    next[b] += row[a] * p[a][b];
                }
            }
            row = next;
        }
        let oracle = tv_to_uniform(&row);
        let got = exact_tv(3, 3, 50).unwrap();
        assert!((oracle - got).abs() < 1e-10, "{oracle} vs {got}");
    }

    #[test]
    fn tv_at_zero_and_monotone() {
        let series = exact_tv_series(3, 3, 200).unwrap();
        assert!((series[0] - (1.0 - 1.0 / 27.0)).abs() < 1e-12);
        assert!(series.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(series[200] < 1e-3);
    }

    #[test]
    fn vertex_transitivity() {
        let table = GroupTable::enumerate(3, 3).unwrap();
        for t in [1, 4, 10] {
            let base = distribution_at(&table, 0, t).unwrap().tv_to_uniform();
            for start in 0..table.len() {
                let tv = distribution_at(&table, start, t).unwrap().tv_to_uniform();
                assert!((tv - base).abs() < 1e-12);
            }
        }
    }

    fn cycle_tmix(m: u64, eps: f64) -> u64 {
        let m = m as usize;
        let mut p = vec![0.0; m];
        p[0] = 1.0;
        let mut t = 0;
        loop {
            let tv = 0.5 * p.iter().map(|x| (x - 1.0 / m as f64).abs()).sum::<f64>();
            if tv <= eps {
                return t;
            }
            let mut q = vec![0.0; m];
            for x in 0..m {
                q[x] += 0.5 * p[x];
                q[(x + 1) % m] += 0.25 * p[x];
                q[(x + m - 1) % m] += 0.25 * p[x];
            }
            p = q;
            t += 1;
        }
    }

    #[test]
    fn n2_matches_cycle_oracle() {
        for m in [2u64, 3, 5, 8, 13, 20] {
            assert_eq!(
                t_mix_exact(2, m, 0.25).unwrap(),
                cycle_tmix(m, 0.25),
                "m={m}"
            );
        }
    }

    #[test]
    fn tmix_trivial_eps() {
        assert_eq!(t_mix_exact(3, 3, 1.0 - 1.0 / 27.0).unwrap(), 0);
        assert!(t_mix_exact(3, 3, 0.0).is_err());
    }

    #[test]
    fn continuous_zero_time() {
        let c = exact_tv_continuous(3, 3, 0.0).unwrap();
        assert!((c.tv - (1.0 - 1.0 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn continuous_n2_matches_heat_kernel() {
        // n = 2: law of a rate-1 ±1 walk, Fourier coefficient exp(-t(1-cos θ_j))
        let (m, t) = (7u64, 2.5);
        let table = GroupTable::enumerate(2, m).unwrap();
        let (dist, tail, _) = continuous_distribution(&table, t).unwrap();
        assert!(tail < 1e-12);
        for x in 0..m as usize {
            let p: f64 = (0..m)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    (-t * (1.0 - th.cos())).exp() * (th * x as f64).cos()
                })
                .sum::<f64>()
                / m as f64;
            assert!((dist.probs[x] - p).abs() < 1e-12);
        }
    }

    #[test]
    fn projections_of_uniform_are_uniform() {
        let table = GroupTable::enumerate(3, 5).unwrap();
        let u = table.uniform();
        for proj in [
            Projection::Corner,
            Projection::FirstRow,
            Projection::LastColumn,
        ] {
            let p = table.project(&u, proj).unwrap();
            assert!(tv_to_uniform(&p) < 1e-12);
        }
    }
}
