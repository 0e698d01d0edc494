//! Arithmetic over Z/mZ, residue vectors, and the group G_n(m) of upper
//! unitriangular matrices with the row operations that drive the walk.
//!
//! Every row, column and coordinate position in this crate is 1-based, so
//! `row_add(i, ..)` with `i ∈ 2..=n` adds row `i` to row `i - 1` exactly as
//! the chain is usually written down. Slices returned by `as_slice` are
//! the raw 0-based storage.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % m as u128) as u64
}

#[inline]
pub(crate) fn neg_mod(a: u64, m: u64) -> u64 {
    if a == 0 {
        0
    } else {
        m - a
    }
}

pub(crate) fn check_modulus(m: u64) -> Result<()> {
    if m < 2 {
        Err(Error::InvalidModulus(m))
    } else {
        Ok(())
    }
}

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidDimension(n))
    } else {
        Ok(())
    }
}

/// Reduce a signed integer into `[0, m)`.
pub fn reduce_i64(v: i64, m: u64) -> u64 {
    (v as i128).rem_euclid(m as i128) as u64
}

/// `min(a, m - a)`: the distance of `a` from 0 on the cycle.
#[inline]
pub fn centered(value: u64, m: u64) -> u64 {
    value.min(m - value)
}

/// Direction of a row operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_i64(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    /// `±1` as a residue mod `m`.
    pub fn residue(self, m: u64) -> u64 {
        match self {
            Sign::Plus => 1 % m,
            Sign::Minus => m - 1,
        }
    }
}

/// An element of Z/mZ stored in `[0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Residue {
    value: u64,
    modulus: u64,
}

impl Residue {
    pub fn new(value: u64, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(Residue {
            value: value % modulus,
            modulus,
        })
    }

    pub fn from_i64(value: i64, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(Residue {
            value: reduce_i64(value, modulus),
            modulus,
        })
    }

    pub(crate) fn raw(value: u64, modulus: u64) -> Self {
        debug_assert!(value < modulus);
        Residue { value, modulus }
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn centered_magnitude(self) -> u64 {
        centered(self.value, self.modulus)
    }

    /// The predicate `|a| > b`, i.e. `a ∈ {b+1, …, m-b-1}`.
    pub fn exceeds(self, b: u64) -> bool {
        self.centered_magnitude() > b
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl Add for Residue {
    type Output = Residue;
    fn add(self, rhs: Residue) -> Residue {
        assert_eq!(self.modulus, rhs.modulus, "modulus mismatch");
        Residue::raw(add_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

impl Sub for Residue {
    type Output = Residue;
    fn sub(self, rhs: Residue) -> Residue {
        self + (-rhs)
    }
}

impl Neg for Residue {
    type Output = Residue;
    fn neg(self) -> Residue {
        Residue::raw(neg_mod(self.value, self.modulus), self.modulus)
    }
}

impl Mul for Residue {
    type Output = Residue;
    fn mul(self, rhs: Residue) -> Residue {
        assert_eq!(self.modulus, rhs.modulus, "modulus mismatch");
        Residue::raw(mul_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

/// A vector in (Z/mZ)^n.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResidueVector {
    coords: Vec<u64>,
    modulus: u64,
}

impl ResidueVector {
    pub fn new(coords: Vec<u64>, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        let coords = coords.into_iter().map(|c| c % modulus).collect();
        Ok(ResidueVector { coords, modulus })
    }

    pub fn from_i64s(coords: &[i64], modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(ResidueVector {
            coords: coords.iter().map(|&c| reduce_i64(c, modulus)).collect(),
            modulus,
        })
    }

    /// A frequency / observable vector `y`: `n` coordinates, the first one 0.
    pub fn observable(coords: Vec<u64>, modulus: u64) -> Result<Self> {
        let v = Self::new(coords, modulus)?;
        match v.coords.first() {
            Some(0) => Ok(v),
            Some(_) => Err(Error::NonzeroFirstCoordinate),
            None => Err(Error::InvalidDimension(0)),
        }
    }

    pub fn zero(n: usize, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(ResidueVector {
            coords: vec![0; n],
            modulus,
        })
    }

    /// The unit vector `e_k` (1-based).
    pub fn unit(n: usize, k: usize, modulus: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::IndexOutOfRange {
                index: k,
                lo: 1,
                hi: n,
            });
        }
        let mut v = Self::zero(n, modulus)?;
        v.coords[k - 1] = 1 % modulus;
        Ok(v)
    }

    pub(crate) fn from_raw(coords: Vec<u64>, modulus: u64) -> Self {
        debug_assert!(coords.iter().all(|&c| c < modulus));
        ResidueVector { coords, modulus }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.coords
    }

    /// Coordinate `k` (1-based).
    pub fn coord(&self, k: usize) -> Residue {
        Residue::raw(self.coords[k - 1], self.modulus)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    /// `Σ y_k v_k mod m`.
    pub fn dot(&self, other: &ResidueVector) -> Result<Residue> {
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch(self.modulus, other.modulus));
        }
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(self.len(), other.len()));
        }
        Ok(Residue::raw(
            dot_raw(&self.coords, &other.coords, self.modulus),
            self.modulus,
        ))
    }

    pub fn add(&self, other: &ResidueVector) -> ResidueVector {
        assert_eq!(self.modulus, other.modulus);
        assert_eq!(self.len(), other.len());
        let m = self.modulus;
        ResidueVector::from_raw(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| add_mod(a, b, m))
                .collect(),
            m,
        )
    }

    pub fn scale(&self, s: u64) -> ResidueVector {
        let m = self.modulus;
        let s = s % m;
        ResidueVector::from_raw(self.coords.iter().map(|&a| mul_mod(a, s, m)).collect(), m)
    }

    pub fn neg(&self) -> ResidueVector {
        let m = self.modulus;
        ResidueVector::from_raw(self.coords.iter().map(|&a| neg_mod(a, m)).collect(), m)
    }
}

pub(crate) fn dot_raw(a: &[u64], b: &[u64], m: u64) -> u64 {
    let mut acc: u128 = 0;
    for (&x, &y) in a.iter().zip(b) {
        acc = (acc + x as u128 * y as u128) % m as u128;
    }
    acc as u64
}

/// A general n×n matrix over Z/mZ. Used where sums of group elements and
/// raw elementary matrices leave the group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModMatrix {
    n: usize,
    modulus: u64,
    entries: Vec<u64>,
}

impl ModMatrix {
    pub fn zero(n: usize, modulus: u64) -> Self {
        ModMatrix {
            n,
            modulus,
            entries: vec![0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn entry(&self, i: usize, j: usize) -> u64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.entries[(i - 1) * self.n + (j - 1)] = v % self.modulus;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    pub fn add_assign(&mut self, other: &ModMatrix) {
        assert_eq!(self.n, other.n);
        let m = self.modulus;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = add_mod(*a, b, m);
        }
    }

    pub fn mul(&self, other: &ModMatrix) -> ModMatrix {
        assert_eq!(self.n, other.n);
        let (n, m) = (self.n, self.modulus);
        let mut out = ModMatrix::zero(n, m);
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0 {
                    continue;
                }
                for j in 0..n {
                    let idx = i * n + j;
                    out.entries[idx] =
                        add_mod(out.entries[idx], mul_mod(a, other.entries[k * n + j], m), m);
                }
            }
        }
        out
    }
}

impl From<&UniUpperMatrix> for ModMatrix {
    fn from(a: &UniUpperMatrix) -> Self {
        ModMatrix {
            n: a.n,
            modulus: a.modulus,
            entries: a.entries.clone(),
        }
    }
}

/// An element of G_n(m): upper triangular, ones on the diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UniUpperMatrix {
    n: usize,
    modulus: u64,
    entries: Vec<u64>,
}

impl UniUpperMatrix {
    pub fn identity(n: usize, modulus: u64) -> Result<Self> {
        check_dimension(n)?;
        check_modulus(modulus)?;
        let mut entries = vec![0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1;
        }
        Ok(UniUpperMatrix {
            n,
            modulus,
            entries,
        })
    }

    /// Build from the `n(n-1)/2` strictly-upper entries in row-major order.
    pub fn from_upper_entries(n: usize, modulus: u64, upper: &[u64]) -> Result<Self> {
        let mut a = Self::identity(n, modulus)?;
        let want = n * (n - 1) / 2;
        if upper.len() != want {
            return Err(Error::DimensionMismatch(upper.len(), want));
        }
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                a.entries[i * n + j] = it.next().copied().unwrap_or(0) % modulus;
            }
        }
        Ok(a)
    }

    /// Build from full rows, validating the unitriangular shape.
    pub fn from_rows(rows: &[Vec<i64>], modulus: u64) -> Result<Self> {
        let n = rows.len();
        let mut a = Self::identity(n, modulus)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(row.len(), n));
            }
            for (j, &v) in row.iter().enumerate() {
                let v = reduce_i64(v, modulus);
                let expected = if i == j {
                    Some(1 % modulus)
                } else if i > j {
                    Some(0)
                } else {
                    None
                };
                match expected {
                    Some(e) if e != v => {
                        return Err(Error::NotUnitriangular {
                            row: i + 1,
                            col: j + 1,
                        })
                    }
                    _ => a.entries[i * n + j] = v,
                }
            }
        }
        Ok(a)
    }

    /// Uniformly random element of the group.
    pub fn random<R: Rng + ?Sized>(n: usize, modulus: u64, rng: &mut R) -> Result<Self> {
        let mut a = Self::identity(n, modulus)?;
        for i in 0..n {
            for j in (i + 1)..n {
                a.entries[i * n + j] = rng.random_range(0..modulus);
            }
        }
        Ok(a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> u64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    pub(crate) fn set_entry(&mut self, i: usize, j: usize, v: u64) {
        debug_assert!(i < j);
        self.entries[(i - 1) * self.n + (j - 1)] = v % self.modulus;
    }

    /// Strictly-upper entries in row-major order.
    pub fn upper_entries(&self) -> Vec<u64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.entries[i * n + j]);
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> ResidueVector {
        let n = self.n;
        ResidueVector::from_raw(self.entries[(i - 1) * n..i * n].to_vec(), self.modulus)
    }

    pub fn column(&self, j: usize) -> ResidueVector {
        let n = self.n;
        ResidueVector::from_raw(
            (0..n).map(|i| self.entries[i * n + (j - 1)]).collect(),
            self.modulus,
        )
    }

    pub fn is_identity(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| ((i + 1)..n).all(|j| self.entries[i * n + j] == 0))
    }

    fn check_compatible(&self, other: &UniUpperMatrix) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch(self.modulus, other.modulus));
        }
        Ok(())
    }

    /// Matrix product `self · other` mod m.
    pub fn mul(&self, other: &UniUpperMatrix) -> Result<UniUpperMatrix> {
        self.check_compatible(other)?;
        let (n, m) = (self.n, self.modulus);
        let mut out = UniUpperMatrix::identity(n, m)?;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut acc: u128 = 0;
                // only k in i..=j contributes for upper triangular factors
                for k in i..=j {
                    acc += self.entries[i * n + k] as u128 * other.entries[k * n + j] as u128;
                }
                out.entries[i * n + j] = (acc % m as u128) as u64;
            }
        }
        Ok(out)
    }

    /// Inverse by back-substitution; never fails for a unitriangular matrix.
    pub fn inverse(&self) -> UniUpperMatrix {
        let (n, m) = (self.n, self.modulus);
        let mut inv = self.clone();
        for j in 0..n {
            for i in (0..j).rev() {
                let mut acc: u128 = 0;
                for k in (i + 1)..=j {
                    acc += self.entries[i * n + k] as u128 * inv.entries[k * n + j] as u128;
                }
                inv.entries[i * n + j] = neg_mod((acc % m as u128) as u64, m);
            }
        }
        inv
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i < 2 || i > self.n {
            Err(Error::IndexOutOfRange {
                index: i,
                lo: 2,
                hi: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// Row `i - 1` += sign · row `i`; left multiplication by `I + sign·E(i-1, i)`.
    pub fn row_add(&self, i: usize, sign: Sign) -> Result<UniUpperMatrix> {
        let mut out = self.clone();
        out.row_add_in_place(i, sign)?;
        Ok(out)
    }

    pub fn row_add_in_place(&mut self, i: usize, sign: Sign) -> Result<()> {
        self.check_row(i)?;
        self.row_add_unchecked(i, sign);
        Ok(())
    }

    pub(crate) fn row_add_unchecked(&mut self, i: usize, sign: Sign) {
        let (n, m) = (self.n, self.modulus);
        let src = (i - 1) * n;
        let dst = (i - 2) * n;
        // row i is zero left of the diagonal
        for j in (i - 1)..n {
            let v = self.entries[src + j];
            let d = &mut self.entries[dst + j];
            *d = match sign {
                Sign::Plus => add_mod(*d, v, m),
                Sign::Minus => add_mod(*d, neg_mod(v, m), m),
            };
        }
    }

    /// Column vector product `self · v`.
    pub fn mul_vec(&self, v: &ResidueVector) -> Result<ResidueVector> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch(v.len(), self.n));
        }
        if v.modulus() != self.modulus {
            return Err(Error::ModulusMismatch(v.modulus(), self.modulus));
        }
        let n = self.n;
        Ok(ResidueVector::from_raw(
            (0..n)
                .map(|i| {
                    dot_raw(
                        &self.entries[i * n + i..(i + 1) * n],
                        &v.as_slice()[i..],
                        self.modulus,
                    )
                })
                .collect(),
            self.modulus,
        ))
    }

    /// True when every entry in rows `rows` and columns `cols` (1-based,
    /// inclusive) is zero.
    pub fn block_is_zero(
        &self,
        rows: std::ops::RangeInclusive<usize>,
        cols: std::ops::RangeInclusive<usize>,
    ) -> bool {
        rows.clone()
            .all(|i| cols.clone().all(|j| self.entry(i, j) == 0))
    }
}

impl fmt::Display for UniUpperMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = self.entries[i * self.n..(i + 1) * self.n]
                .iter()
                .map(|v| v.to_string())
                .collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// `I + sign·E(i, j)` with `i < j`, or the raw nilpotent `sign·E(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementaryMatrix {
    pub i: usize,
    pub j: usize,
    pub sign: Sign,
}

impl ElementaryMatrix {
    pub fn new(i: usize, j: usize, sign: Sign) -> Result<Self> {
        if i == 0 || i >= j {
            return Err(Error::InvalidArgument(format!(
                "elementary position ({i}, {j}) must satisfy 1 <= i < j"
            )));
        }
        Ok(ElementaryMatrix { i, j, sign })
    }

    /// The group element `I + sign·E(i, j)`.
    pub fn to_group(&self, n: usize, modulus: u64) -> Result<UniUpperMatrix> {
        if self.j > n {
            return Err(Error::IndexOutOfRange {
                index: self.j,
                lo: 2,
                hi: n,
            });
        }
        let mut a = UniUpperMatrix::identity(n, modulus)?;
        a.set_entry(self.i, self.j, self.sign.residue(modulus));
        Ok(a)
    }

    /// The raw matrix `sign·E(i, j)`.
    pub fn raw(&self, n: usize, modulus: u64) -> ModMatrix {
        let mut e = ModMatrix::zero(n, modulus);
        e.set(self.i, self.j, self.sign.residue(modulus));
        e
    }

    /// `sign·E(i, j) · v`: only coordinate `i` survives, equal to `sign·v_j`.
    pub fn apply_raw(&self, v: &ResidueVector) -> ResidueVector {
        let m = v.modulus();
        let mut out = vec![0; v.len()];
        out[self.i - 1] = mul_mod(self.sign.residue(m), v.as_slice()[self.j - 1], m);
        ResidueVector::from_raw(out, m)
    }

    /// `E · y · E` for the raw elementary `E`.
    pub fn sandwich(&self, y: &UniUpperMatrix) -> ModMatrix {
        let e = self.raw(y.n(), y.modulus());
        e.mul(&ModMatrix::from(y)).mul(&e)
    }
}
