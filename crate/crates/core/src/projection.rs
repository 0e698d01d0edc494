use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::UniUpperMatrix;

/// Coordinates of a state that are cheap to tabulate: the top-right corner
/// entry, the first row (entries 2..=n), or the last column (entries
/// 1..n-1, the East-model view).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Corner,
    FirstRow,
    LastColumn,
}

impl std::str::FromStr for Projection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corner" => Ok(Projection::Corner),
            "first_row" | "first-row" => Ok(Projection::FirstRow),
            "last_column" | "last-column" => Ok(Projection::LastColumn),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection {other:?}"
            ))),
        }
    }
}

impl Projection {
    pub fn codomain_size(self, n: usize, m: u64) -> Result<u64> {
        let d = match self {
            Projection::Corner => 1,
            Projection::FirstRow | Projection::LastColumn => n as u32 - 1,
        };
        (m as u128)
            .checked_pow(d)
            .filter(|&c| c <= u64::MAX as u128)
            .map(|c| c as u64)
            .ok_or(Error::TooLarge {
                count: u128::MAX,
                cap: u64::MAX as u128,
            })
    }

    /// Mixed-radix cell index, first listed coordinate most significant.
    pub fn index(self, x: &UniUpperMatrix) -> usize {
        let (n, m) = (x.n(), x.modulus() as usize);
        match self {
            Projection::Corner => x.entry(1, n) as usize,
            Projection::FirstRow => (2..=n).fold(0, |acc, j| acc * m + x.entry(1, j) as usize),
            Projection::LastColumn => (1..n).fold(0, |acc, i| acc * m + x.entry(i, n) as usize),
        }
    }
}
