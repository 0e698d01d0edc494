use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of an exact identity check over many evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checks: u64,
    pub failures: u64,
    /// First failing location, if any.
    pub first_mismatch: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            checks: 0,
            failures: 0,
            first_mismatch: None,
        }
    }

    pub fn record(&mut self, ok: bool, location: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(location());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.first_mismatch.is_none() {
            self.first_mismatch = other.first_mismatch;
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}/{} passed",
            self.name,
            self.checks - self.failures,
            self.checks
        )?;
        if let Some(loc) = &self.first_mismatch {
            write!(f, " (first mismatch: {loc})")?;
        }
        Ok(())
    }
}
