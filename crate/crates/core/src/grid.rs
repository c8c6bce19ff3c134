//! Integer-year age grids.

use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("invalid age grid: max_age ({max_age}) must exceed min_age ({min_age})")]
    InvalidBounds { min_age: u32, max_age: u32 },
}

/// Closed range of integer ages `[min_age, max_age]`, one bin per year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct AgeGrid {
    min_age: u32,
    max_age: u32,
}

#[derive(Deserialize)]
struct RawGrid {
    min_age: u32,
    max_age: u32,
}

impl TryFrom<RawGrid> for AgeGrid {
    type Error = GridError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        AgeGrid::new(raw.min_age, raw.max_age)
    }
}

impl Default for AgeGrid {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl AgeGrid {
    /// Ages 0 through 70.
    pub const DEFAULT: AgeGrid = AgeGrid {
        min_age: 0,
        max_age: 70,
    };

    pub fn new(min_age: u32, max_age: u32) -> Result<Self, GridError> {
        if max_age <= min_age {
            return Err(GridError::InvalidBounds { min_age, max_age });
        }
        Ok(Self { min_age, max_age })
    }

    pub fn min_age(&self) -> u32 {
        self.min_age
    }

    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    /// Number of bins, `max_age - min_age + 1`.
    pub fn len(&self) -> usize {
        (self.max_age - self.min_age) as usize + 1
    }

    /// Always false; a grid has at least two bins.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, age: u32) -> bool {
        (self.min_age..=self.max_age).contains(&age)
    }

    pub fn index_of(&self, age: u32) -> Option<usize> {
        self.contains(age).then(|| (age - self.min_age) as usize)
    }

    /// Age of bin `index`. Panics when `index >= len()`.
    pub fn age_at(&self, index: usize) -> u32 {
        assert!(index < self.len(), "bin {index} outside grid {self}");
        self.min_age + index as u32
    }

    pub fn ages(&self) -> impl Iterator<Item = u32> + Clone {
        self.min_age..=self.max_age
    }

    /// Integer midpoint, rounded down.
    pub fn midpoint(&self) -> u32 {
        self.min_age + (self.max_age - self.min_age) / 2
    }

    pub fn clamp(&self, age: i64) -> u32 {
        age.clamp(self.min_age as i64, self.max_age as i64) as u32
    }
}

impl fmt::Display for AgeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min_age, self.max_age)
    }
}
