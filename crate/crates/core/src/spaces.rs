//! Observation and action spaces.
//!
//! Only the two kinds the environments need: a flat [`BoxSpace`] of bounded
//! reals and a [`DiscreteSpace`] of `n` indices. Bounds are inclusive on
//! both ends.

use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("box space needs at least one dimension")]
    Empty,
    #[error("bounds have different lengths: low has {low}, high has {high}")]
    LengthMismatch { low: usize, high: usize },
    #[error("bound {index} is not finite")]
    NonFinite { index: usize },
    #[error("bound {index} is inverted: low {low} > high {high}")]
    Inverted { index: usize, low: f64, high: f64 },
    #[error("discrete space needs n >= 1")]
    ZeroActions,
    #[error("expected a {expected}-dimensional value, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A value drawn from, or checked against, a [`Space`].
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceValue {
    Vector(Vec<f64>),
    Index(u64),
}

impl SpaceValue {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            SpaceValue::Vector(v) => Some(v),
            SpaceValue::Index(_) => None,
        }
    }

    pub fn as_index(&self) -> Option<u64> {
        match self {
            SpaceValue::Index(i) => Some(*i),
            SpaceValue::Vector(_) => None,
        }
    }
}

impl From<Vec<f64>> for SpaceValue {
    fn from(v: Vec<f64>) -> Self {
        SpaceValue::Vector(v)
    }
}

impl From<u64> for SpaceValue {
    fn from(i: u64) -> Self {
        SpaceValue::Index(i)
    }
}

impl fmt::Display for SpaceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceValue::Vector(v) => write!(f, "{v:?}"),
            SpaceValue::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Per-dimension bounded reals.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpace {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl BoxSpace {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, SpaceError> {
        if low.len() != high.len() {
            return Err(SpaceError::LengthMismatch {
                low: low.len(),
                high: high.len(),
            });
        }
        if low.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (index, (&lo, &hi)) in low.iter().zip(&high).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SpaceError::NonFinite { index });
            }
            if lo > hi {
                return Err(SpaceError::Inverted {
                    index,
                    low: lo,
                    high: hi,
                });
            }
        }
        Ok(Self { low, high })
    }

    /// `dim` copies of the interval `[low, high]`.
    pub fn uniform(low: f64, high: f64, dim: usize) -> Result<Self, SpaceError> {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, value: &[f64]) -> bool {
        value.len() == self.dim()
            && value
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    /// Projects every component into its interval.
    pub fn clamp(&self, value: &[f64]) -> Result<Vec<f64>, SpaceError> {
        if value.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                actual: value.len(),
            });
        }
        Ok(value
            .iter()
            .zip(self.low.iter().zip(&self.high))
            // NaN maps to the lower bound so the result is always contained.
            .map(|(&v, (&lo, &hi))| if v.is_nan() { lo } else { v.clamp(lo, hi) })
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(&lo, &hi)| {
                let u: f64 = rng.gen();
                // u < 1, but rounding can still overshoot on wide intervals.
                (lo + u * (hi - lo)).min(hi)
            })
            .collect()
    }
}

/// The indices `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteSpace {
    n: u64,
}

impl DiscreteSpace {
    pub fn new(n: u64) -> Result<Self, SpaceError> {
        if n == 0 {
            return Err(SpaceError::ZeroActions);
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn contains(&self, index: u64) -> bool {
        index < self.n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Box(BoxSpace),
    Discrete(DiscreteSpace),
}

impl Space {
    /// False for a value of the wrong kind or dimensionality.
    pub fn contains(&self, value: &SpaceValue) -> bool {
        match (self, value) {
            (Space::Box(b), SpaceValue::Vector(v)) => b.contains(v),
            (Space::Discrete(d), SpaceValue::Index(i)) => d.contains(*i),
            _ => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpaceValue {
        match self {
            Space::Box(b) => SpaceValue::Vector(b.sample(rng)),
            Space::Discrete(d) => SpaceValue::Index(d.sample(rng)),
        }
    }
}

impl From<BoxSpace> for Space {
    fn from(b: BoxSpace) -> Self {
        Space::Box(b)
    }
}

impl From<DiscreteSpace> for Space {
    fn from(d: DiscreteSpace) -> Self {
        Space::Discrete(d)
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Box(b) => write!(f, "Box(low={:?}, high={:?})", b.low, b.high),
            Space::Discrete(d) => write!(f, "Discrete({})", d.n),
        }
    }
}
