use std::fmt;
use std::str::FromStr;

use rand::Rng;
use simenv::{Space, SpaceValue};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Uniform samples from the action space.
    Random,
    Constant(f64),
    /// No environment at all: the model's own 200 L per day.
    Fallback,
}

impl Policy {
    pub fn action<R: Rng + ?Sized>(&self, space: &Space, rng: &mut R) -> Option<SpaceValue> {
        match *self {
            Policy::Random => Some(space.sample(rng)),
            Policy::Constant(x) => Some(SpaceValue::Vector(vec![x])),
            Policy::Fallback => None,
        }
    }
}

impl FromStr for Policy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || CliError::InvalidPolicy(s.to_owned());
        match s {
            "random" => Ok(Policy::Random),
            "fallback" => Ok(Policy::Fallback),
            _ => {
                let x: f64 = s
                    .strip_prefix("constant:")
                    .ok_or_else(invalid)?
                    .trim()
                    .parse()
                    .map_err(|_| invalid())?;
                if (0.0..=1.0).contains(&x) {
                    Ok(Policy::Constant(x))
                } else {
                    Err(invalid())
                }
            }
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Random => f.write_str("random"),
            Policy::Constant(x) => write!(f, "constant:{x}"),
            Policy::Fallback => f.write_str("fallback"),
        }
    }
}
