use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the two spin packets, or one of the two measurement results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Result of a spin measurement. `Undecided` covers the measure-zero
/// separatrix and runs that stop before the packets separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "undecided")]
    Undecided,
}

impl Outcome {
    pub fn sign(self) -> Option<Sign> {
        match self {
            Outcome::Plus => Some(Sign::Plus),
            Outcome::Minus => Some(Sign::Minus),
            Outcome::Undecided => None,
        }
    }

    /// +1, -1, or 0 for undecided.
    pub fn as_i8(self) -> i8 {
        self.sign().map_or(0, Sign::as_i8)
    }

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
            Outcome::Undecided => Outcome::Undecided,
        }
    }
}

impl From<Sign> for Outcome {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Plus => Outcome::Plus,
            Sign::Minus => Outcome::Minus,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
            Outcome::Undecided => "undecided",
        })
    }
}
