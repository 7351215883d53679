//! Pass/fail results of identity checks, with a witness on failure.

use std::fmt;

use serde::Serialize;

/// The first entry at which two sides of an identity disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub location: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail(Witness),
}

impl Outcome {
    pub fn fail(location: impl Into<String>, lhs: impl fmt::Display, rhs: impl fmt::Display) -> Self {
        Outcome::Fail(Witness {
            location: location.into(),
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        })
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Outcome::Pass)
    }

    /// Keep the first failure.
    pub fn and(self, other: impl FnOnce() -> Outcome) -> Outcome {
        match self {
            Outcome::Pass => other(),
            fail => fail,
        }
    }

    /// Prefix the witness location with some context.
    pub fn context(self, ctx: impl fmt::Display) -> Outcome {
        match self {
            Outcome::Pass => Outcome::Pass,
            Outcome::Fail(w) => Outcome::Fail(Witness {
                location: format!("{ctx}: {}", w.location),
                ..w
            }),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass => write!(f, "pass"),
            Outcome::Fail(w) => write!(f, "FAIL at {}: {} != {}", w.location, w.lhs, w.rhs),
        }
    }
}

/// Compare two values, failing with `location` if they differ.
pub fn expect_eq<T: PartialEq + fmt::Display>(location: impl FnOnce() -> String, lhs: &T, rhs: &T) -> Outcome {
    if lhs == rhs {
        Outcome::Pass
    } else {
        Outcome::fail(location(), lhs, rhs)
    }
}

/// First failure in a sequence of outcomes.
pub fn first_failure(outcomes: impl IntoIterator<Item = Outcome>) -> Outcome {
    outcomes
        .into_iter()
        .find(|o| !o.is_pass())
        .unwrap_or(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_failure_is_kept() {
        let o = Outcome::Pass
            .and(|| Outcome::fail("a", 1, 2))
            .and(|| Outcome::fail("b", 3, 4));
        assert_eq!(o, Outcome::fail("a", 1, 2));
        assert_eq!(first_failure(vec![Outcome::Pass, Outcome::Pass]), Outcome::Pass);
        let o = Outcome::fail("x", 1, 2).context("block");
        assert!(o.to_string().contains("block: x"));
    }
}
