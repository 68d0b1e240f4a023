use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Cap applied when a schedule string omits one.
pub const DEFAULT_CAP: u32 = 50;

/// Consensus rounds per outer iteration.
///
/// The outer index `t` starts at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsensusSchedule {
    Fixed(u32),
    /// `min(ceil(a*t + b), cap)`.
    AffineCapped {
        a: f64,
        b: f64,
        cap: u32,
    },
}

impl ConsensusSchedule {
    pub fn affine(a: f64, b: f64, cap: u32) -> Self {
        ConsensusSchedule::AffineCapped { a, b, cap }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ConsensusSchedule::Fixed(0) => Err(Error::InvalidArgument("fixed schedule of 0 rounds".into())),
            ConsensusSchedule::Fixed(_) => Ok(()),
            ConsensusSchedule::AffineCapped { a, b, cap } => {
                if !(a.is_finite() && b.is_finite()) || a < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "affine schedule needs finite a >= 0, got a={a} b={b}"
                    )));
                }
                if cap == 0 {
                    return Err(Error::InvalidArgument("schedule cap of 0 rounds".into()));
                }
                Ok(())
            }
        }
    }

    /// Budget for outer iteration `t` (never below 1).
    pub fn eval(&self, t: usize) -> u32 {
        match *self {
            ConsensusSchedule::Fixed(n) => n.max(1),
            ConsensusSchedule::AffineCapped { a, b, cap } => {
                let raw = (a * t as f64 + b).ceil();
                let capped = raw.min(cap as f64);
                capped.max(1.0) as u32
            }
        }
    }

    /// `sum_{t=0}^{outer-1} eval(t)`.
    pub fn total_rounds(&self, outer: usize) -> u64 {
        (0..outer).map(|t| u64::from(self.eval(t))).sum()
    }
}

impl fmt::Display for ConsensusSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConsensusSchedule::Fixed(n) => write!(f, "fixed({n})"),
            ConsensusSchedule::AffineCapped { a, b, cap } => write!(f, "min({a}t+{b},{cap})"),
        }
    }
}

/// Accepts `50`, `fixed(50)`, `2t+1` (cap 50), `ceil(0.5t+1)`,
/// `min(5t+1,200)`, `t+1`.
impl FromStr for ConsensusSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidArgument(format!("cannot parse schedule {s:?}"));
        let schedule = if let Ok(n) = compact.parse::<u32>() {
            ConsensusSchedule::Fixed(n)
        } else if let Some(inner) = strip_call(&compact, "fixed") {
            ConsensusSchedule::Fixed(inner.parse().map_err(|_| bad())?)
        } else if let Some(inner) = strip_call(&compact, "min") {
            let (affine, cap) = inner.rsplit_once(',').ok_or_else(bad)?;
            let (a, b) = parse_affine(strip_call(affine, "ceil").unwrap_or(affine)).ok_or_else(bad)?;
            ConsensusSchedule::affine(a, b, cap.parse().map_err(|_| bad())?)
        } else {
            let body = strip_call(&compact, "ceil").unwrap_or(&compact);
            let (a, b) = parse_affine(body).ok_or_else(bad)?;
            ConsensusSchedule::affine(a, b, DEFAULT_CAP)
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

fn strip_call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')
}

/// Parses `a*t+b`, `at+b`, `t+b`, `at`.
fn parse_affine(s: &str) -> Option<(f64, f64)> {
    let (slope, rest) = s.split_once('t')?;
    let slope = slope.trim_end_matches('*');
    let a = if slope.is_empty() { 1.0 } else { slope.parse().ok()? };
    let b = if rest.is_empty() {
        0.0
    } else {
        rest.strip_prefix('+').unwrap_or(rest).parse().ok()?
    };
    Some((a, b))
}
