//! Exact rational frame rates.
//!
//! Rates are kept as reduced `num/den` pairs of `u32` so that values such as
//! 25/3 Hz survive file round-trips without drift.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRate {
    num: u32,
    den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        Self::from_u64(num as u64, den as u64)
    }

    /// Integer rate in Hz.
    pub fn hz(num: u32) -> Result<Self> {
        Self::new(num, 1)
    }

    pub(crate) fn from_u64(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("frame rate must be positive, got {num}/{den}")));
        }
        let g = num.gcd(&den);
        let (n, d) = (num / g, den / g);
        match (u32::try_from(n), u32::try_from(d)) {
            (Ok(num), Ok(den)) => Ok(Self { num, den }),
            _ => Err(Error::Config(format!("frame rate {n}/{d} does not fit a u32 ratio"))),
        }
    }

    pub fn numer(&self) -> u32 {
        self.num
    }

    pub fn denom(&self) -> u32 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Seconds spanned by `frames` frames at this rate.
    pub fn duration_of(&self, frames: u64) -> f64 {
        frames as f64 * self.den as f64 / self.num as f64
    }

    /// `self / other` as an f64 ratio, computed from the exact integers.
    pub fn ratio_to(&self, other: &FrameRate) -> f64 {
        (self.num as f64 * other.den as f64) / (self.den as f64 * other.num as f64)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts `"25/3"`, `"12.5"` or `"16000"`.
impl FromStr for FrameRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse frame rate {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Self::from_u64(n, d);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let scale = 10u64.pow(frac.len() as u32);
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            return Self::from_u64(int * scale + frac, scale);
        }
        let n: u64 = s.parse().map_err(|_| bad())?;
        Self::from_u64(n, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!("25/3".parse::<FrameRate>().unwrap(), FrameRate::new(25, 3).unwrap());
        assert_eq!("12.5".parse::<FrameRate>().unwrap(), FrameRate::new(25, 2).unwrap());
        assert_eq!("6.25".parse::<FrameRate>().unwrap(), FrameRate::new(25, 4).unwrap());
        assert_eq!("50/6".parse::<FrameRate>().unwrap(), FrameRate::new(25, 3).unwrap());
        assert_eq!("16000".parse::<FrameRate>().unwrap(), FrameRate::hz(16000).unwrap());
        assert!("0".parse::<FrameRate>().is_err());
        assert!("abc".parse::<FrameRate>().is_err());
        assert!("1/0".parse::<FrameRate>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["25/3", "25/2", "16000"] {
            let r: FrameRate = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
    }
}
