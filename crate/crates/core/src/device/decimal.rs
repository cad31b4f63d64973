//! Fixed-point decimal with two fraction digits, rounding half up. Keeps
//! monetary arithmetic exact: 56.60 * 1.15 = 65.09 with no float drift.

use std::fmt;
use std::str::FromStr;

/// Value stored as hundredths (i.e. cents).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Decimal2(i64);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("not a decimal: \"{0}\"")]
pub struct DecimalParseError(pub String);

impl Decimal2 {
    pub const ZERO: Decimal2 = Decimal2(0);
    pub const ONE: Decimal2 = Decimal2(100);

    pub fn from_hundredths(raw: i64) -> Self {
        Decimal2(raw)
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    pub fn add(self, rhs: Decimal2) -> Decimal2 {
        Decimal2(self.0 + rhs.0)
    }

    pub fn sub(self, rhs: Decimal2) -> Decimal2 {
        Decimal2(self.0 - rhs.0)
    }

    /// Product rounded half up (half away from zero) to two fraction digits.
    pub fn mul(self, rhs: Decimal2) -> Decimal2 {
        let wide = i128::from(self.0) * i128::from(rhs.0);
        Decimal2(round_div(wide, 100) as i64)
    }

    /// Quotient rounded half up to two fraction digits. None on divide by zero.
    pub fn div(self, rhs: Decimal2) -> Option<Decimal2> {
        if rhs.0 == 0 {
            return None;
        }
        let wide = i128::from(self.0) * 100;
        Some(Decimal2(round_div(wide, i128::from(rhs.0)) as i64))
    }
}

/// Divide rounding half away from zero.
fn round_div(num: i128, den: i128) -> i128 {
    debug_assert!(den != 0);
    let (num, den, sign) = if (num < 0) != (den < 0) {
        (num.abs(), den.abs(), -1)
    } else {
        (num.abs(), den.abs(), 1)
    };
    sign * ((num + den / 2) / den)
}

impl fmt::Display for Decimal2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{:02}", sign, abs / 100, abs % 100)
    }
}

impl FromStr for Decimal2 {
    type Err = DecimalParseError;

    /// Accepts an optional sign, an integer part, and at most two fraction
    /// digits. Empty input parses as zero (an untouched text field).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() {
            return Ok(Decimal2::ZERO);
        }
        let (sign, t) = match t.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, t),
        };
        let bad = || DecimalParseError(s.to_string());
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 2
        {
            return Err(bad());
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let frac: i64 = match frac_part.len() {
            0 => 0,
            1 => frac_part.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac_part.parse().map_err(|_| bad())?,
        };
        Ok(Decimal2(sign * (whole * 100 + frac)))
    }
}
