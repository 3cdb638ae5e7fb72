//! Exact rational time and link rates.
//!
//! All durations are kept in microseconds as `Ratio<i128>` so that byte times
//! at any decimal link rate stay exact. Rates are bits per microsecond, which
//! is numerically the same as Mbit/s.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub type Rational = Ratio<i128>;

/// A span of time in microseconds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(Rational);

impl Duration {
    pub const ZERO: Duration = Duration(Ratio::new_raw(0, 1));

    pub fn from_micros(us: i64) -> Self {
        Duration(Rational::from_integer(us as i128))
    }

    /// `num / den` microseconds. Panics on a zero denominator.
    pub fn from_ratio(num: i128, den: i128) -> Self {
        Duration(Rational::new(num, den))
    }

    pub fn from_rational(r: Rational) -> Self {
        Duration(r)
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn as_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn saturating_sub(self, other: Duration) -> Duration {
        if other >= self {
            Duration::ZERO
        } else {
            self - other
        }
    }

    /// `floor(self / other)`; `other` must be positive.
    pub fn div_floor(self, other: Duration) -> i128 {
        (self.0 / other.0).floor().to_integer()
    }

    /// `ceil(self / other)`; `other` must be positive.
    pub fn div_ceil(self, other: Duration) -> i128 {
        (self.0 / other.0).ceil().to_integer()
    }

    /// Ratio `self / other` as an exact rational.
    pub fn ratio(self, other: Duration) -> Rational {
        self.0 / other.0
    }

    /// Fixed-point rendering with `places` decimals, rounding half away from zero.
    pub fn to_fixed(&self, places: u32) -> String {
        format_fixed(self.0, places)
    }
}

pub fn format_fixed(r: Rational, places: u32) -> String {
    let scale = 10i128.pow(places);
    let scaled = r * Rational::from_integer(scale);
    let rounded = scaled.round().to_integer();
    let neg = rounded < 0;
    let abs = rounded.unsigned_abs();
    let int = abs / scale as u128;
    let frac = abs % scale as u128;
    let sign = if neg { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_fixed(3))
    }
}

impl fmt::Debug for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us ({}/{})", self.to_fixed(3), self.numer(), self.denom())
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl Mul<i128> for Duration {
    type Output = Duration;
    fn mul(self, rhs: i128) -> Duration {
        Duration(self.0 * rhs)
    }
}

impl Mul<u64> for Duration {
    type Output = Duration;
    fn mul(self, rhs: u64) -> Duration {
        Duration(self.0 * rhs as i128)
    }
}

impl Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        iter.fold(Duration::ZERO, |a, b| a + b)
    }
}

/// Serialized as `{"us": "30.800", "num": 154, "den": 5}`.
impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Duration", 3)?;
        st.serialize_field("us", &self.to_fixed(3))?;
        st.serialize_field("num", &ExactInt(self.numer()))?;
        st.serialize_field("den", &ExactInt(self.denom()))?;
        st.end()
    }
}

struct ExactInt(i128);

impl Serialize for ExactInt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

/// Link rate in bits per microsecond (equivalently Mbit/s).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(Rational);

impl Rate {
    pub fn from_mbps(mbps: Rational) -> Result<Self, Error> {
        if mbps <= Rational::zero() {
            return Err(Error::InvalidNetwork(format!(
                "link rate must be positive, got {}",
                format_fixed(mbps, 3)
            )));
        }
        Ok(Rate(mbps))
    }

    pub fn mbps(v: i64) -> Self {
        assert!(v > 0, "link rate must be positive");
        Rate(Rational::from_integer(v as i128))
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    /// Time to put `bytes` on the wire.
    pub fn byte_time(&self, bytes: u64) -> Duration {
        Duration(Rational::from_integer(8 * bytes as i128) / self.0)
    }
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Mbit/s", format_fixed(self.0, 3))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = format_fixed(self.0, 6);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        write!(f, "{s}")
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            if let Ok(v) = i64::try_from(self.0.to_integer()) {
                return s.serialize_i64(v);
            }
        }
        s.serialize_f64(self.0.to_f64().unwrap_or(f64::NAN))
    }
}

/// Parses a plain or scientific decimal literal into an exact rational.
pub fn parse_decimal(text: &str) -> Result<Rational, Error> {
    let bad = || Error::Parse(format!("not a decimal number: {text:?}"));
    let t = text.trim();
    if t.is_empty() {
        return Err(bad());
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], i32::from_str(&t[i + 1..]).map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(i128::from_str(if all.is_empty() { "0" } else { &all }).map_err(|_| bad())?);
    let shift = exp - frac_part.len() as i32;
    if shift.unsigned_abs() > 30 {
        return Err(bad());
    }
    let pow = Rational::from_integer(10i128.pow(shift.unsigned_abs()));
    if shift >= 0 {
        value *= pow;
    } else {
        value /= pow;
    }
    Ok(if neg { -value } else { value })
}

/// Deserializes a JSON number (or numeric string) into an exact rational.
pub fn deserialize_rational<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        N(serde_json::Number),
        S(String),
    }
    let text = match Num::deserialize(d)? {
        Num::N(n) => n.to_string(),
        Num::S(s) => s,
    };
    parse_decimal(&text).map_err(serde::de::Error::custom)
}

/// Least common multiple of the denominators, used to map rationals onto integer ticks.
pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> i128 {
    values.into_iter().fold(1i128, |acc, r| acc.lcm(r.denom()))
}
