//! Dimensional algebra over the seven SI base dimensions.
//!
//! A [`Dimension`] is a vector of rational exponents. Expressions are checked
//! against it (see [`crate::expr::dim_of`]), dimensionless groups are
//! extracted from a set of them ([`pi_groups`]), and [`design_sequence`]
//! orders subsystems by their remaining degrees of freedom.

mod pi;
mod sequence;
pub mod units;

use std::fmt;
use std::ops::{Div, Mul};

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use pi::{pi_groups, rank, DimensionMatrix, PiGroup, PiReport};
pub use sequence::{design_sequence, SequenceError};

/// Exact rational number used for dimension exponents.
pub type Rational = Ratio<i64>;

/// Symbols of the base dimensions, in storage order.
pub const BASE_SYMBOLS: [&str; 7] = ["M", "L", "T", "I", "Th", "N", "J"];

/// Number of SI base dimensions.
pub const BASE_COUNT: usize = 7;

/// Exponents over (mass, length, time, current, temperature, amount, luminosity).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Dimension {
    exponents: [Rational; BASE_COUNT],
}

impl Dimension {
    pub const fn dimensionless() -> Self {
        Dimension {
            exponents: [Ratio::new_raw(0, 1); BASE_COUNT],
        }
    }

    pub fn from_exponents(exponents: [Rational; BASE_COUNT]) -> Self {
        Dimension { exponents }
    }

    /// Integer exponents, convenient for tests and unit tables.
    pub fn from_ints(ints: [i64; BASE_COUNT]) -> Self {
        Dimension {
            exponents: ints.map(Rational::from_integer),
        }
    }

    /// A single base dimension raised to the first power.
    pub fn base(index: usize) -> Self {
        let mut d = Self::dimensionless();
        d.exponents[index] = Rational::one();
        d
    }

    pub fn mass() -> Self {
        Self::base(0)
    }
    pub fn length() -> Self {
        Self::base(1)
    }
    pub fn time() -> Self {
        Self::base(2)
    }
    pub fn current() -> Self {
        Self::base(3)
    }
    pub fn temperature() -> Self {
        Self::base(4)
    }
    pub fn amount() -> Self {
        Self::base(5)
    }
    pub fn luminosity() -> Self {
        Self::base(6)
    }

    pub fn exponents(&self) -> &[Rational; BASE_COUNT] {
        &self.exponents
    }

    pub fn exponent(&self, index: usize) -> Rational {
        self.exponents[index]
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.iter().all(Zero::is_zero)
    }

    pub fn powr(&self, power: Rational) -> Self {
        Dimension {
            exponents: self.exponents.map(|e| e * power),
        }
    }

    pub fn powi(&self, power: i64) -> Self {
        self.powr(Rational::from_integer(power))
    }

    /// Parses the `{M, L, T, I, Th, N, J}` object form; omitted keys are zero.
    pub fn from_symbol_map<'a, I>(entries: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut d = Self::dimensionless();
        for (key, value) in entries {
            let idx = BASE_SYMBOLS
                .iter()
                .position(|s| *s == key)
                .ok_or_else(|| format!("unknown base dimension `{key}`"))?;
            d.exponents[idx] = parse_rational(value)?;
        }
        Ok(d)
    }
}

/// Parses `"3"`, `"-1/2"` or `"0.5"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| format!("bad rational `{text}`"))?;
        let d: i64 = d.trim().parse().map_err(|_| format!("bad rational `{text}`"))?;
        if d == 0 {
            return Err(format!("zero denominator in `{text}`"));
        }
        return Ok(Rational::new(n, d));
    }
    decimal_to_rational(t).ok_or_else(|| format!("bad rational `{text}`"))
}

/// Exact conversion of a plain decimal literal (no exponent part) to a rational.
pub(crate) fn decimal_to_rational(text: &str) -> Option<Rational> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    if body.is_empty() {
        return None;
    }
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || (int.is_empty() && frac.is_empty()) {
        return None;
    }
    if frac.len() > 15 {
        return None;
    }
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    let denom = 10i64.checked_pow(frac.len() as u32)?;
    let r = Rational::new(digits, denom);
    Some(if neg { -r } else { r })
}

impl Mul for Dimension {
    type Output = Dimension;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Dimension) -> Dimension {
        let mut out = self;
        for (a, b) in out.exponents.iter_mut().zip(rhs.exponents) {
            *a += b;
        }
        out
    }
}

impl Div for Dimension {
    type Output = Dimension;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Dimension) -> Dimension {
        let mut out = self;
        for (a, b) in out.exponents.iter_mut().zip(rhs.exponents) {
            *a -= b;
        }
        out
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut first = true;
        for (sym, e) in BASE_SYMBOLS.iter().zip(self.exponents.iter()) {
            if e.is_zero() {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            if e.is_one() {
                write!(f, "{sym}")?;
            } else if e.is_integer() {
                write!(f, "{sym}^{}", e.numer())?;
            } else {
                write!(f, "{sym}^({}/{})", e.numer(), e.denom())?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dimension({self})")
    }
}

impl Serialize for Dimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let nonzero: Vec<_> = BASE_SYMBOLS
            .iter()
            .zip(self.exponents.iter())
            .filter(|(_, e)| !e.is_zero())
            .collect();
        let mut map = serializer.serialize_map(Some(nonzero.len()))?;
        for (sym, e) in nonzero {
            map.serialize_entry(sym, &e.to_string())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Exp {
            Text(String),
            Int(i64),
        }
        let raw: std::collections::BTreeMap<String, Exp> = Deserialize::deserialize(deserializer)?;
        let texts: Vec<(String, String)> = raw
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Exp::Text(s) => s,
                    Exp::Int(i) => i.to_string(),
                };
                (k, s)
            })
            .collect();
        Dimension::from_symbol_map(texts.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(serde::de::Error::custom)
    }
}
