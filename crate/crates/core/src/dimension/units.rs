//! Unit tags for literals, e.g. `0.5 [kg/s]` or `287 [J/(kg*K)]`.
//!
//! A tag resolves to a scale factor onto SI base units plus a [`Dimension`].
//! Affine units (degrees Celsius) are not supported.

use super::{parse_rational, Dimension, Rational};

/// A resolved unit: `value_in_si = value * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub scale: f64,
    pub dimension: Dimension,
}

impl Unit {
    fn new(scale: f64, ints: [i64; 7]) -> Self {
        Unit {
            scale,
            dimension: Dimension::from_ints(ints),
        }
    }

    fn mul(self, other: Unit) -> Unit {
        Unit {
            scale: self.scale * other.scale,
            dimension: self.dimension * other.dimension,
        }
    }

    fn div(self, other: Unit) -> Unit {
        Unit {
            scale: self.scale / other.scale,
            dimension: self.dimension / other.dimension,
        }
    }

    fn pow(self, p: Rational) -> Unit {
        let pf = *p.numer() as f64 / *p.denom() as f64;
        Unit {
            scale: self.scale.powf(pf),
            dimension: self.dimension.powr(p),
        }
    }
}

/// Looks up a single unit symbol.
pub fn lookup(symbol: &str) -> Option<Unit> {
    //                        M  L   T  I  Th N  J
    let u = match symbol {
        "1" => Unit::new(1.0, [0, 0, 0, 0, 0, 0, 0]),
        "kg" => Unit::new(1.0, [1, 0, 0, 0, 0, 0, 0]),
        "g" => Unit::new(1e-3, [1, 0, 0, 0, 0, 0, 0]),
        "t" => Unit::new(1e3, [1, 0, 0, 0, 0, 0, 0]),
        "m" => Unit::new(1.0, [0, 1, 0, 0, 0, 0, 0]),
        "km" => Unit::new(1e3, [0, 1, 0, 0, 0, 0, 0]),
        "cm" => Unit::new(1e-2, [0, 1, 0, 0, 0, 0, 0]),
        "mm" => Unit::new(1e-3, [0, 1, 0, 0, 0, 0, 0]),
        "L" => Unit::new(1e-3, [0, 3, 0, 0, 0, 0, 0]),
        "s" => Unit::new(1.0, [0, 0, 1, 0, 0, 0, 0]),
        "ms" => Unit::new(1e-3, [0, 0, 1, 0, 0, 0, 0]),
        "min" => Unit::new(60.0, [0, 0, 1, 0, 0, 0, 0]),
        "h" => Unit::new(3600.0, [0, 0, 1, 0, 0, 0, 0]),
        "A" => Unit::new(1.0, [0, 0, 0, 1, 0, 0, 0]),
        "K" => Unit::new(1.0, [0, 0, 0, 0, 1, 0, 0]),
        "mol" => Unit::new(1.0, [0, 0, 0, 0, 0, 1, 0]),
        "cd" => Unit::new(1.0, [0, 0, 0, 0, 0, 0, 1]),
        "Hz" => Unit::new(1.0, [0, 0, -1, 0, 0, 0, 0]),
        "N" => Unit::new(1.0, [1, 1, -2, 0, 0, 0, 0]),
        "kN" => Unit::new(1e3, [1, 1, -2, 0, 0, 0, 0]),
        "Pa" => Unit::new(1.0, [1, -1, -2, 0, 0, 0, 0]),
        "kPa" => Unit::new(1e3, [1, -1, -2, 0, 0, 0, 0]),
        "MPa" => Unit::new(1e6, [1, -1, -2, 0, 0, 0, 0]),
        "bar" => Unit::new(1e5, [1, -1, -2, 0, 0, 0, 0]),
        "J" => Unit::new(1.0, [1, 2, -2, 0, 0, 0, 0]),
        "kJ" => Unit::new(1e3, [1, 2, -2, 0, 0, 0, 0]),
        "W" => Unit::new(1.0, [1, 2, -3, 0, 0, 0, 0]),
        "kW" => Unit::new(1e3, [1, 2, -3, 0, 0, 0, 0]),
        "V" => Unit::new(1.0, [1, 2, -3, -1, 0, 0, 0]),
        _ => return None,
    };
    Some(u)
}

/// Parses a unit expression: symbols joined by `*` and `/`, `^` with a
/// rational exponent, and parentheses.
pub fn parse_unit(text: &str) -> Result<Unit, String> {
    let mut p = UnitParser {
        src: text,
        chars: text.char_indices().peekable(),
    };
    let u = p.product()?;
    p.skip_ws();
    if let Some(&(i, c)) = p.chars.peek() {
        return Err(format!("unexpected `{c}` at {i} in unit `{text}`"));
    }
    Ok(u)
}

struct UnitParser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl UnitParser<'_> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn product(&mut self) -> Result<Unit, String> {
        let mut acc = self.power()?;
        loop {
            self.skip_ws();
            match self.chars.peek().map(|&(_, c)| c) {
                Some('*') | Some('·') => {
                    self.chars.next();
                    acc = acc.mul(self.power()?);
                }
                Some('/') => {
                    self.chars.next();
                    acc = acc.div(self.power()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Unit, String> {
        let base = self.atom()?;
        self.skip_ws();
        if matches!(self.chars.peek(), Some((_, '^'))) {
            self.chars.next();
            self.skip_ws();
            let exp = if matches!(self.chars.peek(), Some((_, '('))) {
                self.chars.next();
                let s = self.take_while(|c| c != ')');
                match self.chars.next() {
                    Some((_, ')')) => {}
                    _ => return Err(format!("unclosed exponent in unit `{}`", self.src)),
                }
                s
            } else {
                self.take_while(|c| c == '-' || c == '.' || c.is_ascii_digit())
            };
            return Ok(base.pow(parse_rational(&exp)?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Unit, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            Some((_, '(')) => {
                self.chars.next();
                let u = self.product()?;
                self.skip_ws();
                match self.chars.next() {
                    Some((_, ')')) => Ok(u),
                    _ => Err(format!("unclosed `(` in unit `{}`", self.src)),
                }
            }
            Some((_, c)) if c.is_alphanumeric() => {
                let sym = self.take_while(|c| c.is_alphanumeric());
                lookup(&sym).ok_or_else(|| format!("unknown unit `{sym}`"))
            }
            Some((i, c)) => Err(format!("unexpected `{c}` at {i} in unit `{}`", self.src)),
            None => Err(format!("empty unit in `{}`", self.src)),
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if !pred(c) {
                break;
            }
            s.push(c);
            self.chars.next();
        }
        s
    }
}
