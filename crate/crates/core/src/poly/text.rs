//! Text form of polynomials: `3.5*x1^2*x2 - 1.0`.
//!
//! The printer emits terms from highest to lowest degree (graded-lex within a
//! degree), with coefficients in Rust's shortest round-trip float notation, so
//! output is byte-stable and parses back to the identical polynomial. The parser also
//! accepts parentheses and powers of parenthesized groups.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;

use super::{Monomial, Polynomial, Universe};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column of the offending token.
    pub column: usize,
    pub message: String,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn write_polynomial(p: &Polynomial, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if p.is_zero() {
        return f.write_str("0");
    }
    let u = p.universe();
    // Highest degree first; within a degree, graded-lex ascending so that
    // `x1^2` precedes `x1*x2`.
    let mut terms: alloc::vec::Vec<(&Monomial, f64)> = p.terms().collect();
    terms.sort_by_key(|(m, _)| core::cmp::Reverse(m.degree()));
    for (k, (m, c)) in terms.into_iter().enumerate() {
        let mag = if c < 0.0 { -c } else { c };
        match (k, c < 0.0) {
            (0, true) => f.write_str("-")?,
            (0, false) => {}
            (_, true) => f.write_str(" - ")?,
            (_, false) => f.write_str(" + ")?,
        }
        if m.is_one() {
            write!(f, "{:?}", mag)?;
            continue;
        }
        let mut first = true;
        if mag != 1.0 {
            write!(f, "{:?}", mag)?;
            first = false;
        }
        for (v, e) in m.powers() {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            f.write_str(u.name(v))?;
            if e > 1 {
                write!(f, "^{}", e)?;
            }
        }
    }
    Ok(())
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    universe: &'a Arc<Universe>,
}

pub(crate) fn parse(universe: &Arc<Universe>, s: &str) -> Result<Polynomial, ParseError> {
    if !s.is_ascii() {
        let col = s.chars().position(|c| !c.is_ascii()).unwrap_or(0) + 1;
        return Err(ParseError {
            column: col,
            message: "non-ASCII character".into(),
        });
    }
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
        universe,
    };
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(out)
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError {
            column: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = Polynomial::zero(self.universe);
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -1.0
            }
            Some(b'+') => {
                self.pos += 1;
                1.0
            }
            _ => 1.0,
        };
        loop {
            let t = self.term()?;
            acc = &acc + &t.scale(sign);
            match self.peek() {
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                _ => return Ok(acc),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, ParseError> {
        let base = match self.peek() {
            None => return Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                inner
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let v = self.number()?;
                return Ok(Polynomial::constant(self.universe, v));
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v = self.universe.lookup(name).ok_or_else(|| ParseError {
                    column: start + 1,
                    message: alloc::format!("unknown variable `{}`", name),
                })?;
                Polynomial::monomial(self.universe, Monomial::var(v), 1.0)
            }
            Some(_) => return Err(self.err("unexpected character")),
        };
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected a nonnegative integer exponent"));
            }
            let s = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let e: u32 = s.parse().map_err(|_| ParseError {
                column: start + 1,
                message: "exponent out of range".into(),
            })?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos > s
        };
        let mut any = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            any |= digits(self);
        }
        if !any {
            self.pos = start;
            return Err(self.err("malformed number"));
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-') {
                self.pos += 1;
            }
            if !digits(self) {
                // Not an exponent after all (e.g. `2e` followed by junk).
                self.pos = save;
                return Err(self.err("malformed exponent"));
            }
        }
        let s = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse::<f64>().map_err(|_| ParseError {
            column: start + 1,
            message: "malformed number".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn prints_descending_and_round_trips() {
        let u = Universe::new(&["x1", "x2"]).unwrap();
        let p = Polynomial::parse(&u, "x2*x1^2*3.5 - 1.0").unwrap();
        assert_eq!(p.to_string(), "3.5*x1^2*x2 - 1.0");
        let q = Polynomial::parse(&u, "-(x1 - 2*x2)^2 + 0.1").unwrap();
        let s = q.to_string();
        assert_eq!(s, "-x1^2 + 4.0*x1*x2 - 4.0*x2^2 + 0.1");
        assert_eq!(Polynomial::parse(&u, &s).unwrap(), q);
        assert_eq!(Polynomial::zero(&u).to_string(), "0");
    }

    #[test]
    fn scientific_notation_round_trips() {
        let u = Universe::new(&["e"]).unwrap();
        let p = Polynomial::parse(&u, "1e-9*e^2 + 2.5E3*e").unwrap();
        assert_eq!(p.to_string(), "1e-9*e^2 + 2500.0*e");
        assert_eq!(Polynomial::parse(&u, &p.to_string()).unwrap(), p);
    }

    #[test]
    fn errors_carry_columns() {
        let u = Universe::new(&["x"]).unwrap();
        let e = Polynomial::parse(&u, "x + y").unwrap_err();
        assert_eq!(e.column, 5);
        let e = Polynomial::parse(&u, "x^").unwrap_err();
        assert_eq!(e.column, 3);
        let e = Polynomial::parse(&u, "2*x )").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(Polynomial::parse(&u, "").is_err());
        let cols: Vec<usize> = ["(x", "x*", "1.2.3"]
            .iter()
            .map(|s| Polynomial::parse(&u, s).unwrap_err().column)
            .collect();
        assert_eq!(cols, [3, 3, 4]);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("x1_2"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier(""));
        assert!(Universe::new(&["a b"]).is_err());
    }
}
