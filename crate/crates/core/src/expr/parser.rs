use super::{BinOp, Expr, ExprKind, Func, ParseError, Span, UnaryOp};
use crate::dimension::units::parse_unit;
use crate::dimension::{decimal_to_rational, Dimension, Rational};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    /// Contents of a `[unit]` tag.
    Unit(String),
    Ident(String),
    Str(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Dot,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

const OPS: [&str; 15] = [
    "==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "^", "!", "·",
];

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, Span)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, span) = lx.next()?;
            let eof = tok == Tok::Eof;
            out.push((tok, span));
            if eof {
                return Ok(out);
            }
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<(Tok, Span), ParseError> {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
        let start = self.pos;
        let Some(c) = trimmed.chars().next() else {
            return Ok((Tok::Eof, Span { start, end: start }));
        };
        let tok = if c.is_ascii_digit() || (c == '.' && trimmed[1..].starts_with(|d: char| d.is_ascii_digit())) {
            self.number()
        } else if c.is_alphabetic() || c == '_' {
            let len = trimmed
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_'))
                .unwrap_or(trimmed.len());
            self.pos += len;
            Tok::Ident(trimmed[..len].to_string())
        } else if c == '"' {
            let body = &trimmed[1..];
            let end = body.find('"').ok_or_else(|| self.err("unterminated string"))?;
            self.pos += end + 2;
            Tok::Str(body[..end].to_string())
        } else if c == '[' {
            let end = trimmed.find(']').ok_or_else(|| self.err("unterminated unit tag"))?;
            self.pos += end + 1;
            Tok::Unit(trimmed[1..end].to_string())
        } else {
            self.pos += c.len_utf8();
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                _ => {
                    self.pos = start;
                    let op = OPS
                        .iter()
                        .find(|op| trimmed.starts_with(**op))
                        .ok_or_else(|| self.err(format!("unexpected character `{c}`")))?;
                    self.pos += op.len();
                    Tok::Op(op)
                }
            }
        };
        Ok((tok, Span { start, end: self.pos }))
    }

    fn number(&mut self) -> Tok {
        let s = self.rest();
        let b = s.as_bytes();
        let mut i = 0;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos += i;
        Tok::Num(s[..i].to_string())
    }
}

/// Parses an expression from source text.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = Lexer::tokens(src)?;
    let mut p = Parser { tokens, idx: 0 };
    let e = p.or()?;
    match p.peek() {
        Tok::Eof => Ok(e),
        t => Err(p.err(format!("unexpected {t:?} after expression"))),
    }
}

struct Parser {
    tokens: Vec<(Tok, Span)>,
    idx: usize,
}

fn join(a: Span, b: Span) -> Span {
    Span {
        start: a.start.min(b.start),
        end: a.end.max(b.end),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].0
    }

    fn span(&self) -> Span {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.tokens[self.idx].clone();
        if t.0 != Tok::Eof {
            self.idx += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            pos: self.span().start,
            message: message.into(),
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Tok::Op(o) if *o == op) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.idx += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        let span = join(a.span, b.span);
        Expr {
            kind: ExprKind::Binary(op, Box::new(a), Box::new(b)),
            span,
        }
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.and()?;
        while self.eat_op("||") {
            let r = self.and()?;
            e = Self::binary(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.cmp()?;
        while self.eat_op("&&") {
            let r = self.cmp()?;
            e = Self::binary(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let e = self.sum()?;
        let op = match self.peek() {
            Tok::Op("==") => BinOp::Eq,
            Tok::Op("!=") => BinOp::Ne,
            Tok::Op("<") => BinOp::Lt,
            Tok::Op("<=") => BinOp::Le,
            Tok::Op(">") => BinOp::Gt,
            Tok::Op(">=") => BinOp::Ge,
            _ => return Ok(e),
        };
        self.idx += 1;
        let r = self.sum()?;
        if matches!(self.peek(), Tok::Op("==" | "!=" | "<" | "<=" | ">" | ">=")) {
            return Err(self.err("comparisons do not chain"));
        }
        Ok(Self::binary(op, e, r))
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.idx += 1;
            let r = self.product()?;
            e = Self::binary(op, e, r);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") | Tok::Op("·") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok(e),
            };
            self.idx += 1;
            let r = self.unary()?;
            e = Self::binary(op, e, r);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let op = match self.peek() {
            Tok::Op("-") => UnaryOp::Neg,
            Tok::Op("!") => UnaryOp::Not,
            _ => return self.power(),
        };
        self.idx += 1;
        let e = self.unary()?;
        let span = join(start, e.span);
        Ok(Expr {
            kind: ExprKind::Unary(op, Box::new(e)),
            span,
        })
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat_op("^") {
            let exp = self.unary()?;
            return Ok(Self::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, span) = self.bump();
        let kind = match tok {
            Tok::Num(text) => return self.number(&text, span),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::LParen => {
                let mut e = self.or()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                e.span = join(span, end);
                return Ok(e);
            }
            Tok::Ident(name) => return self.named(name, span),
            Tok::Eof => return Err(self.err("unexpected end of expression")),
            t => {
                return Err(ParseError {
                    pos: span.start,
                    message: format!("unexpected {t:?}"),
                })
            }
        };
        Ok(Expr { kind, span })
    }

    fn number(&mut self, text: &str, span: Span) -> Result<Expr, ParseError> {
        let value: f64 = text.parse().map_err(|_| ParseError {
            pos: span.start,
            message: format!("malformed number `{text}`"),
        })?;
        let mut exact = decimal_to_rational(text);
        if exact.is_none() && value.fract() == 0.0 && value.abs() < 9.0e15 {
            exact = Some(Rational::from_integer(value as i64));
        }
        let mut end = span;
        let (value, dim, exact) = if let Tok::Unit(unit) = self.peek().clone() {
            end = self.bump().1;
            let u = parse_unit(&unit).map_err(|m| ParseError {
                pos: end.start,
                message: m,
            })?;
            let exact = if u.scale == 1.0 && u.dimension.is_dimensionless() { exact } else { None };
            (value * u.scale, u.dimension, exact)
        } else {
            (value, Dimension::dimensionless(), exact)
        };
        Ok(Expr {
            kind: ExprKind::Number { value, dim, exact },
            span: join(span, end),
        })
    }

    fn named(&mut self, name: String, span: Span) -> Result<Expr, ParseError> {
        match name.as_str() {
            "true" => {
                return Ok(Expr {
                    kind: ExprKind::Bool(true),
                    span,
                })
            }
            "false" => {
                return Ok(Expr {
                    kind: ExprKind::Bool(false),
                    span,
                })
            }
            _ => {}
        }
        if *self.peek() != Tok::LParen {
            let mut path = vec![name];
            let mut end = span;
            if *self.peek() == Tok::Dot {
                self.idx += 1;
                end = self.span();
                path.push(self.ident("attribute name after `.`")?);
            }
            return Ok(Expr {
                kind: ExprKind::Ident(path),
                span: join(span, end),
            });
        }
        self.idx += 1;
        let kind = match name.as_str() {
            "count" => ExprKind::Count(self.ident("class name")?),
            "exists" => {
                let class = self.ident("class name")?;
                let pred = if matches!(self.peek(), Tok::Ident(w) if w == "where") {
                    self.idx += 1;
                    Some(Box::new(self.or()?))
                } else {
                    None
                };
                ExprKind::Exists(class, pred)
            }
            "attr" => {
                let class = self.ident("class name")?;
                self.expect(Tok::Comma, "`,`")?;
                ExprKind::AttrOf(class, self.ident("attribute name")?)
            }
            "param" => ExprKind::Param(self.ident("parameter name")?),
            _ => {
                let func = Func::from_name(&name).ok_or_else(|| ParseError {
                    pos: span.start,
                    message: format!("unknown function `{name}`"),
                })?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.or()?);
                        if *self.peek() != Tok::Comma {
                            break;
                        }
                        self.idx += 1;
                    }
                }
                let arity_ok = match func {
                    Func::Min | Func::Max => !args.is_empty(),
                    _ => args.len() == 1,
                };
                if !arity_ok {
                    return Err(ParseError {
                        pos: span.start,
                        message: format!("wrong number of arguments to `{name}`"),
                    });
                }
                ExprKind::Call(func, args)
            }
        };
        let end = self.expect(Tok::RParen, "`)`")?;
        Ok(Expr {
            kind,
            span: join(span, end),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(e: &Expr) -> String {
        match &e.kind {
            ExprKind::Number { value, .. } => format!("{value}"),
            ExprKind::Str(s) => format!("{s:?}"),
            ExprKind::Bool(b) => b.to_string(),
            ExprKind::Ident(p) => p.join("."),
            ExprKind::Unary(UnaryOp::Neg, a) => format!("(-{})", shape(a)),
            ExprKind::Unary(UnaryOp::Not, a) => format!("(!{})", shape(a)),
            ExprKind::Binary(op, a, b) => format!("({} {} {})", shape(a), op.symbol(), shape(b)),
            ExprKind::Call(f, args) => {
                format!("{}({})", f.name(), args.iter().map(shape).collect::<Vec<_>>().join(", "))
            }
            ExprKind::Count(c) => format!("count({c})"),
            ExprKind::Exists(c, None) => format!("exists({c})"),
            ExprKind::Exists(c, Some(p)) => format!("exists({c} where {})", shape(p)),
            ExprKind::AttrOf(c, a) => format!("attr({c}, {a})"),
            ExprKind::Param(p) => format!("param({p})"),
        }
    }

    fn p(s: &str) -> String {
        shape(&parse(s).unwrap())
    }

    #[test]
    fn precedence() {
        assert_eq!(p("a + b * c"), "(a + (b * c))");
        assert_eq!(p("-x^2"), "(-(x ^ 2))");
        assert_eq!(p("x^-2"), "(x ^ (-2))");
        assert_eq!(p("a - b - c"), "((a - b) - c)");
        assert_eq!(p("c == a + b"), "(c == (a + b))");
        assert_eq!(p("a < 1 && !b || c"), "(((a < 1) && (!b)) || c)");
        assert_eq!(p("2^3^2"), "(2 ^ (3 ^ 2))");
    }

    #[test]
    fn special_forms() {
        assert_eq!(p("count(SCRSystem) == 0"), "(count(SCRSystem) == 0)");
        assert_eq!(p("exists(A where x > 1)"), "exists(A where (x > 1))");
        assert_eq!(p("attr(A, volume) * 2"), "(attr(A, volume) * 2)");
        assert_eq!(p("e.massFlow * param(k)"), "(e.massFlow * param(k))");
        assert_eq!(p("max(a, b, 3)"), "max(a, b, 3)");
    }

    #[test]
    fn unit_tags() {
        let e = parse("0.5 [g/s]").unwrap();
        match e.kind {
            ExprKind::Number { value, dim, exact } => {
                assert!((value - 5e-4).abs() < 1e-18);
                assert_eq!(dim, Dimension::mass() / Dimension::time());
                assert_eq!(exact, None);
            }
            _ => panic!(),
        }
        let e = parse("0.25").unwrap();
        assert!(matches!(e.kind, ExprKind::Number { exact: Some(r), .. } if r == Rational::new(1, 4)));
        assert_eq!(p("1.5e3"), "1500");
    }

    #[test]
    fn errors_report_position() {
        let err = parse("a + * b").unwrap_err();
        assert_eq!(err.pos, 4);
        assert!(parse("a == b == c").is_err());
        assert!(parse("foo(1)").is_err());
        assert!(parse("sin(1, 2)").is_err());
        assert!(parse("1 [parsec]").is_err());
        assert!(parse("(a + b").is_err());
        assert!(parse("\"open").is_err());
    }
}
