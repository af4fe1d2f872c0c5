//! Expression language for coefficient fields.
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = atom [ "^" exponent ] ;
//! exponent = "-" exponent | power ;          (must fold to an integer constant)
//! atom     = number | variable | func "(" expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "exp" ;
//! variable = "x" digits | "y" digits | "t" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!          | "." digits [ exponent part ] ;
//! ```
//!
//! Which variables are legal is decided by a [`VarSpec`]. Parsed expressions
//! evaluate over `f64` or [`Dual`], so fields built from them differentiate
//! exactly.

use std::fmt;

use crate::chart::{CoordDomain, Dual, Scalar, ScalarField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X(usize),
    Y(usize),
    T,
}

/// Variables an expression may mention: `x0..x{x-1}`, `y0..y{y-1}` and
/// optionally `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct VarSpec {
    pub x: usize,
    pub y: usize,
    pub t: bool,
}

impl VarSpec {
    pub fn base(n: usize) -> Self {
        Self { x: n, y: 0, t: false }
    }

    pub fn total(n: usize, l: usize) -> Self {
        Self { x: n, y: l, t: false }
    }

    pub fn time() -> Self {
        Self { x: 0, y: 0, t: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    /// Evaluate with coordinates `x`, fiber coordinates `y` and time `t`.
    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S], t: S) -> S {
        match self {
            Expr::Num(v) => S::from_f64(*v),
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::Y(i)) => y[*i],
            Expr::Var(Var::T) => t,
            Expr::Neg(e) => -e.eval(x, y, t),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x, y, t), b.eval(x, y, t));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x, y, t);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
            Expr::Pow(e, n) => e.eval(x, y, t).powi(*n),
        }
    }

    /// Smallest spec that admits every variable in the expression.
    pub fn vars(&self) -> VarSpec {
        fn walk(e: &Expr, spec: &mut VarSpec) {
            match e {
                Expr::Num(_) => {}
                Expr::Var(Var::X(i)) => spec.x = spec.x.max(i + 1),
                Expr::Var(Var::Y(i)) => spec.y = spec.y.max(i + 1),
                Expr::Var(Var::T) => spec.t = true,
                Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => walk(a, spec),
                Expr::Binary(_, a, b) => {
                    walk(a, spec);
                    walk(b, spec);
                }
            }
        }
        let mut spec = VarSpec::default();
        walk(self, &mut spec);
        spec
    }

    fn constant_value(&self) -> Option<f64> {
        if self.vars() == VarSpec::default() {
            Some(self.eval::<f64>(&[], &[], 0.0))
        } else {
            None
        }
    }
}

/// Canonical, fully parenthesised form; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X(i)) => write!(f, "x{i}"),
            Expr::Var(Var::Y(i)) => write!(f, "y{i}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Pow(e, n) => write!(f, "({e} ^ {n})"),
        }
    }
}

pub fn parse(src: &str, vars: VarSpec) -> Result<Expr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, vars };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error(0, "empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error(p.pos, format!("unexpected '{}'", p.peek_char())));
    }
    Ok(e)
}

/// Field on `domain` with dual-number derivatives. Only `x` variables within
/// the domain dimension are allowed.
pub fn to_field(expr: &Expr, domain: &CoordDomain) -> Result<ScalarField> {
    let used = expr.vars();
    if used.x > domain.dim() || used.y > 0 || used.t {
        return Err(Error::Shape(format!("expression `{expr}` needs variables beyond x0..x{}", domain.dim().saturating_sub(1))));
    }
    let e = expr.clone();
    Ok(ScalarField::from_dual_fn(domain.clone(), move |x| e.eval(x, &[], Dual::constant(0.0))))
}

/// Field on the total-space box `domain` (coordinates `x` then `y`, with
/// `n` base coordinates).
pub fn to_total_field(expr: &Expr, domain: &CoordDomain, n: usize) -> Result<ScalarField> {
    let used = expr.vars();
    if used.x > n || n + used.y > domain.dim() || used.t {
        return Err(Error::Shape(format!("expression `{expr}` does not fit an (x, y) box of dimension {}", domain.dim())));
    }
    let e = expr.clone();
    Ok(ScalarField::from_dual_fn(domain.clone(), move |p| e.eval(&p[..n], &p[n..], Dual::constant(0.0))))
}

pub fn parse_field(src: &str, domain: &CoordDomain) -> Result<ScalarField> {
    to_field(&parse(src, VarSpec::base(domain.dim()))?, domain)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: VarSpec,
}

impl Parser<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse { offset, message: message.into() }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_char(&self) -> char {
        std::str::from_utf8(&self.src[self.pos..]).ok().and_then(|s| s.chars().next()).unwrap_or('?')
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let at = self.pos;
        let exponent = self.exponent()?;
        let value = exponent.constant_value().ok_or_else(|| self.error(at, "exponent must be a constant"))?;
        if value.fract() != 0.0 || !value.is_finite() || value.abs() > f64::from(i32::MAX) {
            return Err(self.error(at, format!("exponent {value} is not an integer")));
        }
        Ok(Expr::Pow(Box::new(base), value as i32))
    }

    fn exponent(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.exponent()?)))
        } else {
            self.power()
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error(start, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error(self.pos, "expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error(start, format!("unexpected '{}'", self.peek_char()))),
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let mut count = self.digits();
        if self.peek() == Some(b'.') {
            self.pos += 1;
            count += self.digits();
        }
        if count == 0 {
            return Err(self.error(start, "malformed number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                return Err(self.error(start, "malformed number: missing exponent digits"));
            }
        }
        if matches!(self.peek(), Some(c) if c == b'.' || c.is_ascii_alphanumeric() || c == b'_') {
            return Err(self.error(start, "malformed number"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| self.error(start, format!("malformed number '{text}'")))
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(func) = func {
            if !self.eat(b'(') {
                return Err(self.error(start, format!("function '{name}' takes exactly one argument")));
            }
            self.skip_ws();
            if self.peek() == Some(b')') {
                return Err(self.error(start, format!("function '{name}' takes exactly one argument")));
            }
            let arg = self.expr()?;
            if self.eat(b',') {
                return Err(self.error(start, format!("function '{name}' takes exactly one argument")));
            }
            if !self.eat(b')') {
                return Err(self.error(self.pos, "expected ')'"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        self.variable(name).ok_or_else(|| self.error(start, format!("unknown identifier '{name}'"))).map(Expr::Var)
    }

    fn variable(&self, name: &str) -> Option<Var> {
        if name == "t" {
            return self.vars.t.then_some(Var::T);
        }
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || (digits.len() > 1 && digits.starts_with('0')) {
            return None;
        }
        let index: usize = digits.parse().ok()?;
        match kind {
            "x" if index < self.vars.x => Some(Var::X(index)),
            "y" if index < self.vars.y => Some(Var::Y(index)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base2() -> VarSpec {
        VarSpec::base(2)
    }

    fn eval2(src: &str, x: [f64; 2]) -> f64 {
        parse(src, base2()).unwrap().eval(&x, &[], 0.0)
    }

    #[test]
    fn spec_examples() {
        assert_eq!(eval2("x0^2 + 3*x1", [2.0, 1.0]), 7.0);
        assert_eq!(eval2("sin(x0)*x1", [0.0, 5.0]), 0.0);
        assert_eq!(parse("x2", base2()), Err(Error::Parse { offset: 0, message: "unknown identifier 'x2'".into() }));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval2("-x0^2", [3.0, 0.0]), -9.0);
        assert_eq!(eval2("2^3^2", [0.0, 0.0]), 512.0);
        assert_eq!(eval2("8 - 3 - 2", [0.0, 0.0]), 3.0);
        assert_eq!(eval2("8 / 4 / 2", [0.0, 0.0]), 1.0);
        assert_eq!(eval2("1 + 2 * 3", [0.0, 0.0]), 7.0);
        assert_eq!(eval2("x0^-2", [2.0, 0.0]), 0.25);
        assert_eq!(eval2("  ( x0+x1 ) *\t2 ", [1.0, 2.0]), 6.0);
        assert_eq!(eval2("1.5e1 + .5", [0.0, 0.0]), 15.5);
    }

    #[test]
    fn positioned_errors() {
        let err = |src: &str| match parse(src, base2()) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected parse error for {src:?}, got {other:?}"),
        };
        assert_eq!(err("1 + foo"), 4);
        assert_eq!(err("sin(x0, x1)"), 0);
        assert_eq!(err("x0 + cos()"), 5);
        assert_eq!(err("exp x0"), 0);
        assert_eq!(err("2 * 1.2.3"), 4);
        assert_eq!(err("1e+"), 0);
        assert_eq!(err("x0^1.5"), 3);
        assert_eq!(err("x0^x1"), 3);
        assert_eq!(err("(x0"), 3);
        assert_eq!(err("x0 x1"), 3);
        assert_eq!(err(""), 0);
        assert_eq!(err("t"), 0);
        assert_eq!(err("x01"), 0);
    }

    #[test]
    fn time_and_fiber_variables() {
        let e = parse("t*y1 + x0", VarSpec { x: 1, y: 2, t: true }).unwrap();
        assert_eq!(e.eval(&[1.0], &[0.0, 3.0], 2.0), 7.0);
        assert_eq!(e.vars(), VarSpec { x: 1, y: 2, t: true });
    }

    #[test]
    fn field_derivatives_are_exact() {
        let line = CoordDomain::cube(1, -5.0, 5.0).unwrap();
        let sq = parse_field("x0^2", &line).unwrap();
        assert_eq!(sq.partial(&[3.0], 0).unwrap(), 6.0);
        let ex = parse_field("exp(x0)", &line).unwrap();
        assert_eq!(ex.partial(&[0.0], 0).unwrap(), 1.0);
        let plane = CoordDomain::cube(2, -5.0, 5.0).unwrap();
        let xy = parse_field("x0*x1", &plane).unwrap();
        assert_eq!(xy.partial(&[2.0, 3.0], 1).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let line = CoordDomain::cube(1, -1.0, 1.0).unwrap();
        let e = parse("x1", base2()).unwrap();
        assert!(matches!(to_field(&e, &line), Err(Error::Shape(_))));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(0.0f64..100.0).prop_map(Expr::Num), (0usize..3).prop_map(|i| Expr::Var(Var::X(i))),];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0usize..4).prop_map(|(a, b, op)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][op];
                    Expr::Binary(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), 0usize..3).prop_map(|(a, f)| Expr::Call([Func::Sin, Func::Cos, Func::Exp][f], Box::new(a))),
                (inner, -3i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let spec = VarSpec::base(3);
            let printed = e.to_string();
            let once = parse(&printed, spec).unwrap();
            prop_assert_eq!(&once, &e);
            let twice = parse(&once.to_string(), spec).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn dual_matches_central_difference(e in arb_expr(), p in proptest::array::uniform3(-1.0f64..1.0)) {
            let domain = CoordDomain::cube(3, -2.0, 2.0).unwrap();
            let f = to_field(&e, &domain).unwrap();
            let value = f.eval(&p);
            prop_assume!(value.is_ok() && value.unwrap().abs() < 1e3);
            for axis in 0..3 {
                let d = f.partial(&p, axis);
                prop_assume!(d.is_ok());
                let d = d.unwrap();
                prop_assume!(d.abs() < 1e3);
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[axis] += h;
                b[axis] -= h;
                let fd = (e.eval::<f64>(&a, &[], 0.0) - e.eval::<f64>(&b, &[], 0.0)) / (2.0 * h);
                prop_assume!(fd.is_finite());
                prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{} vs {}", d, fd);
            }
        }
    }
}
