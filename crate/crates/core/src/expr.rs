//! A small arithmetic language for coefficients and data.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'u' | 'v' | 'pi' | name '(' expr (',' expr)* ')' | '(' expr ')'
//! name   := sin | cos | exp | bump
//! ```
//!
//! `bump(c, w)` is the unit-height bump `exp(1 - 1/(1 - z^2))`, `z = (v - c)/w`;
//! `bump(x, c, w)` uses the expression `x` in place of `v`.

use crate::error::{Error, Result};
use crate::series::{bump_series, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression in `u` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let x = text.parse::<f64>().map_err(|_| Error::Expression {
                column: col,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(x), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(Error::Expression { column: col, message: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end_col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression { column: self.col(), message: message.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let col = self.col();
                self.pos += 1;
                match name.as_str() {
                    "u" => return Ok(Node::Var(Var::U)),
                    "v" => return Ok(Node::Var(Var::V)),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    _ => {}
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "bump" => Func::Bump,
                    _ => {
                        return Err(Error::Expression {
                            column: col,
                            message: format!("unknown identifier '{name}'"),
                        })
                    }
                };
                if !self.eat('(') {
                    return self.err(format!("expected '(' after '{name}'"));
                }
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                if !self.eat(')') {
                    return self.err("expected ')' to close the argument list");
                }
                let ok = match func {
                    Func::Bump => args.len() == 2 || args.len() == 3,
                    _ => args.len() == 1,
                };
                if !ok {
                    return Err(Error::Expression {
                        column: col,
                        message: format!("wrong number of arguments to '{name}'"),
                    });
                }
                Ok(Node::Call(func, args))
            }
            Some(Tok::Sym(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of expression"),
        }
    }
}

fn scalar_bump(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - z * z)).exp()
    }
}

fn eval_node(n: &Node, u: f64, v: f64) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(Var::U) => u,
        Node::Var(Var::V) => v,
        Node::Neg(a) => -eval_node(a, u, v),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_node(a, u, v), eval_node(b, u, v));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
        Node::Pow(a, b) => {
            let (x, y) = (eval_node(a, u, v), eval_node(b, u, v));
            if y.fract() == 0.0 && y.abs() < 64.0 {
                x.powi(y as i32)
            } else {
                x.powf(y)
            }
        }
        Node::Call(f, args) => {
            let x = eval_node(&args[0], u, v);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Bump => {
                    if args.len() == 2 {
                        scalar_bump((v - x) / eval_node(&args[1], u, v))
                    } else {
                        scalar_bump((x - eval_node(&args[1], u, v)) / eval_node(&args[2], u, v))
                    }
                }
            }
        }
    }
}

fn is_constant(n: &Node) -> bool {
    match n {
        Node::Num(_) => true,
        Node::Var(_) => false,
        Node::Neg(a) => is_constant(a),
        Node::Bin(_, a, b) | Node::Pow(a, b) => is_constant(a) && is_constant(b),
        Node::Call(Func::Bump, args) if args.len() == 2 => false,
        Node::Call(_, args) => args.iter().all(is_constant),
    }
}

fn series_node(n: &Node, var: Var, u: f64, v: f64, order: usize) -> Series {
    match n {
        Node::Num(x) => Series::constant(*x, order),
        Node::Var(w) => {
            let x0 = if *w == Var::U { u } else { v };
            if *w == var {
                Series::variable(x0, order)
            } else {
                Series::constant(x0, order)
            }
        }
        Node::Neg(a) => -&series_node(a, var, u, v, order),
        Node::Bin(op, a, b) => {
            let x = series_node(a, var, u, v, order);
            let y = series_node(b, var, u, v, order);
            match op {
                BinOp::Add => &x + &y,
                BinOp::Sub => &x - &y,
                BinOp::Mul => &x * &y,
                BinOp::Div => x.div(&y),
            }
        }
        Node::Pow(a, b) => {
            let x = series_node(a, var, u, v, order);
            if is_constant(b) {
                x.powf(eval_node(b, u, v))
            } else {
                let y = series_node(b, var, u, v, order);
                (&x.ln() * &y).exp()
            }
        }
        Node::Call(f, args) => {
            let x = series_node(&args[0], var, u, v, order);
            match f {
                Func::Sin => x.sin_cos().0,
                Func::Cos => x.sin_cos().1,
                Func::Exp => x.exp(),
                Func::Bump => {
                    let (arg, c, w) = if args.len() == 2 {
                        (series_node(&Node::Var(Var::V), var, u, v, order), x, series_node(&args[1], var, u, v, order))
                    } else {
                        (x, series_node(&args[1], var, u, v, order), series_node(&args[2], var, u, v, order))
                    };
                    bump_series(&(&arg - &c).div(&w))
                }
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0, end_col: src.chars().count() + 1 };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(Expr { source: src.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        eval_node(&self.root, u, v)
    }

    /// Derivatives `d^k/d var^k` for `k = 0..=order` at `(u, v)`, exact up to roundoff.
    pub fn derivatives(&self, var: Var, u: f64, v: f64, order: usize) -> Vec<f64> {
        series_node(&self.root, var, u, v, order).derivatives()
    }

    /// True when the expression does not mention `u` or `v`.
    pub fn is_constant(&self) -> bool {
        is_constant(&self.root)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2*3^2 - 8/4/2").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 1.0 + 18.0 - 1.0);
        let e = Expr::parse("-2^2").unwrap();
        assert_eq!(e.eval(0.0, 0.0), -4.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("sin(u)*cos(v) + exp(u*v) + pi").unwrap();
        let (u, v) = (0.3, -1.1);
        assert_relative_eq!(
            e.eval(u, v),
            u.sin() * v.cos() + (u * v).exp() + std::f64::consts::PI,
            epsilon = 1e-15
        );
        let b = Expr::parse("bump(2.5, 0.5)").unwrap();
        assert_eq!(b.eval(0.0, 2.5), 1.0);
        assert_eq!(b.eval(0.0, 3.0), 0.0);
        assert!(!b.is_constant());
        let b3 = Expr::parse("bump(u, 0, 2)").unwrap();
        assert_relative_eq!(b3.eval(1.0, 9.0), (1.0f64 - 1.0 / 0.75).exp(), epsilon = 1e-15);
    }

    #[test]
    fn u_derivatives_are_exact() {
        let e = Expr::parse("u^3*v + sin(2*u)").unwrap();
        let d = e.derivatives(Var::U, 0.0, 1.5, 4);
        assert_relative_eq!(d[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(d[1], 2.0, epsilon = 1e-15);
        assert_relative_eq!(d[2], 0.0, epsilon = 1e-15);
        assert_relative_eq!(d[3], 6.0 * 1.5 - 8.0, epsilon = 1e-13);
        assert_relative_eq!(d[4], 0.0, epsilon = 1e-13);
        let dv = e.derivatives(Var::V, 2.0, 1.5, 2);
        assert_relative_eq!(dv[1], 8.0, epsilon = 1e-14);
        assert_eq!(dv[2], 0.0);
    }

    #[test]
    fn parse_errors_report_columns() {
        match Expr::parse("1 + * 2") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        match Expr::parse("foo(u)") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 1),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("sin(u").is_err());
        assert!(Expr::parse("u $ v").is_err());
        assert!(Expr::parse("bump(u)").is_err());
    }
}
