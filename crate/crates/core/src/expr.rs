//! Closed-form expressions over chart coordinates.
//!
//! Grammar: numbers, `x1..xn`, `i`, `pi`, `+ - * / ^`, parentheses and the
//! functions `exp sin cos sqrt log`. Values are complex.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(Complex64),
    Coord(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Log,
}

/// A parsed expression in `dim` coordinates.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Arc<Node>,
    dim: usize,
    source: String,
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, dim };
        let root = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("trailing input in `{src}`")));
        }
        Ok(Expr { root: Arc::new(root), dim, source: src.to_string() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        eval(&self.root, x)
    }

    /// Real part, for metric and weight entries.
    pub fn eval_real(&self, x: &[f64]) -> f64 {
        self.eval(x).re
    }
}

fn eval(n: &Node, x: &[f64]) -> Complex64 {
    match n {
        Node::Num(c) => *c,
        Node::Coord(k) => Complex64::new(x[*k], 0.0),
        Node::Neg(a) => -eval(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => pow(a, b),
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, x);
            match f {
                Func::Exp => a.exp(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Sqrt => a.sqrt(),
                Func::Log => a.ln(),
            }
        }
    }
}

fn pow(a: Complex64, b: Complex64) -> Complex64 {
    if b.im == 0.0 && b.re.fract() == 0.0 && b.re.abs() <= 64.0 {
        a.powi(b.re as i32)
    } else if a.im == 0.0 && a.re > 0.0 && b.im == 0.0 {
        Complex64::new(a.re.powf(b.re), 0.0)
    } else {
        a.powc(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::Expr(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // `^` is right associative and binds tighter than unary minus on its left.
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.peek().cloned().ok_or_else(|| Error::Expr("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(Complex64::new(v, 0.0))),
            Tok::LParen => {
                let inner = self.sum()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(Error::Expr("missing `)`".into())),
                }
            }
            Tok::Ident(name) => self.ident(&name),
            t => Err(Error::Expr(format!("unexpected token {t:?}"))),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Node> {
        let func = match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            "log" => Some(Func::Log),
            _ => None,
        };
        if let Some(f) = func {
            if self.peek() != Some(&Tok::LParen) {
                return Err(Error::Expr(format!("`{name}` needs parentheses")));
            }
            let arg = self.atom()?;
            return Ok(Node::Call(f, Box::new(arg)));
        }
        match name {
            "i" => Ok(Node::Num(Complex64::new(0.0, 1.0))),
            "pi" => Ok(Node::Num(Complex64::new(std::f64::consts::PI, 0.0))),
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.dim {
                            return Ok(Node::Coord(k - 1));
                        }
                        return Err(Error::Expr(format!("coordinate `{name}` outside 1..={}", self.dim)));
                    }
                }
                Err(Error::Expr(format!("unknown identifier `{name}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> Complex64 {
        Expr::parse(s, x.len()).unwrap().eval(x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2*3", &[0.0]).re, 7.0);
        assert_eq!(ev("-2^2", &[0.0]).re, -4.0);
        assert_eq!(ev("2^3^2", &[0.0]).re, 512.0);
        assert_eq!(ev("(1+2)*3", &[0.0]).re, 9.0);
        assert_eq!(ev("2*x2 - x1", &[1.0, 5.0]).re, 9.0);
        assert_eq!(ev("1e-3*1000", &[0.0]).re, 1.0);
    }

    #[test]
    fn magnetic_entry() {
        let x = [0.7, -0.2];
        let v = ev("exp(i*x1^3)", &x);
        let want = Complex64::new(0.0, 0.7f64.powi(3)).exp();
        assert!((v - want).norm() < 1e-15);
        let w = ev("-exp(-i*x1^3)", &x);
        assert!((w + want.conj()).norm() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("x3", 2).is_err());
        assert!(Expr::parse("foo(1)", 2).is_err());
        assert!(Expr::parse("(1+2", 2).is_err());
        assert!(Expr::parse("1 2", 2).is_err());
    }
}
