//! Small expression language evaluated over any [`Scalar`].
//!
//! Grammar: numbers, identifiers, `+ - * / ^`, unary minus, parentheses and the
//! functions `sin cos exp sqrt ln`. `pi` is a constant. `^` is right
//! associative and binds tighter than unary minus. An integer literal exponent
//! uses repeated multiplication so negative bases are fine.

use crate::error::{Error, Result};
use crate::jets::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(usize),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Num(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
    PowF(f64),
    Pow,
    Call(Func),
}

/// A parsed and compiled expression.
#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    ast: Ast,
    program: Vec<Op>,
    depth: usize,
}

impl Expr {
    pub fn parse(src: &str, variables: &[&str]) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars: variables,
            end: src.len(),
        };
        let ast = p.expr()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(Error::Syntax {
                pos: t.pos,
                msg: format!("unexpected {:?}", t.kind),
            });
        }
        let mut program = Vec::new();
        compile(&ast, &mut program);
        let depth = stack_depth(&program);
        Ok(Expr {
            src: src.to_string(),
            ast,
            program,
            depth,
        })
    }

    pub fn constant(v: f64) -> Self {
        Expr {
            src: format!("{v}"),
            ast: Ast::Num(v),
            program: vec![Op::Num(v)],
            depth: 1,
        }
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    /// `Some(v)` when the expression does not reference any variable.
    pub fn as_constant(&self) -> Option<f64> {
        if self.program.iter().any(|op| matches!(op, Op::Var(_))) {
            return None;
        }
        self.eval::<f64>(&[]).ok()
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S> {
        let mut stack: Vec<S> = Vec::with_capacity(self.depth);
        for op in &self.program {
            match *op {
                Op::Num(v) => stack.push(S::from_f64(v)),
                Op::Var(i) => stack.push(*vars.get(i).ok_or_else(|| {
                    Error::InvalidInput(format!("variable slot {i} not supplied"))
                })?),
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    stack.push(-a);
                }
                Op::PowI(n) => {
                    let a = stack.pop().unwrap();
                    let v = if n < 0 {
                        a.try_recip()?.powi(-n)
                    } else {
                        a.powi(n)
                    };
                    stack.push(v);
                }
                Op::PowF(p) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.try_powf(p)?);
                }
                Op::Call(f) => {
                    let a = stack.pop().unwrap();
                    stack.push(match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Sqrt => a.try_sqrt()?,
                        Func::Ln => a.try_ln()?,
                    });
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a.try_div(b)?,
                        _ => (a.try_ln()? * b).exp(),
                    });
                }
            }
        }
        Ok(stack.pop().unwrap())
    }
}

fn compile(ast: &Ast, out: &mut Vec<Op>) {
    match ast {
        Ast::Num(v) => out.push(Op::Num(*v)),
        Ast::Var(i) => out.push(Op::Var(*i)),
        Ast::Neg(a) => {
            compile(a, out);
            out.push(Op::Neg);
        }
        Ast::Call(f, a) => {
            compile(a, out);
            out.push(Op::Call(*f));
        }
        Ast::Bin(BinOp::Pow, a, b) => {
            compile(a, out);
            match const_value(b) {
                Some(p) if p.fract() == 0.0 && p.abs() <= 64.0 => out.push(Op::PowI(p as i32)),
                Some(p) => out.push(Op::PowF(p)),
                None => {
                    compile(b, out);
                    out.push(Op::Pow);
                }
            }
        }
        Ast::Bin(op, a, b) => {
            compile(a, out);
            compile(b, out);
            out.push(match op {
                BinOp::Add => Op::Add,
                BinOp::Sub => Op::Sub,
                BinOp::Mul => Op::Mul,
                BinOp::Div => Op::Div,
                BinOp::Pow => unreachable!(),
            });
        }
    }
}

fn const_value(ast: &Ast) -> Option<f64> {
    match ast {
        Ast::Num(v) => Some(*v),
        Ast::Neg(a) => const_value(a).map(|v| -v),
        _ => None,
    }
}

fn stack_depth(program: &[Op]) -> usize {
    let (mut d, mut max) = (0usize, 0usize);
    for op in program {
        match op {
            Op::Num(_) | Op::Var(_) => d += 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => d -= 1,
            _ => {}
        }
        max = max.max(d);
    }
    max
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| Error::Syntax {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push(Token {
                kind: Tok::Num(v),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Tok::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                kind: Tok::Sym(c),
                pos: i,
            });
            i += 1;
        } else {
            return Err(Error::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: Tok::Sym(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.pos)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Syntax {
                pos: self.here(),
                msg: format!("expected `{c}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast> {
        match self.peek_sym() {
            Some('-') => {
                self.pos += 1;
                Ok(Ast::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Ast::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast> {
        let pos = self.here();
        let tok = self.tokens.get(self.pos).cloned().ok_or(Error::Syntax {
            pos,
            msg: "unexpected end of input".into(),
        })?;
        self.pos += 1;
        match tok.kind {
            Tok::Num(v) => Ok(Ast::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sym(c) => Err(Error::Syntax {
                pos,
                msg: format!("unexpected `{c}`"),
            }),
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    "ln" => Some(Func::Ln),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Ast::Call(f, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Ast::Var(i));
                }
                if name == "pi" {
                    return Ok(Ast::Num(std::f64::consts::PI));
                }
                Err(Error::UnknownIdentifier(name))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const XY: [&str; 4] = ["x1", "x2", "y1", "y2"];

    fn ev(src: &str, vals: &[f64]) -> f64 {
        Expr::parse(src, &XY).unwrap().eval(vals).unwrap()
    }

    #[test]
    fn spec_examples() {
        assert_eq!(ev("y1^2 + y2^2", &[0.0, 0.0, 1.0, 2.0]), 5.0);
        assert_eq!(ev("sin(x1)*y1", &[0.0, 0.0, 3.0, 0.0]), 0.0);
        assert_eq!(ev("(y1^2+y2^2)^2/(4*y1^2)", &[0.0, 0.0, 1.0, 0.0]), 0.25);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-x1^2", &[3.0, 0.0, 0.0, 0.0]), -9.0);
        assert!((ev("2^3^2", &[0.0; 4]) - 512.0).abs() < 1e-12);
        assert_eq!(ev("2^(3^2)", &[0.0; 4]), ev("2^3^2", &[0.0; 4]));
        assert_eq!(ev("1 - 2 - 3", &[0.0; 4]), -4.0);
        assert_eq!(ev("8/2/2", &[0.0; 4]), 2.0);
        assert_eq!(ev("x1^-1", &[4.0, 0.0, 0.0, 0.0]), 0.25);
        assert_eq!(ev("(-2)^3", &[0.0; 4]), -8.0);
        assert!(
            (ev("2.5e-1*4 + sqrt(x2)^1.5", &[0.0, 4.0, 0.0, 0.0]) - (1.0 + 8f64.sqrt())).abs()
                < 1e-14
        );
        assert!((ev("x1^x2", &[2.0, 0.5, 0.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert!((ev("cos(pi)", &[0.0; 4]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            Expr::parse("y3 + 1", &XY).unwrap_err(),
            Error::UnknownIdentifier("y3".into())
        );
        assert!(matches!(
            Expr::parse("y1 + * 2", &XY),
            Err(Error::Syntax { pos: 5, .. })
        ));
        assert!(matches!(
            Expr::parse("(y1", &XY),
            Err(Error::Syntax { pos: 3, .. })
        ));
        assert!(matches!(
            Expr::parse("y1 $", &XY),
            Err(Error::Syntax { pos: 3, .. })
        ));
        assert!(matches!(
            Expr::parse("sin y1", &XY),
            Err(Error::Syntax { .. })
        ));
        let e = Expr::parse("1/x1", &XY).unwrap();
        assert_eq!(e.eval(&[0.0; 4]), Err(Error::DivisionByZero));
    }

    #[test]
    fn jets_agree_with_reals() {
        use crate::jets::Jet;
        let e = Expr::parse("exp(x1)*sin(y1) + y2^3/x2", &XY).unwrap();
        let r = e.eval(&[0.3, 1.7, 0.9, -0.4]).unwrap();
        let j: Vec<Jet<f64, 4>> = [0.3, 1.7, 0.9, -0.4]
            .iter()
            .map(|&v| Jet::constant(v))
            .collect();
        assert_eq!(e.eval(&j).unwrap().c[0], r);
        assert!(e.as_constant().is_none());
        assert_eq!(Expr::parse("2*3", &XY).unwrap().as_constant(), Some(6.0));
    }
}
