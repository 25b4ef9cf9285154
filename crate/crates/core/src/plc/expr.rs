//! Structured-text expressions: parsing, type checking, evaluation.
//!
//! Grammar (lowest to highest precedence): `or`, `and`, comparisons
//! (`= <> < > <= >=`), `+ -`, `* /`, unary `not` / `-`, atoms (numbers,
//! `true`/`false`, identifiers, parentheses).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scl::PlcVarType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Bool(bool),
    Num(f64),
    Var(String),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && cs.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.' || cs[i] == 'e' || cs[i] == 'E') {
                if (cs[i] == 'e' || cs[i] == 'E') && matches!(cs.get(i + 1), Some('-') | Some('+')) {
                    i += 1;
                }
                i += 1;
            }
            let text: String = cs[start..i].iter().collect();
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number `{text}`"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[start..i].iter().collect()));
        } else {
            let two: String = cs[i..cs.len().min(i + 2)].iter().collect();
            let op = match two.as_str() {
                "<>" => Some("<>"),
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(op) = op {
                out.push(Tok::Op(op));
                i += 2;
                continue;
            }
            out.push(match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '<' => Tok::Op("<"),
                '>' => Tok::Op(">"),
                '=' => Tok::Op("="),
                '+' => Tok::Op("+"),
                '-' => Tok::Op("-"),
                '*' | '×' => Tok::Op("*"),
                '/' => Tok::Op("/"),
                _ => return Err(format!("unexpected character `{c}`")),
            });
            i += 1;
        }
    }
    Ok(out)
}

fn infix(t: &Tok) -> Option<(BinOp, u8)> {
    let kw = |s: &str| match s.to_ascii_lowercase().as_str() {
        "or" => Some((BinOp::Or, 1)),
        "and" => Some((BinOp::And, 2)),
        _ => None,
    };
    match t {
        Tok::Ident(s) => kw(s),
        Tok::Op(o) => Some(match *o {
            "=" => (BinOp::Eq, 3),
            "<>" => (BinOp::Ne, 3),
            "<" => (BinOp::Lt, 3),
            ">" => (BinOp::Gt, 3),
            "<=" => (BinOp::Le, 3),
            ">=" => (BinOp::Ge, 3),
            "+" => (BinOp::Add, 4),
            "-" => (BinOp::Sub, 4),
            "*" => (BinOp::Mul, 5),
            "/" => (BinOp::Div, 5),
            _ => return None,
        }),
        _ => None,
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, String> {
        let mut lhs = self.prefix()?;
        while let Some((op, bp)) = self.peek().and_then(infix) {
            if bp < min_bp {
                break;
            }
            self.pos += 1;
            // Comparisons do not chain.
            let next_min = if bp == 3 { 4 } else { bp + 1 };
            let rhs = self.expr(next_min)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
            if bp == 3 && self.peek().and_then(infix).is_some_and(|(_, b)| b == 3) {
                return Err("comparisons cannot be chained".into());
            }
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Ident(s)) => match s.to_ascii_lowercase().as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "not" => Ok(Expr::Not(Box::new(self.expr(6)?))),
                "and" | "or" => Err(format!("operator `{s}` needs a left operand")),
                _ => Ok(Expr::Var(s)),
            },
            Some(Tok::Op("-")) => Ok(Expr::Neg(Box::new(self.expr(6)?))),
            Some(Tok::LParen) => {
                let e = self.expr(0)?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err("missing `)`".into()),
                }
            }
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

pub fn parse_expr(s: &str) -> Result<Expr, String> {
    let mut p = Parser {
        toks: tokenize(s)?,
        pos: 0,
    };
    let e = p.expr(0)?;
    if p.pos != p.toks.len() {
        return Err(format!("trailing input in `{s}`"));
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeCheckError {
    Unbound(String),
    Mismatch(String),
}

impl fmt::Display for TypeCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeCheckError::Unbound(v) => write!(f, "unbound variable `{v}`"),
            TypeCheckError::Mismatch(m) => f.write_str(m),
        }
    }
}

impl Expr {
    pub fn type_of(&self, vars: &BTreeMap<String, PlcVarType>) -> Result<PlcVarType, TypeCheckError> {
        use PlcVarType::*;
        let want = |e: &Expr, t: PlcVarType, ctx: &str| -> Result<(), TypeCheckError> {
            let got = e.type_of(vars)?;
            if got == t {
                Ok(())
            } else {
                Err(TypeCheckError::Mismatch(format!("{ctx} expects {t:?}, got {got:?}")))
            }
        };
        Ok(match self {
            Expr::Bool(_) => Bool,
            Expr::Num(_) => Real,
            Expr::Var(v) => *vars.get(v).ok_or_else(|| TypeCheckError::Unbound(v.clone()))?,
            Expr::Not(e) => {
                want(e, Bool, "not")?;
                Bool
            }
            Expr::Neg(e) => {
                want(e, Real, "unary -")?;
                Real
            }
            Expr::Bin(op, a, b) => match op {
                BinOp::And | BinOp::Or => {
                    want(a, Bool, "and/or")?;
                    want(b, Bool, "and/or")?;
                    Bool
                }
                BinOp::Eq | BinOp::Ne => {
                    let ta = a.type_of(vars)?;
                    want(b, ta, "comparison")?;
                    Bool
                }
                BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
                    want(a, Real, "ordering")?;
                    want(b, Real, "ordering")?;
                    Bool
                }
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    want(a, Real, "arithmetic")?;
                    want(b, Real, "arithmetic")?;
                    Real
                }
            },
        })
    }

    /// Evaluate with booleans as 0/1; callers type-check first.
    pub fn eval(&self, env: &BTreeMap<String, f64>) -> f64 {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match self {
            Expr::Bool(x) => b(*x),
            Expr::Num(n) => *n,
            Expr::Var(v) => env.get(v).copied().unwrap_or(0.0),
            Expr::Not(e) => b(e.eval(env) < 0.5),
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, l, r) => {
                let (x, y) = (l.eval(env), r.eval(env));
                match op {
                    BinOp::Or => b(x >= 0.5 || y >= 0.5),
                    BinOp::And => b(x >= 0.5 && y >= 0.5),
                    BinOp::Eq => b(x == y),
                    BinOp::Ne => b(x != y),
                    BinOp::Lt => b(x < y),
                    BinOp::Gt => b(x > y),
                    BinOp::Le => b(x <= y),
                    BinOp::Ge => b(x >= y),
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            0.0
                        } else {
                            x / y
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> BTreeMap<String, PlcVarType> {
        [("V".to_string(), PlcVarType::Real), ("P".to_string(), PlcVarType::Bool)].into()
    }

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2 * 3 > 6 and not P").unwrap();
        assert_eq!(e.type_of(&vars()).unwrap(), PlcVarType::Bool);
        let env = [("P".to_string(), 0.0)].into();
        assert_eq!(e.eval(&env), 1.0);
        assert_eq!(parse_expr("(1 + 2) * 3").unwrap().eval(&BTreeMap::new()), 9.0);
        assert_eq!(parse_expr("-2 * -3").unwrap().eval(&BTreeMap::new()), 6.0);
    }

    #[test]
    fn type_errors() {
        let e = parse_expr("V and 3").unwrap();
        assert!(matches!(e.type_of(&vars()), Err(TypeCheckError::Mismatch(_))));
        let e = parse_expr("Q > 1").unwrap();
        assert!(matches!(e.type_of(&vars()), Err(TypeCheckError::Unbound(_))));
    }

    #[test]
    fn syntax_errors() {
        assert!(parse_expr("1 +").is_err());
        assert!(parse_expr("(1").is_err());
        assert!(parse_expr("1 < 2 < 3").is_err());
        assert!(parse_expr("V $ 2").is_err());
    }
}
