//! Coefficient expressions in prefix notation.
//!
//! ```text
//! expr   := number | symbol | "(" op expr* ")"
//! op     := add | sub | mul | div | pow | neg
//!         | log | exp | sin | cos | tan | sqrt | abs | sign
//!         | logn k expr | L n expr | Q n expr
//! symbol := x | pi | e | identifier
//! ```
//!
//! `logn k f` is the k-fold iterated logarithm, `L n f` the product
//! `Π_{j≤n} log_j f` and `Q n f` the borderline potential `-1/4 Σ_{j<n} L_j(f)^{-2}`.
//! Any other identifier is a parameter that must be bound before evaluation.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::logscale;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "log" => Func::Log,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Log => v.abs().ln(),
            Func::Exp => v.exp(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Sym(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Fun(Func, Box<Expr>),
    LogN(u32, Box<Expr>),
    LProd(u32, Box<Expr>),
    QSum(u32, Box<Expr>),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn atom(&mut self) -> &'a str {
        self.skip_ws();
        let bytes = self.src.as_bytes();
        let start = self.pos;
        while self.pos < bytes.len() {
            let c = bytes[self.pos];
            if c.is_ascii_whitespace() || c == b'(' || c == b')' {
                break;
            }
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b')') => self.err("unexpected `)`"),
            Some(b'(') => {
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return self.err("expression nested too deeply");
                }
                self.pos += 1;
                let e = self.list()?;
                self.depth -= 1;
                Ok(e)
            }
            Some(_) => {
                let start = self.pos;
                let tok = self.atom();
                leaf(tok).map_err(|msg| ParseError { pos: start, msg })
            }
        }
    }

    fn args_until_close(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(args);
                }
                None => return self.err("missing `)`"),
                Some(_) => args.push(self.expr()?),
            }
        }
    }

    fn list(&mut self) -> Result<Expr, ParseError> {
        let op_pos = self.pos;
        if matches!(self.peek(), Some(b'(') | Some(b')') | None) {
            return self.err("expected an operator name");
        }
        let op = self.atom();
        if matches!(op, "logn" | "L" | "Q") {
            let k_pos = self.pos;
            let k_tok = self.atom();
            let k: u32 = match k_tok.parse() {
                Ok(k) if k <= 8 => k,
                _ => {
                    return Err(ParseError {
                        pos: k_pos,
                        msg: format!("`{op}` needs an order in 0..=8, got `{k_tok}`"),
                    })
                }
            };
            let mut args = self.args_until_close()?;
            if args.len() != 1 {
                return Err(ParseError {
                    pos: op_pos,
                    msg: format!("`{op}` takes an order and one argument"),
                });
            }
            let a = Box::new(args.pop().unwrap());
            return Ok(match op {
                "logn" => Expr::LogN(k, a),
                "L" => Expr::LProd(k, a),
                _ => Expr::QSum(k, a),
            });
        }
        let mut args = self.args_until_close()?;
        let arity = |n: usize, args: &Vec<Expr>| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(ParseError {
                    pos: op_pos,
                    msg: format!("`{op}` takes {n} argument(s), got {}", args.len()),
                })
            }
        };
        let e = match op {
            "add" | "mul" => {
                if args.is_empty() {
                    return Err(ParseError {
                        pos: op_pos,
                        msg: format!("`{op}` needs at least one argument"),
                    });
                }
                if op == "add" {
                    Expr::Add(args)
                } else {
                    Expr::Mul(args)
                }
            }
            "sub" => match args.len() {
                1 => Expr::Neg(Box::new(args.pop().unwrap())),
                2 => {
                    let b = args.pop().unwrap();
                    let a = args.pop().unwrap();
                    Expr::Sub(Box::new(a), Box::new(b))
                }
                n => {
                    return Err(ParseError {
                        pos: op_pos,
                        msg: format!("`sub` takes 1 or 2 arguments, got {n}"),
                    })
                }
            },
            "div" | "pow" => {
                arity(2, &args)?;
                let b = Box::new(args.pop().unwrap());
                let a = Box::new(args.pop().unwrap());
                if op == "div" {
                    Expr::Div(a, b)
                } else {
                    Expr::Pow(a, b)
                }
            }
            "neg" => {
                arity(1, &args)?;
                Expr::Neg(Box::new(args.pop().unwrap()))
            }
            other => match Func::from_name(other) {
                Some(f) => {
                    arity(1, &args)?;
                    Expr::Fun(f, Box::new(args.pop().unwrap()))
                }
                None => {
                    return Err(ParseError {
                        pos: op_pos,
                        msg: format!("unknown operator `{other}`"),
                    })
                }
            },
        };
        Ok(e)
    }
}

fn leaf(tok: &str) -> Result<Expr, String> {
    let first = tok.as_bytes()[0];
    if first.is_ascii_digit() || first == b'.' || first == b'-' || first == b'+' {
        return match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(format!("invalid number `{tok}`")),
        };
    }
    if !tok
        .bytes()
        .all(|c| c.is_ascii_alphanumeric() || c == b'_')
    {
        return Err(format!("invalid symbol `{tok}`"));
    }
    Ok(match tok {
        "x" => Expr::X,
        "pi" => Expr::Num(std::f64::consts::PI),
        "e" => Expr::Num(std::f64::consts::E),
        _ => Expr::Sym(tok.to_string()),
    })
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src, pos: 0, depth: 0 };
        let e = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input after expression");
        }
        Ok(e)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Free parameter names (everything except `x`).
    pub fn symbols(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Sym(s) = e {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::X | Expr::Sym(_) => {}
            Expr::Add(v) | Expr::Mul(v) => v.iter().for_each(|e| e.visit(f)),
            Expr::Sub(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Neg(a) | Expr::Fun(_, a) | Expr::LogN(_, a) | Expr::LProd(_, a) | Expr::QSum(_, a) => {
                a.visit(f)
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::X) {
                found = true;
            }
        });
        found
    }

    fn map_children(&self, f: &impl Fn(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Num(_) | Expr::X | Expr::Sym(_) => self.clone(),
            Expr::Add(v) => Expr::Add(v.iter().map(f).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(f).collect()),
            Expr::Sub(a, b) => Expr::Sub(Box::new(f(a)), Box::new(f(b))),
            Expr::Div(a, b) => Expr::Div(Box::new(f(a)), Box::new(f(b))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(f(a)), Box::new(f(b))),
            Expr::Neg(a) => Expr::Neg(Box::new(f(a))),
            Expr::Fun(g, a) => Expr::Fun(*g, Box::new(f(a))),
            Expr::LogN(k, a) => Expr::LogN(*k, Box::new(f(a))),
            Expr::LProd(k, a) => Expr::LProd(*k, Box::new(f(a))),
            Expr::QSum(k, a) => Expr::QSum(*k, Box::new(f(a))),
        }
    }

    /// Replaces symbols by expressions (e.g. background coefficients).
    pub fn substitute(&self, table: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Sym(s) => match table.get(s) {
                Some(e) => e.clone(),
                None => self.clone(),
            },
            _ => self.map_children(&|c| c.substitute(table)),
        }
    }

    /// Binds numeric parameters; fails if any symbol stays free.
    pub fn bind(&self, params: &BTreeMap<String, f64>) -> crate::Result<Expr> {
        let table: BTreeMap<String, Expr> = params
            .iter()
            .map(|(k, v)| (k.clone(), Expr::Num(*v)))
            .collect();
        let e = self.substitute(&table);
        if let Some(s) = e.symbols().into_iter().next() {
            return Err(crate::Error::Unbound(s));
        }
        Ok(e)
    }

    /// Evaluates at `x`; free symbols evaluate to NaN.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Sym(_) => f64::NAN,
            Expr::Add(v) => v.iter().map(|e| e.eval(x)).sum(),
            Expr::Mul(v) => v.iter().map(|e| e.eval(x)).product(),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                if let Expr::Num(k) = **b {
                    if k.fract() == 0.0 && k.abs() <= 64.0 {
                        return base.powi(k as i32);
                    }
                    if k == 0.5 {
                        return base.sqrt();
                    }
                }
                base.powf(b.eval(x))
            }
            Expr::Neg(a) => -a.eval(x),
            Expr::Fun(f, a) => f.apply(a.eval(x)),
            Expr::LogN(k, a) => logscale::log_k(*k, a.eval(x)),
            Expr::LProd(n, a) => logscale::l_n(*n as i32, a.eval(x)),
            Expr::QSum(n, a) => logscale::q_n(*n, a.eval(x)),
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let d = match self {
            Num(_) | Sym(_) => Num(0.0),
            X => Num(1.0),
            Add(v) => add(v.iter().map(|e| e.derivative()).collect()),
            Mul(v) => {
                let mut terms = Vec::new();
                for i in 0..v.len() {
                    let mut factors: Vec<Expr> = Vec::new();
                    for (j, e) in v.iter().enumerate() {
                        factors.push(if i == j { e.derivative() } else { e.clone() });
                    }
                    terms.push(mul(factors));
                }
                add(terms)
            }
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Div(a, b) => div(
                sub(mul(vec![a.derivative(), (**b).clone()]), mul(vec![(**a).clone(), b.derivative()])),
                pow((**b).clone(), Num(2.0)),
            ),
            Pow(a, b) => {
                if !b.depends_on_x() {
                    mul(vec![
                        (**b).clone(),
                        pow((**a).clone(), sub((**b).clone(), Num(1.0))),
                        a.derivative(),
                    ])
                } else {
                    mul(vec![
                        self.clone(),
                        add(vec![
                            mul(vec![b.derivative(), Fun(Func::Log, a.clone())]),
                            div(mul(vec![(**b).clone(), a.derivative()]), (**a).clone()),
                        ]),
                    ])
                }
            }
            Neg(a) => neg(a.derivative()),
            Fun(f, a) => {
                let da = a.derivative();
                let outer = match f {
                    Func::Log => div(Num(1.0), (**a).clone()),
                    Func::Exp => self.clone(),
                    Func::Sin => Fun(Func::Cos, a.clone()),
                    Func::Cos => neg(Fun(Func::Sin, a.clone())),
                    Func::Tan => div(Num(1.0), pow(Fun(Func::Cos, a.clone()), Num(2.0))),
                    Func::Sqrt => div(Num(0.5), self.clone()),
                    Func::Abs => Fun(Func::Sign, a.clone()),
                    Func::Sign => Num(0.0),
                };
                mul(vec![outer, da])
            }
            LogN(k, a) => {
                if *k == 0 {
                    a.derivative()
                } else {
                    div(a.derivative(), LProd(k - 1, a.clone()))
                }
            }
            LProd(n, a) => {
                let sum = add((0..=*n).map(|j| div(Num(1.0), LProd(j, a.clone()))).collect());
                mul(vec![self.clone(), sum, a.derivative()])
            }
            QSum(n, a) => {
                let mut terms = Vec::new();
                for j in 0..*n {
                    let inner = add((0..=j).map(|i| div(Num(1.0), LProd(i, a.clone()))).collect());
                    terms.push(div(inner, pow(LProd(j, a.clone()), Num(2.0))));
                }
                mul(vec![Num(0.5), add(terms), a.derivative()])
            }
        };
        d
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(w) if *w == v)
}

fn add(v: Vec<Expr>) -> Expr {
    let mut terms: Vec<Expr> = v.into_iter().filter(|e| !is_num(e, 0.0)).collect();
    match terms.len() {
        0 => Expr::Num(0.0),
        1 => terms.pop().unwrap(),
        _ => Expr::Add(terms),
    }
}

fn mul(v: Vec<Expr>) -> Expr {
    if v.iter().any(|e| is_num(e, 0.0)) {
        return Expr::Num(0.0);
    }
    let mut f: Vec<Expr> = v.into_iter().filter(|e| !is_num(e, 1.0)).collect();
    match f.len() {
        0 => Expr::Num(1.0),
        1 => f.pop().unwrap(),
        _ => Expr::Mul(f),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 1.0) {
        a
    } else if is_num(&b, 0.0) {
        Expr::Num(1.0)
    } else {
        Expr::Pow(Box::new(a), Box::new(b))
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, op: &str, args: &[&Expr]| -> fmt::Result {
            write!(f, "({op}")?;
            for a in args {
                write!(f, " {a}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => write!(f, "x"),
            Expr::Sym(s) => write!(f, "{s}"),
            Expr::Add(v) => list(f, "add", &v.iter().collect::<Vec<_>>()),
            Expr::Mul(v) => list(f, "mul", &v.iter().collect::<Vec<_>>()),
            Expr::Sub(a, b) => list(f, "sub", &[a, b]),
            Expr::Div(a, b) => list(f, "div", &[a, b]),
            Expr::Pow(a, b) => list(f, "pow", &[a, b]),
            Expr::Neg(a) => list(f, "neg", &[a]),
            Expr::Fun(g, a) => list(f, g.name(), &[a]),
            Expr::LogN(k, a) => write!(f, "(logn {k} {a})"),
            Expr::LProd(k, a) => write!(f, "(L {k} {a})"),
            Expr::QSum(k, a) => write!(f, "(Q {k} {a})"),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn parses_and_evaluates() {
        let e = p("(div mu (pow x 2))");
        assert_eq!(e.symbols(), vec!["mu".to_string()]);
        let mut params = BTreeMap::new();
        params.insert("mu".to_string(), -1.0);
        let b = e.bind(&params).unwrap();
        assert_eq!(b.eval(2.0), -0.25);
        assert!((p("(add (sin pi) (cos 0) (sub 3))").eval(0.0) - (-2.0)).abs() < 1e-15);
        assert!((p("(logn 1 e)").eval(0.0) - 1.0).abs() < 1e-15);
        assert!((p("(Q 1 x)").eval(2.0) + 1.0 / 16.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "(", ")", "(add", "(foo 1)", "(div 1)", "(logn x x)", "1 2", "(add)", "-inf", "(L 99 x)", "a-b"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
        let deep = "(neg ".repeat(500) + "x" + &")".repeat(500);
        assert!(Expr::parse(&deep).is_err());
    }

    #[test]
    fn unbound_symbol_is_reported() {
        let e = p("(mul k x)");
        assert!(matches!(e.bind(&BTreeMap::new()), Err(crate::Error::Unbound(s)) if s == "k"));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let cases = [
            "(mul (sqrt x) (cos (mul 0.8660254037844386 (log x))))",
            "(div (sin x) (add 2 (pow x 3)))",
            "(pow x (div x 50))",
            "(L 2 x)",
            "(Q 3 x)",
            "(logn 2 (mul 3 x))",
            "(exp (neg (tan (div x 10))))",
            "(sqrt (L 1 x))",
        ];
        for c in cases {
            let e = p(c);
            let d = e.derivative();
            for &x in &[20.0, 35.5, 120.0] {
                let h = 1e-5 * x;
                let fd = (e.eval(x + h) - e.eval(x - h)) / (2.0 * h);
                let v = d.eval(x);
                assert!((v - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{c} at {x}: {v} vs {fd}");
            }
        }
    }

    #[test]
    fn display_round_trips() {
        for c in ["(div mu (pow x 2))", "(add (Q 1 x) (div -0.5 (pow (L 1 x) 2)))", "(sub 1e-300 x)"] {
            let e = p(c);
            assert_eq!(p(&e.to_string()), e);
        }
    }
}
