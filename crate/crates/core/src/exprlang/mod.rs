//! Scalar expression language used for vector-field components, switching
//! functions and manifold parametrisations.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term   (('+' | '-') term)*
//! term    := unary  (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := atom ('^' exponent)?
//! exponent:= ('-' | '+') exponent | power
//! atom    := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`, and it is
//! right-associative (`2^3^2 = 2^9`). The four arithmetic operators are
//! left-associative. Functions: `sin cos tan exp log sqrt`.
//!
//! Non-smooth primitives (abs, sign, min, max) are deliberately absent so
//! that [`Expr::differentiate`] is total.

mod compile;
mod diff;
mod parser;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub use compile::{CompiledExpr, Slots};
pub use parser::parse;

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Elementary functions admitted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

const NEG_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Errors raised while parsing or validating expressions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
}

impl ExprError {
    pub fn code(&self) -> &'static str {
        match self {
            ExprError::Syntax { .. } => "expr.syntax",
            ExprError::UnknownFunction { .. } => "expr.unknown_function",
            ExprError::UnboundSymbol(_) => "expr.unbound_symbol",
        }
    }
}

/// Errors raised during numerical evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    Unbound(String),
    #[error("domain error in '{subexpr}': {reason}")]
    Domain { subexpr: String, reason: String },
}

/// Variable bindings for [`Expr::eval`].
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    values: HashMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Bindings {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

pub(crate) fn apply_func(f: Func, v: f64) -> Result<f64, String> {
    match f {
        Func::Sin => Ok(v.sin()),
        Func::Cos => Ok(v.cos()),
        Func::Tan => Ok(v.tan()),
        Func::Exp => {
            let r = v.exp();
            if r.is_finite() {
                Ok(r)
            } else {
                Err(format!("exp overflow at {v}"))
            }
        }
        Func::Log => {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(format!("log of non-positive value {v}"))
            }
        }
        Func::Sqrt => {
            if v >= 0.0 {
                Ok(v.sqrt())
            } else {
                Err(format!("sqrt of negative value {v}"))
            }
        }
    }
}

pub(crate) fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, String> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => Ok(a * b),
        BinOp::Div => {
            if b == 0.0 {
                Err("division by zero".to_string())
            } else {
                Ok(a / b)
            }
        }
        BinOp::Pow => {
            let r = pow(a, b);
            if r.is_finite() {
                Ok(r)
            } else {
                Err(format!("power {a}^{b} is not a finite real"))
            }
        }
    }
}

/// Integer exponents use repeated multiplication so that `x^2` agrees
/// bit-for-bit with `x*x` and negative bases stay real.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 1.0)
    }

    /// Evaluates under `env`; every free variable must be bound.
    pub fn eval(&self, env: &Bindings) -> Result<f64, EvalError> {
        let domain = |e: &Expr, reason: String| EvalError::Domain {
            subexpr: e.to_string(),
            reason,
        };
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => env.get(name).ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                apply_binary(*op, x, y).map_err(|r| domain(self, r))
            }
            Expr::Call(f, a) => {
                let x = a.eval(env)?;
                apply_func(*f, x).map_err(|r| domain(self, r))
            }
        }
    }

    pub fn contains_var(&self, var: &str) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(name) => name == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.contains_var(var),
            Expr::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
        }
    }

    /// Free variables in sorted order.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replaces variables by literal values and folds literal-only subtrees.
    pub fn substitute(&self, values: &HashMap<String, f64>) -> Expr {
        match self {
            Expr::Var(name) => match values.get(name) {
                Some(v) => Expr::Num(*v),
                None => self.clone(),
            },
            Expr::Num(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(values))).fold(),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(values))).fold(),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.substitute(values)), Box::new(b.substitute(values)))
                    .fold()
            }
        }
    }

    /// Constant folding of literal-only subtrees. Folds that would raise a
    /// domain error are left in place so evaluation reports them.
    pub fn fold(self) -> Expr {
        match self {
            Expr::Neg(a) => match a.fold() {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Call(f, a) => match a.fold() {
                Expr::Num(v) => match apply_func(f, v) {
                    Ok(r) => Expr::Num(r),
                    Err(_) => Expr::Call(f, Box::new(Expr::Num(v))),
                },
                other => Expr::Call(f, Box::new(other)),
            },
            Expr::Binary(op, a, b) => match (a.fold(), b.fold()) {
                (Expr::Num(x), Expr::Num(y)) => match apply_binary(op, x, y) {
                    Ok(r) => Expr::Num(r),
                    Err(_) => Expr::Binary(op, Box::new(Expr::Num(x)), Box::new(Expr::Num(y))),
                },
                (x, y) => Expr::Binary(op, Box::new(x), Box::new(y)),
            },
            other => other,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => NEG_PRECEDENCE,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => ATOM_PRECEDENCE,
            Expr::Neg(_) => NEG_PRECEDENCE,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that round-trips exactly.
    let s = format!("{:?}", v.abs());
    let s = s.strip_suffix(".0").unwrap_or(&s);
    if v.is_sign_negative() {
        write!(f, "-{s}")
    } else {
        f.write_str(s)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical printer. Parenthesisation preserves the tree exactly, so
/// `parse(e.to_string())` evaluates bit-identically to `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < NEG_PRECEDENCE)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = match op {
                    BinOp::Pow => (a.precedence() <= p, b.precedence() < p),
                    _ => (a.precedence() < p, b.precedence() <= p),
                };
                write_child(f, a, left_parens)?;
                write!(f, "{}", op.symbol())?;
                write_child(f, b, right_parens)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, env: &Bindings) -> f64 {
        parse(src).unwrap().eval(env).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        let empty = Bindings::new();
        assert_eq!(ev("1+2*3", &empty), 7.0);
        assert_eq!(ev("-x1^2", &Bindings::new().with("x1", 2.0)), -4.0);
        assert_eq!(ev("2^3^2", &empty), 512.0);
        assert_eq!(ev("8-3-2", &empty), 3.0);
        assert_eq!(ev("16/4/2", &empty), 2.0);
        assert_eq!(ev("2^-1", &empty), 0.5);
        assert_eq!(ev("-2*3", &empty), -6.0);
        assert_eq!(ev(" ( 1 + 2 ) * 3 ", &empty), 9.0);
        assert_eq!(ev("1.5e1 + .5", &empty), 15.5);
    }

    #[test]
    fn evaluation_examples() {
        let env = Bindings::new().with("x1", 2.0).with("t", 0.0);
        assert_eq!(ev("x1*cos(t)", &env), 2.0);
        assert_eq!(ev("exp(t)", &env), 1.0);
        let err = parse("1/x1")
            .unwrap()
            .eval(&Bindings::new().with("x1", 0.0))
            .unwrap_err();
        assert!(matches!(err, EvalError::Domain { ref subexpr, .. } if subexpr == "1/x1"));
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let env = Bindings::new().with("x1", -1.0);
        for (src, sub) in [
            ("2+log(x1)", "log(x1)"),
            ("sqrt(x1)*3", "sqrt(x1)"),
            ("x1^0.5", "x1^0.5"),
        ] {
            match parse(src).unwrap().eval(&env) {
                Err(EvalError::Domain { subexpr, .. }) => assert_eq!(subexpr, sub),
                other => panic!("{src}: {other:?}"),
            }
        }
        assert_eq!(
            parse("x2").unwrap().eval(&env),
            Err(EvalError::Unbound("x2".into()))
        );
    }

    #[test]
    fn printer_keeps_structure() {
        for src in ["a-(b-c)", "(a-b)-c", "(a^b)^c", "a^b^c", "-(a+b)", "(-a)^2", "-a^2", "a/(b*c)", "a*-b"] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
        assert_eq!(parse("a-(b-c)").unwrap().to_string(), "a-(b-c)");
        assert_eq!(parse("(a-b)-c").unwrap().to_string(), "a-b-c");
        assert_eq!(Expr::Num(-2.5).to_string(), "-2.5");
        assert_eq!(
            Expr::Binary(BinOp::Pow, Box::new(Expr::Num(-2.0)), Box::new(Expr::Num(2.0))).to_string(),
            "(-2)^2"
        );
    }

    #[test]
    fn folding_leaves_domain_errors() {
        assert_eq!(parse("1+2*3").unwrap().fold(), Expr::Num(7.0));
        let e = parse("1/0").unwrap().fold();
        assert!(matches!(e, Expr::Binary(BinOp::Div, ..)));
        assert!(e.eval(&Bindings::new()).is_err());
    }

    #[test]
    fn eval_is_pure() {
        let e = parse("sin(x1)^2 + exp(-t/3)*sqrt(x1+4)").unwrap();
        let env = Bindings::new().with("x1", 0.731).with("t", 2.2);
        let a = e.eval(&env).unwrap();
        for _ in 0..10 {
            assert_eq!(a.to_bits(), e.eval(&env).unwrap().to_bits());
        }
    }
}
