use std::collections::HashMap;
use std::sync::Arc;

use super::{apply_binary, apply_func, BinOp, EvalError, Expr, ExprError, Func};

/// Source of slot values for [`CompiledExpr::eval`].
pub trait Slots {
    fn slot(&self, index: usize) -> f64;
}

impl Slots for [f64] {
    fn slot(&self, index: usize) -> f64 {
        self[index]
    }
}

impl<const N: usize> Slots for [f64; N] {
    fn slot(&self, index: usize) -> f64 {
        self[index]
    }
}

impl Slots for Vec<f64> {
    fn slot(&self, index: usize) -> f64 {
        self[index]
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// An expression with variables resolved to slot indices and named
/// constants substituted. Immutable and cheap to evaluate repeatedly.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    names: Arc<[String]>,
}

impl CompiledExpr {
    /// Resolves every free variable of `expr` either to a position in
    /// `symbols` or to a value in `constants`.
    pub fn compile(
        expr: &Expr,
        symbols: &Arc<[String]>,
        constants: &HashMap<String, f64>,
    ) -> Result<CompiledExpr, ExprError> {
        let folded = expr.substitute(constants);
        let root = build(&folded, symbols)?;
        Ok(CompiledExpr {
            root,
            names: symbols.clone(),
        })
    }

    pub fn eval<S: Slots + ?Sized>(&self, slots: &S) -> Result<f64, EvalError> {
        self.eval_node(&self.root, slots)
    }

    /// True when the compiled tree is the literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Const(v) if v == 0.0)
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.root {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    fn eval_node<S: Slots + ?Sized>(&self, node: &Node, slots: &S) -> Result<f64, EvalError> {
        match node {
            Node::Const(v) => Ok(*v),
            Node::Slot(i) => Ok(slots.slot(*i)),
            Node::Neg(a) => Ok(-self.eval_node(a, slots)?),
            Node::Binary(op, a, b) => {
                let x = self.eval_node(a, slots)?;
                let y = self.eval_node(b, slots)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    _ => apply_binary(*op, x, y).map_err(|r| self.domain(node, r)),
                }
            }
            Node::Call(f, a) => {
                let x = self.eval_node(a, slots)?;
                apply_func(*f, x).map_err(|r| self.domain(node, r))
            }
        }
    }

    fn domain(&self, node: &Node, reason: String) -> EvalError {
        EvalError::Domain {
            subexpr: to_expr(node, &self.names).to_string(),
            reason,
        }
    }
}

fn build(e: &Expr, symbols: &[String]) -> Result<Node, ExprError> {
    Ok(match e {
        Expr::Num(v) => Node::Const(*v),
        Expr::Var(name) => match symbols.iter().position(|s| s == name) {
            Some(i) => Node::Slot(i),
            None => return Err(ExprError::UnboundSymbol(name.clone())),
        },
        Expr::Neg(a) => Node::Neg(Box::new(build(a, symbols)?)),
        Expr::Binary(op, a, b) => {
            Node::Binary(*op, Box::new(build(a, symbols)?), Box::new(build(b, symbols)?))
        }
        Expr::Call(f, a) => Node::Call(*f, Box::new(build(a, symbols)?)),
    })
}

fn to_expr(node: &Node, names: &[String]) -> Expr {
    match node {
        Node::Const(v) => Expr::Num(*v),
        Node::Slot(i) => Expr::Var(names[*i].clone()),
        Node::Neg(a) => Expr::Neg(Box::new(to_expr(a, names))),
        Node::Binary(op, a, b) => {
            Expr::Binary(*op, Box::new(to_expr(a, names)), Box::new(to_expr(b, names)))
        }
        Node::Call(f, a) => Expr::Call(*f, Box::new(to_expr(a, names))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse, Bindings};

    fn symbols(names: &[&str]) -> Arc<[String]> {
        names.iter().map(|s| s.to_string()).collect::<Vec<_>>().into()
    }

    #[test]
    fn compiled_matches_tree_evaluation() {
        let e = parse("k*x1^2 - sin(t)/(1+x2)").unwrap();
        let syms = symbols(&["t", "x1", "x2"]);
        let consts = HashMap::from([("k".to_string(), 2.5)]);
        let c = CompiledExpr::compile(&e, &syms, &consts).unwrap();
        let env = Bindings::new().with("t", 0.3).with("x1", -1.2).with("x2", 0.8).with("k", 2.5);
        assert_eq!(c.eval(&[0.3, -1.2, 0.8]).unwrap(), e.eval(&env).unwrap());
    }

    #[test]
    fn unbound_symbol_rejected() {
        let e = parse("x1 + y").unwrap();
        let err = CompiledExpr::compile(&e, &symbols(&["x1"]), &HashMap::new()).unwrap_err();
        assert_eq!(err, ExprError::UnboundSymbol("y".into()));
    }

    #[test]
    fn domain_error_reports_names() {
        let e = parse("1 + 1/x1").unwrap();
        let c = CompiledExpr::compile(&e, &symbols(&["x1"]), &HashMap::new()).unwrap();
        match c.eval(&[0.0]) {
            Err(EvalError::Domain { subexpr, .. }) => assert_eq!(subexpr, "1/x1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constants_fold_to_literals() {
        let e = parse("a*b + 1").unwrap();
        let consts = HashMap::from([("a".to_string(), 2.0), ("b".to_string(), 3.0)]);
        let c = CompiledExpr::compile(&e, &symbols(&[]), &consts).unwrap();
        assert_eq!(c.constant_value(), Some(7.0));
    }
}
