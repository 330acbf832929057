use super::{BinOp, Expr, Func};

fn add(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    Expr::Binary(BinOp::Add, Box::new(a), Box::new(b)).fold()
}

fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b)).fold()
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::Num(0.0);
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b)).fold()
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return Expr::Num(0.0);
    }
    if b.is_one() {
        return a;
    }
    Expr::Binary(BinOp::Div, Box::new(a), Box::new(b)).fold()
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn powe(a: Expr, b: Expr) -> Expr {
    if b.is_one() {
        return a;
    }
    Expr::Binary(BinOp::Pow, Box::new(a), Box::new(b)).fold()
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a)).fold()
}

impl Expr {
    /// Exact symbolic derivative with respect to `var`. Zero and unit
    /// factors produced by the chain rule are dropped; subtrees that do not
    /// mention `var` differentiate to the zero literal.
    pub fn differentiate(&self, var: &str) -> Expr {
        if !self.contains_var(var) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(_) => Expr::Num(1.0),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Binary(op, a, b) => {
                let (u, v) = (a.as_ref(), b.as_ref());
                let (du, dv) = (u.differentiate(var), v.differentiate(var));
                match op {
                    BinOp::Add => add(du, dv),
                    BinOp::Sub => sub(du, dv),
                    BinOp::Mul => add(mul(du, v.clone()), mul(u.clone(), dv)),
                    BinOp::Div => {
                        // (du*v - u*dv) / v^2
                        let num = sub(mul(du, v.clone()), mul(u.clone(), dv));
                        div(num, powe(v.clone(), Expr::Num(2.0)))
                    }
                    BinOp::Pow => {
                        if !v.contains_var(var) {
                            // v * u^(v-1) * du
                            let lowered = sub(v.clone(), Expr::Num(1.0));
                            mul(mul(v.clone(), powe(u.clone(), lowered)), du)
                        } else {
                            // u^v * (dv*log(u) + v*du/u)
                            let inner = add(
                                mul(dv, call(Func::Log, u.clone())),
                                div(mul(v.clone(), du), u.clone()),
                            );
                            mul(self.clone(), inner)
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let u = a.as_ref();
                let du = u.differentiate(var);
                let outer = match f {
                    Func::Sin => call(Func::Cos, u.clone()),
                    Func::Cos => neg(call(Func::Sin, u.clone())),
                    Func::Tan => div(
                        Expr::Num(1.0),
                        powe(call(Func::Cos, u.clone()), Expr::Num(2.0)),
                    ),
                    Func::Exp => self.clone(),
                    Func::Log => div(Expr::Num(1.0), u.clone()),
                    Func::Sqrt => div(Expr::Num(0.5), self.clone()),
                };
                mul(outer, du)
            }
        }
    }
}
