#![allow(dead_code)]

use std::f64::consts::PI;

use pwavg::exprlang::{parse, Bindings, Expr};
use pwavg::model::{PiecewiseModel, Prop1Coeffs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FUZZ_VARS: [&str; 3] = ["x", "y", "z"];

/// Random expression source over the full grammar. Guards keep every
/// subexpression smooth on `[-1, 1]^3` so derivatives are well defined.
pub fn random_expression(rng: &mut ChaCha8Rng, depth: usize) -> String {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..6) {
            0..=2 => FUZZ_VARS[rng.gen_range(0..3)].to_string(),
            3 => format!("{}", rng.gen_range(1..10)),
            4 => format!("{:.3}", rng.gen_range(0.1..3.0)),
            _ => format!("{}e-1", rng.gen_range(1..20)),
        };
    }
    let d = depth - 1;
    let mut sub = || random_expression(rng, d);
    let (a, b) = (sub(), sub());
    match rng.gen_range(0..16) {
        0 => format!("{a} + {b}"),
        1 => format!("({a}) - ({b})"),
        2 => format!("({a})*({b})"),
        3 => format!("({a})/(1.5 + ({b})^2)"),
        4 => format!("-({a})"),
        5 => format!("sin({a})"),
        6 => format!("cos({a}) * {b}"),
        7 => format!("tan(0.5*sin({a}))"),
        8 => format!("exp(0.5*cos({a}))"),
        9 => format!("log(1.25 + ({a})^2)"),
        10 => format!("sqrt(1.1 + ({a})^2)"),
        11 => format!("({a})^{}", rng.gen_range(2..4)),
        12 => format!("(1.2 + ({a})^2)^(0.5*sin({b}))"),
        13 => format!("-{}^2 + {a}", FUZZ_VARS[rng.gen_range(0..3)]),
        14 => format!("{a} - {b} * 2 / 4"),
        _ => format!("2^sin({a}) - ({b})"),
    }
}

/// Fixed 200-expression corpus.
pub fn fuzz_corpus(seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_expression(&mut rng, 4)).collect()
}

fn bindings(p: &[f64; 3]) -> Bindings {
    FUZZ_VARS.iter().copied().zip(p.iter().copied()).collect()
}

/// Central difference of `e` along `var`, extrapolated to zero step with
/// Ridders' tableau from several starting steps.
pub fn central_difference(e: &Expr, p: &[f64; 3], var: usize) -> f64 {
    [5e-2, 5e-3, 5e-4]
        .into_iter()
        .map(|h| ridders(e, p, var, h))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

fn ridders(e: &Expr, p: &[f64; 3], var: usize, h0: f64) -> (f64, f64) {
    let diff = |h: f64| {
        let mut hi = *p;
        let mut lo = *p;
        hi[var] += h;
        lo[var] -= h;
        (e.eval(&bindings(&hi)).unwrap() - e.eval(&bindings(&lo)).unwrap()) / (2.0 * h)
    };
    const N: usize = 12;
    const SHRINK: f64 = 1.4;
    let mut table = [[0.0f64; N]; N];
    let mut h = h0;
    table[0][0] = diff(h);
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for i in 1..N {
        h /= SHRINK;
        table[0][i] = diff(h);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e1 = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e1 <= err {
                err = e1;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// Differentiation, round-trip and purity checks on `points` random points.
pub fn check_expression(src: &str, rng: &mut ChaCha8Rng, points: usize) -> Result<(), String> {
    let e = parse(src).map_err(|err| format!("{src}: {err}"))?;
    let printed = e.to_string();
    let reparsed = parse(&printed).map_err(|err| format!("{printed}: {err}"))?;
    let derivs: Vec<Expr> = FUZZ_VARS.iter().map(|v| e.differentiate(v)).collect();
    for _ in 0..points {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let b = bindings(&p);
        let v = e.eval(&b).map_err(|err| format!("{src} at {p:?}: {err}"))?;
        if v.to_bits() != e.eval(&b).unwrap().to_bits() {
            return Err(format!("{src}: evaluation is not repeatable"));
        }
        let w = reparsed.eval(&b).map_err(|err| format!("{printed}: {err}"))?;
        if v.to_bits() != w.to_bits() {
            return Err(format!("{src}: printed form {printed} gives {w} instead of {v}"));
        }
        for (i, d) in derivs.iter().enumerate() {
            let exact = d.eval(&b).map_err(|err| format!("d{src}: {err}"))?;
            let fd = central_difference(&e, &p, i);
            if (exact - fd).abs() > 1e-6 * (1.0 + exact.abs()) {
                return Err(format!(
                    "{src}: d/d{} at {p:?} is {exact}, finite difference {fd}",
                    FUZZ_VARS[i]
                ));
            }
        }
    }
    Ok(())
}

/// Random Proposition-1 coefficients in `[-1, 1]` whose predicted radius
/// lies in `(0.1, 0.9)`.
pub fn random_coefficients(rng: &mut ChaCha8Rng) -> Prop1Coeffs {
    loop {
        let v: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = Prop1Coeffs::from_slice(&v).unwrap();
        let r = c.predicted_radius();
        if c.sign_condition() && r > 0.1 && r < 0.9 {
            return c;
        }
    }
}

/// Winding number of the planar map `f` around the circle by angle summation.
pub fn angle_sum_degree(f: impl Fn(f64, f64) -> (f64, f64), center: (f64, f64), radius: f64, n: usize) -> i64 {
    let angle = |s: f64| {
        let th = 2.0 * PI * s / n as f64;
        let (u, v) = f(center.0 + radius * th.cos(), center.1 + radius * th.sin());
        v.atan2(u)
    };
    let mut total = 0.0;
    let mut prev = angle(0.0);
    for i in 1..=n {
        let cur = angle(i as f64);
        let mut d = cur - prev;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
        prev = cur;
    }
    (total / (2.0 * PI)).round() as i64
}

/// Smooth single-zone damped pendulum.
pub fn pendulum() -> PiecewiseModel {
    PiecewiseModel::from_json(
        r#"{"dimension": 2, "period": 3.0, "zones": [
            {"signature": [], "F0": ["x2", "-sin(x1) - 0.1*x2"]}]}"#,
    )
    .unwrap()
}

/// Planar system whose switching time depends on the state.
pub fn kink() -> PiecewiseModel {
    PiecewiseModel::from_json(
        r#"{"dimension": 2, "period": 2.0, "surfaces": ["x1"], "zones": [
            {"signature": [1], "F0": ["-1", "0"]},
            {"signature": [-1], "F0": ["-2", "1"]}]}"#,
    )
    .unwrap()
}

/// Vanishing unperturbed field with polynomial perturbations on the two
/// half periods.
pub fn quadrature_model() -> PiecewiseModel {
    PiecewiseModel::from_json(
        r#"{"dimension": 2, "period": 6.283185307179586, "surfaces": ["sin(t)"], "zones": [
            {"signature": [1], "F0": ["0", "0"], "F1": ["x1*t^2 + x2", "t^3 - x1*x2*t"]},
            {"signature": [-1], "F0": ["0", "0"], "F1": ["2*t - x2^2", "x1 + 3*t^2*x2"]}],
            "manifold": {"k": 2, "box": [[-1, 1], [-1, 1]]}}"#,
    )
    .unwrap()
}

/// Exact time integral of the perturbation of [`quadrature_model`] over one period.
pub fn quadrature_oracle(a: &[f64]) -> [f64; 2] {
    let (x1, x2) = (a[0], a[1]);
    let p = PI;
    let q = 2.0 * PI;
    let m = |k: i32, lo: f64, hi: f64| (hi.powi(k + 1) - lo.powi(k + 1)) / (k + 1) as f64;
    [
        x1 * m(2, 0.0, p) + x2 * m(0, 0.0, p) + 2.0 * m(1, p, q) - x2 * x2 * m(0, p, q),
        m(3, 0.0, p) - x1 * x2 * m(1, 0.0, p) + x1 * m(0, p, q) + 3.0 * x2 * m(2, p, q),
    ]
}
