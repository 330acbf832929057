//! Built-in two-zone models: a linear centre-focus system in R^3 with a
//! discontinuous piecewise linear perturbation across the plane `x2 = 0`,
//! and the same system rewritten in polar coordinates with the angle as
//! the independent variable.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{ManifoldDoc, ModelDoc, PiecewiseModel, ZoneDoc};

/// Perturbation coefficients of one zone; row `i` is
/// `a[i] + b[i]*u + c[i]*v + d[i]*w`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZoneCoeffs {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
    pub d: [f64; 3],
}

/// The 24 coefficients, `plus` for `v > 0`, `minus` for `v < 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prop1Coeffs {
    pub plus: ZoneCoeffs,
    pub minus: ZoneCoeffs,
}

impl Prop1Coeffs {
    /// `b1± = c2± = 1`, `a2- = 1`, all others zero: `f1(r) = 2*pi*r - 2`.
    pub fn pinned() -> Self {
        let mut c = Prop1Coeffs::default();
        for side in [&mut c.plus, &mut c.minus] {
            side.b[0] = 1.0;
            side.c[1] = 1.0;
        }
        c.minus.a[1] = 1.0;
        c
    }

    /// Parameter names in canonical order: for `p` then `m`, rows 1..3,
    /// letters `a b c d` (`a1p b1p c1p d1p a2p ... d3m`).
    pub fn names() -> Vec<String> {
        let mut out = Vec::with_capacity(24);
        for side in ['p', 'm'] {
            for row in 1..=3 {
                for letter in ['a', 'b', 'c', 'd'] {
                    out.push(format!("{letter}{row}{side}"));
                }
            }
        }
        out
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(24);
        for side in [&self.plus, &self.minus] {
            for row in 0..3 {
                out.extend([side.a[row], side.b[row], side.c[row], side.d[row]]);
            }
        }
        out
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != 24 {
            return None;
        }
        let mut c = Prop1Coeffs::default();
        for (s, side) in [&mut c.plus, &mut c.minus].into_iter().enumerate() {
            for row in 0..3 {
                let base = s * 12 + row * 4;
                side.a[row] = values[base];
                side.b[row] = values[base + 1];
                side.c[row] = values[base + 2];
                side.d[row] = values[base + 3];
            }
        }
        Some(c)
    }

    /// Sets one coefficient by canonical name; returns false for an
    /// unknown name.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        match Self::names().iter().position(|n| n == name) {
            Some(i) => {
                let mut v = self.to_vec();
                v[i] = value;
                *self = Self::from_slice(&v).expect("24 entries");
                true
            }
            None => false,
        }
    }

    pub fn parameters(&self) -> BTreeMap<String, f64> {
        Self::names().into_iter().zip(self.to_vec()).collect()
    }

    /// `b1+ + b1- + c2+ + c2-`.
    pub fn linear_sum(&self) -> f64 {
        self.plus.b[0] + self.minus.b[0] + self.plus.c[1] + self.minus.c[1]
    }

    /// Closed form of the averaged function at radius `r`.
    pub fn averaged_closed_form(&self, r: f64) -> f64 {
        0.5 * PI * self.linear_sum() * r + 2.0 * (self.plus.a[1] - self.minus.a[1])
    }

    /// Zero of the closed-form averaged function.
    pub fn predicted_radius(&self) -> f64 {
        4.0 * (self.minus.a[1] - self.plus.a[1]) / (PI * self.linear_sum())
    }

    /// `(a2- - a2+) * (b1+ + b1- + c2+ + c2-) > 0`.
    pub fn sign_condition(&self) -> bool {
        (self.minus.a[1] - self.plus.a[1]) * self.linear_sum() > 0.0
    }
}

fn row(letter_row: usize, s: char, vars: [&str; 3]) -> String {
    format!(
        "a{i}{s} + b{i}{s}*{u} + c{i}{s}*{v} + d{i}{s}*{w}",
        i = letter_row,
        u = vars[0],
        v = vars[1],
        w = vars[2]
    )
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Cartesian form: `(u,v,w)' = (-v, u, w) + eps*(A± + B± (u,v,w))` on
/// `v > 0` / `v < 0`, period `2*pi`, one surface `h = x2`.
pub fn builtin_proposition1(coeffs: &Prop1Coeffs) -> PiecewiseModel {
    let vars = ["x1", "x2", "x3"];
    let zone = |name: &str, sign: i8, s: char| ZoneDoc {
        name: Some(name.to_string()),
        signature: vec![sign],
        f0: strings(&["-x2", "x1", "x3"]),
        f1: Some((1..=3).map(|i| row(i, s, vars)).collect()),
        r: None,
    };
    let doc = ModelDoc {
        dimension: 3,
        period: 2.0 * PI,
        parameters: coeffs.parameters(),
        surfaces: vec!["x2".to_string()],
        zones: vec![zone("+", 1, 'p'), zone("-", -1, 'm')],
        manifold: None,
    };
    PiecewiseModel::from_document(doc).expect("built-in Cartesian model is valid")
}

/// Polar form with the angle as time: state `(r, z) = (x1, x2)`,
/// `(r, z)' = (0, z) + eps*G±(t, r, z) + eps^2*R±(t, r, z, eps)`.
///
/// `R` is the exact remainder of the time change, so the model reproduces
/// the Cartesian flow rather than its first-order truncation. Zones switch
/// on `h = sin(t)` (`+` for `0 < t < pi`). The manifold is
/// `{(alpha, 0) : r_range.0 <= alpha <= r_range.1}`.
pub fn builtin_proposition1_polar(coeffs: &Prop1Coeffs, r_range: (f64, f64)) -> PiecewiseModel {
    let zone = |name: &str, sign: i8, s: char| {
        let lin = |i: usize| {
            format!("(a{i}{s} + b{i}{s}*x1*cos(t) + c{i}{s}*x1*sin(t) + d{i}{s}*x2)")
        };
        let (p, q, w) = (lin(1), lin(2), lin(3));
        let h = format!("(cos(t)*{q} - sin(t)*{p})");
        let g1 = format!(
            "b1{s}*x1*cos(t)^2 + (a1{s} + d1{s}*x2 + (b2{s} + c1{s})*x1*sin(t))*cos(t) \
             + (a2{s} + d2{s}*x2 + c2{s}*x1*sin(t))*sin(t)"
        );
        let g2 = format!(
            "(x1*(a3{s} + d3{s}*x2) - b2{s}*x1*x2*cos(t)^2 \
             + (c3{s}*x1^2 + (a1{s} + d1{s}*x2)*x2 + c1{s}*x1*x2*sin(t))*sin(t) \
             + (b3{s}*x1^2 - (a2{s} + d2{s}*x2)*x2 + (b1{s} - c2{s})*x1*x2*sin(t))*cos(t))/x1"
        );
        let r1 = format!("-({g1})*{h}/(x1 + eps*{h})");
        let r2 = format!("(x2*{h}^2/x1 - {w}*{h})/(x1 + eps*{h})");
        ZoneDoc {
            name: Some(name.to_string()),
            signature: vec![sign],
            f0: strings(&["0", "x2"]),
            f1: Some(vec![g1, g2]),
            r: Some(vec![r1, r2]),
        }
    };
    let doc = ModelDoc {
        dimension: 2,
        period: 2.0 * PI,
        parameters: coeffs.parameters(),
        surfaces: vec!["sin(t)".to_string()],
        zones: vec![zone("+", 1, 'p'), zone("-", -1, 'm')],
        manifold: Some(ManifoldDoc {
            k: 1,
            bounds: vec![[r_range.0, r_range.1]],
            beta0: vec!["0".to_string()],
        }),
    };
    PiecewiseModel::from_document(doc).expect("built-in polar model is valid")
}
