//! Piecewise model: zones selected by sign patterns of switching functions,
//! per-zone fields `F0`, `F1`, `R`, and an optional manifold of
//! unperturbed periodic orbits.

mod builtin;
mod doc;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exprlang::{self, CompiledExpr, EvalError, Expr, ExprError, Slots};

pub use builtin::{builtin_proposition1, builtin_proposition1_polar, Prop1Coeffs, ZoneCoeffs};
pub use doc::{ManifoldDoc, ModelDoc, ZoneDoc};

/// Absolute tolerance on `|h|` for "on the surface".
pub const DEFAULT_TOL_SURFACE: f64 = 1e-9;
/// Lower bound on `|grad h|` at events.
pub const DEFAULT_TOL_GRAD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Expr { path: String, source: ExprError },
    #[error("zones {first} and {second} share signature {signature:?}")]
    DuplicateSignature {
        first: usize,
        second: usize,
        signature: Vec<i8>,
    },
    #[error("zones {first} and {second} have overlapping signatures")]
    OverlappingSignature { first: usize, second: usize },
    #[error("{path}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("parameter name '{0}' is reserved")]
    ReservedParameter(String),
    #[error("no zone covers t={t}, x={x:?}")]
    Uncovered { t: f64, x: Vec<f64> },
    #[error("{0}")]
    Eval(#[from] EvalError),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Schema(_) => "model.schema",
            ModelError::Expr { source, .. } => source.code(),
            ModelError::DuplicateSignature { .. } => "zone.duplicate_signature",
            ModelError::OverlappingSignature { .. } => "zone.overlapping_signature",
            ModelError::DimensionMismatch { .. } => "model.dimension_mismatch",
            ModelError::Invalid { .. } => "model.invalid",
            ModelError::ReservedParameter(_) => "model.reserved_parameter",
            ModelError::Uncovered { .. } => "model.uncovered",
            ModelError::Eval(_) => "expr.domain",
        }
    }

    /// Document path of the offending field, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            ModelError::Expr { path, .. }
            | ModelError::DimensionMismatch { path, .. }
            | ModelError::Invalid { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Which part of the expansion `F0 + eps*F1 + eps^2*R` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldOrder {
    F0,
    F1,
    R,
}

/// Result of locating a point in the zone partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Zone(usize),
    /// Indices of every surface with `|h_j| <= tol_surface`.
    OnSurface(Vec<usize>),
}

/// Slot layout for field expressions: `[t, x1..xd, eps]`.
pub(crate) struct StatePoint<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub eps: f64,
}

impl Slots for StatePoint<'_> {
    #[inline]
    fn slot(&self, index: usize) -> f64 {
        if index == 0 {
            self.t
        } else if index <= self.x.len() {
            self.x[index - 1]
        } else {
            self.eps
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchSurface {
    pub id: usize,
    pub h: Expr,
    /// `(dh/dt, dh/dx1, ..., dh/dxd)`.
    pub gradient: Vec<Expr>,
    h_c: CompiledExpr,
    grad_c: Vec<CompiledExpr>,
    time_only: bool,
}

impl SwitchSurface {
    /// True when `h` depends on `t` alone.
    pub fn is_time_only(&self) -> bool {
        self.time_only
    }
}

#[derive(Debug, Clone)]
pub struct Zone {
    pub id: usize,
    pub name: Option<String>,
    /// Required sign of each surface's `h`; 0 means unconstrained.
    pub signature: Vec<i8>,
    pub f0: Vec<Expr>,
    pub f1: Vec<Expr>,
    pub r: Vec<Expr>,
    /// Row-major symbolic `D_x F0`.
    pub jac_f0: Vec<Vec<Expr>>,
    f0_c: Vec<CompiledExpr>,
    f1_c: Vec<CompiledExpr>,
    r_c: Vec<CompiledExpr>,
    jac_c: Vec<CompiledExpr>,
    f1_zero: bool,
    r_zero: bool,
}

impl Zone {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.id.to_string())
    }

    fn matches(&self, signs: &[i8]) -> bool {
        self.signature
            .iter()
            .zip(signs)
            .all(|(&req, &s)| req == 0 || req == s)
    }
}

/// Candidate manifold `{(alpha, beta0(alpha)) : alpha in box}`; the first
/// `k` state coordinates are the free ones.
#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub k: usize,
    pub dimension: usize,
    pub bounds: Vec<(f64, f64)>,
    pub beta0: Vec<Expr>,
    beta0_c: Vec<CompiledExpr>,
    dbeta0_c: Vec<CompiledExpr>,
}

impl ManifoldSpec {
    /// `z_alpha = (alpha, beta0(alpha))`.
    pub fn point(&self, alpha: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut z = alpha.to_vec();
        for b in &self.beta0_c {
            z.push(b.eval(alpha)?);
        }
        Ok(z)
    }

    /// Tangent basis `[I_k; D beta0(alpha)]`, a `d x k` matrix.
    pub fn tangent(&self, alpha: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let (d, k) = (self.dimension, self.k);
        let mut m = DMatrix::zeros(d, k);
        for i in 0..k {
            m[(i, i)] = 1.0;
        }
        for i in 0..d - k {
            for j in 0..k {
                m[(k + i, j)] = self.dbeta0_c[i * k + j].eval(alpha)?;
            }
        }
        Ok(m)
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        z[..self.k].to_vec()
    }

    pub fn project_perp(&self, z: &[f64]) -> Vec<f64> {
        z[self.k..].to_vec()
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        alpha
            .iter()
            .zip(&self.bounds)
            .all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Tensor grid with `n` points per axis (box corners included).
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, n))
            .collect();
        let mut out = vec![Vec::with_capacity(self.k)];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Euclidean distance from `z` to the manifold over the closed box.
    pub fn distance(&self, z: &[f64]) -> Result<f64, EvalError> {
        let dist = |alpha: &[f64]| -> Result<f64, EvalError> {
            let p = self.point(alpha)?;
            Ok(p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        };
        let clamp = |alpha: &mut [f64]| {
            for (a, &(lo, hi)) in alpha.iter_mut().zip(&self.bounds) {
                *a = a.clamp(lo, hi);
            }
        };
        let mut alpha = self.project(z);
        clamp(&mut alpha);
        if self.beta0_c.iter().all(|b| b.constant_value().is_some()) {
            return dist(&alpha);
        }
        // Cyclic golden-section refinement over each coordinate.
        let mut best = dist(&alpha)?;
        for _ in 0..20 {
            for i in 0..self.k {
                let (lo, hi) = self.bounds[i];
                let (mut a, mut b) = (lo, hi);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                let eval_at = |v: f64, alpha: &mut Vec<f64>| -> Result<f64, EvalError> {
                    alpha[i] = v;
                    dist(alpha)
                };
                let mut work = alpha.clone();
                for _ in 0..80 {
                    let c = b - g * (b - a);
                    let d = a + g * (b - a);
                    if eval_at(c, &mut work)? < eval_at(d, &mut work)? {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                work[i] = 0.5 * (a + b);
                let val = dist(&work)?;
                if val < best {
                    best = val;
                    alpha = work;
                }
            }
        }
        Ok(best)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Zone-wise count of random probe points, used as a coverage diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub hits: Vec<usize>,
    pub on_surface: usize,
    pub uncovered: usize,
}

/// Validated discontinuous piecewise model.
#[derive(Debug, Clone)]
pub struct PiecewiseModel {
    doc: ModelDoc,
    pub dimension: usize,
    pub period: f64,
    pub params: BTreeMap<String, f64>,
    pub surfaces: Vec<SwitchSurface>,
    pub zones: Vec<Zone>,
    pub manifold: Option<ManifoldSpec>,
    pub tol_surface: f64,
    pub tol_grad: f64,
}

fn is_reserved(name: &str) -> bool {
    let indexed = |prefix: char| {
        name.strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    };
    name == "t" || name == "eps" || indexed('x') || indexed('a') || exprlang::Func::from_name(name).is_some()
}

fn expr_at(path: String, src: &str) -> Result<Expr, ModelError> {
    exprlang::parse(src).map_err(|source| ModelError::Expr { path, source })
}

fn compile_at(
    path: &str,
    e: &Expr,
    symbols: &Arc<[String]>,
    constants: &HashMap<String, f64>,
) -> Result<CompiledExpr, ModelError> {
    CompiledExpr::compile(e, symbols, constants).map_err(|source| ModelError::Expr {
        path: path.to_string(),
        source,
    })
}

fn check_len(path: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimensionMismatch {
            path: path.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

impl PiecewiseModel {
    /// Parses and validates a JSON model document.
    pub fn from_json(text: &str) -> Result<PiecewiseModel, ModelError> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: ModelDoc) -> Result<PiecewiseModel, ModelError> {
        let d = doc.dimension;
        if d == 0 {
            return Err(ModelError::Invalid {
                path: "dimension".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(doc.period.is_finite() && doc.period > 0.0) {
            return Err(ModelError::Invalid {
                path: "period".into(),
                reason: "must be a positive finite number".into(),
            });
        }
        for (name, v) in &doc.parameters {
            if is_reserved(name) || !is_identifier(name) {
                return Err(ModelError::ReservedParameter(name.clone()));
            }
            if !v.is_finite() {
                return Err(ModelError::Invalid {
                    path: format!("parameters.{name}"),
                    reason: "must be finite".into(),
                });
            }
        }
        let constants: HashMap<String, f64> =
            doc.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let state_vars: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let mut names = vec!["t".to_string()];
        names.extend(state_vars.iter().cloned());
        names.push("eps".to_string());
        let symbols: Arc<[String]> = names.into();

        let mut surfaces = Vec::with_capacity(doc.surfaces.len());
        for (j, src) in doc.surfaces.iter().enumerate() {
            let path = format!("surfaces[{j}]");
            let h = expr_at(path.clone(), src)?;
            if h.contains_var("eps") {
                return Err(ModelError::Invalid {
                    path,
                    reason: "switching functions may not depend on eps".into(),
                });
            }
            let h_c = compile_at(&path, &h, &symbols, &constants)?;
            let mut gradient = vec![h.differentiate("t")];
            gradient.extend(state_vars.iter().map(|v| h.differentiate(v)));
            let grad_c = gradient
                .iter()
                .map(|g| compile_at(&path, g, &symbols, &constants))
                .collect::<Result<Vec<_>, _>>()?;
            let time_only = grad_c[1..].iter().all(|g| g.is_zero());
            surfaces.push(SwitchSurface {
                id: j,
                h,
                gradient,
                h_c,
                grad_c,
                time_only,
            });
        }
        let n_surf = surfaces.len();

        if doc.zones.is_empty() {
            return Err(ModelError::Invalid {
                path: "zones".into(),
                reason: "at least one zone is required".into(),
            });
        }
        let mut zones = Vec::with_capacity(doc.zones.len());
        for (n, zd) in doc.zones.iter().enumerate() {
            let base = format!("zones[{n}]");
            check_len(&format!("{base}.signature"), n_surf, zd.signature.len())?;
            if zd.signature.iter().any(|s| !matches!(s, -1..=1)) {
                return Err(ModelError::Invalid {
                    path: format!("{base}.signature"),
                    reason: "entries must be -1, 0 or 1".into(),
                });
            }
            let parse_vec = |key: &str, srcs: Option<&Vec<String>>| -> Result<Vec<Expr>, ModelError> {
                match srcs {
                    None => Ok(vec![Expr::Num(0.0); d]),
                    Some(v) => {
                        check_len(&format!("{base}.{key}"), d, v.len())?;
                        v.iter()
                            .enumerate()
                            .map(|(i, s)| expr_at(format!("{base}.{key}[{i}]"), s))
                            .collect()
                    }
                }
            };
            let f0 = parse_vec("F0", Some(&zd.f0))?;
            let f1 = parse_vec("F1", zd.f1.as_ref())?;
            let r = parse_vec("R", zd.r.as_ref())?;
            let compile_vec = |key: &str, es: &[Expr]| -> Result<Vec<CompiledExpr>, ModelError> {
                es.iter()
                    .enumerate()
                    .map(|(i, e)| compile_at(&format!("{base}.{key}[{i}]"), e, &symbols, &constants))
                    .collect()
            };
            for (i, e) in f0.iter().chain(&f1).enumerate() {
                if e.contains_var("eps") {
                    let key = if i < d { "F0" } else { "F1" };
                    return Err(ModelError::Invalid {
                        path: format!("{base}.{key}[{}]", i % d),
                        reason: "only R may depend on eps".into(),
                    });
                }
            }
            let f0_c = compile_vec("F0", &f0)?;
            let f1_c = compile_vec("F1", &f1)?;
            let r_c = compile_vec("R", &r)?;
            let jac_f0: Vec<Vec<Expr>> = f0
                .iter()
                .map(|fi| state_vars.iter().map(|v| fi.differentiate(v)).collect())
                .collect();
            let flat: Vec<Expr> = jac_f0.iter().flatten().cloned().collect();
            let jac_c = compile_vec("F0", &flat)?;
            zones.push(Zone {
                id: n,
                name: zd.name.clone(),
                signature: zd.signature.clone(),
                f1_zero: f1_c.iter().all(|c| c.is_zero()),
                r_zero: r_c.iter().all(|c| c.is_zero()),
                f0,
                f1,
                r,
                jac_f0,
                f0_c,
                f1_c,
                r_c,
                jac_c,
            });
        }
        for a in 0..zones.len() {
            for b in a + 1..zones.len() {
                let (sa, sb) = (&zones[a].signature, &zones[b].signature);
                if sa == sb {
                    return Err(ModelError::DuplicateSignature {
                        first: a,
                        second: b,
                        signature: sa.clone(),
                    });
                }
                if sa.iter().zip(sb).all(|(&x, &y)| x == 0 || y == 0 || x == y) {
                    return Err(ModelError::OverlappingSignature { first: a, second: b });
                }
            }
        }

        let manifold = match &doc.manifold {
            None => None,
            Some(md) => Some(build_manifold(md, d, &constants)?),
        };

        Ok(PiecewiseModel {
            dimension: d,
            period: doc.period,
            params: doc.parameters.clone(),
            surfaces,
            zones,
            manifold,
            tol_surface: DEFAULT_TOL_SURFACE,
            tol_grad: DEFAULT_TOL_GRAD,
            doc,
        })
    }

    pub fn document(&self) -> &ModelDoc {
        &self.doc
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("model document serialises")
    }

    pub fn h(&self, j: usize, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        self.surfaces[j].h_c.eval(&StatePoint { t, x, eps: 0.0 })
    }

    /// `(dh/dt, grad_x h)` at `(t, x)`.
    pub fn grad_h(&self, j: usize, t: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let p = StatePoint { t, x, eps: 0.0 };
        self.surfaces[j].grad_c.iter().map(|g| g.eval(&p)).collect()
    }

    /// Unique zone matching the sign vector (0 entries in `signs` match only
    /// unconstrained signature entries).
    pub fn zone_for_signs(&self, signs: &[i8]) -> Option<usize> {
        self.zones.iter().position(|z| z.matches(signs))
    }

    pub fn zone_of(&self, t: f64, x: &[f64]) -> Result<Location, ModelError> {
        let mut on = Vec::new();
        let mut signs = Vec::with_capacity(self.surfaces.len());
        for j in 0..self.surfaces.len() {
            let h = self.h(j, t, x)?;
            if h.abs() <= self.tol_surface {
                on.push(j);
            }
            signs.push(if h > 0.0 { 1 } else if h < 0.0 { -1 } else { 0 });
        }
        if !on.is_empty() {
            return Ok(Location::OnSurface(on));
        }
        self.zone_for_signs(&signs)
            .map(Location::Zone)
            .ok_or_else(|| ModelError::Uncovered { t, x: x.to_vec() })
    }

    /// Whether `(t, x)` satisfies zone `zone`'s signature strictly.
    pub fn in_zone(&self, zone: usize, t: f64, x: &[f64]) -> Result<bool, EvalError> {
        for (j, &req) in self.zones[zone].signature.iter().enumerate() {
            if req != 0 && self.h(j, t, x)? * f64::from(req) <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn eval_field(
        &self,
        zone: usize,
        order: FieldOrder,
        t: f64,
        x: &[f64],
        eps: f64,
    ) -> Result<Vec<f64>, EvalError> {
        let z = &self.zones[zone];
        let exprs = match order {
            FieldOrder::F0 => &z.f0_c,
            FieldOrder::F1 => &z.f1_c,
            FieldOrder::R => &z.r_c,
        };
        let p = StatePoint { t, x, eps };
        exprs.iter().map(|e| e.eval(&p)).collect()
    }

    /// `F0 + eps*F1 + eps^2*R` written into `out`.
    pub fn full_field_into(
        &self,
        zone: usize,
        t: f64,
        x: &[f64],
        eps: f64,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        let z = &self.zones[zone];
        let p = StatePoint { t, x, eps };
        for (i, o) in out.iter_mut().enumerate().take(self.dimension) {
            let mut v = z.f0_c[i].eval(&p)?;
            if eps != 0.0 {
                if !z.f1_zero {
                    v += eps * z.f1_c[i].eval(&p)?;
                }
                if !z.r_zero {
                    v += eps * eps * z.r_c[i].eval(&p)?;
                }
            }
            *o = v;
        }
        Ok(())
    }

    pub fn full_field(&self, zone: usize, t: f64, x: &[f64], eps: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dimension];
        self.full_field_into(zone, t, x, eps, &mut out)?;
        Ok(out)
    }

    /// Whether zone `zone` has an identically zero `F1`.
    pub fn f1_is_zero(&self, zone: usize) -> bool {
        self.zones[zone].f1_zero
    }

    pub(crate) fn f1_into(&self, zone: usize, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let z = &self.zones[zone];
        let p = StatePoint { t, x, eps: 0.0 };
        for (o, e) in out.iter_mut().zip(&z.f1_c) {
            *o = e.eval(&p)?;
        }
        Ok(())
    }

    /// Row-major `D_x F0` written into `out` (`d*d` entries).
    pub(crate) fn jac_f0_into(&self, zone: usize, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let z = &self.zones[zone];
        let p = StatePoint { t, x, eps: 0.0 };
        for (o, e) in out.iter_mut().zip(&z.jac_c) {
            *o = e.eval(&p)?;
        }
        Ok(())
    }

    pub fn eval_jac_f0(&self, zone: usize, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let d = self.dimension;
        let mut buf = vec![0.0; d * d];
        self.jac_f0_into(zone, t, x, &mut buf)?;
        Ok(DMatrix::from_row_slice(d, d, &buf))
    }

    pub fn zone_index_by_name(&self, name: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.name.as_deref() == Some(name))
    }

    /// Uniform random probes over `[0, T] x [-scale, scale]^d`.
    pub fn probe_coverage(&self, samples: usize, scale: f64, seed: u64) -> Result<CoverageReport, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = CoverageReport {
            hits: vec![0; self.zones.len()],
            on_surface: 0,
            uncovered: 0,
        };
        let mut x = vec![0.0; self.dimension];
        for _ in 0..samples {
            let t = rng.gen_range(0.0..self.period);
            for xi in x.iter_mut() {
                *xi = rng.gen_range(-scale..scale);
            }
            match self.zone_of(t, &x) {
                Ok(Location::Zone(n)) => report.hits[n] += 1,
                Ok(Location::OnSurface(_)) => report.on_surface += 1,
                Err(ModelError::Uncovered { .. }) => report.uncovered += 1,
                Err(ModelError::Eval(e)) => return Err(e),
                Err(_) => report.uncovered += 1,
            }
        }
        Ok(report)
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn build_manifold(
    md: &ManifoldDoc,
    d: usize,
    constants: &HashMap<String, f64>,
) -> Result<ManifoldSpec, ModelError> {
    let k = md.k;
    if k == 0 || k > d {
        return Err(ModelError::Invalid {
            path: "manifold.k".into(),
            reason: format!("must satisfy 1 <= k <= {d}"),
        });
    }
    check_len("manifold.box", k, md.bounds.len())?;
    check_len("manifold.beta0", d - k, md.beta0.len())?;
    let mut bounds = Vec::with_capacity(k);
    for (i, &[lo, hi]) in md.bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ModelError::Invalid {
                path: format!("manifold.box[{i}]"),
                reason: "bounds must be finite with lo <= hi".into(),
            });
        }
        bounds.push((lo, hi));
    }
    let alpha_vars: Vec<String> = (1..=k).map(|i| format!("a{i}")).collect();
    let symbols: Arc<[String]> = alpha_vars.clone().into();
    let mut beta0 = Vec::new();
    let mut beta0_c = Vec::new();
    let mut dbeta0_c = Vec::new();
    for (i, src) in md.beta0.iter().enumerate() {
        let path = format!("manifold.beta0[{i}]");
        let e = expr_at(path.clone(), src)?;
        beta0_c.push(compile_at(&path, &e, &symbols, constants)?);
        for v in &alpha_vars {
            dbeta0_c.push(compile_at(&path, &e.differentiate(v), &symbols, constants)?);
        }
        beta0.push(e);
    }
    let spec = ManifoldSpec {
        k,
        dimension: d,
        bounds,
        beta0,
        beta0_c,
        dbeta0_c,
    };
    for alpha in spec.grid(5) {
        spec.point(&alpha).map_err(|e| ModelError::Invalid {
            path: "manifold.beta0".into(),
            reason: format!("not defined at alpha={alpha:?}: {e}"),
        })?;
    }
    Ok(spec)
}
