use std::f64::consts::PI;
use std::fmt::Display;

use serde::Serialize;

use super::CandidateZero;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeMethod {
    IntervalSign,
    BoundaryWinding,
    RegularValueSum,
}

impl DegreeMethod {
    /// Method used by default for dimension `k`.
    pub fn natural(k: usize) -> DegreeMethod {
        match k {
            1 => DegreeMethod::IntervalSign,
            2 => DegreeMethod::BoundaryWinding,
            _ => DegreeMethod::RegularValueSum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeDomain {
    Box(Vec<(f64, f64)>),
    Ball { center: Vec<f64>, radius: f64 },
}

impl DegreeDomain {
    pub fn dimension(&self) -> usize {
        match self {
            DegreeDomain::Box(b) => b.len(),
            DegreeDomain::Ball { center, .. } => center.len(),
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DegreeDomain::Box(b) => x.iter().zip(b).all(|(v, (lo, hi))| v > lo && v < hi),
            DegreeDomain::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() < *radius
            }
        }
    }

    fn interval(&self) -> Option<(f64, f64)> {
        match self {
            DegreeDomain::Box(b) if b.len() == 1 => Some(b[0]),
            DegreeDomain::Ball { center, radius } if center.len() == 1 => {
                Some((center[0] - radius, center[0] + radius))
            }
            _ => None,
        }
    }

    /// Counter-clockwise parametrization of a planar boundary, `s` in `[0, 1]`.
    fn planar_boundary(&self, s: f64) -> [f64; 2] {
        match self {
            DegreeDomain::Ball { center, radius } => {
                let th = 2.0 * PI * s;
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
            DegreeDomain::Box(b) => {
                let ((x0, x1), (y0, y1)) = (b[0], b[1]);
                let q = 4.0 * s;
                match q {
                    q if q < 1.0 => [x0 + q * (x1 - x0), y0],
                    q if q < 2.0 => [x1, y0 + (q - 1.0) * (y1 - y0)],
                    q if q < 3.0 => [x1 - (q - 2.0) * (x1 - x0), y1],
                    q => [x0, y1 - (q - 3.0).min(1.0) * (y1 - y0)],
                }
            }
        }
    }

    /// Points on the boundary: `n` per axis on every box face, or `n^(k-1)`
    /// directions for a ball.
    fn boundary_samples(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            DegreeDomain::Box(b) => {
                let k = b.len();
                let axis = |i: usize| crate::model::linspace(b[i].0, b[i].1, n);
                let mut out = Vec::new();
                for (fixed, &(lo, hi)) in b.iter().enumerate() {
                    for end in [lo, hi] {
                        let mut pts = vec![Vec::new()];
                        for i in 0..k {
                            let vals = if i == fixed { vec![end] } else { axis(i) };
                            pts = pts
                                .into_iter()
                                .flat_map(|p: Vec<f64>| {
                                    vals.iter().map(move |&v| {
                                        let mut q = p.clone();
                                        q.push(v);
                                        q
                                    })
                                })
                                .collect();
                        }
                        out.extend(pts);
                    }
                }
                out
            }
            DegreeDomain::Ball { center, radius } => {
                let k = center.len();
                if k == 1 {
                    return vec![vec![center[0] - radius], vec![center[0] + radius]];
                }
                // Directions from the faces of the cube [-1, 1]^k.
                let cube = DegreeDomain::Box(vec![(-1.0, 1.0); k]);
                cube.boundary_samples(n)
                    .into_iter()
                    .map(|d| {
                        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                        d.iter().zip(center).map(|(v, c)| c + radius * v / len).collect()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeResult {
    pub domain: DegreeDomain,
    pub method: DegreeMethod,
    pub degree: i64,
    /// Smallest `|f|` seen on the boundary.
    pub boundary_margin: f64,
    pub boundary_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DegreeError {
    #[error("|f| = {margin:e} on the boundary at {at:?} is below the margin tolerance")]
    BoundaryMargin { margin: f64, at: Vec<f64> },
    #[error("boundary winding not resolved at refinement depth {depth}")]
    Unresolved { depth: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

impl DegreeError {
    pub fn code(&self) -> &'static str {
        match self {
            DegreeError::BoundaryMargin { .. } => "degree.boundary_margin",
            DegreeError::Unresolved { .. } => "degree.unresolved",
            DegreeError::Unsupported(_) => "degree.unsupported",
            DegreeError::Eval(_) => "degree.eval",
        }
    }
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn eval<F, E>(f: &mut F, x: &[f64]) -> Result<Vec<f64>, DegreeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    f(x).map_err(|e| DegreeError::Eval(e.to_string()))
}

/// `(sgn f(b) - sgn f(a)) / 2` on an interval.
pub fn degree_interval_sign<F, E>(mut f: F, domain: &DegreeDomain, margin_tol: f64) -> Result<DegreeResult, DegreeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let (a, b) = domain
        .interval()
        .ok_or_else(|| DegreeError::Unsupported("interval-sign degree needs k = 1".into()))?;
    let fa = eval(&mut f, &[a])?[0];
    let fb = eval(&mut f, &[b])?[0];
    let (margin, at) = if fa.abs() <= fb.abs() { (fa.abs(), a) } else { (fb.abs(), b) };
    if margin <= margin_tol {
        return Err(DegreeError::BoundaryMargin { margin, at: vec![at] });
    }
    Ok(DegreeResult {
        domain: domain.clone(),
        method: DegreeMethod::IntervalSign,
        degree: (sign(fb) - sign(fa)) / 2,
        boundary_margin: margin,
        boundary_evaluations: 2,
    })
}

/// Winding number of `f` along the boundary of a planar domain, with edge
/// bisection until every angle increment is below `pi/2`.
pub fn degree_winding<F, E>(
    mut f: F,
    domain: &DegreeDomain,
    margin_tol: f64,
    max_refine: usize,
) -> Result<DegreeResult, DegreeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    if domain.dimension() != 2 {
        return Err(DegreeError::Unsupported("boundary winding needs k = 2".into()));
    }
    const INITIAL: usize = 64;
    let mut evals = 0usize;
    let mut margin = f64::INFINITY;
    let mut margin_at = Vec::new();
    let mut sample = |s: f64, evals: &mut usize| -> Result<(f64, f64), DegreeError> {
        let p = domain.planar_boundary(s);
        let v = eval(&mut f, &p)?;
        *evals += 1;
        let n = v[0].hypot(v[1]);
        if n < margin {
            margin = n;
            margin_at = p.to_vec();
        }
        if n <= margin_tol {
            return Err(DegreeError::BoundaryMargin { margin: n, at: p.to_vec() });
        }
        Ok((v[1].atan2(v[0]), n))
    };
    let mut total = 0.0;
    let (mut th0, _) = sample(0.0, &mut evals)?;
    let first = th0;
    for i in 0..INITIAL {
        let (s0, s1) = (i as f64 / INITIAL as f64, (i + 1) as f64 / INITIAL as f64);
        let th1 = if i + 1 == INITIAL { first } else { sample(s1, &mut evals)?.0 };
        // Depth-first refinement of [s0, s1].
        let mut stack = vec![(s0, s1, th0, th1, 0usize)];
        while let Some((a, b, ta, tb, depth)) = stack.pop() {
            let mut d = tb - ta;
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            if d.abs() < 0.5 * PI {
                total += d;
                continue;
            }
            if depth >= max_refine {
                return Err(DegreeError::Unresolved { depth });
            }
            let m = 0.5 * (a + b);
            let (tm, _) = sample(m, &mut evals)?;
            stack.push((m, b, tm, tb, depth + 1));
            stack.push((a, m, ta, tm, depth + 1));
        }
        th0 = th1;
    }
    if margin <= margin_tol {
        return Err(DegreeError::BoundaryMargin { margin, at: margin_at });
    }
    let winding = total / (2.0 * PI);
    let degree = winding.round();
    if (winding - degree).abs() > 1e-6 {
        return Err(DegreeError::Unresolved { depth: max_refine });
    }
    Ok(DegreeResult {
        domain: domain.clone(),
        method: DegreeMethod::BoundaryWinding,
        degree: degree as i64,
        boundary_margin: margin,
        boundary_evaluations: evals,
    })
}

/// Sum of `sgn det f'(a)` over the supplied zeros inside the domain. The
/// boundary margin is estimated from face samples.
pub fn degree_regular_values<F, E>(
    mut f: F,
    domain: &DegreeDomain,
    zeros: &[CandidateZero],
    margin_tol: f64,
) -> Result<DegreeResult, DegreeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let samples = domain.boundary_samples(5);
    let mut margin = f64::INFINITY;
    let mut at = Vec::new();
    for p in &samples {
        let n = norm(&eval(&mut f, p)?);
        if n < margin {
            margin = n;
            at = p.clone();
        }
    }
    if margin <= margin_tol {
        return Err(DegreeError::BoundaryMargin { margin, at });
    }
    let mut degree = 0;
    for z in zeros.iter().filter(|z| domain.contains(&z.a)) {
        if z.det == 0.0 {
            return Err(DegreeError::Unsupported(format!("zero at {:?} is degenerate", z.a)));
        }
        degree += sign(z.det);
    }
    Ok(DegreeResult {
        domain: domain.clone(),
        method: DegreeMethod::RegularValueSum,
        degree,
        boundary_margin: margin,
        boundary_evaluations: samples.len(),
    })
}

pub fn brouwer_degree<F, E>(
    f: F,
    domain: &DegreeDomain,
    method: DegreeMethod,
    zeros: &[CandidateZero],
    margin_tol: f64,
    max_refine: usize,
) -> Result<DegreeResult, DegreeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    match method {
        DegreeMethod::IntervalSign => degree_interval_sign(f, domain, margin_tol),
        DegreeMethod::BoundaryWinding => degree_winding(f, domain, margin_tol, max_refine),
        DegreeMethod::RegularValueSum => degree_regular_values(f, domain, zeros, margin_tol),
    }
}
