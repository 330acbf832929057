use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{averaged_f1, f1_jacobian, manifold, AveragedSamples, AveragingConfig, AveragingError, DegreeResult};
use crate::model::PiecewiseModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateZero {
    pub a: Vec<f64>,
    /// `max |f1(a)|`.
    pub residual: f64,
    pub jacobian: Vec<Vec<f64>>,
    pub det: f64,
    pub z_a: Vec<f64>,
    /// Whether `a` lies in the closed manifold box.
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSearch {
    pub candidates: Vec<CandidateZero>,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Illinois-modified regula falsi on a sign-change bracket.
fn refine_bracket(
    model: &PiecewiseModel,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    cfg: &AveragingConfig,
) -> Result<f64, AveragingError> {
    let target = 1e-2 * cfg.zero_tol;
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = averaged_f1(model, &[c], cfg)?[0];
        if fc.abs() <= target || (b - a).abs() <= 4.0 * f64::EPSILON * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    let (fa, fb) = (
        averaged_f1(model, &[a], cfg)?[0],
        averaged_f1(model, &[b], cfg)?[0],
    );
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// Damped Newton on `f1` from `seed`; `None` when it stalls or diverges.
fn newton(model: &PiecewiseModel, seed: &[f64], cfg: &AveragingConfig) -> Result<Option<Vec<f64>>, AveragingError> {
    let mut a = seed.to_vec();
    let mut fa = averaged_f1(model, &a, cfg)?;
    for _ in 0..cfg.max_newton {
        if max_abs(&fa) <= cfg.zero_tol {
            return Ok(Some(a));
        }
        let jac = f1_jacobian(model, &a, cfg)?;
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&fa)) else {
            return Ok(None);
        };
        let current = max_abs(&fa);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            if let Ok(ft) = averaged_f1(model, &trial, cfg) {
                if max_abs(&ft) < current {
                    a = trial;
                    fa = ft;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(if current <= cfg.zero_tol { Some(a) } else { None });
        }
    }
    Ok((max_abs(&fa) <= cfg.zero_tol).then_some(a))
}

/// Grid indices whose `|f1|` is no larger than at any axis neighbour.
fn local_minima(samples: &AveragedSamples) -> Vec<usize> {
    let (n, k) = (samples.resolution, samples.k);
    let value = |i: usize| samples.f1(i).map(max_abs);
    let mut out = Vec::new();
    for i in 0..samples.alphas.len() {
        let Some(vi) = value(i) else { continue };
        let mut is_min = true;
        let mut stride = 1;
        for _ in 0..k {
            let coord = (i / stride) % n;
            for nb in [coord.checked_sub(1), (coord + 1 < n).then_some(coord + 1)].into_iter().flatten() {
                let j = i - coord * stride + nb * stride;
                if value(j).is_some_and(|vj| vj < vi) {
                    is_min = false;
                }
            }
            stride *= n;
        }
        if is_min {
            out.push(i);
        }
    }
    out
}

/// Zeros of `f1` seeded from the samples, deduplicated and annotated with
/// their finite-difference Jacobians.
pub fn find_zeros(
    samples: &AveragedSamples,
    model: &PiecewiseModel,
    cfg: &AveragingConfig,
) -> Result<ZeroSearch, AveragingError> {
    let man = manifold(model)?;
    let mut warnings = Vec::new();
    if samples.reports.iter().all(|r| r.f1.is_some()) && samples.max_abs() <= cfg.zero_tol {
        warnings.push("degenerate: identically zero".to_string());
        return Ok(ZeroSearch {
            candidates: Vec::new(),
            degenerate: true,
            warnings,
        });
    }
    let mut roots: Vec<Vec<f64>> = Vec::new();
    if samples.k == 1 {
        let vals: Vec<Option<f64>> = (0..samples.alphas.len()).map(|i| samples.f1(i).map(|v| v[0])).collect();
        for i in 0..vals.len() {
            let a = samples.alphas[i][0];
            match (vals[i], vals.get(i + 1).copied().flatten()) {
                (Some(0.0), _) => roots.push(vec![a]),
                (Some(fa), Some(fb)) if fa * fb < 0.0 => {
                    let b = samples.alphas[i + 1][0];
                    roots.push(vec![refine_bracket(model, a, b, fa, fb, cfg)?]);
                }
                _ => {}
            }
        }
    } else {
        for i in local_minima(samples) {
            match newton(model, &samples.alphas[i], cfg)? {
                Some(a) => roots.push(a),
                None => {
                    let msg = format!("Newton from seed {:?} did not converge", samples.alphas[i]);
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
    }

    let mut candidates: Vec<CandidateZero> = Vec::new();
    for a in roots {
        let dup = candidates.iter().any(|c| {
            c.a.iter().zip(&a).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() <= cfg.dedup_radius
        });
        if dup {
            continue;
        }
        let f = averaged_f1(model, &a, cfg)?;
        let residual = max_abs(&f);
        if residual > cfg.zero_tol {
            warnings.push(format!("zero at {a:?} has residual {residual:e}"));
        }
        let jac: DMatrix<f64> = f1_jacobian(model, &a, cfg)?;
        let inside = man.contains(&a);
        if !inside {
            warnings.push(format!("zero at {a:?} lies outside the manifold box"));
        }
        candidates.push(CandidateZero {
            z_a: man.point(&a)?,
            residual,
            jacobian: (0..jac.nrows()).map(|r| jac.row(r).iter().copied().collect()).collect(),
            det: jac.determinant(),
            inside,
            a,
        });
    }
    candidates.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ZeroSearch {
        candidates,
        degenerate: false,
        warnings,
    })
}

/// One-line verdict: `PASS`, `no zero in V`, `degenerate` or `FAIL: ...`.
pub fn certificate(
    samples: &AveragedSamples,
    search: &ZeroSearch,
    degree: Option<&DegreeResult>,
    cfg: &AveragingConfig,
) -> String {
    if search.degenerate {
        return "degenerate".to_string();
    }
    let inside: Vec<&CandidateZero> = search.candidates.iter().filter(|c| c.inside).collect();
    if inside.is_empty() {
        return "no zero in V".to_string();
    }
    if let Some((r, which)) = samples.first_failure() {
        return format!("FAIL: {which} does not hold at alpha = {:?}", r.alpha);
    }
    if let Some(c) = inside.iter().find(|c| c.det.abs() <= cfg.det_tol) {
        return format!("FAIL: singular Jacobian at a = {:?}", c.a);
    }
    if let Some(c) = inside.iter().find(|c| c.residual > cfg.zero_tol) {
        return format!("FAIL: residual {:e} at a = {:?}", c.residual, c.a);
    }
    match degree {
        Some(d) if d.degree == 0 => "FAIL: Brouwer degree is zero".to_string(),
        None => "FAIL: Brouwer degree unavailable".to_string(),
        Some(_) => "PASS".to_string(),
    }
}
