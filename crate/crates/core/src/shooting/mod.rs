//! Periodic orbits of the full system by shooting on the time-`T` map.
//!
//! A fixed point of `z -> x(T, z, eps)` is sought with damped Newton on the
//! displacement `x(T, z, eps) - z`, using a central finite-difference
//! Jacobian. Every converged orbit is re-checked with an independent
//! integration at a tenth of the tolerances.

mod export;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::flow::{integrate, FlowError, IntegratorConfig};
use crate::model::PiecewiseModel;
use crate::variational::{expansion_residual, first_order_response};

pub use export::write_convergence_csv;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingConfig {
    pub integrator: IntegratorConfig,
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step, scaled by `1 + |z_i|`.
    pub fd_step: f64,
    pub max_halvings: usize,
    /// Tolerance factor of the verification integration.
    pub verify_factor: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            integrator: IntegratorConfig {
                rtol: 1e-12,
                atol: 1e-14,
                ..IntegratorConfig::default()
            },
            newton_tol: 1e-10,
            max_iter: 50,
            fd_step: 1e-7,
            max_halvings: 20,
            verify_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShootingError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64, z: Vec<f64> },
    #[error("return-map Jacobian is singular at {z:?}")]
    SingularJacobian { z: Vec<f64> },
    #[error("fixed point failed verification: residual {residual:e} at tighter tolerance")]
    VerificationFailed { residual: f64, z: Vec<f64> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl ShootingError {
    pub fn code(&self) -> &'static str {
        match self {
            ShootingError::NewtonFailure { .. } => "shooting.newton_failure",
            ShootingError::SingularJacobian { .. } => "shooting.singular_jacobian",
            ShootingError::VerificationFailed { .. } => "shooting.verification_failed",
            ShootingError::InvalidInput(_) => "shooting.invalid_input",
            ShootingError::Flow(e) => e.code(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `x(T, z, eps) - z`.
pub fn displacement(model: &PiecewiseModel, z: &[f64], eps: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>, FlowError> {
    let traj = integrate(model, z, eps, (0.0, model.period), cfg)?;
    Ok(traj.final_base().iter().zip(z).map(|(x, z)| x - z).collect())
}

fn displacement_jacobian(
    model: &PiecewiseModel,
    z: &[f64],
    eps: f64,
    cfg: &ShootingConfig,
) -> Result<DMatrix<f64>, FlowError> {
    let d = z.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = cfg.fd_step * (1.0 + z[j].abs());
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let fp = displacement(model, &zp, eps, &cfg.integrator)?;
        let fm = displacement(model, &zm, eps, &cfg.integrator)?;
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbitResult {
    pub eps: f64,
    pub z_eps: Vec<f64>,
    pub residual: f64,
    /// Residual from the independent, tighter integration.
    pub verified_residual: f64,
    pub iterations: usize,
    /// Number of recorded events on `[0, T]`.
    pub events: usize,
    pub distance_to_manifold: Option<f64>,
    pub distance_to_za: Option<f64>,
}

/// Fixed point of the time-`T` map near `z0`. `z_a`, if given, is used for
/// the reported distance.
pub fn find_periodic_orbit(
    model: &PiecewiseModel,
    z0: &[f64],
    eps: f64,
    z_a: Option<&[f64]>,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbitResult, ShootingError> {
    if z0.len() != model.dimension || z0.iter().any(|v| !v.is_finite()) {
        return Err(ShootingError::InvalidInput(format!(
            "initial guess must have {} finite components",
            model.dimension
        )));
    }
    let mut z = z0.to_vec();
    let mut f = displacement(model, &z, eps, &cfg.integrator)?;
    let mut res = norm(&f);
    let mut iterations = 0;
    while res > cfg.newton_tol {
        if iterations >= cfg.max_iter {
            return Err(ShootingError::NewtonFailure { iterations, residual: res, z });
        }
        iterations += 1;
        let jac = displacement_jacobian(model, &z, eps, cfg)?;
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&f))
            .ok_or_else(|| ShootingError::SingularJacobian { z: z.clone() })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
            if let Ok(ft) = displacement(model, &trial, eps, &cfg.integrator) {
                let rt = norm(&ft);
                if rt < res {
                    accepted = Some((trial, ft, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((zn, fnew, rn)) = accepted else {
            return Err(ShootingError::NewtonFailure { iterations, residual: res, z });
        };
        z = zn;
        f = fnew;
        res = rn;
    }
    let tight = cfg.integrator.tightened(cfg.verify_factor);
    let check = integrate(model, &z, eps, (0.0, model.period), &tight)?;
    let verified = dist(check.final_base(), &z);
    if verified > cfg.newton_tol {
        return Err(ShootingError::VerificationFailed { residual: verified, z });
    }
    let distance_to_manifold = match &model.manifold {
        Some(m) => Some(m.distance(&z).map_err(FlowError::from)?),
        None => None,
    };
    Ok(PeriodicOrbitResult {
        eps,
        residual: res,
        verified_residual: verified,
        iterations,
        events: check.events.len(),
        distance_to_manifold,
        distance_to_za: z_a.map(|a| dist(a, &z)),
        z_eps: z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub orbit: Option<PeriodicOrbitResult>,
    pub error_code: Option<String>,
    pub error: Option<String>,
    /// Event count differs from the first successful row.
    pub kappa_changed: bool,
    /// `|x(T,z_a,eps) - x(T,z_a,0) - eps*y1(T,z_a)| / eps`.
    pub expansion_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub z_a: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Slope of `log |z_eps - z_a|` against `log eps`.
    pub fitted_order: Option<f64>,
    /// `C` in `|z_eps - z_a| ~ C eps^p`.
    pub fitted_constant: Option<f64>,
    pub warnings: Vec<String>,
}

impl ConvergenceTable {
    pub fn successes(&self) -> impl Iterator<Item = &PeriodicOrbitResult> {
        self.rows.iter().filter_map(|r| r.orbit.as_ref())
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Warm-started continuation in `eps` from `z_a`.
pub fn epsilon_sweep(
    model: &PiecewiseModel,
    z_a: &[f64],
    eps_list: &[f64],
    cfg: &ShootingConfig,
) -> Result<ConvergenceTable, ShootingError> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(ShootingError::InvalidInput("eps values must be positive and finite".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ShootingError::InvalidInput("eps values must be strictly decreasing".into()));
    }
    let mut warnings = Vec::new();
    let y1 = match first_order_response(model, z_a, model.period, &cfg.integrator) {
        Ok(r) => Some(r.value),
        Err(e) => {
            warnings.push(format!("first-order response unavailable at z_a: {e}"));
            None
        }
    };
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut guess = z_a.to_vec();
    let mut kappa0 = None;
    for &eps in eps_list {
        let expansion_ratio = match &y1 {
            Some(y) => expansion_residual(model, z_a, eps, y, &cfg.integrator).ok().map(|r| r / eps),
            None => None,
        };
        let row = match find_periodic_orbit(model, &guess, eps, Some(z_a), cfg) {
            Ok(orbit) => {
                guess = orbit.z_eps.clone();
                let k0 = *kappa0.get_or_insert(orbit.events);
                let kappa_changed = orbit.events != k0;
                if kappa_changed {
                    warnings.push(format!("event count changed to {} at eps = {eps:e}", orbit.events));
                }
                SweepRow {
                    eps,
                    orbit: Some(orbit),
                    error_code: None,
                    error: None,
                    kappa_changed,
                    expansion_ratio,
                }
            }
            Err(e) => {
                warnings.push(format!("eps = {eps:e}: {e}"));
                SweepRow {
                    eps,
                    orbit: None,
                    error_code: Some(e.code().to_string()),
                    error: Some(e.to_string()),
                    kappa_changed: false,
                    expansion_ratio,
                }
            }
        };
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let d = r.orbit.as_ref()?.distance_to_za?;
            (d > 0.0).then(|| (r.eps.ln(), d.ln()))
        })
        .collect();
    let fit = fit_line(&points);
    Ok(ConvergenceTable {
        z_a: z_a.to_vec(),
        rows,
        fitted_order: fit.map(|f| f.0),
        fitted_constant: fit.map(|f| f.1.exp()),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub estimate: f64,
    pub pairs: usize,
    pub radius: f64,
}

/// Largest sampled `|x(T,z1) - x(T,z2)| / |z1 - z2|` over pairs in the ball
/// of the given radius: antipodal pairs along each axis, then random pairs.
pub fn lipschitz_probe(
    model: &PiecewiseModel,
    center: &[f64],
    eps: f64,
    radius: f64,
    samples: usize,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Result<LipschitzEstimate, FlowError> {
    let d = center.len();
    let end = |z: &[f64]| -> Result<Vec<f64>, FlowError> {
        Ok(integrate(model, z, eps, (0.0, model.period), cfg)?.final_base().to_vec())
    };
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for i in 0..d {
        let mut a = center.to_vec();
        let mut b = center.to_vec();
        a[i] -= radius;
        b[i] += radius;
        pairs.push((a, b));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&v);
            if n <= 1.0 && n > 0.0 {
                return v.iter().zip(center).map(|(x, c)| c + radius * x).collect();
            }
        }
    };
    for _ in 0..samples {
        let a = point(&mut rng);
        let b = point(&mut rng);
        pairs.push((a, b));
    }
    let mut best: f64 = 0.0;
    for (a, b) in &pairs {
        let sep = dist(a, b);
        if sep == 0.0 {
            continue;
        }
        best = best.max(dist(&end(a)?, &end(b)?) / sep);
    }
    Ok(LipschitzEstimate {
        estimate: best,
        pairs: pairs.len(),
        radius,
    })
}
