//! First-order averaged function and the hypotheses that make its zeros
//! meaningful.
//!
//! For `alpha` in the manifold box, `z_alpha = (alpha, beta0(alpha))` and
//! `f1(alpha)` is the first `k` components of `y1(T, z_alpha)`. The checks
//! below certify that the unperturbed orbit through `z_alpha` is
//! `T`-periodic and crosses the switching set transversally (H), that the
//! monodromy has the required block structure (H2), and that `y1` is
//! tangent to the switching surfaces at every crossing (H3).

mod degree;
mod export;
mod zeros;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::flow::{classify_event, integrate, EventKind, FlowError, IntegratorConfig};
use crate::model::{Location, ManifoldSpec, ModelError, PiecewiseModel};
use crate::variational::{first_order_response, linearize, EventResidual, Linearization, VariationalMode};

pub use degree::{
    brouwer_degree, degree_interval_sign, degree_regular_values, degree_winding, DegreeDomain, DegreeError,
    DegreeMethod, DegreeResult,
};
pub use export::write_samples_csv;
pub use zeros::{certificate, find_zeros, CandidateZero, ZeroSearch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingConfig {
    pub integrator: IntegratorConfig,
    /// Factor applied to `rtol`/`atol` for the hypothesis integrations.
    pub hypothesis_tightening: f64,
    pub mode: VariationalMode,
    pub periodicity_tol: f64,
    pub h2_tol: f64,
    /// Smallest accepted `|det Delta|`.
    pub det_tol: f64,
    pub h3_tol: f64,
    pub zero_tol: f64,
    pub margin_tol: f64,
    pub dedup_radius: f64,
    pub max_newton: usize,
    /// Maximum bisection depth per boundary edge in winding computations.
    pub max_refine: usize,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            integrator: IntegratorConfig::default(),
            hypothesis_tightening: 1e-2,
            mode: VariationalMode::Plain,
            periodicity_tol: 1e-8,
            h2_tol: 1e-8,
            det_tol: 1e-8,
            h3_tol: 1e-7,
            zero_tol: 1e-10,
            margin_tol: 1e-8,
            dedup_radius: 1e-6,
            max_newton: 50,
            max_refine: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AveragingError {
    #[error("model has no manifold")]
    NoManifold,
    #[error("alpha must have {expected} components, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("orbit from z = {z:?} is not T-periodic (residual {residual:e})")]
    NotPeriodic { z: Vec<f64>, residual: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("beta0: {0}")]
    Eval(#[from] crate::exprlang::EvalError),
}

impl AveragingError {
    pub fn code(&self) -> &'static str {
        match self {
            AveragingError::NoManifold => "averaging.no_manifold",
            AveragingError::Dimension { .. } => "averaging.dimension",
            AveragingError::NotPeriodic { .. } => "averaging.not_periodic",
            AveragingError::Flow(e) => e.code(),
            AveragingError::Model(e) => e.code(),
            AveragingError::Eval(_) => "expr.domain",
        }
    }
}

pub(crate) fn manifold(model: &PiecewiseModel) -> Result<&ManifoldSpec, AveragingError> {
    model.manifold.as_ref().ok_or(AveragingError::NoManifold)
}

fn manifold_point(model: &PiecewiseModel, alpha: &[f64]) -> Result<Vec<f64>, AveragingError> {
    let m = manifold(model)?;
    if alpha.len() != m.k {
        return Err(AveragingError::Dimension {
            expected: m.k,
            found: alpha.len(),
        });
    }
    Ok(m.point(alpha)?)
}

fn periodicity_residual(end: &[f64], z: &[f64]) -> f64 {
    end.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// `f1(alpha)`. Fails if the orbit through `z_alpha` is not periodic or
/// meets the switching set outside the crossing region.
pub fn averaged_f1(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<Vec<f64>, AveragingError> {
    let z = manifold_point(model, alpha)?;
    let resp = first_order_response(model, &z, model.period, &cfg.integrator)?;
    let residual = periodicity_residual(resp.trajectory.final_base(), &z);
    if residual > cfg.periodicity_tol {
        return Err(AveragingError::NotPeriodic { z, residual });
    }
    Ok(resp.value[..alpha.len()].to_vec())
}

/// Periodicity and crossing-only report (H).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HCheck {
    pub periodicity_residual: Option<f64>,
    pub crossing_only: bool,
    pub event_kinds: Vec<EventKind>,
    pub event_times: Vec<f64>,
    pub error_code: Option<String>,
    pub error: Option<String>,
    pub pass: bool,
}

/// Block structure of `M = Y(T) Y(0)^{-1} - I` (H2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Check {
    pub monodromy_minus_identity: Vec<Vec<f64>>,
    /// Frobenius norm of the upper-right `k x (d-k)` block.
    pub upper_right_norm: f64,
    pub delta: Vec<Vec<f64>>,
    pub det_delta: f64,
    /// `|M [I; D beta0]|`; zero when the manifold consists of periodic orbits.
    pub tangent_residual: f64,
    pub pass: bool,
}

/// Tangency of `y1` to the switching surfaces at crossings (H3).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Check {
    pub residuals: Vec<EventResidual>,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
    pub f1: Option<Vec<f64>>,
    pub h: HCheck,
    pub h2: Option<H2Check>,
    pub h3: Option<H3Check>,
    pub pass: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn h_from_lin(z: &[f64], lin: &Linearization, cfg: &AveragingConfig) -> HCheck {
    let residual = periodicity_residual(lin.trajectory.final_base(), z);
    HCheck {
        periodicity_residual: Some(residual),
        crossing_only: true,
        event_kinds: lin.trajectory.events.iter().map(|e| e.kind).collect(),
        event_times: lin.trajectory.events.iter().map(|e| e.t).collect(),
        error_code: None,
        error: None,
        pass: residual <= cfg.periodicity_tol,
    }
}

fn h_from_error(err: &FlowError) -> HCheck {
    let ev = err.event();
    HCheck {
        periodicity_residual: None,
        crossing_only: false,
        event_kinds: ev.map(|e| vec![e.kind]).unwrap_or_default(),
        event_times: ev.map(|e| vec![e.t]).unwrap_or_default(),
        error_code: Some(err.code().to_string()),
        error: Some(err.to_string()),
        pass: false,
    }
}

fn h2_from_lin(m: &ManifoldSpec, alpha: &[f64], lin: &Linearization, cfg: &AveragingConfig) -> Result<H2Check, AveragingError> {
    let (d, k) = (m.dimension, m.k);
    let mm = &lin.monodromy - DMatrix::identity(d, d);
    let upper = mm.view((0, k), (k, d - k)).norm();
    let delta = mm.view((k, k), (d - k, d - k)).clone_owned();
    let det = if d == k { 1.0 } else { delta.determinant() };
    let tangent = (&mm * m.tangent(alpha)?).norm();
    Ok(H2Check {
        monodromy_minus_identity: rows(&mm),
        upper_right_norm: upper,
        delta: rows(&delta),
        det_delta: det,
        tangent_residual: tangent,
        pass: upper <= cfg.h2_tol && tangent <= cfg.h2_tol && det.abs() > cfg.det_tol,
    })
}

fn h3_from_lin(lin: &Linearization, cfg: &AveragingConfig) -> H3Check {
    let max = lin.events.iter().map(|e| e.h3).fold(0.0, f64::max);
    H3Check {
        residuals: lin.events.clone(),
        max_residual: max,
        pass: max <= cfg.h3_tol,
    }
}

fn hypothesis_integration(model: &PiecewiseModel, z: &[f64], cfg: &AveragingConfig) -> Result<Linearization, FlowError> {
    let tight = cfg.integrator.tightened(cfg.hypothesis_tightening);
    linearize(model, z, model.period, cfg.mode, &tight)
}

/// All hypothesis checks and `f1` at one manifold point, from a single
/// integration at the tightened tolerance.
pub fn evaluate_point(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<HypothesisReport, AveragingError> {
    let m = manifold(model)?;
    let z = manifold_point(model, alpha)?;
    let report = match hypothesis_integration(model, &z, cfg) {
        Ok(lin) => {
            let h = h_from_lin(&z, &lin, cfg);
            let h2 = h2_from_lin(m, alpha, &lin, cfg)?;
            let h3 = h3_from_lin(&lin, cfg);
            let pass = h.pass && h2.pass && h3.pass;
            HypothesisReport {
                alpha: alpha.to_vec(),
                f1: Some(lin.y1[..m.k].to_vec()),
                z,
                h,
                h2: Some(h2),
                h3: Some(h3),
                pass,
            }
        }
        Err(err) => HypothesisReport {
            alpha: alpha.to_vec(),
            z,
            f1: None,
            h: h_from_error(&err),
            h2: None,
            h3: None,
            pass: false,
        },
    };
    Ok(report)
}

/// (H) at `z_alpha`. Flow failures are reported, not returned.
pub fn check_h(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<HCheck, AveragingError> {
    let z = manifold_point(model, alpha)?;
    let tight = cfg.integrator.tightened(cfg.hypothesis_tightening);
    Ok(match integrate(model, &z, 0.0, (0.0, model.period), &tight) {
        Ok(traj) => {
            let residual = periodicity_residual(traj.final_base(), &z);
            HCheck {
                periodicity_residual: Some(residual),
                crossing_only: true,
                event_kinds: traj.events.iter().map(|e| e.kind).collect(),
                event_times: traj.events.iter().map(|e| e.t).collect(),
                error_code: None,
                error: None,
                pass: residual <= cfg.periodicity_tol,
            }
        }
        Err(err) => h_from_error(&err),
    })
}

pub fn check_h2(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<H2Check, AveragingError> {
    let z = manifold_point(model, alpha)?;
    let lin = hypothesis_integration(model, &z, cfg)?;
    h2_from_lin(manifold(model)?, alpha, &lin, cfg)
}

pub fn check_h3(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<H3Check, AveragingError> {
    let z = manifold_point(model, alpha)?;
    let lin = hypothesis_integration(model, &z, cfg)?;
    Ok(h3_from_lin(&lin, cfg))
}

/// Position of the manifold relative to the switching set at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialSectionCheck {
    /// Common zone when every `z_alpha` is interior.
    pub zone: Option<usize>,
    /// Every `z_alpha` lies on a surface.
    pub on_surface: bool,
    /// Classification at each on-surface sample.
    pub kinds: Vec<EventKind>,
    pub detail: Option<String>,
    pub pass: bool,
}

/// Samples `zone_of(0, z_alpha)` over the manifold grid. Passes when all
/// points lie in one zone, or all lie on a single surface in its crossing
/// region.
pub fn check_initial_section(
    model: &PiecewiseModel,
    resolution: usize,
    cfg: &AveragingConfig,
) -> Result<InitialSectionCheck, AveragingError> {
    let m = manifold(model)?;
    let mut zones = Vec::new();
    let mut kinds = Vec::new();
    let mut detail = None;
    for alpha in m.grid(resolution) {
        let z = m.point(&alpha)?;
        match model.zone_of(0.0, &z)? {
            Location::Zone(n) => zones.push(n),
            Location::OnSurface(js) if js.len() == 1 => {
                let j = js[0];
                let mut signs = Vec::with_capacity(model.surfaces.len());
                for i in 0..model.surfaces.len() {
                    signs.push(if i == j { 0 } else { model.h(i, 0.0, &z)?.signum() as i8 });
                }
                signs[j] = -1;
                let minus = model.zone_for_signs(&signs);
                signs[j] = 1;
                let plus = model.zone_for_signs(&signs);
                match (minus, plus) {
                    (Some(a), Some(b)) => {
                        let (kind, _, _) = classify_event(model, 0.0, &z, j, a, b, 0.0, &cfg.integrator)?;
                        kinds.push(kind);
                    }
                    _ => {
                        detail.get_or_insert_with(|| format!("no zone pair across surface {j} at {z:?}"));
                    }
                }
            }
            Location::OnSurface(js) => {
                detail.get_or_insert_with(|| format!("z = {z:?} lies on surfaces {js:?}"));
            }
        }
    }
    let zone = zones.first().copied().filter(|z0| zones.iter().all(|z| z == z0));
    let on_surface = zones.is_empty() && detail.is_none();
    if detail.is_none() && !zones.is_empty() && !kinds.is_empty() {
        detail = Some("manifold straddles the switching set at t = 0".to_string());
    } else if detail.is_none() && !zones.is_empty() && zone.is_none() {
        detail = Some("manifold meets several zones at t = 0".to_string());
    } else if detail.is_none() && kinds.iter().any(|k| *k != EventKind::Crossing) {
        detail = Some("manifold meets the switching set outside the crossing region at t = 0".to_string());
    }
    Ok(InitialSectionCheck {
        pass: detail.is_none(),
        zone: if kinds.is_empty() { zone } else { None },
        on_surface,
        kinds,
        detail,
    })
}

/// `f1` and hypothesis reports over the manifold grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedSamples {
    pub k: usize,
    /// Points per axis.
    pub resolution: usize,
    pub alphas: Vec<Vec<f64>>,
    pub reports: Vec<HypothesisReport>,
}

impl AveragedSamples {
    pub fn f1(&self, i: usize) -> Option<&[f64]> {
        self.reports[i].f1.as_deref()
    }

    /// `max |f1|` over the samples that produced a value.
    pub fn max_abs(&self) -> f64 {
        self.reports
            .iter()
            .filter_map(|r| r.f1.as_ref())
            .flat_map(|v| v.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<(&HypothesisReport, &'static str)> {
        self.reports.iter().find_map(|r| {
            let which = if !r.h.pass {
                "H"
            } else if !r.h2.as_ref().is_some_and(|c| c.pass) {
                "H2"
            } else if !r.h3.as_ref().is_some_and(|c| c.pass) {
                "H3"
            } else {
                return None;
            };
            Some((r, which))
        })
    }
}

/// Evaluates every grid point in parallel; results keep grid order.
pub fn sample_f1(model: &PiecewiseModel, resolution: usize, cfg: &AveragingConfig) -> Result<AveragedSamples, AveragingError> {
    let m = manifold(model)?;
    let alphas = m.grid(resolution);
    let reports = alphas
        .par_iter()
        .map(|a| evaluate_point(model, a, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AveragedSamples {
        k: m.k,
        resolution,
        alphas,
        reports,
    })
}

/// Central finite-difference Jacobian of `f1` with step
/// `max(1e-6, 1e-6 |alpha_i|)`.
pub fn f1_jacobian(model: &PiecewiseModel, alpha: &[f64], cfg: &AveragingConfig) -> Result<DMatrix<f64>, AveragingError> {
    let k = alpha.len();
    let mut jac = DMatrix::zeros(k, k);
    for j in 0..k {
        let h = (1e-6 * alpha[j].abs()).max(1e-6);
        let mut ap = alpha.to_vec();
        let mut am = alpha.to_vec();
        ap[j] += h;
        am[j] -= h;
        let fp = averaged_f1(model, &ap, cfg)?;
        let fm = averaged_f1(model, &am, cfg)?;
        for i in 0..k {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Samples, zeros, degree over the manifold box and the certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub samples: AveragedSamples,
    pub zeros: ZeroSearch,
    pub degree: Option<DegreeResult>,
    pub degree_error: Option<String>,
    pub initial_section: InitialSectionCheck,
    pub certificate: String,
}

pub fn analyze(model: &PiecewiseModel, resolution: usize, cfg: &AveragingConfig) -> Result<Analysis, AveragingError> {
    let man = manifold(model)?;
    let samples = sample_f1(model, resolution, cfg)?;
    let zeros = find_zeros(&samples, model, cfg)?;
    let (degree, degree_error) = if zeros.degenerate {
        (None, Some("f1 vanishes identically".to_string()))
    } else {
        let domain = DegreeDomain::Box(man.bounds.clone());
        let f = |a: &[f64]| averaged_f1(model, a, cfg);
        match brouwer_degree(
            f,
            &domain,
            DegreeMethod::natural(man.k),
            &zeros.candidates,
            cfg.margin_tol,
            cfg.max_refine,
        ) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let initial_section = check_initial_section(model, resolution, cfg)?;
    let mut certificate = certificate(&samples, &zeros, degree.as_ref(), cfg);
    if certificate == "PASS" && !initial_section.pass {
        certificate = format!("FAIL: {}", initial_section.detail.as_deref().unwrap_or("initial section"));
    }
    Ok(Analysis {
        initial_section,
        samples,
        zeros,
        degree,
        degree_error,
        certificate,
    })
}
