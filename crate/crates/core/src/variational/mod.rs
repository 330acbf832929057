//! Linearization along unperturbed orbits.
//!
//! The fundamental matrix `Y` solves `Y' = D_x F0(t, x(t,z,0)) Y` with
//! `Y(0) = I`, and the first-order response solves
//! `y' = D_x F0 y + F1` with `y(0) = 0`. Both are integrated as extra
//! components of the base flow so they share its steps and event times.
//!
//! In [`VariationalMode::Plain`] `Y` is carried continuously across events.
//! [`VariationalMode::Saltation`] multiplies by
//! `S = I + (F_to - F_from) grad_x h^T / (h_t + grad_x h . F_from)` at each
//! crossing, which is what `dx/dz` needs when event times depend on `z`.

mod export;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::exprlang::EvalError;
use crate::flow::{integrate, Augmentation, CrossingEvent, FlowError, IntegratorConfig, PiecewiseTrajectory};
use crate::model::PiecewiseModel;

pub use export::{write_matrix_csv, write_response_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationalMode {
    Plain,
    Saltation,
}

impl fmt::Display for VariationalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariationalMode::Plain => "plain",
            VariationalMode::Saltation => "saltation",
        })
    }
}

impl FromStr for VariationalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(VariationalMode::Plain),
            "saltation" => Ok(VariationalMode::Saltation),
            other => Err(format!("unknown variational mode '{other}'")),
        }
    }
}

/// Layout of the extra components: `Y` column-major, then `y1`.
struct Linearized {
    d: usize,
    matrix: bool,
    response: bool,
    mode: VariationalMode,
}

impl Linearized {
    fn matrix_len(&self) -> usize {
        if self.matrix {
            self.d * self.d
        } else {
            0
        }
    }

    fn initial(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.extra_dim()];
        if self.matrix {
            for i in 0..self.d {
                v[i * self.d + i] = 1.0;
            }
        }
        v
    }
}

impl Augmentation for Linearized {
    fn extra_dim(&self) -> usize {
        self.matrix_len() + if self.response { self.d } else { 0 }
    }

    fn rhs(
        &self,
        model: &PiecewiseModel,
        zone: usize,
        t: f64,
        x: &[f64],
        extra: &[f64],
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        let d = self.d;
        let mut jac = [0.0; 64];
        let mut jac_heap;
        let jac: &mut [f64] = if d * d <= 64 {
            &mut jac[..d * d]
        } else {
            jac_heap = vec![0.0; d * d];
            &mut jac_heap
        };
        model.jac_f0_into(zone, t, x, jac)?;
        let m = self.matrix_len();
        if self.matrix {
            for col in 0..d {
                let y = &extra[col * d..(col + 1) * d];
                for row in 0..d {
                    out[col * d + row] = (0..d).map(|k| jac[row * d + k] * y[k]).sum();
                }
            }
        }
        if self.response {
            let y = &extra[m..m + d];
            let o = &mut out[m..m + d];
            model.f1_into(zone, t, x, o)?;
            for row in 0..d {
                o[row] += (0..d).map(|k| jac[row * d + k] * y[k]).sum::<f64>();
            }
        }
        Ok(())
    }

    fn jump(&self, model: &PiecewiseModel, event: &CrossingEvent, extra: &mut [f64]) -> Result<(), FlowError> {
        if !self.matrix || self.mode == VariationalMode::Plain {
            return Ok(());
        }
        let d = self.d;
        let s = saltation_matrix(model, event)?;
        let y = DMatrix::from_column_slice(d, d, &extra[..d * d]);
        extra[..d * d].copy_from_slice((s * y).as_slice());
        Ok(())
    }
}

/// Jump matrix of `dx/dz` at a crossing with unperturbed fields.
pub fn saltation_matrix(model: &PiecewiseModel, event: &CrossingEvent) -> Result<DMatrix<f64>, FlowError> {
    let d = model.dimension;
    let (t, x) = (event.t, &event.state);
    let grad = model.grad_h(event.surface, t, x)?;
    let f_from = model.full_field(event.from_zone, t, x, 0.0)?;
    let f_to = model.full_field(event.to_zone, t, x, 0.0)?;
    let n = DVector::from_column_slice(&grad[1..]);
    let denom = grad[0] + n.dot(&DVector::from_column_slice(&f_from));
    let scale = grad.iter().chain(&f_from).map(|v| v.abs()).fold(1.0, f64::max);
    if denom.abs() <= 1e-14 * scale * scale {
        return Err(FlowError::Tangency(Box::new(event.clone())));
    }
    let jump = DVector::from_column_slice(&f_to) - DVector::from_column_slice(&f_from);
    Ok(DMatrix::identity(d, d) + jump * n.transpose() / denom)
}

fn run(
    model: &PiecewiseModel,
    aug: &Linearized,
    z: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<PiecewiseTrajectory, FlowError> {
    crate::flow::integrate_augmented(model, aug, z, &aug.initial(), 0.0, t_span, cfg)
}

/// `Y(t)` along the unperturbed orbit from `z`, sampled through the dense
/// output of the augmented trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub mode: VariationalMode,
    pub trajectory: PiecewiseTrajectory,
}

impl FundamentalMatrix {
    fn matrix_of(&self, s: &[f64]) -> DMatrix<f64> {
        let d = self.trajectory.dimension;
        DMatrix::from_column_slice(d, d, &s[d..d + d * d])
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        self.matrix_of(&self.trajectory.state_at(t))
    }

    /// `Y` at the end of the span.
    pub fn final_matrix(&self) -> DMatrix<f64> {
        self.matrix_of(self.trajectory.final_state())
    }

    /// `(t, Y(t))` at every accepted step node.
    pub fn samples(&self) -> Vec<(f64, DMatrix<f64>)> {
        self.trajectory
            .step_nodes()
            .into_iter()
            .map(|(t, _, s)| (t, self.matrix_of(&s)))
            .collect()
    }
}

pub fn fundamental_matrix(
    model: &PiecewiseModel,
    z: &[f64],
    t_span: (f64, f64),
    mode: VariationalMode,
    cfg: &IntegratorConfig,
) -> Result<FundamentalMatrix, FlowError> {
    let aug = Linearized {
        d: model.dimension,
        matrix: true,
        response: false,
        mode,
    };
    let trajectory = run(model, &aug, z, t_span, cfg)?;
    Ok(FundamentalMatrix { mode, trajectory })
}

/// `Y(t) Y(0)^{-1}` for the orbit starting at `z` at time 0.
pub fn state_transition(
    model: &PiecewiseModel,
    z: &[f64],
    t: f64,
    mode: VariationalMode,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>, FlowError> {
    let d = model.dimension;
    if t == 0.0 {
        return Ok(DMatrix::identity(d, d));
    }
    Ok(fundamental_matrix(model, z, (0.0, t), mode, cfg)?.final_matrix())
}

/// Per-event diagnostics of the response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventResidual {
    pub t: f64,
    pub surface: usize,
    /// `|<grad h, (0, y1)>| / (1 + |grad h| |y1|)`.
    pub h3: f64,
    /// Norm of the jump `dx/deps` would need across the event.
    pub jump: f64,
}

fn event_residual(model: &PiecewiseModel, event: &CrossingEvent, y1: &[f64]) -> Result<EventResidual, FlowError> {
    let grad = model.grad_h(event.surface, event.t, &event.state)?;
    let normal: f64 = grad[1..].iter().zip(y1).map(|(g, y)| g * y).sum();
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let ynorm = y1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h3 = normal.abs() / (1.0 + gnorm * ynorm);
    let f_from = model.full_field(event.from_zone, event.t, &event.state, 0.0)?;
    let f_to = model.full_field(event.to_zone, event.t, &event.state, 0.0)?;
    let w_from = grad[0] + grad[1..].iter().zip(&f_from).map(|(g, f)| g * f).sum::<f64>();
    let df = f_to.iter().zip(&f_from).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let jump = if normal == 0.0 { 0.0 } else { df * normal.abs() / w_from.abs() };
    Ok(EventResidual {
        t: event.t,
        surface: event.surface,
        h3,
        jump,
    })
}

/// `y1(t, z)` along the unperturbed orbit from `z` over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderResponse {
    pub trajectory: PiecewiseTrajectory,
    pub period: f64,
    /// `y1(T, z)`.
    pub value: Vec<f64>,
    pub events: Vec<EventResidual>,
}

impl FirstOrderResponse {
    pub fn at(&self, t: f64) -> Vec<f64> {
        let d = self.trajectory.dimension;
        let s = self.trajectory.state_at(t);
        s[d..2 * d].to_vec()
    }

    pub fn samples(&self) -> Vec<(f64, Vec<f64>)> {
        let d = self.trajectory.dimension;
        self.trajectory
            .step_nodes()
            .into_iter()
            .map(|(t, _, s)| (t, s[d..2 * d].to_vec()))
            .collect()
    }

    pub fn max_h3_residual(&self) -> f64 {
        self.events.iter().map(|e| e.h3).fold(0.0, f64::max)
    }

    pub fn max_jump_residual(&self) -> f64 {
        self.events.iter().map(|e| e.jump).fold(0.0, f64::max)
    }
}

fn residuals(
    model: &PiecewiseModel,
    traj: &PiecewiseTrajectory,
    offset: usize,
) -> Result<Vec<EventResidual>, FlowError> {
    let d = traj.dimension;
    traj.events
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            let state = match traj.segments.get(i + 1) {
                Some(seg) => &seg.start_state,
                None => traj.final_state(),
            };
            event_residual(model, ev, &state[d + offset..2 * d + offset])
        })
        .collect()
}

pub fn first_order_response(
    model: &PiecewiseModel,
    z: &[f64],
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<FirstOrderResponse, FlowError> {
    let d = model.dimension;
    let aug = Linearized {
        d,
        matrix: false,
        response: true,
        mode: VariationalMode::Plain,
    };
    let trajectory = run(model, &aug, z, (0.0, period), cfg)?;
    let value = trajectory.final_state()[d..2 * d].to_vec();
    let events = residuals(model, &trajectory, 0)?;
    Ok(FirstOrderResponse {
        trajectory,
        period,
        value,
        events,
    })
}

/// Monodromy and first-order response from one integration over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub mode: VariationalMode,
    pub trajectory: PiecewiseTrajectory,
    /// `Y(T)` (equal to `Y(T) Y(0)^{-1}`).
    pub monodromy: DMatrix<f64>,
    pub y1: Vec<f64>,
    pub events: Vec<EventResidual>,
}

pub fn linearize(
    model: &PiecewiseModel,
    z: &[f64],
    period: f64,
    mode: VariationalMode,
    cfg: &IntegratorConfig,
) -> Result<Linearization, FlowError> {
    let d = model.dimension;
    let aug = Linearized {
        d,
        matrix: true,
        response: true,
        mode,
    };
    let trajectory = run(model, &aug, z, (0.0, period), cfg)?;
    let end = trajectory.final_state();
    let monodromy = DMatrix::from_column_slice(d, d, &end[d..d + d * d]);
    let y1 = end[d + d * d..].to_vec();
    let events = residuals(model, &trajectory, d * d)?;
    Ok(Linearization {
        mode,
        trajectory,
        monodromy,
        y1,
        events,
    })
}

// Gauss-Legendre, 5 nodes on [0, 1].
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// `y1(T) = Y(T) * integral of Y(s)^{-1} F1(s, x(s)) ds` by quadrature over
/// the stored fundamental matrix.
pub fn first_order_response_quadrature(
    model: &PiecewiseModel,
    z: &[f64],
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    let d = model.dimension;
    let fm = fundamental_matrix(model, z, (0.0, period), VariationalMode::Plain, cfg)?;
    let mut acc = DVector::zeros(d);
    let mut f1 = vec![0.0; d];
    for seg in &fm.trajectory.segments {
        for step in &seg.steps {
            if step.h == 0.0 {
                continue;
            }
            for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let s = step.t0 + node * step.h;
                let state = step.eval(s);
                model.f1_into(seg.zone, s, &state[..d], &mut f1)?;
                let y = fm.matrix_of(&state);
                let rhs = DVector::from_column_slice(&f1);
                let v = y.lu().solve(&rhs).ok_or_else(|| {
                    FlowError::InvalidInput(format!("fundamental matrix singular at t={s}"))
                })?;
                acc += v * (w * step.h);
            }
        }
    }
    Ok((fm.final_matrix() * acc).as_slice().to_vec())
}

/// Central finite differences of `z -> x(t, z, eps)` with step
/// `step * (1 + |z_i|)` per coordinate.
pub fn flow_jacobian_fd(
    model: &PiecewiseModel,
    z: &[f64],
    t: f64,
    eps: f64,
    step: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>, FlowError> {
    let d = model.dimension;
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..d {
        let h = step * (1.0 + z[i].abs());
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += h;
        zm[i] -= h;
        let xp = integrate(model, &zp, eps, (0.0, t), cfg)?;
        let xm = integrate(model, &zm, eps, (0.0, t), cfg)?;
        for r in 0..d {
            jac[(r, i)] = (xp.final_base()[r] - xm.final_base()[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `|x(T, z, eps) - x(T, z, 0) - eps * y1|` for a precomputed `y1 = y1(T, z)`.
pub fn expansion_residual(
    model: &PiecewiseModel,
    z: &[f64],
    eps: f64,
    y1: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    let span = (0.0, model.period);
    let x0 = integrate(model, z, 0.0, span, cfg)?;
    let xe = integrate(model, z, eps, span, cfg)?;
    Ok(xe
        .final_base()
        .iter()
        .zip(x0.final_base())
        .zip(y1)
        .map(|((a, b), y)| (a - b - eps * y).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Plain and saltation transitions against the finite-difference oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub t: f64,
    pub finite_difference: DMatrix<f64>,
    pub plain: DMatrix<f64>,
    pub saltation: DMatrix<f64>,
    pub plain_error: f64,
    pub saltation_error: f64,
    pub tolerance: f64,
}

impl ModeComparison {
    /// Modes whose max-entry error is within the tolerance.
    pub fn matching(&self) -> Vec<VariationalMode> {
        let mut out = Vec::new();
        if self.plain_error <= self.tolerance {
            out.push(VariationalMode::Plain);
        }
        if self.saltation_error <= self.tolerance {
            out.push(VariationalMode::Saltation);
        }
        out
    }

    pub fn summary(&self) -> String {
        match self.matching().as_slice() {
            [m] => format!("{m} matches the finite-difference oracle"),
            [] => "neither mode matches the finite-difference oracle".to_string(),
            _ => "both modes match the finite-difference oracle".to_string(),
        }
    }
}

pub fn compare_modes(
    model: &PiecewiseModel,
    z: &[f64],
    t: f64,
    fd_step: f64,
    tolerance: f64,
    cfg: &IntegratorConfig,
) -> Result<ModeComparison, FlowError> {
    let finite_difference = flow_jacobian_fd(model, z, t, 0.0, fd_step, cfg)?;
    let plain = state_transition(model, z, t, VariationalMode::Plain, cfg)?;
    let saltation = state_transition(model, z, t, VariationalMode::Saltation, cfg)?;
    let err = |m: &DMatrix<f64>| (m - &finite_difference).amax();
    Ok(ModeComparison {
        t,
        plain_error: err(&plain),
        saltation_error: err(&saltation),
        finite_difference,
        plain,
        saltation,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_proposition1, builtin_proposition1_polar, Prop1Coeffs};
    use std::f64::consts::PI;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn polar() -> PiecewiseModel {
        builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0))
    }

    fn kink_model() -> PiecewiseModel {
        PiecewiseModel::from_json(
            r#"{"dimension": 2, "period": 2.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["-1", "0"]},
                {"signature": [-1], "F0": ["-2", "1"]}]}"#,
        )
        .unwrap()
    }

    /// exp(A) by scaling and squaring of a truncated Taylor series.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let s = 10;
        let b = a / f64::from(1 << s);
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn polar_fundamental_matrix_closed_form() {
        let m = polar();
        let fm = fundamental_matrix(&m, &[0.4, 0.0], (0.0, 2.0 * PI), VariationalMode::Plain, &cfg()).unwrap();
        for k in 0..=20 {
            let t = 2.0 * PI * k as f64 / 20.0;
            let y = fm.at(t);
            assert!((y[(0, 0)] - 1.0).abs() < 1e-12);
            assert_eq!((y[(0, 1)], y[(1, 0)]), (0.0, 0.0));
            assert!((y[(1, 1)] / t.exp() - 1.0).abs() < 1e-9, "{t}");
        }
        let st = state_transition(&m, &[0.4, 0.0], 2.0 * PI, VariationalMode::Saltation, &cfg()).unwrap();
        assert!((st[(1, 1)] / (2.0 * PI).exp() - 1.0).abs() < 1e-9);
        assert_eq!(state_transition(&m, &[0.4, 0.0], 0.0, VariationalMode::Plain, &cfg()).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_linearization_is_identity() {
        let m = PiecewiseModel::from_json(
            r#"{"dimension": 2, "period": 1.0, "surfaces": ["sin(t)"], "zones": [
                {"signature": [1], "F0": ["0", "0"], "F1": ["1", "x1"]},
                {"signature": [-1], "F0": ["0", "0"]}]}"#,
        )
        .unwrap();
        let fm = fundamental_matrix(&m, &[0.3, 0.2], (0.0, 5.0), VariationalMode::Plain, &cfg()).unwrap();
        for (_, y) in fm.samples() {
            assert_eq!(y, DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn cartesian_monodromy_matches_matrix_exponential() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let y = state_transition(&m, &[0.5, 0.0, 0.0], 2.0 * PI, VariationalMode::Plain, &cfg()).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let oracle = expm(&(a * 2.0 * PI));
        let rel = (&y - &oracle).amax() / oracle.amax();
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn smooth_model_matches_finite_differences() {
        let m = PiecewiseModel::from_json(
            r#"{"dimension": 2, "period": 3.0, "zones": [
                {"signature": [], "F0": ["x2", "-sin(x1) - 0.1*x2"]}]}"#,
        )
        .unwrap();
        let cmp = compare_modes(&m, &[0.7, -0.2], 3.0, 1e-6, 1e-6, &cfg()).unwrap();
        assert!(cmp.plain_error < 1e-6 && cmp.saltation_error < 1e-6);
        assert_eq!(cmp.plain, cmp.saltation);
    }

    #[test]
    fn state_dependent_switching_needs_saltation() {
        let m = kink_model();
        let cmp = compare_modes(&m, &[1.0, 0.0], 2.0, 1e-6, 1e-6, &cfg()).unwrap();
        let oracle = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -1.0, 1.0]);
        assert!((&cmp.finite_difference - &oracle).amax() < 1e-6);
        assert_eq!(cmp.matching(), vec![VariationalMode::Saltation]);
        assert!((&cmp.plain - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert_eq!(cmp.summary(), "saltation matches the finite-difference oracle");
    }

    #[test]
    fn zero_forcing_gives_zero_response() {
        let m = builtin_proposition1_polar(&Prop1Coeffs::default(), (0.05, 1.0));
        let y1 = first_order_response(&m, &[0.5, 0.0], 2.0 * PI, &cfg()).unwrap();
        assert!(y1.samples().iter().all(|(_, v)| v.iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn zero_f0_reduces_to_time_integral() {
        let m = PiecewiseModel::from_json(
            r#"{"dimension": 2, "period": 6.283185307179586, "surfaces": ["sin(t)"], "zones": [
                {"signature": [1], "F0": ["0", "0"], "F1": ["x1*t", "1"]},
                {"signature": [-1], "F0": ["0", "0"], "F1": ["cos(t)", "x2"]}]}"#,
        )
        .unwrap();
        let r = first_order_response(&m, &[2.0, 3.0], 2.0 * PI, &cfg()).unwrap();
        assert!((r.value[0] - PI * PI).abs() < 1e-9, "{:?}", r.value);
        assert!((r.value[1] - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn pinned_polar_response_matches_closed_form() {
        let m = polar();
        for alpha in [0.1, 1.0 / PI, 0.7, 1.0] {
            let r = first_order_response(&m, &[alpha, 0.0], 2.0 * PI, &cfg()).unwrap();
            assert!((r.value[0] - (2.0 * PI * alpha - 2.0)).abs() < 1e-9);
            assert_eq!(r.max_h3_residual(), 0.0);
            assert_eq!(r.max_jump_residual(), 0.0);
        }
    }

    #[test]
    fn quadrature_agrees_with_augmented_ode() {
        let m = polar();
        let z = [0.6, 0.0];
        let a = first_order_response(&m, &z, 2.0 * PI, &cfg()).unwrap().value;
        let b = first_order_response_quadrature(&m, &z, 2.0 * PI, &cfg()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8, "{a:?} {b:?}");
        }
        let c = builtin_proposition1(&Prop1Coeffs::pinned());
        let z = [0.6, 0.0, 0.0];
        let a = first_order_response(&c, &z, 2.0 * PI, &cfg()).unwrap().value;
        let b = first_order_response_quadrature(&c, &z, 2.0 * PI, &cfg()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8, "{a:?} {b:?}");
        }
    }

    #[test]
    fn expansion_remainder_is_little_o() {
        let m = polar();
        let tight = cfg().tightened(1e-2);
        for alpha in [0.1, 0.5, 0.9] {
            let z = [alpha, 0.0];
            let y1 = first_order_response(&m, &z, 2.0 * PI, &tight).unwrap().value;
            let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&e| expansion_residual(&m, &z, e, &y1, &tight).unwrap() / e)
                .collect();
            assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
        }
    }

    #[test]
    fn linearize_matches_separate_runs() {
        let m = polar();
        let tight = cfg().tightened(1e-2);
        let lin = linearize(&m, &[0.5, 0.0], 2.0 * PI, VariationalMode::Plain, &tight).unwrap();
        let r = first_order_response(&m, &[0.5, 0.0], 2.0 * PI, &cfg()).unwrap();
        assert!((lin.y1[0] - r.value[0]).abs() < 1e-10);
        assert!((lin.monodromy[(1, 1)] - (2.0 * PI).exp()).abs() < 1e-8);
    }

    #[test]
    fn h3_violation_is_measured() {
        let m = PiecewiseModel::from_json(
            r#"{"dimension": 2, "period": 2.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["-1", "0"], "F1": ["1", "0"]},
                {"signature": [-1], "F0": ["-1", "0"], "F1": ["1", "0"]}]}"#,
        )
        .unwrap();
        let r = first_order_response(&m, &[0.5, 0.0], 1.0, &cfg()).unwrap();
        assert_eq!(r.events.len(), 1);
        // y1 = (t, 0) at t = 0.5.
        let expected = 0.5 / (1.0 + 0.5);
        assert!((r.events[0].h3 - expected).abs() < 1e-10);
        assert_eq!(r.events[0].jump, 0.0);
    }

    #[test]
    fn saltation_matrix_formula() {
        let m = kink_model();
        let ev = CrossingEvent {
            t: 1.0,
            state: vec![0.0, 0.0],
            surface: 0,
            from_zone: 0,
            to_zone: 1,
            w_minus: -2.0,
            w_plus: -1.0,
            kind: crate::flow::EventKind::Crossing,
        };
        let s = saltation_matrix(&m, &ev).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -1.0, 1.0]));
    }
}
