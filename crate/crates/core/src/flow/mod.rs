//! Event-located integration of piecewise systems.
//!
//! A trajectory is a list of C¹ segments, one per visited zone, separated by
//! crossing events. Within a segment the full field
//! `F0 + eps*F1 + eps^2*R` of the segment's zone is integrated with an
//! adaptive Dormand-Prince 5(4) pair. Sign changes of the zone's switching
//! functions are bracketed along the dense output, bisected, and polished
//! with Newton steps that re-integrate from the last accepted point. Each
//! encounter is classified from the normal components
//! `w = <grad h, (1, F)>` on both sides: crossing (`w- * w+ > tol^2`),
//! sliding (`< -tol^2`) or tangency. Only crossings are continued.

mod export;
mod rk;

use serde::Serialize;

use crate::exprlang::EvalError;
use crate::model::{Location, ModelError, PiecewiseModel};

pub use export::{write_events_csv, write_trajectory_csv};
pub use rk::DenseStep;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Width of the final event-time bracket.
    pub tol_event: f64,
    pub tol_transversal: f64,
    pub max_events: usize,
    pub max_steps: usize,
    /// Post-event probe distance as a fraction of the model period.
    pub probe_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            tol_event: 1e-12,
            tol_transversal: 1e-8,
            max_events: 10_000,
            max_steps: 2_000_000,
            probe_step: 1e-7,
        }
    }
}

impl IntegratorConfig {
    /// Same configuration with both local tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorConfig {
            rtol: self.rtol * factor,
            atol: self.atol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Crossing,
    Sliding,
    Tangency,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::Sliding => "sliding",
            EventKind::Tangency => "tangency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub t: f64,
    /// Base state at the event (shared by both adjacent segments).
    pub state: Vec<f64>,
    pub surface: usize,
    pub from_zone: usize,
    pub to_zone: usize,
    /// `<grad h, (1, F)>` of the zone on the negative side of `h`.
    pub w_minus: f64,
    /// Same for the positive side.
    pub w_plus: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("sliding region reached at t={} on surface {}", .0.t, .0.surface)]
    Sliding(Box<CrossingEvent>),
    #[error("tangential contact at t={} on surface {}", .0.t, .0.surface)]
    Tangency(Box<CrossingEvent>),
    #[error("more than {limit} events before t={t}")]
    MaxEventsExceeded { t: f64, limit: usize },
    #[error("more than {limit} steps before t={t}")]
    MaxStepsExceeded { t: f64, limit: usize },
    #[error("step size underflow (h={h}) at t={t}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("surfaces {surfaces:?} reached simultaneously at t={t}")]
    Corner { t: f64, surfaces: Vec<usize> },
    #[error("0 is not a regular value of surface {surface} at t={t} (|grad h| = {norm})")]
    RegularValue { t: f64, surface: usize, norm: f64 },
    #[error("surface {surface}: |h| = {value} exceeds the surface tolerance")]
    NotOnSurface { surface: usize, value: f64 },
    #[error("cannot choose a starting zone at t={t}: {reason}")]
    InitialZone { t: f64, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl FlowError {
    pub fn code(&self) -> &'static str {
        match self {
            FlowError::Sliding(_) => "flow.sliding",
            FlowError::Tangency(_) => "flow.tangency",
            FlowError::MaxEventsExceeded { .. } => "flow.max_events",
            FlowError::MaxStepsExceeded { .. } => "flow.max_steps",
            FlowError::StepSizeUnderflow { .. } => "flow.step_underflow",
            FlowError::Corner { .. } => "flow.corner",
            FlowError::RegularValue { .. } => "flow.regular_value",
            FlowError::NotOnSurface { .. } => "flow.not_on_surface",
            FlowError::InitialZone { .. } => "flow.initial_zone",
            FlowError::InvalidInput(_) => "flow.invalid_input",
            FlowError::Model(e) => e.code(),
            FlowError::Eval(_) => "flow.domain",
        }
    }

    pub fn event(&self) -> Option<&CrossingEvent> {
        match self {
            FlowError::Sliding(e) | FlowError::Tangency(e) => Some(e),
            _ => None,
        }
    }
}

/// One C¹ piece of a trajectory, confined to a single zone.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub zone: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub start_state: Vec<f64>,
    pub end_state: Vec<f64>,
    pub steps: Vec<DenseStep>,
}

impl TrajectorySegment {
    fn state_into(&self, t: f64, out: &mut [f64]) {
        if self.steps.is_empty() || t <= self.t_start {
            out.copy_from_slice(&self.start_state);
            return;
        }
        if t >= self.t_end {
            out.copy_from_slice(&self.end_state);
            return;
        }
        let idx = self.steps.partition_point(|s| s.t_end() < t);
        let step = &self.steps[idx.min(self.steps.len() - 1)];
        step.eval_into(t, out);
    }
}

/// Solution `x(t, z, eps)` as ordered segments and events.
///
/// States may carry extra components after the first `dimension` ones
/// (variational quantities integrated alongside the base flow).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    pub z: Vec<f64>,
    pub eps: f64,
    pub dimension: usize,
    pub t_span: (f64, f64),
    pub segments: Vec<TrajectorySegment>,
    pub events: Vec<CrossingEvent>,
}

impl PiecewiseTrajectory {
    /// Number of C¹ pieces.
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn total_dimension(&self) -> usize {
        self.segments[0].start_state.len()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.segments.last().expect("at least one segment").end_state
    }

    pub fn final_base(&self) -> &[f64] {
        &self.final_state()[..self.dimension]
    }

    /// Full (augmented) state at `t`. At an event time the state of the
    /// segment that starts there is returned.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dimension()];
        let idx = self
            .segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len() - 1);
        self.segments[idx].state_into(t, &mut out);
        out
    }

    pub fn base_state_at(&self, t: f64) -> Vec<f64> {
        let mut s = self.state_at(t);
        s.truncate(self.dimension);
        s
    }

    pub fn zone_at(&self, t: f64) -> usize {
        let idx = self
            .segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len() - 1);
        self.segments[idx].zone
    }

    /// Times of crossing events, strictly increasing.
    pub fn crossing_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Crossing)
            .map(|e| e.t)
            .collect()
    }

    /// Accepted step start times plus the final time, with zone ids.
    pub fn step_nodes(&self) -> Vec<(f64, usize, Vec<f64>)> {
        let mut out = Vec::new();
        for seg in &self.segments {
            if seg.steps.is_empty() {
                out.push((seg.t_start, seg.zone, seg.start_state.clone()));
            }
            for st in &seg.steps {
                out.push((st.t0, seg.zone, st.start().to_vec()));
            }
        }
        if let Some(seg) = self.segments.last() {
            out.push((seg.t_end, seg.zone, seg.end_state.clone()));
        }
        out
    }
}

/// Extra components integrated alongside the base state with shared step
/// control and identical event times.
pub trait Augmentation: Sync {
    fn extra_dim(&self) -> usize;

    fn rhs(
        &self,
        model: &PiecewiseModel,
        zone: usize,
        t: f64,
        x: &[f64],
        extra: &[f64],
        out: &mut [f64],
    ) -> Result<(), EvalError>;

    /// Transformation applied to the extra components at a crossing.
    fn jump(
        &self,
        _model: &PiecewiseModel,
        _event: &CrossingEvent,
        _extra: &mut [f64],
    ) -> Result<(), FlowError> {
        Ok(())
    }
}

struct NoAugmentation;

impl Augmentation for NoAugmentation {
    fn extra_dim(&self) -> usize {
        0
    }

    fn rhs(&self, _: &PiecewiseModel, _: usize, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) -> Result<(), EvalError> {
        Ok(())
    }
}

/// Integrates the full system from `z` at `t_span.0` to `t_span.1`.
pub fn integrate(
    model: &PiecewiseModel,
    z: &[f64],
    eps: f64,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<PiecewiseTrajectory, FlowError> {
    integrate_augmented(model, &NoAugmentation, z, &[], eps, t_span, cfg)
}

fn dot_normal(grad: &[f64], field: &[f64]) -> f64 {
    grad[0] + grad[1..].iter().zip(field).map(|(g, f)| g * f).sum::<f64>()
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Classifies an encounter of surface `surface` at `(t, x)` between two
/// zones, using the full fields at `eps`. Returns `(kind, w_minus, w_plus)`.
#[allow(clippy::too_many_arguments)]
pub fn classify_event(
    model: &PiecewiseModel,
    t: f64,
    x: &[f64],
    surface: usize,
    from_zone: usize,
    to_zone: usize,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<(EventKind, f64, f64), FlowError> {
    let h = model.h(surface, t, x)?;
    if h.abs() > model.tol_surface {
        return Err(FlowError::NotOnSurface { surface, value: h });
    }
    classify_unchecked(model, t, x, surface, from_zone, to_zone, eps, cfg)
}

#[allow(clippy::too_many_arguments)]
fn classify_unchecked(
    model: &PiecewiseModel,
    t: f64,
    x: &[f64],
    surface: usize,
    from_zone: usize,
    to_zone: usize,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<(EventKind, f64, f64), FlowError> {
    let grad = model.grad_h(surface, t, x)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm <= model.tol_grad {
        return Err(FlowError::RegularValue { t, surface, norm });
    }
    let w_from = dot_normal(&grad, &model.full_field(from_zone, t, x, eps)?);
    let w_to = dot_normal(&grad, &model.full_field(to_zone, t, x, eps)?);
    let (w_minus, w_plus) = if model.zones[from_zone].signature[surface] > 0 {
        (w_to, w_from)
    } else {
        (w_from, w_to)
    };
    let product = w_minus * w_plus;
    let tol2 = cfg.tol_transversal * cfg.tol_transversal;
    let kind = if product > tol2 {
        EventKind::Crossing
    } else if product < -tol2 {
        EventKind::Sliding
    } else {
        EventKind::Tangency
    };
    Ok((kind, w_minus, w_plus))
}

/// Starting zone. On a surface, the zone whose own field leaves the
/// surface into its side forward in time is chosen.
fn initial_zone(
    model: &PiecewiseModel,
    t: f64,
    x: &[f64],
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<usize, FlowError> {
    let on = match model.zone_of(t, x)? {
        Location::Zone(n) => return Ok(n),
        Location::OnSurface(on) => on,
    };
    let mut signs = Vec::with_capacity(model.surfaces.len());
    for j in 0..model.surfaces.len() {
        signs.push(sign_of(model.h(j, t, x)?));
    }
    let mut chosen = Vec::new();
    'zones: for (n, zone) in model.zones.iter().enumerate() {
        for (j, &req) in zone.signature.iter().enumerate() {
            if req != 0 && !on.contains(&j) && req != signs[j] {
                continue 'zones;
            }
        }
        let field = model.full_field(n, t, x, eps)?;
        for &j in &on {
            let req = zone.signature[j];
            if req == 0 {
                continue;
            }
            let grad = model.grad_h(j, t, x)?;
            if f64::from(req) * dot_normal(&grad, &field) <= cfg.tol_transversal {
                continue 'zones;
            }
        }
        chosen.push(n);
    }
    match chosen.as_slice() {
        [n] => Ok(*n),
        [] => Err(FlowError::InitialZone {
            t,
            reason: format!("no zone flows off surfaces {on:?}"),
        }),
        many => Err(FlowError::InitialZone {
            t,
            reason: format!("zones {many:?} all flow off surfaces {on:?}"),
        }),
    }
}

struct Found {
    surface: usize,
    /// Step-level sample bracket.
    lo: f64,
    hi: f64,
    /// Bisected root of the interpolant.
    root: f64,
}

struct Integrator<'a, A: Augmentation> {
    model: &'a PiecewiseModel,
    aug: &'a A,
    eps: f64,
    cfg: &'a IntegratorConfig,
    d: usize,
}

impl<A: Augmentation> Integrator<'_, A> {
    fn rhs(&self, zone: usize, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), FlowError> {
        let d = self.d;
        self.model.full_field_into(zone, t, &y[..d], self.eps, &mut out[..d])?;
        self.aug
            .rhs(self.model, zone, t, &y[..d], &y[d..], &mut out[d..])?;
        Ok(())
    }

    fn step(&self, zone: usize, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<rk::StepOutcome, FlowError> {
        let mut f = |tt: f64, yy: &[f64], out: &mut [f64]| self.rhs(zone, tt, yy, out);
        rk::dp5_step(&mut f, t, y, k1, h, self.cfg.atol, self.cfg.rtol)
    }

    fn g(&self, zone: usize, j: usize, t: f64, x: &[f64]) -> Result<f64, FlowError> {
        let req = f64::from(self.model.zones[zone].signature[j]);
        Ok(req * self.model.h(j, t, &x[..self.d])?)
    }

    /// Earliest sign change of a constrained surface inside the step.
    fn detect(&self, zone: usize, dense: &DenseStep, y1: &[f64]) -> Result<Option<Found>, FlowError> {
        const SAMPLES: usize = 4;
        let (t0, t1) = (dense.t0, dense.t_end());
        let mut buf = vec![0.0; dense.dim()];
        let mut states: Vec<(f64, Vec<f64>)> = Vec::with_capacity(SAMPLES + 1);
        for i in 0..=SAMPLES {
            let t = if i == SAMPLES { t1 } else { t0 + dense.h * i as f64 / SAMPLES as f64 };
            let x = if i == 0 {
                dense.start()[..self.d].to_vec()
            } else if i == SAMPLES {
                y1[..self.d].to_vec()
            } else {
                dense.eval_into(t, &mut buf);
                buf[..self.d].to_vec()
            };
            states.push((t, x));
        }
        let mut found: Vec<Found> = Vec::new();
        for (j, &req) in self.model.zones[zone].signature.iter().enumerate() {
            if req == 0 {
                continue;
            }
            let g: Vec<f64> = states
                .iter()
                .map(|(t, x)| self.g(zone, j, *t, x))
                .collect::<Result<_, _>>()?;
            let Some(first_neg) = (1..g.len()).find(|&i| g[i] < 0.0) else {
                continue;
            };
            let last_pos = (0..first_neg).rev().find(|&i| g[i] > 0.0);
            let Some(m) = last_pos else {
                // Moving into the wrong side from the start of the step.
                found.push(Found { surface: j, lo: t0, hi: t0, root: t0 });
                continue;
            };
            let (lo, hi) = (states[m].0, states[first_neg].0);
            let root = self.bisect(zone, j, dense, lo, hi)?;
            found.push(Found { surface: j, lo, hi, root });
        }
        found.sort_by(|a, b| a.root.total_cmp(&b.root));
        if found.len() > 1 && found[1].root - found[0].root <= self.cfg.tol_event {
            let t = found[0].root;
            let surfaces = found
                .iter()
                .filter(|f| f.root - t <= self.cfg.tol_event)
                .map(|f| f.surface)
                .collect();
            return Err(FlowError::Corner { t, surfaces });
        }
        Ok(found.into_iter().next())
    }

    fn bisect(&self, zone: usize, j: usize, dense: &DenseStep, mut lo: f64, mut hi: f64) -> Result<f64, FlowError> {
        let time_only = self.model.surfaces[j].is_time_only();
        let mut buf = vec![0.0; dense.dim()];
        let mut g_at = |t: f64| -> Result<f64, FlowError> {
            if time_only {
                self.g(zone, j, t, &dense.start()[..self.d])
            } else {
                dense.eval_into(t, &mut buf);
                self.g(zone, j, t, &buf)
            }
        };
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if !time_only && hi - lo <= self.cfg.tol_event {
                break;
            }
            if g_at(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if time_only {
            // Adjacent doubles bracket the sign change; keep the closer one.
            let (glo, ghi) = (g_at(lo)?, g_at(hi)?);
            Ok(if glo.abs() <= ghi.abs() { lo } else { hi })
        } else {
            Ok(0.5 * (lo + hi))
        }
    }

    /// Event time and state. The state comes from a fresh step from the
    /// last accepted point, never from the interpolant.
    fn refine(
        &self,
        zone: usize,
        t0: f64,
        y0: &[f64],
        k1: &[f64],
        found: &Found,
    ) -> Result<(f64, Option<rk::StepOutcome>), FlowError> {
        if found.root <= t0 {
            return Ok((t0, None));
        }
        let j = found.surface;
        let mut t_ev = found.root;
        if !self.model.surfaces[j].is_time_only() {
            for _ in 0..3 {
                let s = self.step(zone, t0, y0, k1, t_ev - t0)?;
                let x = &s.y1[..self.d];
                let h = self.model.h(j, t_ev, x)?;
                let grad = self.model.grad_h(j, t_ev, x)?;
                let hdot = dot_normal(&grad, &s.k7[..self.d]);
                if hdot == 0.0 || h == 0.0 {
                    break;
                }
                let next = t_ev - h / hdot;
                if !(next > found.lo && next <= found.hi) || next <= t0 {
                    break;
                }
                t_ev = next;
            }
        }
        let s = self.step(zone, t0, y0, k1, t_ev - t0)?;
        Ok((t_ev, Some(s)))
    }

    /// Target zone of a crossing of surface `j` out of `from`.
    fn target_zone(&self, from: usize, j: usize, t: f64, x: &[f64]) -> Result<usize, FlowError> {
        let sig = &self.model.zones[from].signature;
        let mut signs = Vec::with_capacity(sig.len());
        for (i, &req) in sig.iter().enumerate() {
            if i == j {
                signs.push(-req);
            } else if req != 0 {
                signs.push(req);
            } else {
                let s = sign_of(self.model.h(i, t, x)?);
                if s == 0 {
                    return Err(FlowError::Corner { t, surfaces: vec![j, i] });
                }
                signs.push(s);
            }
        }
        self.model
            .zone_for_signs(&signs)
            .ok_or_else(|| FlowError::Model(ModelError::Uncovered { t, x: x.to_vec() }))
    }

    fn make_event(&self, from: usize, j: usize, t: f64, x: &[f64]) -> Result<CrossingEvent, FlowError> {
        let to = self.target_zone(from, j, t, x)?;
        let (mut kind, w_minus, w_plus) =
            classify_unchecked(self.model, t, x, j, from, to, self.eps, self.cfg)?;
        if kind == EventKind::Crossing {
            // The target field must carry the orbit into the target side.
            let req = f64::from(self.model.zones[to].signature[j]);
            let w_to = if req > 0.0 { w_plus } else { w_minus };
            let delta = self.cfg.probe_step * self.model.period;
            let f_to = self.model.full_field(to, t, x, self.eps)?;
            let probe: Vec<f64> = x.iter().zip(&f_to).map(|(a, b)| a + delta * b).collect();
            let probe_ok = self.model.in_zone(to, t + delta, &probe)?;
            if req * w_to <= 0.0 || !probe_ok {
                kind = EventKind::Tangency;
            }
        }
        Ok(CrossingEvent {
            t,
            state: x.to_vec(),
            surface: j,
            from_zone: from,
            to_zone: to,
            w_minus,
            w_plus,
            kind,
        })
    }

    fn run(&self, z: &[f64], extra0: &[f64], t_span: (f64, f64)) -> Result<PiecewiseTrajectory, FlowError> {
        let (t0, tf) = t_span;
        if !(t0.is_finite() && tf.is_finite() && t0 < tf) {
            return Err(FlowError::InvalidInput(format!("time span [{t0}, {tf}]")));
        }
        if z.len() != self.d || z.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(format!(
                "initial state must have {} finite components",
                self.d
            )));
        }
        if extra0.len() != self.aug.extra_dim() {
            return Err(FlowError::InvalidInput("augmented state size".into()));
        }
        let cfg = self.cfg;
        let n = self.d + extra0.len();
        let mut y: Vec<f64> = z.iter().chain(extra0).copied().collect();
        let mut zone = initial_zone(self.model, t0, z, self.eps, cfg)?;
        let mut t = t0;
        let mut k1 = vec![0.0; n];
        self.rhs(zone, t, &y, &mut k1)?;
        let mut h = {
            let mut f = |tt: f64, yy: &[f64], out: &mut [f64]| self.rhs(zone, tt, yy, out);
            rk::initial_step(&mut f, t, &y, &k1, tf - t0, cfg.atol, cfg.rtol)?
        };
        let mut segments = Vec::new();
        let mut events: Vec<CrossingEvent> = Vec::new();
        let mut seg = TrajectorySegment {
            zone,
            t_start: t,
            t_end: t,
            start_state: y.clone(),
            end_state: y.clone(),
            steps: Vec::new(),
        };
        let mut attempts = 0usize;

        while t < tf {
            attempts += 1;
            if attempts > cfg.max_steps {
                return Err(FlowError::MaxStepsExceeded { t, limit: cfg.max_steps });
            }
            let last = t + h >= tf;
            let h_try = if last { tf - t } else { h };
            let s = self.step(zone, t, &y, &k1, h_try)?;
            if !s.err.is_finite() || s.err > 1.0 {
                let fac = if s.err.is_finite() { (0.9 * s.err.powf(-0.2)).max(0.2) } else { 0.2 };
                h = h_try * fac;
                if h <= 1e-14 * t.abs().max(1.0) {
                    return Err(FlowError::StepSizeUnderflow { t, h });
                }
                continue;
            }
            let grow = if s.err == 0.0 { 5.0 } else { (0.9 * s.err.powf(-0.2)).clamp(0.2, 5.0) };

            match self.detect(zone, &s.dense, &s.y1)? {
                None => {
                    t = if last { tf } else { t + h_try };
                    y = s.y1;
                    k1 = s.k7;
                    seg.steps.push(s.dense);
                    if !last {
                        h = h_try * grow;
                    }
                }
                Some(found) => {
                    let (t_ev, sub) = self.refine(zone, t, &y, &k1, &found)?;
                    if let Some(sub) = sub {
                        y = sub.y1;
                        seg.steps.push(sub.dense);
                    }
                    t = t_ev;
                    let event = self.make_event(zone, found.surface, t, &y[..self.d])?;
                    match event.kind {
                        EventKind::Crossing => {}
                        EventKind::Sliding => return Err(FlowError::Sliding(Box::new(event))),
                        EventKind::Tangency => return Err(FlowError::Tangency(Box::new(event))),
                    }
                    if events.len() >= cfg.max_events {
                        return Err(FlowError::MaxEventsExceeded { t, limit: cfg.max_events });
                    }
                    seg.t_end = t;
                    seg.end_state = y.clone();
                    segments.push(seg);
                    zone = event.to_zone;
                    self.aug.jump(self.model, &event, &mut y[self.d..])?;
                    events.push(event);
                    self.rhs(zone, t, &y, &mut k1)?;
                    seg = TrajectorySegment {
                        zone,
                        t_start: t,
                        t_end: t,
                        start_state: y.clone(),
                        end_state: y.clone(),
                        steps: Vec::new(),
                    };
                    h = h_try;
                }
            }
        }
        seg.t_end = t;
        seg.end_state = y.clone();
        if seg.steps.is_empty() {
            seg.steps.push(DenseStep::constant(t, &y));
        }

        // An orbit that ends on a surface records the seam as an event.
        let window = cfg.probe_step * self.model.period;
        for (j, &req) in self.model.zones[zone].signature.iter().enumerate() {
            if req == 0 {
                continue;
            }
            let recent = events.iter().any(|e| e.surface == j && e.t >= tf - window);
            if recent || self.model.h(j, tf, &y[..self.d])?.abs() > self.model.tol_surface {
                continue;
            }
            let event = self.make_event(zone, j, tf, &y[..self.d])?;
            match event.kind {
                EventKind::Crossing => events.push(event),
                EventKind::Sliding => return Err(FlowError::Sliding(Box::new(event))),
                EventKind::Tangency => return Err(FlowError::Tangency(Box::new(event))),
            }
        }
        segments.push(seg);
        Ok(PiecewiseTrajectory {
            z: z.to_vec(),
            eps: self.eps,
            dimension: self.d,
            t_span,
            segments,
            events,
        })
    }
}

/// Integrates the base state together with augmentation components.
pub fn integrate_augmented<A: Augmentation>(
    model: &PiecewiseModel,
    aug: &A,
    z: &[f64],
    extra0: &[f64],
    eps: f64,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<PiecewiseTrajectory, FlowError> {
    Integrator {
        model,
        aug,
        eps,
        cfg,
        d: model.dimension,
    }
    .run(z, extra0, t_span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_proposition1, builtin_proposition1_polar, Prop1Coeffs};
    use std::f64::consts::PI;

    fn model(json: &str) -> PiecewiseModel {
        PiecewiseModel::from_json(json).unwrap()
    }

    fn sliding_model() -> PiecewiseModel {
        model(
            r#"{"dimension": 1, "period": 2.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["-1"]},
                {"signature": [-1], "F0": ["1"]}]}"#,
        )
    }

    #[test]
    fn exponential_single_zone() {
        let m = model(r#"{"dimension": 1, "period": 1.0, "zones": [{"signature": [], "F0": ["x1"]}]}"#);
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, &[1.0], 0.0, (0.0, 1.0), &cfg).unwrap();
        let x1 = traj.final_base()[0];
        assert!((x1 - 1f64.exp()).abs() <= 1e-9 * 1f64.exp(), "{x1}");
        assert!(traj.crossing_times().is_empty());
        assert_eq!(traj.segment_count(), 1);
    }

    #[test]
    fn cartesian_circle_crossings() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, &[1.0, 0.0, 0.0], 0.0, (0.0, 2.0 * PI), &cfg).unwrap();
        let times = traj.crossing_times();
        assert_eq!(times.len(), 2, "{times:?}");
        assert!((times[0] - PI).abs() <= 1e-10, "{}", times[0] - PI);
        assert!((times[1] - 2.0 * PI).abs() <= 1e-10);
        let e0 = &traj.events[0];
        assert!((e0.state[0] + 1.0).abs() < 1e-9 && e0.state[1].abs() < 1e-12);
        assert_eq!(e0.kind, EventKind::Crossing);
        let end = traj.final_base();
        assert!((end[0] - 1.0).abs() < 1e-9 && end[1].abs() < 1e-9 && end[2] == 0.0);
    }

    #[test]
    fn segments_share_event_states() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, &[0.4, 0.0, 0.01], 0.05, (0.0, 6.0 * PI), &cfg).unwrap();
        assert!(traj.events.len() >= 5);
        for (i, ev) in traj.events.iter().enumerate().filter(|(i, _)| *i + 1 < traj.segments.len()) {
            let (a, b) = (&traj.segments[i], &traj.segments[i + 1]);
            assert_eq!(a.end_state, b.start_state);
            assert_eq!(a.end_state, ev.state);
            assert_eq!(a.t_end, ev.t);
        }
        assert!(traj.events.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn sliding_is_reported() {
        let m = sliding_model();
        let err = integrate(&m, &[1.0], 0.0, (0.0, 2.0), &IntegratorConfig::default()).unwrap_err();
        match err {
            FlowError::Sliding(ev) => {
                assert!((ev.t - 1.0).abs() < 1e-10);
                assert_eq!((ev.w_minus, ev.w_plus), (1.0, -1.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        let cfg = IntegratorConfig::default();
        let parallel = model(
            r#"{"dimension": 2, "period": 1.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["1", "0"]},
                {"signature": [-1], "F0": ["1", "0"]}]}"#,
        );
        let r = classify_event(&parallel, 0.0, &[0.0, 0.3], 0, 1, 0, 0.0, &cfg).unwrap();
        assert_eq!(r, (EventKind::Crossing, 1.0, 1.0));
        let opposing = model(
            r#"{"dimension": 2, "period": 1.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["-1", "0"]},
                {"signature": [-1], "F0": ["1", "0"]}]}"#,
        );
        let r = classify_event(&opposing, 0.0, &[0.0, 0.3], 0, 1, 0, 0.0, &cfg).unwrap();
        assert_eq!(r, (EventKind::Sliding, 1.0, -1.0));
        let polar = builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0));
        let (kind, wm, wp) = classify_event(&polar, PI, &[0.5, 0.0], 0, 0, 1, 0.1, &cfg).unwrap();
        assert_eq!(kind, EventKind::Crossing);
        assert!((wm + 1.0).abs() < 1e-15 && (wp + 1.0).abs() < 1e-15);
        assert!(matches!(
            classify_event(&polar, 1.0, &[0.5, 0.0], 0, 0, 1, 0.1, &cfg),
            Err(FlowError::NotOnSurface { .. })
        ));
    }

    #[test]
    fn tangency_and_regular_value() {
        let cfg = IntegratorConfig::default();
        let graze = model(
            r#"{"dimension": 2, "period": 1.0, "surfaces": ["x1"], "zones": [
                {"signature": [1], "F0": ["0", "1"]},
                {"signature": [-1], "F0": ["1", "0"]}]}"#,
        );
        let (kind, ..) = classify_event(&graze, 0.0, &[0.0, 0.0], 0, 1, 0, 0.0, &cfg).unwrap();
        assert_eq!(kind, EventKind::Tangency);
        let flat = model(
            r#"{"dimension": 1, "period": 1.0, "surfaces": ["x1^2"], "zones": [
                {"signature": [1], "F0": ["1"]},
                {"signature": [-1], "F0": ["1"]}]}"#,
        );
        assert!(matches!(
            classify_event(&flat, 0.0, &[0.0], 0, 1, 0, 0.0, &cfg),
            Err(FlowError::RegularValue { .. })
        ));
    }

    #[test]
    fn polar_crossings_at_pi_and_seam() {
        let m = builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0));
        let cfg = IntegratorConfig::default();
        for z in [[0.3, 0.0], [0.8, 0.2]] {
            let traj = integrate(&m, &z, 0.0, (0.0, 2.0 * PI), &cfg).unwrap();
            let times = traj.crossing_times();
            assert_eq!(times.len(), 2, "{times:?}");
            assert_eq!(times[0], PI);
            assert_eq!(times[1], 2.0 * PI);
            let end = traj.final_base();
            assert_eq!(end[0], z[0]);
            assert!((end[1] - z[1] * (2.0 * PI).exp()).abs() <= 1e-8 * (2.0 * PI).exp());
        }
    }

    #[test]
    fn time_only_event_times_do_not_depend_on_eps() {
        let m = builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0));
        let cfg = IntegratorConfig::default();
        let base = integrate(&m, &[0.4, 0.0], 0.0, (0.0, 2.0 * PI), &cfg).unwrap();
        for eps in [1e-1, 1e-2, 1e-3] {
            let pert = integrate(&m, &[0.4, 0.0], eps, (0.0, 2.0 * PI), &cfg).unwrap();
            assert_eq!(pert.crossing_times(), base.crossing_times());
        }
    }

    #[test]
    fn start_on_surface_chooses_outgoing_zone() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, &[0.5, 0.0, 0.0], 0.0, (0.0, 1.0), &cfg).unwrap();
        assert_eq!(traj.segments[0].zone, m.zone_index_by_name("+").unwrap());
        let traj = integrate(&m, &[-0.5, 0.0, 0.0], 0.0, (0.0, 1.0), &cfg).unwrap();
        assert_eq!(traj.segments[0].zone, m.zone_index_by_name("-").unwrap());
        let err = integrate(&sliding_model(), &[0.0], 0.0, (0.0, 1.0), &cfg).unwrap_err();
        assert_eq!(err.code(), "flow.initial_zone");
    }

    #[test]
    fn corner_detected() {
        let m = model(
            r#"{"dimension": 2, "period": 1.0, "surfaces": ["x1", "x2"], "zones": [
                {"signature": [1, 1], "F0": ["-1", "-1"]},
                {"signature": [-1, 1], "F0": ["-1", "-1"]},
                {"signature": [1, -1], "F0": ["-1", "-1"]},
                {"signature": [-1, -1], "F0": ["-1", "-1"]}]}"#,
        );
        let err = integrate(&m, &[1.0, 1.0], 0.0, (0.0, 2.0), &IntegratorConfig::default()).unwrap_err();
        assert_eq!(err.code(), "flow.corner");
    }

    #[test]
    fn max_events_enforced() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig { max_events: 3, ..Default::default() };
        let err = integrate(&m, &[1.0, 0.0, 0.0], 0.0, (0.0, 20.0), &cfg).unwrap_err();
        assert_eq!(err.code(), "flow.max_events");
    }

    #[test]
    fn deterministic_output() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig::default();
        let a = integrate(&m, &[0.3, 0.0, 0.1], 0.02, (0.0, 10.0), &cfg).unwrap();
        let b = integrate(&m, &[0.3, 0.0, 0.1], 0.02, (0.0, 10.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_output_is_accurate() {
        let m = builtin_proposition1(&Prop1Coeffs::default());
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, &[1.0, 0.0, 0.5], 0.0, (0.0, 2.0 * PI), &cfg).unwrap();
        for k in 0..50 {
            let t = 2.0 * PI * k as f64 / 49.0;
            let x = traj.base_state_at(t);
            assert!((x[0] - t.cos()).abs() < 1e-8);
            assert!((x[1] - t.sin()).abs() < 1e-8);
            assert!((x[2] - 0.5 * t.exp()).abs() < 1e-8 * t.exp());
        }
    }
}
