//! Dormand-Prince 5(4) stepping with the standard continuous extension.

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients (5th minus 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Interpolant of one accepted step over `[t0, t0 + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    /// Five coefficient blocks of length `n`.
    coeffs: Vec<f64>,
}

impl DenseStep {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len() / 5
    }

    pub fn start(&self) -> &[f64] {
        &self.coeffs[..self.dim()]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let theta = if self.h > 0.0 { (t - self.t0) / self.h } else { 0.0 };
        let theta1 = 1.0 - theta;
        let c = &self.coeffs;
        for i in 0..n {
            out[i] = c[i]
                + theta * (c[n + i] + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Degenerate step holding a single state.
    pub(crate) fn constant(t0: f64, y: &[f64]) -> DenseStep {
        let n = y.len();
        let mut coeffs = vec![0.0; 5 * n];
        coeffs[..n].copy_from_slice(y);
        DenseStep { t0, h: 0.0, coeffs }
    }
}

pub(crate) struct StepOutcome {
    pub y1: Vec<f64>,
    /// Derivative at the end point (first stage of the next step).
    pub k7: Vec<f64>,
    /// Scaled RMS error estimate; accept when `<= 1`.
    pub err: f64,
    pub dense: DenseStep,
}

/// Takes one step of size `h` from `(t, y)` with `k1 = f(t, y)`.
pub(crate) fn dp5_step<E, F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    atol: f64,
    rtol: f64,
) -> Result<StepOutcome, E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E> + ?Sized,
{
    let n = y.len();
    let mut tmp = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    f(t + C2 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    f(t + C3 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    f(t + C4 * h, &tmp, &mut k4)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    f(t + C5 * h, &tmp, &mut k5)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    f(t + h, &tmp, &mut k6)?;
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    f(t + h, &y1, &mut k7)?;

    let mut acc = 0.0;
    for i in 0..n {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = atol + rtol * y[i].abs().max(y1[i].abs());
        acc += (e / sc).powi(2);
    }
    let err = (acc / n.max(1) as f64).sqrt();

    let mut coeffs = vec![0.0; 5 * n];
    for i in 0..n {
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        coeffs[i] = y[i];
        coeffs[n + i] = ydiff;
        coeffs[2 * n + i] = bspl;
        coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
        coeffs[4 * n + i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Ok(StepOutcome {
        y1,
        k7,
        err,
        dense: DenseStep { t0: t, h, coeffs },
    })
}

/// Initial step heuristic (Hairer, Nørsett & Wanner, II.4).
pub(crate) fn initial_step<E, F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    span: f64,
    atol: f64,
    rtol: f64,
) -> Result<f64, E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E> + ?Sized,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(k1);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(k1).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(k1).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}
