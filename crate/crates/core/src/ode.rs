//! Dormand–Prince 5(4) with PI step-size control.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
    /// Clamp components that dip below zero by less than `abs_tol` back to
    /// zero, and reject steps that overshoot further.
    pub nonnegative: bool,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
            nonnegative: false,
        }
    }
}

impl StepperOptions {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 1e-14 && v < 1e-2) {
                return Err(Error::Parameter(format!("{name} = {v} outside (1e-14, 1e-2)")));
            }
        }
        if !(self.h_max > 0.0) {
            return Err(Error::Parameter("h_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
}

impl StepStats {
    fn record(&mut self, h: f64) {
        if self.accepted == 0 {
            self.min_step = h;
            self.max_step = h;
        } else {
            self.min_step = self.min_step.min(h);
            self.max_step = self.max_step.max(h);
        }
        self.accepted += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub x: Vec<f64>,
    pub stats: StepStats,
    /// True when the observer asked to stop before `t_end`.
    pub stopped: bool,
}

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants (Hairer, Nørsett & Wanner).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn err_norm(err: &[f64], x0: &[f64], x1: &[f64], opts: &StepperOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(x0.iter().zip(x1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t: f64, x: &[f64], f0: &[f64], opts: &StepperOptions) -> f64 {
    let n = x.len();
    let scale: Vec<f64> = x.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(x);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(opts.h_max);
    let x1: Vec<f64> = x.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &x1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.h_max)
}

/// Integrates from (t0, x0) to `t_end`, calling `observer` on the initial
/// state and after every accepted step.
pub fn integrate<S, O>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    opts: &StepperOptions,
    mut observer: O,
) -> Result<Outcome>
where
    S: OdeSystem,
    O: FnMut(f64, &[f64]) -> Control,
{
    opts.check()?;
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::Dimension(format!("state has {} components, system {n}", x0.len())));
    }
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut x = x0.to_vec();
    if observer(t, &x) == Control::Stop || t_end <= t0 {
        return Ok(Outcome { t, x, stats, stopped: t_end > t0 });
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut err = vec![0.0; n];

    sys.rhs(t, &x, &mut k1);
    let mut h = initial_step(sys, t, &x, &k1, opts);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::StiffAbort { t });
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 8.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StiffAbort { t });
        }

        let stage = |tmp: &mut [f64], coeffs: &[(f64, &[f64])]| {
            for i in 0..n {
                let mut acc = 0.0;
                for (a, k) in coeffs {
                    acc += a * k[i];
                }
                tmp[i] = x[i] + h * acc;
            }
        };
        stage(&mut tmp, &[(A21, &k1)]);
        sys.rhs(t + C2 * h, &tmp, &mut k2);
        stage(&mut tmp, &[(A31, &k1), (A32, &k2)]);
        sys.rhs(t + C3 * h, &tmp, &mut k3);
        stage(&mut tmp, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        sys.rhs(t + C4 * h, &tmp, &mut k4);
        stage(&mut tmp, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        sys.rhs(t + C5 * h, &tmp, &mut k5);
        stage(&mut tmp, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        sys.rhs(t + h, &tmp, &mut k6);
        stage(&mut xn, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t_end } else { t + h };
        sys.rhs(t_new, &xn, &mut k7);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut e = err_norm(&err, &x, &xn, opts);
        if !e.is_finite() {
            e = 1e10;
        }
        if opts.nonnegative && xn.iter().any(|v| *v < -opts.abs_tol) {
            e = e.max(2.0);
        }

        let fac11 = e.powf(EXPO1);
        if e <= 1.0 {
            let fac = (fac11 / err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = e.max(1e-4);
            last_rejected = false;
            if opts.nonnegative {
                let mut clamped = false;
                for v in xn.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                        clamped = true;
                    }
                }
                if clamped {
                    sys.rhs(t_new, &xn, &mut k7);
                }
            }
            stats.record(h);
            t = t_new;
            std::mem::swap(&mut x, &mut xn);
            std::mem::swap(&mut k1, &mut k7);
            if observer(t, &x) == Control::Stop {
                return Ok(Outcome { t, x, stats, stopped: true });
            }
            if last {
                return Ok(Outcome { t, x, stats, stopped: false });
            }
            h = h_new.min(opts.h_max);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(Vec<f64>);
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            for i in 0..x.len() {
                dx[i] = self.0[i] * x[i];
            }
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[1];
            dx[1] = -x[0];
        }
    }

    #[test]
    fn exponential_growth_and_decay() {
        let sys = Decay(vec![0.7, -1.3]);
        let opts = StepperOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            ..Default::default()
        };
        let out = integrate(&sys, &[0.01, 2.0], 0.0, 3.0, &opts, |_, _| Control::Continue).unwrap();
        assert_eq!(out.t, 3.0);
        assert!((out.x[0] / (0.01 * (2.1f64).exp()) - 1.0).abs() < 1e-9);
        assert!((out.x[1] / (2.0 * (-3.9f64).exp()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let opts = StepperOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let tp = 2.0 * std::f64::consts::PI;
        let out = integrate(&Oscillator, &[1.0, 0.0], 0.0, tp, &opts, |_, _| Control::Continue).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8);
        assert!(out.x[1].abs() < 1e-8);
        assert!(out.stats.accepted > 10);
    }

    #[test]
    fn observer_can_stop_early() {
        let sys = Decay(vec![1.0]);
        let out = integrate(&sys, &[0.1], 0.0, 10.0, &StepperOptions::default(), |_, x| {
            if x[0] > 1.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t < 10.0 && out.x[0] > 1.0);
    }

    #[test]
    fn tolerance_range_enforced() {
        let opts = StepperOptions {
            rel_tol: 0.5,
            ..Default::default()
        };
        assert!(integrate(&Decay(vec![1.0]), &[1.0], 0.0, 1.0, &opts, |_, _| Control::Continue).is_err());
    }

    #[test]
    fn blowup_aborts() {
        struct Blow;
        impl OdeSystem for Blow {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
                dx[0] = x[0] * x[0];
            }
        }
        // x = 1/(1 - t) blows up at t = 1
        let r = integrate(&Blow, &[1.0], 0.0, 2.0, &StepperOptions::default(), |_, _| Control::Continue);
        assert!(matches!(r, Err(Error::StiffAbort { t }) if t < 1.01 && t > 0.9));
    }
}
