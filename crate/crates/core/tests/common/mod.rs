//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use hetnet::local::LocalChart;
use hetnet::network::EquilibriumSpec;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn chart(expanding: &[f64], contracting: &[f64]) -> LocalChart {
    LocalChart::new(&EquilibriumSpec::new("p", expanding.to_vec(), contracting.to_vec())).unwrap()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Exact relative measure of the wedge complement in the δ-disc for
/// λ = (α, 1). For u = 2 the complement is the cusp
/// |x₁| ≤ √(1 − ε²)·(|x₂|/ε)^α, so the area is a one-dimensional integral
/// of the cusp height clipped by the disc. No flight times are solved.
pub fn wedge_complement_ratio_u2(alpha: f64, eps: f64, delta: f64) -> f64 {
    let c = (1.0 - eps * eps).sqrt();
    let height = |x2: f64| {
        let cusp = c * (x2.abs() / eps).powf(alpha);
        let disc = (delta * delta - x2 * x2).max(0.0).sqrt();
        2.0 * cusp.min(disc)
    };
    // split where the cusp meets the circle so each piece is smooth
    let (mut lo, mut hi) = (0.0, delta);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if c * (mid / eps).powf(alpha) < (delta * delta - mid * mid).sqrt() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tol = 1e-13 * delta * delta;
    let area_half = integrate(&height, 0.0, lo, tol) + integrate(&height, lo, delta, tol);
    2.0 * area_half / (std::f64::consts::PI * delta * delta)
}

/// Flight time by plain bisection on Σ xⱼ² e^{2λⱼT} − 1.
pub fn bisect_flight_time(x: &[f64], lambdas: &[f64]) -> f64 {
    let g = |t: f64| x.iter().zip(lambdas).map(|(v, l)| v * v * (2.0 * l * t).exp()).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
