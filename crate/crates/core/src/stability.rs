//! Empirical checks of the wedge-measure bound, its δ → 0 limit, the
//! contraction of the return map, and the local-passage inequalities, plus
//! the aggregation of all of them into a verdict.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::local::{time_of_flight, wedge_defect_of, InSectionPoint, LocalChart, ReturnMap};
use crate::network::ValidationReport;
use crate::sampling::{norm, parallel_count, parallel_map, uniform_ball, Workers};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Minimum complement hits before an estimate is trusted.
pub const MIN_HITS: u64 = 100;
/// Allowed shortfall of the fitted δ-slope below α − 1.
pub const SLOPE_SLACK: f64 = 0.3;
/// Number of half-widths of slack when comparing estimates to bounds.
pub const BOUND_HALF_WIDTHS: f64 = 3.0;
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

/// Wald half-width with continuity correction.
pub fn wald_half_width(hits: u64, n: u64) -> f64 {
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    Z95 * (p * (1.0 - p) / n_f).sqrt() + 0.5 / n_f
}

/// Volume of the unit ball in R^k.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / k as f64 * unit_ball_volume(k - 2),
    }
}

/// ε^{−2α}δ^{α−1}, the bound as printed.
pub fn printed_bound(alpha: f64, eps: f64, delta: f64) -> f64 {
    eps.powf(-2.0 * alpha) * delta.powf(alpha - 1.0)
}

/// Slab bound carried through with the ball-volume factor:
/// 2V_{u−1}/V_u · ε^{−α}δ^{α−1}.
pub fn dimension_corrected_bound(u: usize, alpha: f64, eps: f64, delta: f64) -> f64 {
    2.0 * unit_ball_volume(u - 1) / unit_ball_volume(u) * eps.powf(-alpha) * delta.powf(alpha - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub node: String,
    pub eps: f64,
    pub delta: f64,
    /// Estimate of ℓ(W(ε)ᶜ ∩ E(δ)) / ℓ(E(δ)).
    pub ratio: f64,
    pub half_width: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub seed: u64,
    pub analytic_bound: Option<f64>,
    pub corrected_bound: Option<f64>,
    pub wide_ci: bool,
    pub note: Option<String>,
}

impl MeasureEstimate {
    /// ratio ≤ bound + 3 half-widths (vacuously true without a bound).
    pub fn within_bound(&self) -> bool {
        self.analytic_bound
            .map_or(true, |b| self.ratio <= b + BOUND_HALF_WIDTHS * self.half_width)
    }

    /// Which bound is tighter, when both exist.
    pub fn tighter_bound(&self) -> Option<&'static str> {
        match (self.analytic_bound, self.corrected_bound) {
            (Some(a), Some(c)) => Some(if c < a { "dimension_corrected" } else { "printed" }),
            _ => None,
        }
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Parameter(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

/// Monte Carlo estimate of the relative measure of the wedge complement in
/// the δ-ball of the in-section, with x drawn uniformly from the u-ball.
pub fn estimate_wedge_complement_ratio(
    chart: &LocalChart,
    eps: f64,
    delta: f64,
    n_samples: u64,
    seed: u64,
    workers: Workers,
) -> Result<MeasureEstimate> {
    check_unit_interval("eps", eps)?;
    if delta >= 1.0 {
        return Err(Error::OutsideChart { norm: delta });
    }
    check_unit_interval("delta", delta)?;
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    let u = chart.unstable_dim();
    if u == 1 {
        return Ok(MeasureEstimate {
            node: chart.label.clone(),
            eps,
            delta,
            ratio: 0.0,
            half_width: 0.0,
            hits: 0,
            n_samples,
            seed,
            analytic_bound: None,
            corrected_bound: None,
            wide_ci: false,
            note: Some("u = 1: the wedge is the whole section, complement empty".into()),
        });
    }
    let eps2 = eps * eps;
    let hits = parallel_count(n_samples, seed, workers, |rng| {
        let x = uniform_ball(rng, u, delta);
        chart.wedge_defect(&x).is_none_or(|d| d >= eps2)
    });
    let ratio = hits as f64 / n_samples as f64;
    let half_width = wald_half_width(hits, n_samples);
    let alpha = chart.constants.alpha;
    let wide_ci = half_width > ratio / 2.0 || hits < MIN_HITS;
    Ok(MeasureEstimate {
        node: chart.label.clone(),
        eps,
        delta,
        ratio,
        half_width,
        hits,
        n_samples,
        seed,
        analytic_bound: Some(printed_bound(alpha, eps, delta)),
        corrected_bound: Some(dimension_corrected_bound(u, alpha, eps, delta)),
        wide_ci,
        note: wide_ci.then(|| format!("WIDE_CI: {hits} complement hits")),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub node: String,
    pub eps: f64,
    pub alpha: f64,
    pub estimates: Vec<MeasureEstimate>,
    /// Least-squares slope of ln ratio against ln δ over non-WIDE_CI points.
    pub slope: Option<f64>,
    /// α − 1 − 0.3.
    pub slope_threshold: Option<f64>,
    pub monotone: bool,
    pub vacuous: bool,
    pub wide_ci_warning: bool,
}

impl ScalingStudy {
    pub fn status(&self) -> CheckStatus {
        if self.vacuous {
            return CheckStatus::Pass;
        }
        match (self.slope, self.slope_threshold) {
            (Some(s), Some(th)) if self.monotone && s >= th => CheckStatus::Pass,
            (Some(_), Some(_)) => CheckStatus::Fail,
            _ => CheckStatus::Inconclusive,
        }
    }
}

/// Ordinary least-squares slope.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs the wedge-complement estimate over a decreasing geometric δ ladder.
/// All rungs share the seed, so every rung sees the same sample directions.
pub fn delta_scaling_study(
    chart: &LocalChart,
    eps: f64,
    deltas: &[f64],
    n_samples: u64,
    seed: u64,
    workers: Workers,
) -> Result<ScalingStudy> {
    if deltas.len() < 4 {
        return Err(Error::Parameter(format!(
            "need at least 4 delta values, got {}",
            deltas.len()
        )));
    }
    if !deltas.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Parameter("delta values must be strictly decreasing".into()));
    }
    let estimates = deltas
        .iter()
        .map(|&d| estimate_wedge_complement_ratio(chart, eps, d, n_samples, seed, workers))
        .collect::<Result<Vec<_>>>()?;
    let alpha = chart.constants.alpha;
    if chart.unstable_dim() == 1 {
        return Ok(ScalingStudy {
            node: chart.label.clone(),
            eps,
            alpha,
            estimates,
            slope: None,
            slope_threshold: None,
            monotone: true,
            vacuous: true,
            wide_ci_warning: false,
        });
    }
    let usable: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| !e.wide_ci && e.ratio > 0.0)
        .map(|e| (e.delta.ln(), e.ratio.ln()))
        .collect();
    let monotone = estimates.windows(2).all(|w| {
        w[1].ratio <= w[0].ratio + BOUND_HALF_WIDTHS * (w[0].half_width + w[1].half_width)
    });
    Ok(ScalingStudy {
        node: chart.label.clone(),
        eps,
        alpha,
        slope: ls_slope(&usable),
        slope_threshold: Some(alpha - 1.0 - SLOPE_SLACK),
        monotone,
        vacuous: false,
        wide_ci_warning: estimates.iter().any(|e| e.wide_ci),
        estimates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrbitStatus {
    Completed,
    /// The start lies on the strong connection (x = 0).
    AlreadyConverged,
    /// x underflowed to 0 on some leg: the orbit reached the connection to
    /// floating-point resolution.
    ConvergedToConnection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaOrbit {
    pub points: Vec<InSectionPoint>,
    pub x_norms: Vec<f64>,
    pub wedge_defects: Vec<f64>,
    pub dist_to_y_plus: Vec<f64>,
    pub dist_to_connection: Vec<f64>,
    pub status: OrbitStatus,
}

impl OmegaOrbit {
    pub fn loops(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// x-norms never increase after the first iterate.
    pub fn norms_nonincreasing(&self) -> bool {
        self.x_norms.windows(2).skip(1).all(|w| w[1] <= w[0])
    }

    pub fn defects_nonincreasing(&self) -> bool {
        self.wedge_defects.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Iterates the return map F from `start` for up to `n_loops` loops.
pub fn iterate_return_map(start: &InSectionPoint, n_loops: usize, rmap: &ReturnMap) -> Result<OmegaOrbit> {
    let chart = &rmap.charts[0];
    let landmarks = rmap.landmarks(0)?;
    let dist_plus = |y: &[f64]| {
        norm(&y.iter().zip(&landmarks.y_plus).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let mut orbit = OmegaOrbit {
        points: Vec::new(),
        x_norms: Vec::new(),
        wedge_defects: Vec::new(),
        dist_to_y_plus: Vec::new(),
        dist_to_connection: Vec::new(),
        status: OrbitStatus::Completed,
    };
    let push = |orbit: &mut OmegaOrbit, p: InSectionPoint| {
        orbit.x_norms.push(p.x_norm());
        orbit.wedge_defects.push(chart.wedge_defect(&p.x).unwrap_or(0.0));
        orbit.dist_to_y_plus.push(dist_plus(&p.y));
        orbit.dist_to_connection.push(landmarks.distance_to_connection(&p.y));
        orbit.points.push(p);
    };
    if start.x.iter().all(|v| *v == 0.0) {
        push(&mut orbit, start.clone());
        orbit.status = OrbitStatus::AlreadyConverged;
        return Ok(orbit);
    }
    if start.x_norm() >= 1.0 {
        return Err(Error::Escaped { loop_index: 0 });
    }
    push(&mut orbit, start.clone());
    let mut p = start.clone();
    for k in 1..=n_loops {
        match rmap.apply(&p) {
            Ok(q) => {
                if q.x_norm() >= 1.0 {
                    return Err(Error::Escaped { loop_index: k });
                }
                let converged = q.x.iter().all(|v| *v == 0.0);
                push(&mut orbit, q.clone());
                if converged {
                    orbit.status = OrbitStatus::ConvergedToConnection;
                    break;
                }
                p = q;
            }
            Err(e) => match e.root() {
                Error::OnStableManifold => {
                    orbit.status = OrbitStatus::ConvergedToConnection;
                    break;
                }
                Error::OutsideChart { .. } => return Err(Error::Escaped { loop_index: k }),
                _ => return Err(e),
            },
        }
    }
    Ok(orbit)
}

/// Exponents of the contraction ladder around the loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderExponents {
    /// ρᵢ per node.
    pub rho: Vec<f64>,
    /// 2ρᵢ(1 − βᵢ) per node (None for u = 1).
    pub wedge_exponent: Vec<Option<f64>>,
    /// Π ρᵢ.
    pub loop_rho: f64,
    /// Z of ‖x'‖ ≤ Z·‖x‖^{Πρᵢ}.
    pub loop_zeta: f64,
    /// The smaller of ρᵢ and 2ρᵢ(1 − βᵢ) at each node: the larger wedge.
    pub weaker_exponent: Vec<f64>,
}

pub fn ladder_exponents(rmap: &ReturnMap) -> LadderExponents {
    let rho: Vec<f64> = rmap.charts.iter().map(|c| c.constants.rho).collect();
    let wedge_exponent: Vec<Option<f64>> = rmap
        .charts
        .iter()
        .map(|c| {
            (c.unstable_dim() >= 2).then(|| 2.0 * c.constants.rho * (1.0 - c.constants.beta))
        })
        .collect();
    let weaker_exponent = rho
        .iter()
        .zip(&wedge_exponent)
        .map(|(r, w)| w.map_or(*r, |w| w.min(*r)))
        .collect();
    LadderExponents {
        rho,
        wedge_exponent,
        loop_rho: rmap.loop_rho(),
        loop_zeta: rmap.loop_zeta(),
        weaker_exponent,
    }
}

/// Per-loop contraction ‖x_{k+1}‖ ≤ Z·‖x_k‖^{Πρᵢ}. Returns the worst ratio
/// ‖x_{k+1}‖ / (Z·‖x_k‖^{Πρᵢ}) (≤ 1 means the bound holds).
pub fn contraction_margin(orbit: &OmegaOrbit, rmap: &ReturnMap) -> f64 {
    let rho = rmap.loop_rho();
    let z = rmap.loop_zeta();
    orbit
        .x_norms
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| {
            // compare in logs: tiny norms underflow x^rho
            let lhs = w[1].ln();
            let rhs = z.ln() + rho * w[0].ln();
            (lhs - rhs).exp()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaRanges {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Minimum relative gap between consecutive expanding eigenvalues.
    pub min_rel_gap: f64,
    pub u_min: usize,
    pub u_max: usize,
    pub log10_radius_min: f64,
    pub log10_radius_max: f64,
    /// Every `adversarial_every`-th sample has |x₁| = 0.999‖x‖ (0 disables).
    pub adversarial_every: u64,
}

impl Default for LemmaRanges {
    fn default() -> Self {
        LemmaRanges {
            lambda_min: 0.2,
            lambda_max: 5.0,
            min_rel_gap: 0.01,
            u_min: 2,
            u_max: 5,
            log10_radius_min: -4.0,
            log10_radius_max: -0.05,
            adversarial_every: 10,
        }
    }
}

/// Outcome of each inequality on one instance; `None` when its
/// precondition is void.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct InstanceOutcome {
    pub bracket: Option<bool>,
    pub defect_vs_first_coordinate: Option<bool>,
    pub defect_vs_norm: Option<bool>,
    pub flight_time_vs_first_coordinate: Option<bool>,
}

/// Evaluates the passage inequalities at one (λ, x). `k_frac ∈ (0, 1)`
/// picks k = k_frac·x₁²/Σ_{j≥2}xⱼ² for the third one.
pub fn check_instance(lambdas: &[f64], x: &[f64], k_frac: f64) -> Result<InstanceOutcome> {
    let t = time_of_flight(x, lambdas)?;
    let tau: Vec<f64> = x
        .iter()
        .zip(lambdas)
        .map(|(v, l)| if *v == 0.0 { 0.0 } else { v.signum() * (v.abs().ln() + l * t).exp() })
        .collect();
    let defect = wedge_defect_of(&tau);
    let r = norm(x);
    let l1 = lambdas[0];
    let lu = *lambdas.last().expect("nonempty spectrum");
    let beta = lambdas.get(1).map(|l2| l2 / l1);
    let x1 = x[0];
    let tail: f64 = x.iter().skip(1).map(|v| v * v).sum();
    let nonzero = x.iter().filter(|v| **v != 0.0).count();

    let mut out = InstanceOutcome::default();
    if nonzero >= 2 {
        let lo = -r.ln() / l1;
        let hi = -r.ln() / lu;
        out.bracket = Some(lo < t && t < hi);
    }
    if x1 != 0.0 {
        // x₁²e^{2λ₁T} ≤ 1 in log form, up to rounding in T and ln|x₁|.
        let lhs = 2.0 * (l1 * t + x1.abs().ln());
        let slack = 8.0 * f64::EPSILON * 2.0 * ((l1 * t).abs() + x1.abs().ln().abs());
        out.flight_time_vs_first_coordinate = Some(lhs <= slack);
        if let Some(beta) = beta {
            out.defect_vs_first_coordinate = Some(defect < x1.abs().powf(-2.0 * beta) * tail);
            if tail > 0.0 {
                let k = k_frac * x1 * x1 / tail;
                out.defect_vs_norm = Some(defect < k.powf(-beta) * r.powf(2.0 - 2.0 * beta));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub index: u64,
    pub lambdas: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityTally {
    pub name: String,
    pub checked: u64,
    pub violations: u64,
    pub skipped: u64,
    pub first_witness: Option<Witness>,
}

impl InequalityTally {
    fn new(name: &str) -> Self {
        InequalityTally {
            name: name.into(),
            checked: 0,
            violations: 0,
            skipped: 0,
            first_witness: None,
        }
    }

    fn record(&mut self, outcome: Option<bool>, index: u64, lambdas: &[f64], x: &[f64]) {
        match outcome {
            None => self.skipped += 1,
            Some(ok) => {
                self.checked += 1;
                if !ok {
                    self.violations += 1;
                    if self.first_witness.is_none() {
                        self.first_witness = Some(Witness {
                            index,
                            lambdas: lambdas.to_vec(),
                            x: x.to_vec(),
                        });
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub n_samples: u64,
    pub seed: u64,
    pub ranges: LemmaRanges,
    pub tallies: Vec<InequalityTally>,
    /// Samples whose flight time could not be computed.
    pub errors: u64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.errors == 0 && self.tallies.iter().all(|t| t.violations == 0)
    }

    pub fn total_violations(&self) -> u64 {
        self.tallies.iter().map(|t| t.violations).sum()
    }
}

fn sample_spectrum<R: Rng + ?Sized>(rng: &mut R, ranges: &LemmaRanges) -> Vec<f64> {
    let u = rng.random_range(ranges.u_min..=ranges.u_max);
    loop {
        let mut l: Vec<f64> = (0..u)
            .map(|_| rng.random_range(ranges.lambda_min..ranges.lambda_max))
            .collect();
        l.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        if l.windows(2).all(|w| w[0] - w[1] >= ranges.min_rel_gap * w[0]) {
            return l;
        }
    }
}

fn sample_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, ranges: &LemmaRanges, adversarial: bool) -> Vec<f64> {
    let log_r = rng.random_range(ranges.log10_radius_min..ranges.log10_radius_max);
    let r = 10f64.powf(log_r);
    let dir = if adversarial {
        let a: f64 = 0.999;
        let rest = crate::sampling::unit_sphere(rng, dim - 1);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let b = (1.0 - a * a).sqrt();
        std::iter::once(sign * a).chain(rest.into_iter().map(|v| v * b)).collect()
    } else {
        crate::sampling::unit_sphere(rng, dim)
    };
    dir.into_iter().map(|v| v * r).collect()
}

/// Randomized check of the flight-time bracket, the two wedge-defect
/// inequalities and the x₁ bound on the flight time.
pub fn check_lemma_inequalities(n_samples: u64, seed: u64, ranges: LemmaRanges, workers: Workers) -> Result<LemmaReport> {
    if !(ranges.lambda_min > 0.0 && ranges.lambda_max > ranges.lambda_min) || ranges.u_min < 2 || ranges.u_max < ranges.u_min {
        return Err(Error::Parameter("invalid lemma sampling ranges".into()));
    }
    if ranges.log10_radius_max >= 0.0 || ranges.log10_radius_min >= ranges.log10_radius_max {
        return Err(Error::Parameter("radius range must lie below 1".into()));
    }
    let outcomes = parallel_map(n_samples, seed, workers, |i, rng| {
        let lambdas = sample_spectrum(rng, &ranges);
        let adversarial = ranges.adversarial_every > 0 && i % ranges.adversarial_every == 0;
        let x = sample_point(rng, lambdas.len(), &ranges, adversarial);
        let k_frac = rng.random_range(0.05..0.95);
        let res = check_instance(&lambdas, &x, k_frac).ok();
        (lambdas, x, res)
    });
    let mut tallies = [
        InequalityTally::new("flight_time_bracket"),
        InequalityTally::new("defect_vs_first_coordinate"),
        InequalityTally::new("defect_vs_norm"),
        InequalityTally::new("flight_time_vs_first_coordinate"),
    ];
    let mut errors = 0;
    for (i, (lambdas, x, res)) in outcomes.into_iter().enumerate() {
        let Some(o) = res else {
            errors += 1;
            continue;
        };
        let i = i as u64;
        tallies[0].record(o.bracket, i, &lambdas, &x);
        tallies[1].record(o.defect_vs_first_coordinate, i, &lambdas, &x);
        tallies[2].record(o.defect_vs_norm, i, &lambdas, &x);
        tallies[3].record(o.flight_time_vs_first_coordinate, i, &lambdas, &x);
    }
    Ok(LemmaReport {
        n_samples,
        seed,
        ranges,
        tallies: tallies.into(),
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not enough evidence either way (e.g. WIDE_CI).
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }
}

pub const CHECK_HYPOTHESES: &str = "hypotheses";
pub const CHECK_LEMMAS: &str = "lemma_inequalities";
pub const CHECK_WEDGE: &str = "wedge_measure";
pub const CHECK_SCALING: &str = "delta_scaling";
pub const CHECK_OMEGA: &str = "omega_contraction";
pub const CHECK_CHANNEL: &str = "channel";

/// Checks that must all be present for a positive verdict.
pub const REQUIRED_CHECKS: [&str; 5] = [CHECK_HYPOTHESES, CHECK_LEMMAS, CHECK_WEDGE, CHECK_SCALING, CHECK_OMEGA];

pub fn hypotheses_check(report: &ValidationReport) -> CheckResult {
    if report.passed {
        CheckResult::new(CHECK_HYPOTHESES, CheckStatus::Pass, "H1-H4 hold")
    } else {
        let tags: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.hypothesis, v.detail))
            .collect();
        CheckResult::new(CHECK_HYPOTHESES, CheckStatus::Fail, tags.join("; "))
    }
}

pub fn lemma_check(report: &LemmaReport) -> CheckResult {
    let status = if report.passed() { CheckStatus::Pass } else { CheckStatus::Fail };
    CheckResult::new(
        CHECK_LEMMAS,
        status,
        format!(
            "{} samples, {} violations, {} solver errors",
            report.n_samples,
            report.total_violations(),
            report.errors
        ),
    )
}

pub fn wedge_check(estimates: &[MeasureEstimate]) -> CheckResult {
    if estimates.is_empty() {
        return CheckResult::new(CHECK_WEDGE, CheckStatus::Inconclusive, "no estimates");
    }
    if let Some(bad) = estimates.iter().find(|e| !e.within_bound()) {
        return CheckResult::new(
            CHECK_WEDGE,
            CheckStatus::Fail,
            format!(
                "node {} eps {} delta {}: ratio {} exceeds bound {:?}",
                bad.node, bad.eps, bad.delta, bad.ratio, bad.analytic_bound
            ),
        );
    }
    let wide = estimates.iter().filter(|e| e.wide_ci).count();
    let status = if wide > 0 { CheckStatus::Inconclusive } else { CheckStatus::Pass };
    CheckResult::new(
        CHECK_WEDGE,
        status,
        format!("{} estimates within bound, {wide} WIDE_CI", estimates.len()),
    )
}

pub fn scaling_check(study: &ScalingStudy) -> CheckResult {
    let detail = if study.vacuous {
        "u = 1: vacuous pass".to_string()
    } else {
        format!(
            "slope {:?} vs threshold {:?}, monotone {}, wide_ci {}",
            study.slope, study.slope_threshold, study.monotone, study.wide_ci_warning
        )
    };
    CheckResult::new(CHECK_SCALING, study.status(), detail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    PredominantlyStableEvidence,
    Inconclusive,
    Counterevidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub supporting: Vec<CheckResult>,
    pub missing: Vec<String>,
    pub text: String,
}

/// Aggregates named check results. Any failure is counterevidence; a missing
/// required check or an inconclusive one makes the verdict inconclusive.
/// When a check name repeats, the worst status wins.
pub fn stability_verdict(results: &[CheckResult]) -> StabilityVerdict {
    let rank = |s: CheckStatus| match s {
        CheckStatus::Pass => 0,
        CheckStatus::Inconclusive => 1,
        CheckStatus::Fail => 2,
    };
    let mut merged: BTreeMap<String, CheckResult> = BTreeMap::new();
    for r in results {
        match merged.get(&r.name) {
            Some(prev) if rank(prev.status) >= rank(r.status) => {}
            _ => {
                merged.insert(r.name.clone(), r.clone());
            }
        }
    }
    let supporting: Vec<CheckResult> = merged.into_values().collect();
    let missing: Vec<String> = REQUIRED_CHECKS
        .iter()
        .filter(|name| !supporting.iter().any(|r| r.name == **name))
        .map(|s| s.to_string())
        .collect();
    let names = |status: CheckStatus| {
        supporting
            .iter()
            .filter(|r| r.status == status)
            .map(|r| r.name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let (verdict, text) = if supporting.iter().any(|r| r.status == CheckStatus::Fail) {
        (
            Verdict::Counterevidence,
            format!("counterevidence from failed checks: {}", names(CheckStatus::Fail)),
        )
    } else if !missing.is_empty() {
        (
            Verdict::Inconclusive,
            format!("inconclusive: missing checks {}", missing.join(", ")),
        )
    } else if supporting.iter().any(|r| r.status == CheckStatus::Inconclusive) {
        (
            Verdict::Inconclusive,
            format!("inconclusive checks: {}", names(CheckStatus::Inconclusive)),
        )
    } else {
        (
            Verdict::PredominantlyStableEvidence,
            format!(
                "empirical evidence (not a proof) of predominant asymptotic stability of the principal cycle, backed by: {}",
                names(CheckStatus::Pass)
            ),
        )
    };
    StabilityVerdict {
        verdict,
        supporting,
        missing,
        text,
    }
}
