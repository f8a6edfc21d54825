//! One function per command: each takes a parsed config plus options and
//! returns the report and CSV files to write. Nothing here touches the
//! filesystem except `write_outputs`.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::error::{Error, Result};
use crate::glv::{
    axis_equilibria, channel_experiment, detect_itinerary, glv_options, network_centers, perturb_and_redetect,
    simulate, ChannelReport, PerturbationStudy,
};
use crate::local::{flight, InSectionPoint, LocalChart, ReturnMap};
use crate::network::{derive_constants, principal_sequence, validate_hypotheses, NetworkSpec};
use crate::report::{
    csv_text, fmt_f64, measure_rows, omega_rows, report_bundle, trajectory_header, trajectory_rows, Bundle, Provenance,
    Report, MEASURE_HEADER, OMEGA_HEADER,
};
use crate::sampling::{derive_seed, parallel_map, uniform_ball, Workers};
use crate::stability::{
    check_lemma_inequalities, contraction_margin, delta_scaling_study, estimate_wedge_complement_ratio,
    hypotheses_check, iterate_return_map, ladder_exponents, lemma_check, scaling_check, wedge_check, CheckResult,
    CheckStatus, LemmaRanges, OrbitStatus, CHECK_CHANNEL, CHECK_OMEGA,
};

/// Channel fraction at or above which the channel check passes.
pub const CHANNEL_PASS_FRACTION: f64 = 0.95;
/// Channel fraction at or below which the channel check fails.
pub const CHANNEL_FAIL_FRACTION: f64 = 0.5;
/// Per-start attempts when drawing wedge points by rejection.
const WEDGE_REJECTION_TRIES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub command: String,
    pub report: Report,
    /// (file name, contents).
    pub csvs: Vec<(String, String)>,
    /// The network in use fails H1–H4.
    pub hypotheses_failed: bool,
    pub summary: String,
}

impl RunOutput {
    pub fn report_file_name(&self) -> String {
        format!("{}.json", self.command)
    }
}

/// Writes `<command>.json` and every CSV into `dir`; returns the paths.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let p = dir.join(out.report_file_name());
    out.report.write(&p)?;
    paths.push(p);
    for (name, body) in &out.csvs {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}

fn provenance<T: Serialize>(command: &str, cfg: Option<&LoadedConfig>, options: &T, net: Option<&NetworkSpec>) -> Provenance {
    let mut p = Provenance::new(command);
    p.config_sha256 = cfg.map(|c| c.sha256.clone());
    p.resolved_config = json!({
        "input": cfg.map_or(Value::Null, |c| c.resolved.clone()),
        "options": serde_json::to_value(options).expect("options serialize"),
    });
    p.network_fingerprint = net.map(NetworkSpec::fingerprint);
    p
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Parameter(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

fn positive(name: &str, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter(format!("{name} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateOptions {
    pub lemma_samples: u64,
    pub seed: u64,
}

pub fn run_validate(cfg: &LoadedConfig, opts: &ValidateOptions, workers: Workers) -> Result<RunOutput> {
    positive("lemma_samples", opts.lemma_samples)?;
    let net = cfg.network()?;
    let validation = validate_hypotheses(&net);
    let nodes: Vec<Value> = net
        .equilibria
        .iter()
        .map(|e| {
            let c = derive_constants(e).ok();
            json!({
                "label": e.label,
                "u": e.unstable_dim(),
                "s": e.stable_dim(),
                "alpha": c.as_ref().and_then(|c| c.alpha.is_finite().then_some(c.alpha)),
                "beta": c.as_ref().map(|c| c.beta),
                "mu": c.as_ref().map(|c| c.mu),
                "rho": c.as_ref().map(|c| c.rho),
            })
        })
        .collect();
    let derived_seed = derive_seed(opts.seed, "lemmas");
    let lemmas = check_lemma_inequalities(opts.lemma_samples, derived_seed, LemmaRanges::default(), workers)?;
    let axes = match cfg.glv() {
        Ok(g) => serde_json::to_value(axis_equilibria(&g.system()?))?,
        Err(_) => Value::Null,
    };
    let mut prov = provenance("validate", Some(cfg), opts, Some(&net));
    prov.seed = Some(opts.seed);
    prov.derived_seed = Some(derived_seed);
    let mut report = Report::new(prov);
    report.checks.push(hypotheses_check(&validation));
    report.checks.push(lemma_check(&lemmas));
    report.result = json!({
        "nodes": nodes,
        "principal_sequence": principal_sequence(&net).ok(),
        "validation": validation,
        "lemma_inequalities": lemmas,
        "axis_equilibria": axes,
    });
    let mus: Vec<String> = nodes
        .iter()
        .map(|n| format!("{} mu={}", n["label"].as_str().unwrap_or("?"), n["mu"]))
        .collect();
    Ok(RunOutput {
        command: "validate".into(),
        summary: format!(
            "hypotheses {}; {}; lemma violations {}",
            if validation.passed { "hold" } else { "VIOLATED" },
            mus.join(", "),
            lemmas.total_violations()
        ),
        report,
        csvs: Vec::new(),
        hypotheses_failed: !validation.passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlightOptions {
    pub lambdas: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn run_flight(opts: &FlightOptions) -> Result<RunOutput> {
    let f = flight(&opts.x, &opts.lambdas)?;
    let defect = crate::local::wedge_defect_of(&f.tau);
    let mut report = Report::new(provenance("flight", None, opts, None));
    report.result = json!({"time": f.time, "tau": f.tau, "wedge_defect": defect});
    Ok(RunOutput {
        command: "flight".into(),
        summary: format!("T = {} tau = {:?}", fmt_f64(f.time), f.tau),
        report,
        csvs: Vec::new(),
        hypotheses_failed: false,
    })
}

fn node_or_first(rmap: &ReturnMap, node: Option<&str>) -> Result<usize> {
    match node {
        None => Ok(0),
        Some(l) => rmap
            .node_index(l)
            .ok_or_else(|| Error::Parameter(format!("{l} is not on the principal cycle"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitOptions {
    pub node: Option<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn run_transit(cfg: &LoadedConfig, opts: &TransitOptions) -> Result<RunOutput> {
    let net = cfg.network()?;
    let rmap = cfg.return_map()?;
    let i = node_or_first(&rmap, opts.node.as_deref())?;
    let chart = &rmap.charts[i];
    let p = InSectionPoint::new(chart.label.clone(), opts.x.clone(), opts.y.clone())?;
    let out = chart.local_map(&p)?;
    let next = rmap.leg(i, &p).map_err(|e| e.at_leg(i))?;
    let mut report = Report::new(provenance("transit", Some(cfg), opts, Some(&net)));
    report.result = json!({"start": p, "exit": out, "next": next});
    Ok(RunOutput {
        command: "transit".into(),
        summary: format!("{} -> {}: |x'| = {}", chart.label, next.node, fmt_f64(next.x_norm())),
        report,
        csvs: Vec::new(),
        hypotheses_failed: !validate_hypotheses(&net).passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WedgeOptions {
    pub node: Option<String>,
    pub x: Vec<f64>,
    pub eps: f64,
}

pub fn run_wedge(cfg: &LoadedConfig, opts: &WedgeOptions) -> Result<RunOutput> {
    check_unit("eps", opts.eps)?;
    let net = cfg.network()?;
    let rmap = cfg.return_map()?;
    let chart = &rmap.charts[node_or_first(&rmap, opts.node.as_deref())?];
    if opts.x.len() != chart.unstable_dim() {
        return Err(Error::Dimension(format!("x has {} components, u = {}", opts.x.len(), chart.unstable_dim())));
    }
    let f = chart.flight(&opts.x)?;
    let defect = crate::local::wedge_defect_of(&f.tau);
    let inside = defect < opts.eps * opts.eps;
    let mut report = Report::new(provenance("wedge", Some(cfg), opts, Some(&net)));
    report.result = json!({"node": chart.label, "tau": f.tau, "wedge_defect": defect, "in_wedge": inside});
    Ok(RunOutput {
        command: "wedge".into(),
        summary: format!("{}: defect {} in_wedge {inside}", chart.label, fmt_f64(defect)),
        report,
        csvs: Vec::new(),
        hypotheses_failed: !validate_hypotheses(&net).passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureOptions {
    /// All principal nodes when empty.
    pub nodes: Vec<String>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

fn charts_for<'a>(rmap: &'a ReturnMap, nodes: &[String]) -> Result<Vec<&'a LocalChart>> {
    if nodes.is_empty() {
        return Ok(rmap.charts.iter().collect());
    }
    nodes
        .iter()
        .map(|n| node_or_first(rmap, Some(n)).map(|i| &rmap.charts[i]))
        .collect()
}

pub fn run_measure(cfg: &LoadedConfig, opts: &MeasureOptions, workers: Workers) -> Result<RunOutput> {
    positive("samples", opts.samples)?;
    if opts.eps.is_empty() || opts.delta.is_empty() {
        return Err(Error::Parameter("need at least one eps and one delta".into()));
    }
    for e in &opts.eps {
        check_unit("eps", *e)?;
    }
    let net = cfg.network()?;
    let rmap = cfg.return_map()?;
    let derived = derive_seed(opts.seed, "measure");
    let mut estimates = Vec::new();
    for chart in charts_for(&rmap, &opts.nodes)? {
        for &eps in &opts.eps {
            for &delta in &opts.delta {
                estimates.push(estimate_wedge_complement_ratio(chart, eps, delta, opts.samples, derived, workers)?);
            }
        }
    }
    let mut prov = provenance("measure", Some(cfg), opts, Some(&net));
    prov.seed = Some(opts.seed);
    prov.derived_seed = Some(derived);
    let csv = csv_text(&prov, &MEASURE_HEADER, &measure_rows(&estimates));
    let mut report = Report::new(prov);
    let check = wedge_check(&estimates);
    let validation = validate_hypotheses(&net);
    report.checks.push(hypotheses_check(&validation));
    report.checks.push(check.clone());
    report.result = json!({ "estimates": estimates });
    report.artifacts.push("measure.csv".into());
    Ok(RunOutput {
        command: "measure".into(),
        summary: format!("wedge_measure {:?}: {}", check.status, check.detail),
        report,
        csvs: vec![("measure.csv".into(), csv)],
        hypotheses_failed: !validation.passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingOptions {
    /// Principal nodes with u ≥ 2 when empty (or the first node if none).
    pub nodes: Vec<String>,
    pub eps: f64,
    pub deltas: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

pub fn run_scaling(cfg: &LoadedConfig, opts: &ScalingOptions, workers: Workers) -> Result<RunOutput> {
    positive("samples", opts.samples)?;
    check_unit("eps", opts.eps)?;
    let net = cfg.network()?;
    let rmap = cfg.return_map()?;
    let mut charts = charts_for(&rmap, &opts.nodes)?;
    if opts.nodes.is_empty() {
        let multi: Vec<&LocalChart> = charts.iter().copied().filter(|c| c.unstable_dim() >= 2).collect();
        charts = if multi.is_empty() { vec![charts[0]] } else { multi };
    }
    let derived = derive_seed(opts.seed, "scaling");
    let studies = charts
        .iter()
        .map(|c| delta_scaling_study(c, opts.eps, &opts.deltas, opts.samples, derived, workers))
        .collect::<Result<Vec<_>>>()?;
    let mut prov = provenance("scaling", Some(cfg), opts, Some(&net));
    prov.seed = Some(opts.seed);
    prov.derived_seed = Some(derived);
    let all: Vec<_> = studies.iter().flat_map(|s| s.estimates.iter().cloned()).collect();
    let csv = csv_text(&prov, &MEASURE_HEADER, &measure_rows(&all));
    let mut report = Report::new(prov);
    let validation = validate_hypotheses(&net);
    report.checks.push(hypotheses_check(&validation));
    let checks: Vec<CheckResult> = studies.iter().map(scaling_check).collect();
    report.checks.extend(checks.iter().cloned());
    report.result = json!({ "studies": studies });
    report.artifacts.push("scaling.csv".into());
    let summary = studies
        .iter()
        .map(|s| format!("{}: slope {:?} (threshold {:?})", s.node, s.slope, s.slope_threshold))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(RunOutput {
        command: "scaling".into(),
        summary,
        report,
        csvs: vec![("scaling.csv".into(), csv)],
        hypotheses_failed: !validation.passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaOptions {
    pub loops: usize,
    pub starts: u64,
    pub delta: f64,
    pub eps: f64,
    pub seed: u64,
}

/// Start on Σ₁^in with x uniform in W(ε) ∩ E(δ) and y within δ/2 of y₊
/// before normalization.
pub fn sample_wedge_start<R: Rng + ?Sized>(rng: &mut R, rmap: &ReturnMap, eps: f64, delta: f64) -> Result<InSectionPoint> {
    let chart = &rmap.charts[0];
    let lm = rmap.landmarks(0)?;
    let u = chart.unstable_dim();
    let mut x = None;
    for _ in 0..WEDGE_REJECTION_TRIES {
        let cand = uniform_ball(rng, u, delta);
        if chart.wedge_defect(&cand).is_some_and(|d| d < eps * eps) {
            x = Some(cand);
            break;
        }
    }
    let x = x.ok_or_else(|| Error::Parameter(format!("W({eps}) is too thin in E({delta}) to sample")))?;
    let noise = uniform_ball(rng, lm.y_plus.len(), delta / 2.0);
    let y: Vec<f64> = lm.y_plus.iter().zip(noise).map(|(a, b)| a + b).collect();
    InSectionPoint::normalized(chart.label.clone(), x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaSummary {
    pub starts: u64,
    pub escaped: u64,
    pub errors: u64,
    pub converged_to_connection: u64,
    pub worst_margin: f64,
    pub norms_nonincreasing: bool,
    pub ladder: crate::stability::LadderExponents,
}

pub fn run_omega(cfg: &LoadedConfig, opts: &OmegaOptions, workers: Workers) -> Result<RunOutput> {
    positive("starts", opts.starts)?;
    check_unit("eps", opts.eps)?;
    check_unit("delta", opts.delta)?;
    let net = cfg.network()?;
    let rmap = cfg.return_map()?;
    let derived = derive_seed(opts.seed, "omega");
    let runs = parallel_map(opts.starts, derived, workers, |_, rng| {
        let p = sample_wedge_start(rng, &rmap, opts.eps, opts.delta)?;
        iterate_return_map(&p, opts.loops, &rmap)
    });
    let mut summary = OmegaSummary {
        starts: opts.starts,
        escaped: 0,
        errors: 0,
        converged_to_connection: 0,
        worst_margin: 0.0,
        norms_nonincreasing: true,
        ladder: ladder_exponents(&rmap),
    };
    let mut first = None;
    for r in &runs {
        match r {
            Ok(o) => {
                summary.worst_margin = summary.worst_margin.max(contraction_margin(o, &rmap));
                summary.norms_nonincreasing &= o.norms_nonincreasing();
                if o.status == OrbitStatus::ConvergedToConnection {
                    summary.converged_to_connection += 1;
                }
                if first.is_none() {
                    first = Some(o.clone());
                }
            }
            Err(Error::Escaped { .. }) => summary.escaped += 1,
            Err(Error::Parameter(m)) => return Err(Error::Parameter(m.clone())),
            Err(_) => summary.errors += 1,
        }
    }
    let status = if summary.escaped == 0
        && summary.errors == 0
        && summary.worst_margin <= 1.0
        && summary.norms_nonincreasing
    {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    let check = CheckResult::new(
        CHECK_OMEGA,
        status,
        format!(
            "{} starts, worst |x'|/(Z|x|^rho) = {}, escaped {}, errors {}",
            summary.starts,
            fmt_f64(summary.worst_margin),
            summary.escaped,
            summary.errors
        ),
    );
    let mut prov = provenance("omega", Some(cfg), opts, Some(&net));
    prov.seed = Some(opts.seed);
    prov.derived_seed = Some(derived);
    let csv = first.as_ref().map(|o| csv_text(&prov, &OMEGA_HEADER, &omega_rows(o)));
    let validation = validate_hypotheses(&net);
    let mut report = Report::new(prov);
    report.checks.push(hypotheses_check(&validation));
    report.checks.push(check.clone());
    report.result = json!({ "summary": summary, "first_orbit": first });
    let mut csvs = Vec::new();
    if let Some(c) = csv {
        report.artifacts.push("omega.csv".into());
        csvs.push(("omega.csv".into(), c));
    }
    Ok(RunOutput {
        command: "omega".into(),
        summary: format!("omega_contraction {:?}: {}", check.status, check.detail),
        report,
        csvs,
        hypotheses_failed: !validation.passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlvSimOptions {
    pub x0: Option<Vec<f64>>,
    pub t_max: Option<f64>,
}

pub fn run_glv_sim(cfg: &LoadedConfig, opts: &GlvSimOptions) -> Result<RunOutput> {
    let g = cfg.glv()?;
    let sys = g.system()?;
    let params = g.channel_params();
    let x0 = opts
        .x0
        .clone()
        .or_else(|| g.x0.clone())
        .ok_or_else(|| Error::Parameter("no start state: pass --x0 or set x0 in the config".into()))?;
    let t_max = opts.t_max.unwrap_or(params.t_max);
    if !(t_max > 0.0) {
        return Err(Error::Parameter("t_max must be positive".into()));
    }
    let traj = simulate(&sys, &x0, t_max, &glv_options(params.rel_tol, params.abs_tol))?;
    let net = g.network().ok();
    let itinerary = match &net {
        Some(n) => {
            let (labels, centers) = network_centers(&sys, n)?;
            Some(detect_itinerary(&traj, &labels, &centers, params.eps)?)
        }
        None => None,
    };
    let prov = provenance("glv-sim", Some(cfg), opts, net.as_ref());
    let csv = csv_text(
        &prov,
        &trajectory_header(sys.dim()).iter().map(String::as_str).collect::<Vec<_>>(),
        &trajectory_rows(&traj.times, &traj.states),
    );
    let mut report = Report::new(prov);
    report.result = json!({
        "stats": traj.stats,
        "final_state": traj.states.last(),
        "end_time": traj.end_time(),
        "itinerary": itinerary,
    });
    report.artifacts.push("trajectory.csv".into());
    Ok(RunOutput {
        command: "glv-sim".into(),
        summary: format!(
            "{} steps to t = {}; visits {:?}",
            traj.stats.accepted,
            fmt_f64(traj.end_time()),
            itinerary.as_ref().map(|i| i.labels().join(" "))
        ),
        report,
        csvs: vec![("trajectory.csv".into(), csv)],
        hypotheses_failed: net.as_ref().is_some_and(|n| !validate_hypotheses(n).passed),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChannelOverrides {
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
}

fn channel_params(cfg: &LoadedConfig, o: &ChannelOverrides) -> Result<crate::glv::ChannelParams> {
    let mut p = cfg.glv()?.channel_params();
    if let Some(v) = o.eps {
        p.eps = v;
    }
    if let Some(v) = o.delta {
        p.delta = v;
    }
    if let Some(v) = o.samples {
        p.n_samples = v;
    }
    if let Some(v) = o.seed {
        p.seed = v;
    }
    if let Some(v) = o.t_max {
        p.t_max = v;
    }
    p.check()?;
    Ok(p)
}

pub fn channel_status(r: &ChannelReport) -> CheckResult {
    let status = if r.h4_flag || r.fraction <= CHANNEL_FAIL_FRACTION {
        CheckStatus::Fail
    } else if r.fraction >= CHANNEL_PASS_FRACTION {
        CheckStatus::Pass
    } else {
        CheckStatus::Inconclusive
    };
    CheckResult::new(
        CHECK_CHANNEL,
        status,
        format!(
            "fraction {} of {} (timeouts {}, left V {}, out of order {}), H4 flag {}",
            fmt_f64(r.fraction),
            r.n_initial,
            r.timeout_count,
            r.left_tube_count,
            r.wrong_order_count,
            r.h4_flag
        ),
    )
}

pub fn run_channel(cfg: &LoadedConfig, o: &ChannelOverrides, workers: Workers) -> Result<RunOutput> {
    let params = channel_params(cfg, o)?;
    let g = cfg.glv()?;
    let sys = g.system()?;
    let net = g.network()?;
    let r = channel_experiment(&sys, &net, &params, workers)?;
    let mut prov = provenance("channel", Some(cfg), &json!({"overrides": o, "resolved": params}), Some(&net));
    prov.seed = Some(params.seed);
    prov.derived_seed = Some(derive_seed(params.seed, "channel"));
    let mut report = Report::new(prov);
    report.checks.push(hypotheses_check(&r.hypotheses));
    let check = channel_status(&r);
    report.checks.push(check.clone());
    let failed = !r.hypotheses.passed;
    report.result = serde_json::to_value(&r)?;
    Ok(RunOutput {
        command: "channel".into(),
        summary: format!("channel {:?}: {}", check.status, check.detail),
        report,
        csvs: Vec::new(),
        hypotheses_failed: failed,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PerturbOptions {
    pub magnitude: Option<f64>,
    pub count: Option<u64>,
    pub channel: ChannelOverrides,
}

pub fn run_perturb(cfg: &LoadedConfig, o: &PerturbOptions, workers: Workers) -> Result<RunOutput> {
    let params = channel_params(cfg, &o.channel)?;
    let g = cfg.glv()?;
    let file = g.perturbation.as_ref();
    let magnitude = o.magnitude.or(file.map(|p| p.magnitude)).unwrap_or(1e-3);
    let count = o.count.or(file.map(|p| p.count)).unwrap_or(10);
    let sys = g.system()?;
    let net = g.network()?;
    let base_ok = validate_hypotheses(&net).passed;
    let study: PerturbationStudy = perturb_and_redetect(&sys, g.connections.as_deref(), magnitude, count, &params, workers)?;
    let mut prov = provenance(
        "perturb",
        Some(cfg),
        &json!({"overrides": o, "magnitude": magnitude, "count": count, "resolved": params}),
        Some(&net),
    );
    prov.seed = Some(params.seed);
    prov.derived_seed = Some(derive_seed(params.seed, "perturb"));
    let all_valid = study.reports.iter().all(|r| r.revalidated);
    let min_fraction = study.min_fraction();
    let status = if all_valid && min_fraction.is_some_and(|f| f >= 0.9) {
        CheckStatus::Pass
    } else {
        CheckStatus::Inconclusive
    };
    let check = CheckResult::new(
        "perturbation",
        status,
        format!(
            "{count} perturbations of magnitude {}: all revalidate {all_valid}, min fraction {:?}",
            fmt_f64(magnitude),
            min_fraction
        ),
    );
    let mut report = Report::new(prov);
    report.checks.push(check.clone());
    report.result = serde_json::to_value(&study)?;
    Ok(RunOutput {
        command: "perturb".into(),
        summary: format!("perturbation {:?}: {}", check.status, check.detail),
        report,
        csvs: Vec::new(),
        hypotheses_failed: !base_ok,
    })
}

/// Bundles reports into `verdict.json`.
pub fn run_verdict(paths: &[PathBuf]) -> Result<(Bundle, String)> {
    let reports = paths.iter().map(|p| Report::read(p)).collect::<Result<Vec<_>>>()?;
    let bundle = report_bundle(&reports)?;
    let mut s = serde_json::to_string_pretty(&bundle)?;
    s.push('\n');
    Ok((bundle, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const SCALAR: &[u8] = br#"{"schema_version":1,"equilibria":[
        {"label":"p1","expanding":[2.0],"contracting":[3.0]},
        {"label":"p2","expanding":[2.0],"contracting":[3.0]}],
        "connections":[{"source":"p1","target":"p2","index":1},{"source":"p2","target":"p1","index":1}]}"#;

    #[test]
    fn measure_on_scalar_network_is_vacuous() {
        let cfg = parse_config(SCALAR).unwrap();
        let opts = MeasureOptions {
            nodes: vec![],
            eps: vec![0.5],
            delta: vec![0.01],
            samples: 100,
            seed: 1,
        };
        let out = run_measure(&cfg, &opts, Workers(None)).unwrap();
        assert_eq!(out.csvs[0].1.lines().count(), 4);
        assert!(out.report.result["estimates"][0]["ratio"] == 0.0);
    }

    #[test]
    fn omega_on_scalar_network_passes() {
        let cfg = parse_config(SCALAR).unwrap();
        let opts = OmegaOptions {
            loops: 3,
            starts: 20,
            delta: 0.01,
            eps: 0.5,
            seed: 2,
        };
        let out = run_omega(&cfg, &opts, Workers(None)).unwrap();
        assert_eq!(out.report.checks[1].status, CheckStatus::Pass, "{:?}", out.report.checks);
    }

    #[test]
    fn overrides_are_range_checked() {
        let cfg = parse_config(SCALAR).unwrap();
        let opts = MeasureOptions {
            nodes: vec![],
            eps: vec![1.5],
            delta: vec![0.01],
            samples: 100,
            seed: 1,
        };
        assert!(matches!(run_measure(&cfg, &opts, Workers(None)), Err(Error::Parameter(_))));
    }
}
