//! Acceptance criteria, run in sequence. Each prints one PASS/FAIL line.

mod common;

use std::time::{Duration, Instant};

use hetnet::config::{load_config, parse_config, LoadedConfig};
use hetnet::glv::{channel_experiment, perturb_and_redetect, ChannelParams};
use hetnet::local::{flight, InSectionPoint};
use hetnet::runs::{
    run_channel, run_measure, run_scaling, sample_wedge_start, write_outputs, ChannelOverrides, MeasureOptions,
    ScalingOptions,
};
use hetnet::sampling::{StreamFactory, Workers};
use hetnet::stability::{
    check_lemma_inequalities, contraction_margin, iterate_return_map, LemmaRanges, MeasureEstimate,
};
use rand::Rng;

// criterion 1
const LEMMA_SAMPLES: u64 = 100_000;
const LEMMA_TIME_LIMIT: Duration = Duration::from_secs(10);
// criterion 2
const FLIGHT_CASES: u64 = 1_000;
const FLIGHT_TOL: f64 = 1e-9;
const TAU_NORM_TOL: f64 = 1e-10;
// criterion 3
const ALPHAS: [f64; 3] = [1.5, 2.0, 3.0];
const EPSILONS: [f64; 2] = [0.3, 0.5];
const DELTAS: [f64; 3] = [0.02, 0.01, 0.005];
const CELL_SAMPLES: u64 = 1_000_000;
const HALF_WIDTHS: f64 = 3.0;
const MEASURE_TIME_LIMIT: Duration = Duration::from_secs(300);
// criterion 4
const SCALING_ALPHA: f64 = 2.0;
const SCALING_EPS: f64 = 0.5;
const SCALING_DELTAS: [f64; 4] = [0.02, 0.01, 0.005, 0.0025];
const SLOPE_SLACK: f64 = 0.3;
// criterion 5
const SCALAR_START: f64 = 0.1;
const SCALAR_LOOPS: usize = 4;
const SCALAR_REL_TOL: f64 = 1e-9;
const CONTRACTION_STARTS: u64 = 1_000;
const CONTRACTION_LOOPS: usize = 3;
const CONTRACTION_EPS: f64 = 0.5;
const CONTRACTION_DELTA: f64 = 0.01;
// criterion 6
const CHANNEL_SAMPLES: u64 = 500;
const CHANNEL_EPS: f64 = 0.2;
const CHANNEL_DELTA: f64 = 0.1;
const CHANNEL_MIN_FRACTION: f64 = 0.95;
const UNSTABLE_MAX_FRACTION: f64 = 0.5;
const CHANNEL_TIME_LIMIT: Duration = Duration::from_secs(120);
// criterion 7
const PERTURB_MAGNITUDE: f64 = 1e-3;
const PERTURB_COUNT: u64 = 10;
const PERTURB_MIN_FRACTION: f64 = 0.9;
// criterion 8
const WORKER_COUNTS: [usize; 3] = [1, 4, 8];

const SEED: u64 = 20_240_601;

/// Three u = 2 nodes with λ = (α, 1) for each α of the measure grid.
fn measure_network() -> LoadedConfig {
    let text = r#"{"schema_version":1,
        "description":"alpha grid 1.5 / 2 / 3",
        "equilibria":[
            {"label":"a1.5","expanding":[1.5,1.0],"contracting":[1.93,3.71]},
            {"label":"a2","expanding":[2.0,1.0],"contracting":[2.37,3.83]},
            {"label":"a3","expanding":[3.0,1.0],"contracting":[3.29,4.61]}],
        "connections":[
            {"source":"a1.5","target":"a2","index":1},
            {"source":"a2","target":"a3","index":1},
            {"source":"a3","target":"a1.5","index":1}]}"#;
    parse_config(text.as_bytes()).unwrap()
}

fn measure_options() -> MeasureOptions {
    MeasureOptions {
        nodes: vec![],
        eps: EPSILONS.to_vec(),
        delta: DELTAS.to_vec(),
        samples: CELL_SAMPLES,
        seed: SEED,
    }
}

fn channel_overrides() -> ChannelOverrides {
    ChannelOverrides {
        eps: Some(CHANNEL_EPS),
        delta: Some(CHANNEL_DELTA),
        samples: Some(CHANNEL_SAMPLES),
        seed: Some(SEED),
        t_max: None,
    }
}

fn channel_params(cfg: &LoadedConfig) -> ChannelParams {
    let mut p = cfg.glv().unwrap().channel_params();
    p.eps = CHANNEL_EPS;
    p.delta = CHANNEL_DELTA;
    p.n_samples = CHANNEL_SAMPLES;
    p.seed = SEED;
    p
}

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn criterion_1() -> Line {
    let start = Instant::now();
    let rep = check_lemma_inequalities(LEMMA_SAMPLES, SEED, LemmaRanges::default(), Workers(None)).unwrap();
    let elapsed = start.elapsed();
    let exercised = rep.tallies.iter().all(|t| t.checked > 0);
    let counts: Vec<String> = rep
        .tallies
        .iter()
        .map(|t| format!("{} {}/{}", t.name, t.violations, t.checked))
        .collect();
    Line {
        id: 1,
        name: "passage inequalities",
        pass: rep.passed() && exercised && elapsed < LEMMA_TIME_LIMIT,
        detail: format!("{} samples, violations/checked: {}, {:.2?}", rep.n_samples, counts.join(", "), elapsed),
    }
}

/// T for λ = (2λ₂, λ₂): with s = e^{2λ₂T}, x₁²s² + x₂²s = 1.
fn quadratic_flight_time(x1: f64, x2: f64, l2: f64) -> f64 {
    let (a, b) = (x1 * x1, x2 * x2);
    let s = 2.0 / (b + (b * b + 4.0 * a).sqrt());
    s.ln() / (2.0 * l2)
}

fn criterion_2() -> Line {
    let f = StreamFactory::new(SEED);
    let mut worst_t = 0.0f64;
    let mut worst_norm = 0.0f64;
    for i in 0..FLIGHT_CASES {
        let mut rng = f.stream(i);
        let l2: f64 = rng.random_range(0.2..2.5);
        let r = 10f64.powf(rng.random_range(-4.0..-0.05));
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (x1, x2) = (r * th.cos(), r * th.sin());
        let fl = flight(&[x1, x2], &[2.0 * l2, l2]).unwrap();
        let t = quadratic_flight_time(x1, x2, l2);
        worst_t = worst_t.max((fl.time - t).abs());
        let n = (fl.tau[0] * fl.tau[0] + fl.tau[1] * fl.tau[1]).sqrt();
        worst_norm = worst_norm.max((n - 1.0).abs());
    }
    Line {
        id: 2,
        name: "flight-time oracle",
        pass: worst_t <= FLIGHT_TOL && worst_norm <= TAU_NORM_TOL,
        detail: format!("{FLIGHT_CASES} cases, max |T - T_quadratic| = {worst_t:e}, max ||tau| - 1| = {worst_norm:e}"),
    }
}

fn estimates(out: &hetnet::runs::RunOutput) -> Vec<MeasureEstimate> {
    let v = &out.report.result["estimates"];
    v.as_array()
        .unwrap()
        .iter()
        .map(|e| MeasureEstimate {
            node: e["node"].as_str().unwrap().into(),
            eps: e["eps"].as_f64().unwrap(),
            delta: e["delta"].as_f64().unwrap(),
            ratio: e["ratio"].as_f64().unwrap(),
            half_width: e["half_width"].as_f64().unwrap(),
            hits: e["hits"].as_u64().unwrap(),
            n_samples: e["n_samples"].as_u64().unwrap(),
            seed: e["seed"].as_u64().unwrap(),
            analytic_bound: e["analytic_bound"].as_f64(),
            corrected_bound: e["corrected_bound"].as_f64(),
            wide_ci: e["wide_ci"].as_bool().unwrap(),
            note: None,
        })
        .collect()
}

fn criterion_3() -> Line {
    let cfg = measure_network();
    let start = Instant::now();
    let out = run_measure(&cfg, &measure_options(), Workers(None)).unwrap();
    let elapsed = start.elapsed();
    let est = estimates(&out);
    let mut pass = est.len() == ALPHAS.len() * EPSILONS.len() * DELTAS.len() && elapsed < MEASURE_TIME_LIMIT;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_oracle = 0.0f64;
    for (e, alpha) in est.iter().zip(ALPHAS.iter().flat_map(|a| std::iter::repeat_n(*a, 6))) {
        let bound = e.eps.powf(-2.0 * alpha) * e.delta.powf(alpha - 1.0);
        let excess = (e.ratio - bound - HALF_WIDTHS * e.half_width) / e.half_width;
        worst_bound = worst_bound.max(excess);
        pass &= e.ratio <= bound + HALF_WIDTHS * e.half_width;
        let oracle = common::wedge_complement_ratio_u2(alpha, e.eps, e.delta);
        let z = (e.ratio - oracle).abs() / e.half_width;
        worst_oracle = worst_oracle.max(z);
        pass &= z <= HALF_WIDTHS;
    }
    Line {
        id: 3,
        name: "wedge-complement bound",
        pass,
        detail: format!(
            "{} cells x {CELL_SAMPLES} samples, worst (ratio - bound)/hw = {worst_bound:.2} (must be <= {HALF_WIDTHS} below 0), \
             worst |MC - quadrature|/hw = {worst_oracle:.2}, {elapsed:.2?}",
            est.len()
        ),
    }
}

fn criterion_4() -> Line {
    let cfg = measure_network();
    let opts = ScalingOptions {
        nodes: vec!["a2".into()],
        eps: SCALING_EPS,
        deltas: SCALING_DELTAS.to_vec(),
        samples: CELL_SAMPLES,
        seed: SEED,
    };
    let out = run_scaling(&cfg, &opts, Workers(None)).unwrap();
    let study = &out.report.result["studies"][0];
    let slope = study["slope"].as_f64();
    let threshold = SCALING_ALPHA - 1.0 - SLOPE_SLACK;
    Line {
        id: 4,
        name: "delta scaling",
        pass: slope.is_some_and(|s| s >= threshold),
        detail: format!("alpha {SCALING_ALPHA}, fitted slope {slope:?}, threshold {threshold}"),
    }
}

fn criterion_5() -> Line {
    let scalar = load_config(&common::config_path("two_node_scalar.json")).unwrap();
    let rmap = scalar.return_map().unwrap();
    let p = InSectionPoint::new("p1", vec![SCALAR_START], vec![1.0]).unwrap();
    let orbit = iterate_return_map(&p, SCALAR_LOOPS, &rmap).unwrap();
    let mu = rmap.loop_mu();
    let mut worst_rel = 0.0f64;
    for (k, x) in orbit.x_norms.iter().enumerate() {
        let exact = SCALAR_START.powf(mu.powi(k as i32));
        worst_rel = worst_rel.max((x - exact).abs() / exact);
    }
    let scalar_ok = orbit.x_norms.len() == SCALAR_LOOPS + 1 && worst_rel <= SCALAR_REL_TOL;

    let u2 = load_config(&common::config_path("u2_network.json")).unwrap();
    let rmap = u2.return_map().unwrap();
    let f = StreamFactory::new(SEED);
    let mut worst_margin = 0.0f64;
    let mut failures = 0;
    for i in 0..CONTRACTION_STARTS {
        let start = sample_wedge_start(&mut f.stream(i), &rmap, CONTRACTION_EPS, CONTRACTION_DELTA).unwrap();
        match iterate_return_map(&start, CONTRACTION_LOOPS, &rmap) {
            Ok(o) => worst_margin = worst_margin.max(contraction_margin(&o, &rmap)),
            Err(_) => failures += 1,
        }
    }
    Line {
        id: 5,
        name: "return-map contraction",
        pass: scalar_ok && failures == 0 && worst_margin <= 1.0,
        detail: format!(
            "scalar loop exponent {mu}, max rel err {worst_rel:e} over {SCALAR_LOOPS} loops; \
             u=2 network: {CONTRACTION_STARTS} starts, worst |x'|/(Z|x|^rho) = {worst_margin:e}, failures {failures}"
        ),
    }
}

fn criterion_6() -> Line {
    let start = Instant::now();
    let stable = load_config(&common::config_path("may_leonard.json")).unwrap();
    let g = stable.glv().unwrap();
    let r = channel_experiment(&g.system().unwrap(), &g.network().unwrap(), &channel_params(&stable), Workers(None)).unwrap();
    let unstable = load_config(&common::config_path("may_leonard_unstable.json")).unwrap();
    let gu = unstable.glv().unwrap();
    let ru = channel_experiment(&gu.system().unwrap(), &gu.network().unwrap(), &channel_params(&unstable), Workers(None))
        .unwrap();
    let elapsed = start.elapsed();
    Line {
        id: 6,
        name: "channel reproduction",
        pass: r.fraction >= CHANNEL_MIN_FRACTION
            && !r.h4_flag
            && ru.fraction <= UNSTABLE_MAX_FRACTION
            && ru.h4_flag
            && elapsed < CHANNEL_TIME_LIMIT,
        detail: format!(
            "mu = 3: fraction {} of {}; mu < 1: fraction {} with H4 flag {}; {elapsed:.2?}",
            r.fraction, r.n_initial, ru.fraction, ru.h4_flag
        ),
    }
}

fn criterion_7() -> Line {
    let cfg = load_config(&common::config_path("may_leonard.json")).unwrap();
    let g = cfg.glv().unwrap();
    let study = perturb_and_redetect(
        &g.system().unwrap(),
        None,
        PERTURB_MAGNITUDE,
        PERTURB_COUNT,
        &channel_params(&cfg),
        Workers(None),
    )
    .unwrap();
    let all_valid = study.reports.iter().all(|r| r.revalidated && r.channel.is_some());
    let min_fraction = study.min_fraction();
    Line {
        id: 7,
        name: "robustness under perturbation",
        pass: study.reports.len() as u64 == PERTURB_COUNT
            && all_valid
            && min_fraction.is_some_and(|f| f >= PERTURB_MIN_FRACTION),
        detail: format!(
            "{PERTURB_COUNT} perturbations of size {PERTURB_MAGNITUDE}: all revalidate {all_valid}, min fraction {min_fraction:?}"
        ),
    }
}

fn criterion_8() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let measure_cfg = measure_network();
    let channel_cfg = load_config(&common::config_path("may_leonard.json")).unwrap();
    let mut sets: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for w in WORKER_COUNTS {
        let d = dir.path().join(format!("w{w}"));
        let mut paths = write_outputs(&d, &run_measure(&measure_cfg, &measure_options(), Workers(Some(w))).unwrap()).unwrap();
        paths.extend(write_outputs(&d, &run_channel(&channel_cfg, &channel_overrides(), Workers(Some(w))).unwrap()).unwrap());
        sets.push(
            paths
                .iter()
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
                .collect(),
        );
    }
    let identical = sets.windows(2).all(|w| w[0] == w[1]);
    let names: Vec<&str> = sets[0].iter().map(|(n, _)| n.as_str()).collect();
    Line {
        id: 8,
        name: "determinism across worker counts",
        pass: identical && names.len() == 3,
        detail: format!("files {names:?} byte-identical for workers {WORKER_COUNTS:?}: {identical}"),
    }
}

fn main() {
    let criteria: [fn() -> Line; 8] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
    ];
    let mut failed = Vec::new();
    for c in criteria {
        let line = c();
        println!(
            "acceptance criterion {} ({}): {} | {}",
            line.id,
            line.name,
            if line.pass { "PASS" } else { "FAIL" },
            line.detail
        );
        if !line.pass {
            failed.push(line.id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
