mod common;

use hetnet::config::load_config;
use hetnet::glv::{
    axis_equilibria, channel_experiment, detect_itinerary, glv_options, may_leonard, network_centers,
    network_from_glv, perturb_and_redetect, simulate, ChannelParams, GlvSystem,
};
use hetnet::network::validate_hypotheses;
use hetnet::sampling::Workers;
use proptest::prelude::*;

fn may_leonard_config() -> (GlvSystem, ChannelParams) {
    let cfg = load_config(&common::config_path("may_leonard.json")).unwrap();
    let g = cfg.glv().unwrap();
    (g.system().unwrap(), g.channel_params())
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn axis_equilibria_do_not_drift() {
    let sys = may_leonard(0.8, 1.6);
    let opts = glv_options(1e-10, 1e-12);
    for eq in axis_equilibria(&sys) {
        let traj = simulate(&sys, &eq.state, 100.0, &opts).unwrap();
        let drift = traj.states.iter().map(|x| max_dist(x, &eq.state)).fold(0.0, f64::max);
        assert!(drift <= 10.0 * opts.abs_tol, "{}: drift {drift:e}", eq.label);
    }
}

#[test]
fn absent_species_stay_absent() {
    let sys = may_leonard(0.8, 1.6);
    let traj = simulate(&sys, &[0.5, 0.4, 0.0], 200.0, &glv_options(1e-8, 1e-10)).unwrap();
    assert!(traj.states.iter().all(|x| x[2] == 0.0));
}

#[test]
fn axis_eigenvalues_match_numerical_jacobian_spectrum() {
    for sys in [may_leonard(0.8, 1.6), may_leonard(0.3, 2.2)] {
        for eq in axis_equilibria(&sys) {
            let ev = sys.jacobian(&eq.state).complex_eigenvalues();
            let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
            assert!(ev.iter().all(|z| z.im.abs() < 1e-12));
            re.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in re.iter().zip(&eq.eigenvalues) {
                assert!((a - b).abs() < 1e-10, "{}: {a} vs {b}", eq.label);
            }
        }
    }
}

#[test]
fn trajectory_visits_saddles_in_cycle_order_with_growing_residence() {
    let (sys, _) = may_leonard_config();
    let net = network_from_glv(&sys, None).unwrap();
    let (labels, centers) = network_centers(&sys, &net).unwrap();
    let traj = simulate(&sys, &[0.5, 0.4, 0.3], 300.0, &glv_options(1e-10, 1e-12)).unwrap();
    let it = detect_itinerary(&traj, &labels, &centers, 0.1).unwrap();
    let seq = it.labels();
    assert!(seq.len() >= 4, "{seq:?}");
    for w in seq.windows(2) {
        assert!(net.strong_connection(w[0], w[1]).is_some(), "{} -> {}", w[0], w[1]);
    }
    let stays: Vec<f64> = it.visits.iter().filter(|v| v.completed).map(|v| v.exit - v.entry).collect();
    assert!(stays.len() >= 3, "{stays:?}");
    for w in stays.windows(2) {
        assert!(w[1] > w[0], "{stays:?}");
    }
}

#[test]
fn halving_tolerance_converges() {
    let sys = may_leonard(0.8, 1.6);
    let x0 = [0.5, 0.4, 0.3];
    let end = |tol: f64| simulate(&sys, &x0, 20.0, &glv_options(tol, tol)).unwrap().states.last().unwrap().clone();
    let reference = end(1e-13);
    let errors: Vec<f64> = [1e-6, 5e-7, 2.5e-7, 1.25e-7].iter().map(|t| max_dist(&end(*t), &reference)).collect();
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
    assert!(errors[0] < 1e-4);
}

#[test]
fn four_species_network_validates_and_is_followed() {
    let cfg = load_config(&common::config_path("four_species_u2.json")).unwrap();
    let g = cfg.glv().unwrap();
    let net = g.network().unwrap();
    let v = validate_hypotheses(&net);
    assert!(v.passed, "{:?}", v.violations);
    assert_eq!(net.principal_length, 3);
    assert_eq!(net.equilibria.len(), 4);
    assert_eq!(net.equilibrium("p1").unwrap().unstable_dim(), 2);
    let mut params = g.channel_params();
    params.n_samples = 100;
    let r = channel_experiment(&g.system().unwrap(), &net, &params, Workers(None)).unwrap();
    assert!(r.fraction >= 0.9, "{r:?}");
}

#[test]
fn zero_perturbation_reproduces_baseline() {
    let (sys, mut params) = may_leonard_config();
    params.n_samples = 50;
    let net = network_from_glv(&sys, None).unwrap();
    let base = channel_experiment(&sys, &net, &params, Workers(None)).unwrap();
    let study = perturb_and_redetect(&sys, None, 0.0, 2, &params, Workers(None)).unwrap();
    assert!(!study.exceeds_guideline);
    for r in &study.reports {
        assert!(r.revalidated && !r.flagged);
        assert_eq!(r.channel.as_ref(), Some(&base));
    }
}

#[test]
fn large_perturbation_is_flagged() {
    let (sys, mut params) = may_leonard_config();
    params.n_samples = 20;
    let study = perturb_and_redetect(&sys, None, 0.7, 6, &params, Workers(None)).unwrap();
    assert!(study.exceeds_guideline);
    assert!(study.reports.iter().any(|r| r.flagged), "{:?}", study.reports);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_orthant_is_invariant(x0 in proptest::collection::vec(0.0f64..2.0, 3), a in 0.1f64..1.0, b in 1.1f64..2.5) {
        let sys = may_leonard(a, b);
        let traj = simulate(&sys, &x0, 50.0, &glv_options(1e-8, 1e-10)).unwrap();
        for x in &traj.states {
            prop_assert!(x.iter().all(|v| *v >= 0.0));
        }
    }
}
