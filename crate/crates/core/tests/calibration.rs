use gibbscal::gibbs::Prior;
use gibbscal::gpc::{bootstrap_resample, estimate_coverage_boot, robbins_monro, GpcConfig, Termination};
use gibbscal::sampler::SamplerConfig;
use gibbscal::sim::{gen_dataset, Dgp};
use gibbscal::stats::std_normal_cdf;
use gibbscal::DataSet;

fn small_cfg() -> GpcConfig {
    GpcConfig { b: 50, sampler: SamplerConfig { n_draws: 1000, burn_in: 500, ..Default::default() }, ..Default::default() }
}

#[test]
fn two_point_resample_probabilities() {
    let d = DataSet::from_scalars(vec![1.0, 2.0]).unwrap();
    let hits = (0..10_000u64)
        .filter(|&s| bootstrap_resample(&d, s).values() == [1.0, 1.0])
        .count();
    assert!((hits as f64 / 10_000.0 - 0.25).abs() < 0.02, "{hits}");
}

#[test]
fn near_flat_posterior_always_covers() {
    let dgp = Dgp::gamma_quantile();
    let data = gen_dataset(&dgp, 50, 2).unwrap();
    let cfg = small_cfg();
    let est = estimate_coverage_boot(cfg.eta_bounds.0, &data, &dgp.loss(), &Prior::Flat, &cfg, 4).unwrap();
    assert_eq!(est.c_hat, 1.0);
    assert_eq!(est.failed, 0);
}

#[test]
fn coverage_estimate_is_reproducible_and_falls_with_eta() {
    let dgp = Dgp::quantile_regression();
    let data = gen_dataset(&dgp, 50, 3).unwrap();
    let cfg = GpcConfig { region_kind: gibbscal::RegionKind::Elliptical, ..small_cfg() };
    let at = |eta: f64| estimate_coverage_boot(eta, &data, &dgp.loss(), &Prior::Flat, &cfg, 8).unwrap();
    let a = at(1.0);
    assert_eq!(a, at(1.0));
    assert!(at(0.05).c_hat >= at(20.0).c_hat);
}

// Asymptotic coverage of a BvM credible interval centred at ηθ̂ + (1−η)θ*:
// c(η) = 2Φ(z / √(η³γ)) − 1, whose root at 1−α is η = γ^{-1/3}.
#[test]
fn robbins_monro_recovers_asymptotic_calibration() {
    let z = 1.959963984540054;
    for gamma in [0.5, 1.0, 1.25, 3.0] {
        let cfg = GpcConfig { kappa0: 3.0, max_iter: 1000, tol: 1e-5, ..Default::default() };
        let res = robbins_monro(
            &cfg,
            |eta, _| Ok((2.0 * std_normal_cdf(z / (eta.powi(3) * gamma).sqrt()) - 1.0, 0)),
            |_| {},
        )
        .unwrap();
        let target = gamma.powf(-1.0 / 3.0);
        assert!((res.eta_hat - target).abs() < 1e-3, "gamma {gamma}: {} vs {target}", res.eta_hat);
        assert_eq!(res.terminated_by, Termination::Tolerance);
    }
}

#[test]
fn calibration_trace_obeys_update() {
    let dgp = Dgp::gamma_quantile();
    let data = gen_dataset(&dgp, 40, 5).unwrap();
    let cfg = GpcConfig { max_iter: 4, ..small_cfg() };
    let mut seen = Vec::new();
    let res = gibbscal::gpc::gpc_calibrate_with(&data, &dgp.loss(), &Prior::Flat, &cfg, 1, |e| seen.push(e.clone()))
        .unwrap();
    assert_eq!(seen, res.trace);
    assert!(res.trace.len() <= 4);
    let mut eta = cfg.eta0;
    for (s, e) in res.trace.iter().enumerate() {
        assert_eq!(e.s, s + 1);
        assert_eq!(e.eta, eta);
        assert_eq!(e.eta_next_raw, e.eta + cfg.step_size(e.s) * (e.c_hat - 0.95));
        eta = e.eta_next;
    }
    assert_eq!(res.eta_hat, eta);
    assert!(res.total_posterior_samples_run >= 50 * res.trace.len());
}
