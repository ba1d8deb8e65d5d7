//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured quantities before asserting.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gibbscal::asymptotics::{
    bvm_approx, bvm_distance, estimate_risk_hessian, estimate_score_outer, oracle_learning_rate, sandwich_cov,
    HessianConfig,
};
use gibbscal::gibbs::{bissiri_objective, gibbs_weights_discrete, DiscreteGrid};
use gibbscal::gpc::{robbins_monro, GpcConfig, RegionKind};
use gibbscal::optim::{erm_fit, OptimizerConfig};
use gibbscal::regions::{elliptical_region_from_rows, hpd_density_region, hpd_interval, uniform_band};
use gibbscal::sampler::{sample_gibbs, PosteriorDraws, SamplerConfig};
use gibbscal::seed::derive_seed;
use gibbscal::sim::{consistency_diagnostic, gen_dataset, run_coverage_study, Dgp};
use gibbscal::{GibbsSpec, Prior};
use gibbscal_cli::canonical::canonical_string;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

const ROOT: u64 = 20_240_601;

fn report(id: u32, pass: bool, detail: String, start: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id}: {verdict} ({detail}; {:.1}s)", start.elapsed().as_secs_f64());
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn criterion_01_spread_decreases_with_learning_rate() {
    let start = Instant::now();
    let dgp = Dgp::gamma_quantile();
    let truth = 5.89;
    let etas = [0.1, 0.5, 1.0];
    let cfg = SamplerConfig { n_draws: 20_000, ..Default::default() };
    let mut monotone = true;
    let mut worst_mean: f64 = 0.0;
    for n in [25usize, 50] {
        for s in 0..10u64 {
            let data = gen_dataset(&dgp, n, derive_seed(ROOT, &[1, n as u64, s])).unwrap();
            let mut sds = Vec::new();
            for (k, &eta) in etas.iter().enumerate() {
                let spec = GibbsSpec::new(dgp.loss(), Prior::Flat, eta, data.clone()).unwrap();
                let draws = sample_gibbs(&spec, &cfg, derive_seed(ROOT, &[1, n as u64, s, k as u64])).unwrap();
                let col = draws.column(0);
                worst_mean = worst_mean.max((draws.mean()[0] - truth).abs());
                sds.push(sd(&col));
            }
            if !(sds[0] > sds[1] && sds[1] > sds[2]) {
                monotone = false;
                println!("  n={n} seed={s}: sds {sds:?}");
            }
        }
    }
    let pass = monotone && worst_mean <= 1.0;
    report(1, pass, format!("sd monotone in every batch: {monotone}; max |mean - 5.89| = {worst_mean:.3}"), start);
    assert!(pass);
}

#[test]
fn criterion_02_empirical_consistency() {
    let start = Instant::now();
    let rows =
        consistency_diagnostic(&Dgp::gamma_quantile(), &[50, 200, 800], 0.5, 1.0, 20, &SamplerConfig::default(), ROOT)
            .unwrap();
    let p: Vec<f64> = rows.iter().map(|r| r.prob).collect();
    let pass = p[0] > p[1] && p[1] > p[2] && p[2] < 0.05;
    report(2, pass, format!("P(|θ-θ*| > 0.5) at n=50,200,800: {p:?}"), start);
    assert!(pass);
}

#[test]
fn criterion_03_oracle_rate_quantile_regression() {
    let start = Instant::now();
    let dgp = Dgp::quantile_regression();
    let data = gen_dataset(&dgp, 100_000, derive_seed(ROOT, &[3])).unwrap();
    let theta = [2.0, 1.0];
    let v = estimate_risk_hessian(&dgp.loss(), &data, &theta, &HessianConfig::default()).unwrap().matrix;
    let s = estimate_score_outer(&dgp.loss(), &data, &theta).unwrap();
    let sigma = sandwich_cov(&v, &s).unwrap().sigma;
    let eta = oracle_learning_rate(&sigma, &v).unwrap();
    let pass = (0.88..=0.98).contains(&eta);
    report(3, pass, format!("oracle eta = {eta:.4}, reference 1.25^(-1/3) = {:.4}", 1.25f64.powf(-1.0 / 3.0)), start);
    assert!(pass);
}

#[test]
fn criterion_04_gpc_quantile_regression() {
    let start = Instant::now();
    let dgp = Dgp::quantile_regression();
    let cfg = GpcConfig { alpha: 0.05, b: 200, max_iter: 15, region_kind: RegionKind::Elliptical, ..Default::default() };
    let r = run_coverage_study(&dgp, 50, &cfg, 100, derive_seed(ROOT, &[4]), true).unwrap();
    let cov_ok = r.coverage.iter().all(|c| (0.88..=0.99).contains(c));
    let pass = (0.75..=1.25).contains(&r.mean_eta_hat) && cov_ok && r.reps_completed == 100;
    report(
        4,
        pass,
        format!(
            "mean eta = {:.3} (sd {:.3}); marginal coverage {:?}; joint {:.2}; failed {}",
            r.mean_eta_hat, r.sd_eta_hat, r.coverage, r.joint_coverage, r.failed
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_05_gpc_hinge_classification() {
    let start = Instant::now();
    let dgp = Dgp::HingeClassification;
    let cfg = GpcConfig { region_kind: RegionKind::Elliptical, ..Default::default() };
    let r = run_coverage_study(&dgp, 400, &cfg, 50, derive_seed(ROOT, &[5]), true).unwrap();
    let pass = (0.60..=0.95).contains(&r.mean_eta_hat) && r.coverage[1] >= 0.93 && r.reps_completed == 50;
    report(
        5,
        pass,
        format!(
            "mean eta = {:.3} (sd {:.3}); coverage theta1 = {:.2}, theta0 = {:.2}; failed {}",
            r.mean_eta_hat, r.sd_eta_hat, r.coverage[1], r.coverage[0], r.failed
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_06_bvm_distance() {
    let start = Instant::now();
    let dgp = Dgp::gamma_quantile();
    let loss = dgp.loss();
    let data = gen_dataset(&dgp, 2000, derive_seed(ROOT, &[6])).unwrap();
    let hat = erm_fit(&loss, &data, &OptimizerConfig::default()).unwrap().theta.into_vec();
    let v = estimate_risk_hessian(&loss, &data, &hat, &HessianConfig::default()).unwrap().matrix;
    let approx = bvm_approx(1.0, &hat, &hat, &v, 2000).unwrap();
    let spec = GibbsSpec::new(loss, Prior::Flat, 1.0, data).unwrap();
    let draws = sample_gibbs(&spec, &SamplerConfig { n_draws: 50_000, ..Default::default() }, ROOT).unwrap();
    let d = bvm_distance(&draws, &approx).unwrap();
    let pass = d < 0.05;
    report(6, pass, format!("KS distance = {d:.4}"), start);
    assert!(pass);
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

#[test]
fn criterion_07_gibbs_weights_minimize_objective() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT);
    let mut violations = 0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(2..=50);
        let prior = random_simplex(&mut rng, k);
        let risks: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0).collect();
        let eta = 0.1 + rng.random::<f64>() * 2.0;
        let n = rng.random_range(1..200);
        let points = (0..k).map(|j| vec![j as f64]).collect();
        let grid = DiscreteGrid::new(points, prior.clone(), risks.clone()).unwrap();
        let w = gibbs_weights_discrete(&grid, eta, n).unwrap();
        let best = bissiri_objective(&grid, &w, eta, n).unwrap();
        for p in 0..100 {
            let other = if p % 2 == 0 {
                random_simplex(&mut rng, k)
            } else {
                let scale = 10f64.powf(-(p % 7) as f64);
                normalized(w.iter().map(|x| x * (scale * rng.sample::<f64, _>(StandardNormal)).exp()).collect())
            };
            if bissiri_objective(&grid, &other, eta, n).unwrap() < best - 1e-12 {
                violations += 1;
            }
        }
        // Two-point sub-problem against brute-force enumeration.
        let two = DiscreteGrid::new(vec![vec![0.0], vec![1.0]], normalized(prior[..2].to_vec()), risks[..2].to_vec())
            .unwrap();
        let w2 = gibbs_weights_discrete(&two, eta, n).unwrap();
        let at_gibbs = bissiri_objective(&two, &w2, eta, n).unwrap();
        let f = |q: f64| bissiri_objective(&two, &[q, 1.0 - q], eta, n).unwrap();
        let m = 100_000;
        let (mut arg, mut val) = (0usize, f64::INFINITY);
        for i in 0..=m {
            let v = f(i as f64 / m as f64);
            if v < val {
                arg = i;
                val = v;
            }
        }
        let lo = arg.saturating_sub(1) as f64 / m as f64;
        let hi = (arg + 1).min(m) as f64 / m as f64;
        let brute = golden_min(f, lo, hi).min(val);
        worst_gap = worst_gap.max((at_gibbs - brute).abs());
    }
    let pass = violations == 0 && worst_gap < 1e-8;
    report(7, pass, format!("perturbation violations = {violations}; max |gibbs - brute force| = {worst_gap:.2e}"), start);
    assert!(pass);
}

#[test]
fn criterion_08_robbins_monro_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT + 8);
    let alpha = 0.05;
    let cfg = GpcConfig { alpha, kappa0: 20.0, gamma_exp: 0.51, max_iter: 50, tol: 1e-6, ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut identity = true;
    let mut max_len = 0;
    for _ in 0..20 {
        let root = 0.5 + 1.5 * rng.random::<f64>();
        let res = robbins_monro(&cfg, |eta, _| Ok(((1.0 - alpha * eta / root).clamp(0.0, 1.0), 0)), |_| {}).unwrap();
        for e in &res.trace {
            identity &= e.eta_next_raw == e.eta + e.kappa * (e.c_hat - (1.0 - alpha))
                && e.eta_next == e.eta_next_raw.clamp(cfg.eta_bounds.0, cfg.eta_bounds.1)
                && e.kappa == cfg.step_size(e.s);
        }
        identity &= res.trace.windows(2).all(|w| w[1].eta == w[0].eta_next);
        max_len = max_len.max(res.trace.len());
        worst = worst.max((res.eta_hat - root).abs());
    }
    let pass = worst < 0.02 && identity && max_len <= 50;
    report(8, pass, format!("max |eta_hat - root| = {worst:.2e}; iterations <= {max_len}; update identity exact: {identity}"), start);
    assert!(pass);
}

#[test]
fn criterion_09_region_constructors() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT + 9);
    let mut normals = |m: usize| -> Vec<f64> { (0..m).map(|_| rng.sample(StandardNormal)).collect() };
    let m = 100_000;
    let z = normals(m);
    let hpd = hpd_interval(&z, 0.05).unwrap();
    let hpd_ok = (hpd.lo + 1.96).abs() <= 0.03 && (hpd.hi - 1.96).abs() <= 0.03;
    let z2 = normals(2 * m);
    let ell = elliptical_region_from_rows(&z2, 2, 0.05).unwrap();
    let ell_ok = (ell.threshold - 5.991).abs() <= 0.15;
    let z5 = normals(5 * m);
    let band = uniform_band(&z5, &[0.0, 0.25, 0.5, 0.75, 1.0], 0.05).unwrap();
    let mut maxes: Vec<f64> =
        normals(5 * m).chunks(5).map(|c| c.iter().fold(0.0f64, |a, v| a.max(v.abs()))).collect();
    maxes.sort_by(f64::total_cmp);
    let oracle = maxes[(0.95 * m as f64).ceil() as usize - 1];
    let band_ok = (band.radius - oracle).abs() <= 0.05;

    let tol = 1.0 / m as f64 + 1e-12;
    let frac = |hits: usize| hits as f64 / m as f64;
    let f_hpd = frac(z.iter().filter(|v| hpd.contains(**v)).count());
    let f_ell = frac(z2.chunks(2).filter(|p| ell.contains(p).unwrap()).count());
    let f_band = frac(z5.chunks(5).filter(|c| band.contains(c).unwrap()).count());
    let lp: Vec<f64> = z.iter().map(|v| -0.5 * v * v).collect();
    let draws = PosteriorDraws::from_parts(z.clone(), 1, lp, 1.0, 0).unwrap();
    let f_dens = hpd_density_region(&draws, 0.05).unwrap().retained_fraction();
    let fr_ok = [f_hpd, f_ell, f_band, f_dens].iter().all(|f| (f - 0.95).abs() <= tol);
    let pass = hpd_ok && ell_ok && band_ok && fr_ok;
    report(
        9,
        pass,
        format!(
            "hpd [{:.3}, {:.3}]; ellipse threshold {:.3}; band radius {:.3} vs {:.3}; fractions {:?}",
            hpd.lo,
            hpd.hi,
            ell.threshold,
            band.radius,
            oracle,
            [f_hpd, f_ell, f_band, f_dens]
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_10_uniform_bands() {
    let start = Instant::now();
    let dgp = Dgp::NonlinearRegression;
    let (kind, grid) = dgp.default_region();
    // The squared-error posterior is far too wide at η = 1 and the bootstrap
    // root sits near η ≈ 10, so the steps are scaled up accordingly.
    let cfg = GpcConfig { region_kind: kind, band_grid: grid, kappa0: 50.0, b: 200, ..Default::default() };
    let r = run_coverage_study(&dgp, 100, &cfg, 100, derive_seed(ROOT, &[10]), true).unwrap();
    let pass = r.joint_coverage >= 0.88 && r.reps_completed == 100;
    report(
        10,
        pass,
        format!("band coverage = {:.2}; mean eta = {:.2} (sd {:.2}); failed {}", r.joint_coverage, r.mean_eta_hat, r.sd_eta_hat, r.failed),
        start,
    );
    assert!(pass);
}

fn run_cli(cmd: &str, cfg: &Path, workers: usize, out: &Path) -> Value {
    let status = Command::new(env!("CARGO_BIN_EXE_gibbscal"))
        .args([cmd, "--config", cfg.to_str().unwrap(), "--workers", &workers.to_string(), "--out", out.to_str().unwrap()])
        .env_remove("GIBBSCAL_WORKERS")
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "{cmd} failed");
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn criterion_11_cli_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let small = r#""sampler":{"n_draws":800,"burn_in":400},"gpc":{"B":24,"max_iter":3,"region_kind":"elliptical","sampler":{"n_draws":400,"burn_in":200}}"#;
    let configs = [
        ("fit", format!(r#"{{"command":"fit","dgp":{{"kind":"hinge-classification"}},"n":200,"seed":11}}"#)),
        ("sample", format!(r#"{{"command":"sample","dgp":{{"kind":"quantile-regression"}},"seed":11,{small}}}"#)),
        ("calibrate", format!(r#"{{"command":"calibrate","dgp":{{"kind":"quantile-regression"}},"seed":11,{small}}}"#)),
        (
            "simulate",
            format!(r#"{{"command":"simulate","dgp":{{"kind":"quantile-regression"}},"seed":11,"study":{{"reps":6}},{small}}}"#),
        ),
        (
            "curve",
            r#"{"command":"curve","dgp":{"kind":"mcid"},"seed":11,"curve":{"n_list":[40,80],"eta_grid":[0.5,2.0],"reps":8},"gpc":{"sampler":{"n_draws":400,"burn_in":200}}}"#
                .to_string(),
        ),
        ("diagnose", format!(r#"{{"command":"diagnose","dgp":{{"kind":"gamma-quantile"}},"n":300,"seed":11,{small}}}"#)),
    ];
    let mut mismatches = Vec::new();
    for (cmd, text) in &configs {
        let cfg = dir.path().join(format!("{cmd}.json"));
        std::fs::write(&cfg, text).unwrap();
        let mut payloads = Vec::new();
        let mut tables = Vec::new();
        for (i, workers) in [1usize, 1, 8, 8].iter().enumerate() {
            let out = dir.path().join(format!("{cmd}-{i}.json"));
            let doc = run_cli(cmd, &cfg, *workers, &out);
            payloads.push(canonical_string(&doc["payload"]));
            tables.push(std::fs::read(out.with_extension("csv")).ok());
        }
        if payloads.iter().any(|p| *p != payloads[0]) || tables.iter().any(|t| *t != tables[0]) {
            mismatches.push(*cmd);
        }
    }
    let pass = mismatches.is_empty();
    report(11, pass, format!("6 commands x workers {{1,1,8,8}}; mismatching: {mismatches:?}"), start);
    assert!(pass);
}
