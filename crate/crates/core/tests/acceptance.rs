//! End-to-end acceptance run. Each test checks one criterion at its stated
//! tolerance and prints a single PASS/FAIL line.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nlg_core::cells::{estimate_f_bulk, estimate_f_surf, Sweep};
use nlg_core::denoise::{denoise, evaluate, TwoRegion};
use nlg_core::energy::{energy_total, reference_energies, tail_gap};
use nlg_core::grid::{make_grid, sample_testfn, Field, GridDomain, TestFunction};
use nlg_core::integrands::{IntegrandFamily, Sampler};
use nlg_core::kernels::{admissibility_report, kappa, limit_constants, make_eps_kernel, make_kernel, KernelSetup};
use nlg_core::minimize::{brute_force_tiny, dirichlet_minimum, minimize_gnc, DirichletSpec, Problem, Quantization, Schedule};
use nlg_core::suites::run_all;
use nlg_core::DEFAULT_SEED;

fn report(n: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn line(lo: f64, hi: f64, h: f64) -> Arc<GridDomain> {
    Arc::new(make_grid(&[lo], &[hi], h).unwrap())
}

fn box_setup() -> KernelSetup {
    KernelSetup::reference(make_kernel("box:0.5,1", 1).unwrap())
}

fn reference() -> IntegrandFamily {
    IntegrandFamily::reference(&box_setup(), 1).unwrap()
}

fn h_family() -> IntegrandFamily {
    let rho = make_kernel("box:0.5,1", 1).unwrap();
    let psi = make_eps_kernel("normalized:box:0.5,1", 1).unwrap();
    let setup = KernelSetup::new(rho.clone(), rho, psi, make_eps_kernel("zero", 1).unwrap()).unwrap();
    IntegrandFamily::composite(&setup, 1).unwrap()
}

fn eps_halving() -> Vec<f64> {
    (4..=8).map(|k| 2f64.powi(-k)).collect()
}

#[test]
fn gradient_limit_constant() {
    let t0 = Instant::now();
    let f = reference();
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for eps in eps_halving() {
        let g = line(0.0, 1.0, eps / 8.0);
        let u = Field::scalar(g.clone(), |x| x[0]);
        let v = energy_total(&f, &u, g.all(), eps, 1.0).unwrap().total;
        worst = worst.max((v - (1.0 / 3.0 - eps / 4.0)).abs() / (1.0 / 3.0));
        values.push(format!("{v:.5}"));
    }
    let elapsed = t0.elapsed();
    let pass = worst <= 0.01 && elapsed < Duration::from_secs(10);
    report(1, "gradient limit", pass, format!("G = [{}], max rel dev {worst:.2e}, {elapsed:.2?}", values.join(", ")));
    assert!(pass);
}

#[test]
fn jump_limit_constant() {
    let t0 = Instant::now();
    let f = reference();
    let eps = 1.0 / 256.0;
    let g = line(0.0, 1.0, eps / 8.0);
    let u = sample_testfn(&TestFunction::step(&[0.5], &[1.0], &[1.0]), &g).unwrap();
    let v = energy_total(&f, &u, g.all(), eps, 1.0).unwrap().total;
    let consts = limit_constants(&box_setup().rho1, 1).unwrap();
    let elapsed = t0.elapsed();
    let err = (v - 0.5).abs() / 0.5;
    let pass = err <= 0.05 && (consts.mu_formula - 2.0).abs() < 1e-9 && elapsed < Duration::from_secs(10);
    report(
        2,
        "jump limit",
        pass,
        format!("G = {v:.5}, rel err {err:.2e}, derived surface {:.5}, formula mu = {:.5}, {elapsed:.2?}", consts.surface(), consts.mu_formula),
    );
    assert!(pass);
}

#[test]
fn total_variation_limit() {
    let t0 = Instant::now();
    let rho = make_kernel("box:0.5,1", 1).unwrap();
    let psi = make_eps_kernel("normalized:box:0.5,1", 1).unwrap();
    let setup = KernelSetup::new(rho.clone(), rho, psi, make_eps_kernel("zero", 1).unwrap()).unwrap();
    let eps = 1.0 / 256.0;
    let g = line(0.0, 1.0, eps / 8.0);
    let tf = TestFunction::staircase(&[0.25, 0.5, 0.75], &[1.0, 1.0, 1.0]).unwrap();
    let u = sample_testfn(&tf, &g).unwrap();
    let p = reference_energies(&setup, &u, g.all(), eps, 1.0).unwrap().components.unwrap().p;
    let elapsed = t0.elapsed();
    let err = (p - 3.0).abs() / 3.0;
    let pass = err <= 0.05 && elapsed < Duration::from_secs(10);
    report(3, "total variation limit", pass, format!("P = {p:.5}, kappa = {}, rel err {err:.2e}, {elapsed:.2?}", kappa(1)));
    assert!(pass);
}

#[test]
fn truncation_gap() {
    let f = IntegrandFamily::reference(&KernelSetup::reference(make_kernel("gaussian:1,1", 1).unwrap()), 1).unwrap();
    let eps = 0.01;
    let g = line(0.0, 1.0, eps / 8.0);
    let u = Field::scalar(g.clone(), |x| x[0]);
    let t_max = 32.0;
    let rows: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&t| {
            let r = tail_gap(&f, &u, g.all(), eps, t, t_max).unwrap();
            (t, r.gap, r.moment_bound)
        })
        .collect();
    let at2 = rows[1].1;
    let monotone = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let bounded = rows.iter().all(|r| r.1 <= r.2);
    let pass = (at2 - 0.0225).abs() <= 0.05 * 0.0225 && monotone && bounded;
    let detail: Vec<String> = rows.iter().map(|r| format!("T={}: {:.5} <= {:.3e}", r.0, r.1, r.2)).collect();
    report(4, "truncation", pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn property_suites() {
    let rho = make_kernel("box:0.5,1", 1).unwrap();
    let gauss2 = make_kernel("gaussian:1,1", 2).unwrap();
    let families = vec![
        ("reference", reference(), Sampler::new(1)),
        ("composite", h_family(), Sampler::new(1)),
        ("arctan", IntegrandFamily::arctan(&gauss2, 2).unwrap(), Sampler::new(2)),
        ("periodic", IntegrandFamily::periodic(&rho, 1.0, 2.0, 1).unwrap(), Sampler::new(1)),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, f, s) in &families {
        assert_eq!(s.samples, 10_000);
        for r in run_all(f, s).unwrap() {
            pass &= r.pass;
            if !r.pass {
                detail.push(format!("{name}/{}", r.csv_row()));
            }
        }
    }
    let summary = if detail.is_empty() { "7 suites x 4 families, 1e4 samples each".to_string() } else { detail.join("; ") };
    report(5, "property suites", pass, summary);
    assert!(pass);
}

fn tiny_instances() -> Vec<(&'static str, TestFunction)> {
    let c = [11.0 / 32.0];
    vec![
        ("step", TestFunction::step(&c, &[1.0], &[1.0])),
        ("step2", TestFunction::step(&c, &[2.0], &[1.0])),
        ("step_off", TestFunction::step(&[0.3], &[1.0], &[1.0])),
        ("step_down", TestFunction::step(&c, &[-1.0], &[1.0])),
        ("affine1", TestFunction::affine(&[0.0], &[1.0], 1)),
        ("affine4", TestFunction::affine(&[0.0], &[4.0], 1)),
        ("affine_jump", TestFunction::affine_with_jump(&[0.0], &[1.0], &c, &[1.0], &[1.0])),
        ("affine_jump_neg", TestFunction::affine_with_jump(&[0.5], &[-2.0], &c, &[1.0], &[1.5])),
        ("stairs", TestFunction::staircase(&[0.25, 0.45], &[0.5, 0.5]).unwrap()),
        ("zero", TestFunction::affine(&[0.0], &[0.0], 1)),
    ]
}

#[test]
fn oracle_equivalence() {
    let t0 = Instant::now();
    let f = reference();
    let h = 1.0 / 16.0;
    let eps = 2.0 * h;
    let mut pass = true;
    let mut detail = Vec::new();
    let mut single_ok = 0;
    for (name, tf) in tiny_instances() {
        let spec = DirichletSpec::new(tf, 1.0, &[0.0], &[11.0 * h]);
        let p = Problem::dirichlet(&spec, h, eps, 1.0).unwrap();
        assert!(p.free_nodes().len() <= 8);
        let fixed: Vec<f64> = (0..p.fixed.len()).filter(|&i| p.fixed[i]).map(|i| p.init.values[i]).collect();
        let lo = fixed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let oracle = brute_force_tiny(&f, &p, Quantization { levels: 9, lo, hi }).unwrap();
        let single = minimize_gnc(&f, &p, None, &Schedule::default()).unwrap();
        let gnc = dirichlet_minimum(&f, &spec, h, eps, 1.0, 5, DEFAULT_SEED, &Schedule::default()).unwrap();
        let gap = oracle.level_gap.unwrap();
        let diff = (gnc.result.value - oracle.value).abs();
        let ok = diff <= gap;
        pass &= ok;
        if (single.value - oracle.value).abs() <= gap {
            single_ok += 1;
        }
        detail.push(format!(
            "{name}: |{:.4} - {:.4}| <= {:.4} {} (start {}, datum-only {:.4})",
            gnc.result.value,
            oracle.value,
            gap,
            if ok { "ok" } else { "x" },
            gnc.restart,
            single.value
        ));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    for d in &detail {
        println!("    {d}");
    }
    report(6, "oracle equivalence", pass, format!("10 instances, datum-only start within gap on {single_ok}/10, {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn bulk_density() {
    let f = reference();
    let setup = box_setup();
    let lambda = limit_constants(&setup.rho1, 1).unwrap().lambda;
    let lambda_eta = admissibility_report(&setup, &eps_halving()).lambda_eta;
    let sweep = Sweep::default();
    let mut pass = true;
    let mut values = Vec::new();
    let mut detail = Vec::new();
    for l in [0.5, 1.0, 2.0] {
        let t0 = Instant::now();
        let est = estimate_f_bulk(&f, &[0.5], &[l], &sweep).unwrap();
        let elapsed = t0.elapsed();
        let v = est.extrapolated.value;
        let target = lambda * l * l;
        let lower = lambda * l * l;
        let upper = lambda * l * l + kappa(1) * l + lambda_eta;
        let ok = (v - target).abs() <= 0.05 * target
            && v >= lower * 0.95
            && v <= upper * 1.05
            && elapsed < Duration::from_secs(60);
        pass &= ok;
        values.push(v);
        detail.push(format!("L={l}: {v:.5} vs {target:.5} [{elapsed:.2?}]"));
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    pass &= monotone;
    report(7, "bulk density", pass, format!("{}; monotone {monotone}", detail.join("; ")));
    assert!(pass);
}

#[test]
fn surface_density() {
    let sweep = Sweep::default();
    let f = reference();
    let s1 = estimate_f_surf(&f, &[0.5], &[1.0], &[1.0], &sweep).unwrap().extrapolated.value;
    let s2 = estimate_f_surf(&f, &[0.5], &[2.0], &[1.0], &sweep).unwrap().extrapolated.value;
    let s1m = estimate_f_surf(&f, &[0.5], &[1.0], &[-1.0], &sweep).unwrap().extrapolated.value;
    let hv = estimate_f_surf(&h_family(), &[0.5], &[1.0], &[1.0], &sweep).unwrap().extrapolated.value;
    let within = |v: f64, t: f64, tol: f64| (v - t).abs() <= tol * t;
    let pass = within(s1, 0.5, 0.10)
        && within(s2, 0.5, 0.10)
        && within(s2, s1, 0.05)
        && within(hv, 1.5, 0.10)
        && within(s1m, s1, 0.02);
    report(
        8,
        "surface density",
        pass,
        format!("zeta=1: {s1:.5}, zeta=2: {s2:.5}, -nu: {s1m:.5}, composite: {hv:.5}"),
    );
    assert!(pass);
}

#[test]
fn homogenisation_sandwich() {
    let rho = make_kernel("box:0.5,1", 1).unwrap();
    let lambda = limit_constants(&rho, 1).unwrap().lambda;
    let f = IntegrandFamily::periodic(&rho, 1.0, 2.0, 1).unwrap();
    let base = estimate_f_bulk(&f, &[0.5], &[1.0], &Sweep::default()).unwrap();
    let shifted = estimate_f_bulk(&f, &[0.5], &[1.0], &Sweep { anchor_shift: 0.5, ..Sweep::default() }).unwrap();
    let (a, b) = (base.extrapolated.value, shifted.extrapolated.value);
    let pass = base.homogenised && a >= lambda && a <= 2.0 * lambda && (b - a).abs() <= 0.05 * a;
    report(9, "homogenisation sandwich", pass, format!("{a:.5} in [{lambda:.5}, {:.5}], shifted {b:.5}", 2.0 * lambda));
    assert!(pass);
}

#[test]
fn denoising_demo() {
    let t0 = Instant::now();
    let f = IntegrandFamily::reference(&KernelSetup::reference(make_kernel("box:1,1", 2).unwrap()), 1).unwrap();
    let scene = TwoRegion::default();
    let noisy = scene.noisy(0.1, DEFAULT_SEED).unwrap();
    let h = noisy.domain.h;
    let out = denoise(&f, &noisy, 2.0 * h, 1.0, 200.0, &Schedule::default()).unwrap();
    let m = evaluate(&scene, &noisy, &out.minimizer);
    let elapsed = t0.elapsed();
    let pass = m.pass() && elapsed < Duration::from_secs(120);
    report(
        10,
        "denoising",
        pass,
        format!(
            "variance {:.2e} -> {:.2e} ({:.1}x), misclassified {}, edge offset {}px, {elapsed:.2?}",
            m.noisy_variance, m.restored_variance, m.variance_reduction, m.misclassified, m.max_edge_offset
        ),
    );
    assert!(pass);
}
