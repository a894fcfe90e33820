use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use nlg_core::cells::{estimate_f_bulk, estimate_f_surf, CellEstimate, Sweep};
use nlg_core::denoise::{denoise, evaluate, TwoRegion};
use nlg_core::energy::{continuum_limit_value, energy_total, reference_energies, tail_gap};
use nlg_core::grid::sample_testfn;
use nlg_core::integrands::{IntegrandFamily, Sampler};
use nlg_core::io::{read_pgm, write_pgm, GrayScale, PgmFormat};
use nlg_core::kernels::{admissibility_report, limit_constants, make_kernel, KernelSetup};
use nlg_core::minimize::{brute_force_tiny, dirichlet_minimum, DirichletSpec, Problem, Quantization};
use nlg_core::suites::run_all;

use crate::config::Config;
use crate::output::Output;

pub struct Run<'a> {
    pub cfg: &'a Config,
    pub out: Output,
    pub seed: u64,
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

pub fn kernels(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let setup = cfg.setup()?;
    let d = cfg.dim()?;
    let mut rows = Vec::new();
    let c1 = limit_constants(&setup.rho1, d)?;
    for (k, v) in c1.rows() {
        rows.push((k, v));
    }
    if cfg.get("kernel.rho2").is_some() {
        let c2 = limit_constants(&setup.rho2, d)?;
        for (k, v) in c2.rows() {
            rows.push((format!("rho2.{k}"), v));
        }
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(4);
    println!("{:width$}  value", "name");
    for (k, v) in &rows {
        println!("{k:width$}  {v:.12e}");
    }
    let csv: Vec<String> = rows.iter().map(|(k, v)| format!("{k},{v:.12e}")).collect();
    run.out.write_csv("constants.csv", "name,value", &csv)?;
    let adm = admissibility_report(&setup, &cfg.eps_list()?);
    for c in &adm.conditions {
        run.out.check(&format!("admissibility {}", c.name), c.pass, c.detail.clone());
    }
    Ok(())
}

pub fn energy(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.family()?;
    let setup = cfg.setup()?;
    let tf = cfg.test_function()?;
    let t = cfg.cutoff()?;
    let mut rows = Vec::new();
    for eps in cfg.eps_list()? {
        let h = cfg.spacing(eps)?;
        let dom = cfg.domain(h)?;
        let u = sample_testfn(&tf, &dom)?;
        let total = energy_total(&f, &u, dom.all(), eps, t)?.total;
        let c = reference_energies(&setup, &u, dom.all(), eps, t)?.components.expect("reference sweep fills components");
        println!(
            "eps={eps:<12} h={h:<12} total={total:.10e} G1={:.6e} G2={:.6e} P={:.6e} eta={:.6e}",
            c.g1, c.g2, c.p, c.eta_term
        );
        rows.push(format!(
            "{},{eps},{h},{t},{total:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            f.name, c.g1, c.g2, c.p, c.eta_term
        ));
    }
    run.out.append_csv("energy.csv", "family,eps,h,T,total,G1,G2,P,eta_term", &rows)?;
    Ok(())
}

pub fn limit_study(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.family()?;
    let setup = cfg.setup()?;
    let tf = cfg.test_function()?;
    let t = cfg.cutoff()?;
    let (lo, hi) = cfg.grid_box()?;
    let limits = continuum_limit_value(&setup, &tf, &lo, &hi)?;
    let target = match cfg.family_name() {
        "reference" => Some(limits.derived_ms1),
        "composite" => Some(limits.derived_h),
        _ => None,
    };
    let eps = cfg.eps_list()?;
    let mut values = Vec::new();
    let mut rows = Vec::new();
    let cont = target.unwrap_or(f64::NAN);
    let rel = |v: f64| if cont != 0.0 { (v - cont).abs() / cont.abs() } else { (v - cont).abs() };
    for &e in &eps {
        let h = cfg.spacing(e)?;
        let dom = cfg.domain(h)?;
        let u = sample_testfn(&tf, &dom)?;
        let v = energy_total(&f, &u, dom.all(), e, t)?.total;
        values.push(v);
        rows.push(format!("{},{e},{h},{v:.12e},{cont:.12e},{:.6e}", f.name, rel(v)));
    }
    let (intercept, slope) = fit_line(&eps, &values);
    rows.push(format!("{},extrapolated,,{intercept:.12e},{cont:.12e},{:.6e}", f.name, rel(intercept)));
    run.out.write_csv("limit.csv", "family,eps,h,value,continuum,rel_error", &rows)?;
    run.out.note(
        "limit fit",
        format!("value ~ {intercept:.6} + {slope:.6} eps; continuum {cont:.6}; formula-constant MS1 {:.6}", limits.ms1),
    );
    if let Some(tol) = cfg.number("limit.tol")? {
        match target {
            Some(_) => run.out.check("limit", rel(intercept) <= tol, format!("rel error {:.3e} <= {tol}", rel(intercept))),
            None => bail!("limit.tol needs a family with a closed-form limit (reference or composite)"),
        }
    }
    Ok(())
}

pub fn truncation_study(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.family()?;
    let tf = cfg.test_function()?;
    let ts = cfg.list_or("trunc.T", &[1.0, 2.0, 4.0, 8.0])?;
    let t_max = cfg.number_or("trunc.T_max", 4.0 * ts.iter().copied().fold(0.0, f64::max))?;
    let mut rows = Vec::new();
    for eps in cfg.eps_list()? {
        let h = cfg.spacing(eps)?;
        let dom = cfg.domain(h)?;
        let u = sample_testfn(&tf, &dom)?;
        let mut gaps = Vec::new();
        let mut bounded = true;
        for &t in &ts {
            let g = tail_gap(&f, &u, dom.all(), eps, t, t_max)?;
            bounded &= g.gap <= g.moment_bound;
            gaps.push(g.gap);
            rows.push(format!("{eps},{h},{t},{t_max},{:.12e},{:.12e}", g.gap, g.moment_bound));
        }
        let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
        let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.4e}")).collect();
        run.out.check(
            &format!("truncation eps={eps}"),
            bounded && monotone,
            format!("gaps [{}], bounded {bounded}, monotone {monotone}", shown.join(", ")),
        );
    }
    run.out.write_csv("truncation.csv", "eps,h,T,T_max,gap,moment_bound", &rows)?;
    Ok(())
}

fn sweep(cfg: &Config, seed: u64) -> Result<Sweep> {
    let base = Sweep::default();
    let divs = cfg.list_or("cell.eps_div", &base.eps_div.iter().map(|v| *v as f64).collect::<Vec<_>>())?;
    Ok(Sweep {
        r: cfg.list_or("cell.r", &base.r)?,
        s: cfg.list_or("cell.s", &base.s)?,
        eps_div: divs.iter().map(|v| v.round() as usize).collect(),
        h_div: cfg.count_or("cell.h_div", base.h_div)?,
        cutoff: cfg.number_or("grid.T", base.cutoff)?,
        restarts: cfg.count_or("cell.restarts", base.restarts)?,
        seed,
        schedule: cfg.schedule()?,
        anchor_shift: cfg.number_or("cell.anchor_shift", 0.0)?,
    })
}

fn report_cell(run: &mut Run, est: &CellEstimate) -> Result<()> {
    let e = &est.extrapolated;
    run.out.write_csv("cells.csv", "kind,x,param,r,s,eps,value", &est.csv_rows())?;
    run.out.note(
        &format!("{} {}", est.kind.as_str(), est.param),
        format!(
            "upper-bound estimate {:.6} (last r {:.6}, liminf {:.6}, limsup {:.6}, variants agree {}, fit residual {:.2e}, s-monotone {}, eps slope {:.3e}{})",
            e.value,
            e.last_r,
            e.liminf,
            e.limsup,
            e.variants_agree,
            e.fit_residual,
            e.s_monotone,
            e.eps_slope,
            if est.homogenised { ", homogenised" } else { "" }
        ),
    );
    if let Some(expect) = run.cfg.number("cell.expect")? {
        let tol = run.cfg.number_or("cell.tol", 0.05)?;
        let err = (e.value - expect).abs() / expect.abs().max(1e-300);
        run.out.check("cell value", err <= tol, format!("{:.6} vs {expect} (rel {err:.3e} <= {tol})", e.value));
    }
    Ok(())
}

pub fn cell(run: &mut Run, bulk: bool) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.family()?;
    let d = f.d;
    let x = cfg.list_or("cell.x", &vec![0.5; d])?;
    let sw = sweep(cfg, run.seed)?;
    let est = if bulk {
        let mut l = vec![0.0; f.m * d];
        l[0] = 1.0;
        let l = cfg.list_or("cell.L", &l)?;
        estimate_f_bulk(&f, &x, &l, &sw)?
    } else {
        let zeta = cfg.list_or("cell.zeta", &vec![1.0; f.m])?;
        let mut nu = vec![0.0; d];
        nu[0] = 1.0;
        let nu = cfg.list_or("cell.nu", &nu)?;
        estimate_f_surf(&f, &x, &zeta, &nu, &sw)?
    };
    report_cell(run, &est)
}

pub fn minimize(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.family()?;
    let tf = cfg.test_function()?;
    let (lo, hi) = cfg.grid_box()?;
    let t = cfg.cutoff()?;
    let restarts = cfg.count_or("min.restarts", 5)?;
    let sched = cfg.schedule()?;
    let name = cfg.get("min.instance").unwrap_or(cfg.field_label()).to_string();
    let oracle = cfg.flag("min.oracle")?;
    let mut rows = Vec::new();
    for eps in cfg.eps_list()? {
        let h = cfg.spacing(eps)?;
        for s in cfg.list_or("min.s", &[1.0])? {
            let spec = DirichletSpec::new(tf.clone(), s, &lo, &hi);
            let m = dirichlet_minimum(&f, &spec, h, eps, t, restarts, run.seed, &sched)?;
            rows.push(format!("{name},{eps},{h},{s},{restarts},{:.12e},{}", m.result.value, m.result.status.as_str()));
            println!("eps={eps} h={h} s={s}: {:.10e} ({}, restart {})", m.result.value, m.result.status.as_str(), m.restart);
            if oracle {
                let p = Problem::dirichlet(&spec, h, eps, t)?;
                let fixed: Vec<f64> = (0..p.fixed.len()).filter(|&i| p.fixed[i]).map(|i| p.init.values[i]).collect();
                let a = fixed.iter().copied().fold(f64::INFINITY, f64::min);
                let b = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (a, b) = if b > a { (a, b) } else { (a - 1.0, b + 1.0) };
                let levels = cfg.count_or("min.levels", 9)?;
                let o = brute_force_tiny(&f, &p, Quantization { levels, lo: a, hi: b })?;
                let gap = o.level_gap.unwrap_or(0.0);
                let diff = (m.result.value - o.value).abs();
                run.out.check(
                    &format!("oracle eps={eps} s={s}"),
                    diff <= gap,
                    format!("|{:.6} - {:.6}| = {diff:.3e} <= level gap {gap:.3e}", m.result.value, o.value),
                );
                rows.push(format!("{name}:oracle,{eps},{h},{s},1,{:.12e},{}", o.value, o.status.as_str()));
            }
        }
    }
    run.out.write_csv("minimize.csv", "instance,eps,h,s,restarts,value,status", &rows)?;
    Ok(())
}

pub struct DenoiseArgs {
    pub input: Option<PathBuf>,
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub image: PathBuf,
}

pub fn denoise_cmd(run: &mut Run, args: &DenoiseArgs) -> Result<()> {
    let cfg = run.cfg;
    let f = if cfg.get("kernel.rho1").is_none() {
        IntegrandFamily::reference(&KernelSetup::reference(make_kernel("box:1,1", 2)?), 1)?
    } else {
        cfg.family()?
    };
    if f.d != 2 || f.m != 1 {
        bail!("denoise needs a scalar 2D family (set kernel.dim = 2)");
    }
    let input = args.input.clone().or_else(|| cfg.get("denoise.input").map(PathBuf::from));
    let scene = TwoRegion::default();
    let (g, synthetic) = match &input {
        Some(p) => (read_pgm(p)?, false),
        None => (scene.noisy(cfg.number_or("denoise.sigma", 0.1)?, run.seed)?, true),
    };
    let h = g.domain.h;
    let eps = match args.eps {
        Some(e) => e,
        None => cfg.number_or("denoise.eps", 2.0 * h)?,
    };
    let tau = match args.tau {
        Some(t) => t,
        None => cfg.number_or("denoise.tau", 200.0)?,
    };
    let t = cfg.number_or("denoise.T", 1.0)?;
    let res = denoise(&f, &g, eps, t, tau, &cfg.schedule()?)?;
    let scale = if synthetic { Some(GrayScale { lo: -0.5, hi: 1.5 }) } else { None };
    if synthetic {
        write_pgm(&g, &args.image.with_file_name("noisy.pgm"), PgmFormat::Binary, scale)?;
    }
    write_pgm(&res.minimizer, &args.image, PgmFormat::Binary, scale)?;
    let name = input.as_deref().map_or("synthetic".to_string(), |p: &Path| p.display().to_string());
    run.out.write_csv(
        "minimize.csv",
        "instance,eps,h,s,restarts,value,status",
        &[format!("denoise:{name},{eps},{h},0,1,{:.12e},{}", res.value, res.status.as_str())],
    )?;
    if synthetic {
        let m = evaluate(&scene, &g, &res.minimizer);
        run.out.check(
            "denoise",
            m.pass(),
            format!(
                "variance {:.3e} -> {:.3e} ({:.1}x), misclassified {}, edge offset {} px",
                m.noisy_variance, m.restored_variance, m.variance_reduction, m.misclassified, m.max_edge_offset
            ),
        );
    } else {
        run.out.note("denoise", format!("energy {:.6e}, wrote {}", res.value, args.image.display()));
    }
    Ok(())
}

pub fn verify(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let names: Vec<String> = match cfg.get("verify.family") {
        Some("all") => ["reference", "composite", "arctan", "periodic"].iter().map(|s| s.to_string()).collect(),
        Some(name) => vec![name.to_string()],
        None => vec![cfg.family_name().to_string()],
    };
    let samples = cfg.count_or("verify.samples", 10_000)?;
    let mut rows = Vec::new();
    for name in names {
        let f = cfg.family_named(&name)?;
        let sampler = Sampler::new(f.d).with_samples(samples).with_seed(run.seed);
        for r in run_all(&f, &sampler)? {
            let mut r = r;
            r.check = format!("{name}:{}", r.check);
            run.out.check(
                &r.check,
                r.pass,
                format!("{} samples, violations {:.2e} / {:.2e}", r.samples, r.max_lower_violation, r.max_upper_violation),
            );
            rows.push(r.csv_row());
        }
    }
    run.out.append_csv("verify.csv", "check,samples,max_lower_violation,max_upper_violation,pass", &rows)?;
    Ok(())
}
