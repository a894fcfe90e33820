//! Seeded property suites over integrands and energies, plus the empirical
//! long-range and gluing experiments. Each suite draws from its own named
//! substream, in chunks of 1024 samples.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::energy::{characteristic_energies, energy_total, glue_fields, PairPlan};
use crate::error::Result;
use crate::grid::{make_grid, Field, GridDomain, TestFunction};
use crate::integrands::{
    chunked_max, draw, excess, g_eps, g_eps_sq, monotonicity_check, random_vector, sandwich_check, CheckReport,
    IntegrandFamily, Sampler,
};
use crate::kernels::KernelSetup;

/// g_ε(Σzᵢ) ≤ k·Σ g_ε(zᵢ) for random k ≤ 8.
pub fn subadditivity_check(m: usize, sampler: &Sampler) -> CheckReport {
    let (_, upper) = chunked_max(sampler.seed, "subadditivity", sampler.samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let eps = sampler.eps[rng.random_range(0..sampler.eps.len())];
            let k = rng.random_range(1..=8usize);
            let mut sum = vec![0.0; m];
            let mut rhs = 0.0;
            for _ in 0..k {
                let z = random_vector(rng, m, sampler.z_scale / eps.sqrt());
                for (s, v) in sum.iter_mut().zip(&z) {
                    *s += v;
                }
                rhs += g_eps(eps, &z);
            }
            worst = worst.max(excess(g_eps(eps, &sum), k as f64 * rhs));
        }
        (0.0, worst)
    });
    CheckReport::new("subadditivity", sampler.samples, 0.0, upper)
}

/// A 1-Lipschitz map of R^m fixing the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Clamp(f64),
    Scale(f64),
    /// Givens rotation by `angle` in the plane (a, b); a sign flip when m = 1.
    Rotate { a: usize, b: usize, angle: f64 },
}

impl Contraction {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match *self {
            Contraction::Clamp(m) => v.iter().map(|x| x.clamp(-m, m)).collect(),
            Contraction::Scale(c) => v.iter().map(|x| c * x).collect(),
            Contraction::Rotate { a, b, angle } => {
                let mut out = v.to_vec();
                if a == b {
                    out[a] = -out[a];
                } else {
                    let (s, c) = angle.sin_cos();
                    out[a] = c * v[a] - s * v[b];
                    out[b] = s * v[a] + c * v[b];
                }
                out
            }
        }
    }

    pub(crate) fn random<R: Rng>(rng: &mut R, m: usize, scale: f64) -> Self {
        match rng.random_range(0..3) {
            0 => Contraction::Clamp(scale * rng.random::<f64>()),
            1 => Contraction::Scale(rng.random::<f64>()),
            _ => {
                let a = rng.random_range(0..m);
                let b = if m == 1 { 0 } else { (a + rng.random_range(1..m)) % m };
                Contraction::Rotate { a, b, angle: std::f64::consts::TAU * rng.random::<f64>() }
            }
        }
    }
}

/// f_ε(x, ξ, (Φ(u_b) − Φ(u_a))/ε) ≤ f_ε(x, ξ, (u_b − u_a)/ε) for clamp, scale
/// and rotation maps Φ.
pub fn contraction_check(f: &IntegrandFamily, sampler: &Sampler) -> CheckReport {
    let m = f.m;
    let (_, upper) = chunked_max(sampler.seed, "contraction", sampler.samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let (eps, x, xi, _) = draw(rng, sampler, m);
            let span = sampler.z_scale * eps.sqrt();
            let ua = random_vector(rng, m, span);
            let ub = random_vector(rng, m, span);
            let phi = Contraction::random(rng, m, span);
            let (pa, pb) = (phi.apply(&ua), phi.apply(&ub));
            let z: Vec<f64> = ua.iter().zip(&ub).map(|(a, b)| (b - a) / eps).collect();
            let zp: Vec<f64> = pa.iter().zip(&pb).map(|(a, b)| (b - a) / eps).collect();
            let before = f.eval_unchecked(eps, &x, &xi, &z);
            let after = f.eval_unchecked(eps, &x, &xi, &zp);
            worst = worst.max(excess(after, before));
        }
        (0.0, worst)
    });
    CheckReport::new("contraction", sampler.samples, 0.0, upper)
}

/// |Δ(u^M)| ≤ |Δ(u^{M+1})| for the componentwise clamp at integer levels.
pub fn truncation_chain_check(m: usize, sampler: &Sampler) -> CheckReport {
    let (_, upper) = chunked_max(sampler.seed, "truncation_chain", sampler.samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let ua = random_vector(rng, m, 10.0);
            let ub = random_vector(rng, m, 10.0);
            let level = rng.random_range(0..10) as f64;
            let inc = |c: f64| {
                let (a, b) = (Contraction::Clamp(c).apply(&ua), Contraction::Clamp(c).apply(&ub));
                a.iter().zip(&b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
            };
            worst = worst.max(excess(inc(level), inc(level + 1.0)));
        }
        (0.0, worst)
    });
    CheckReport::new("truncation_chain", sampler.samples, 0.0, upper)
}

/// Grid for field-level suites: the unit box with spacing 1/32 (d = 1) or 1/8.
pub(crate) fn small_grid(d: usize) -> Arc<GridDomain> {
    Arc::new(make_grid(&vec![0.0; d], &vec![1.0; d], if d == 1 { 1.0 / 32.0 } else { 1.0 / 8.0 }).expect("valid grid"))
}

/// Random bounded field: piecewise constant levels plus a random slope and noise.
pub(crate) fn random_field<R: Rng>(rng: &mut R, dom: &Arc<GridDomain>, m: usize) -> Field {
    let amp = 4.0 * rng.random::<f64>();
    let cut = rng.random::<f64>();
    let jump: Vec<f64> = (0..m).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let slope: Vec<f64> = (0..m).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let noise = 0.2 * amp * rng.random::<f64>();
    let mut values = Vec::with_capacity(dom.len() * m);
    for i in 0..dom.len() {
        let x = dom.node(i);
        for q in 0..m {
            let base = if x[0] >= cut { jump[q] } else { 0.0 };
            values.push(base + slope[q] * (x[0] - 0.5) + noise * (2.0 * rng.random::<f64>() - 1.0));
        }
    }
    Field::new(dom.clone(), m, values).expect("sized field")
}

/// H^r ≤ (1 + 2‖u‖_∞)G^r + (|U||B_r|G^r)^{1/2} at r = r0 on random bounded fields.
pub fn interpolation_check(setup: &KernelSetup, m: usize, samples: usize, seed: u64) -> Result<CheckReport> {
    let d = setup.rho1.dim();
    let dom = small_grid(d);
    let r = setup.r0;
    let measure = dom.measure(dom.all());
    let (_, upper) = chunked_max(seed, "interpolation", samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let eps = dom.h * [2.0, 4.0, 8.0][rng.random_range(0..3)];
            let u = random_field(rng, &dom, m);
            let c = characteristic_energies(&u, dom.all(), eps, r).expect("valid characteristic sweep");
            let rhs = (1.0 + 2.0 * u.sup_norm()) * c.g + (measure * c.ball * c.g).sqrt();
            worst = worst.max(excess(c.h, rhs));
        }
        (0.0, worst)
    });
    Ok(CheckReport::new("interpolation", samples, 0.0, upper))
}

/// F^{T₁} ≤ F^{T₂} for T₁ ≤ T₂ on random fields.
pub fn truncation_monotonicity_check(f: &IntegrandFamily, samples: usize, seed: u64) -> Result<CheckReport> {
    let dom = small_grid(f.d);
    let cutoffs = [0.5, 1.0, 1.5, 2.0];
    let (_, upper) = chunked_max(seed, "truncation_monotonicity", samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let eps = dom.h * [1.0, 2.0, 4.0][rng.random_range(0..3)];
            let i = rng.random_range(0..cutoffs.len());
            let j = rng.random_range(i..cutoffs.len());
            let u = random_field(rng, &dom, f.m);
            let a = energy_total(f, &u, dom.all(), eps, cutoffs[i]).expect("valid sweep").total;
            let b = energy_total(f, &u, dom.all(), eps, cutoffs[j]).expect("valid sweep").total;
            worst = worst.max(excess(a, b));
        }
        (0.0, worst)
    });
    Ok(CheckReport::new("truncation_monotonicity", samples, 0.0, upper))
}

/// Every pass/fail suite for one family, in a fixed order.
pub fn run_all(f: &IntegrandFamily, sampler: &Sampler) -> Result<Vec<CheckReport>> {
    Ok(vec![
        subadditivity_check(f.m, sampler),
        sandwich_check(f, &f.bounds, sampler),
        monotonicity_check(f, sampler),
        contraction_check(f, sampler),
        truncation_chain_check(f.m, sampler),
        interpolation_check(&f.bounds, f.m, sampler.samples, sampler.seed)?,
        truncation_monotonicity_check(f, sampler.samples, sampler.seed)?,
    ])
}

/// Ratio of one long-range increment energy to the short-range energy on
/// the enlarged set, for one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeRow {
    pub eps: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeReport {
    pub rows: Vec<LongRangeRow>,
    /// Largest ratio growth between consecutive ε halvings.
    pub max_growth: f64,
    pub pass: bool,
}

/// Empirical long-range control on 20 random piecewise-affine fields with a
/// jump, over V = (1/4, 3/4) ⊂ (0, 1) and lattice offsets ξ ∈ {1, …, 4}.
pub fn long_range_experiment(setup: &KernelSetup, eps_list: &[f64], seed: u64) -> Result<LongRangeReport> {
    let mut rng = crate::rng::substream(seed, "long_range");
    let fields: Vec<TestFunction> = (0..20)
        .map(|_| {
            let offset = [rng.random_range(-1.0..1.0)];
            let slope = [rng.random_range(-3.0..3.0)];
            let at = [rng.random_range(0.3..0.7)];
            let jump = [rng.random_range(-2.0..2.0)];
            TestFunction::affine_with_jump(&offset, &slope, &at, &[1.0], &jump)
        })
        .collect();
    let r0 = setup.r0;
    let rows: Vec<Result<LongRangeRow>> = eps_list
        .par_iter()
        .map(|&eps| {
            let h = eps / 8.0;
            let dom = Arc::new(make_grid(&[0.0], &[1.0], h)?);
            let v = dom.mask_from_fn(|x| x[0] > 0.25 && x[0] < 0.75);
            let mut worst = 0.0f64;
            for tf in &fields {
                let u = crate::grid::sample_testfn(tf, &dom)?;
                for xi in 1..=4i64 {
                    let reach = eps * xi as f64;
                    let big = dom.mask_from_fn(|x| x[0] > 0.25 - reach && x[0] < 0.75 + reach);
                    let mut num = 0.0;
                    for i in v.indices() {
                        if let Some(j) = dom.shift(i, [xi * 8, 0]) {
                            let z = (u.at(j)[0] - u.at(i)[0]) / eps;
                            num += dom.cell_volume() * g_eps_sq(eps, z * z);
                        }
                    }
                    let c = characteristic_energies(&u, &big, eps, r0)?;
                    let xi2 = (xi * xi) as f64;
                    let den = (xi2 + 1.0) * c.g;
                    if den > 0.0 {
                        worst = worst.max(num / den);
                    }
                }
            }
            Ok(LongRangeRow { eps, max_ratio: worst })
        })
        .collect();
    let rows: Vec<LongRangeRow> = rows.into_iter().collect::<Result<_>>()?;
    let max_growth =
        rows.windows(2).map(|w| w[1].max_ratio / w[0].max_ratio.max(1e-300)).fold(0.0f64, f64::max);
    let pass = rows.iter().all(|r| r.max_ratio.is_finite()) && max_growth <= 2.0;
    Ok(LongRangeReport { rows, max_growth, pass })
}

/// Best gluing slack among N cutoff shells.
#[derive(Debug, Clone, PartialEq)]
pub struct GlueRow {
    pub shells: usize,
    pub best_shell: usize,
    /// F^T(w, U'∪V) − F(u, U) − F(v, V) at the best shell.
    pub slack: f64,
    pub l1_gap: f64,
}

/// Glues u on U = (0, 0.6) to v on V = (0.3, 1) across N shells in
/// (0.4, 0.6), for N ∈ {8, 16, 32}.
pub fn glue_experiment(f: &IntegrandFamily, u: &Field, v: &Field, eps: f64, cutoff: f64) -> Result<Vec<GlueRow>> {
    let dom = u.domain.clone();
    let mask_u = dom.mask_from_fn(|x| x[0] < 0.6);
    let mask_v = dom.mask_from_fn(|x| x[0] > 0.3);
    let mask_uv = dom.mask_from_fn(|x| x[0] < 0.4 || x[0] > 0.3);
    let mask_band = dom.mask_from_fn(|x| x[0] > 0.3 && x[0] < 0.6);
    let base = energy_total(f, u, &mask_u, eps, cutoff)?.total + energy_total(f, v, &mask_v, eps, cutoff)?.total;
    let plan = PairPlan::new(&dom, &mask_uv, eps, cutoff)?;
    let l1_gap = u.l1_distance(v, &mask_band)?;
    [8usize, 16, 32]
        .iter()
        .map(|&n| {
            let width = 0.2 / n as f64;
            let mut best = (0, f64::INFINITY);
            for i in 0..n {
                let (a, b) = (0.4 + i as f64 * width, 0.4 + (i + 1) as f64 * width);
                let phi = Field::scalar(dom.clone(), |x| ((b - x[0]) / (b - a)).clamp(0.0, 1.0));
                let w = glue_fields(u, v, &phi)?;
                let e = plan.energy(f, &w)? - base;
                if e < best.1 {
                    best = (i, e);
                }
            }
            Ok(GlueRow { shells: n, best_shell: best.0, slack: best.1, l1_gap })
        })
        .collect()
}

/// Applies a contraction to every node of a field.
pub fn contract_field(u: &Field, phi: &Contraction) -> Field {
    u.map_nodes(|v| phi.apply(v))
}
