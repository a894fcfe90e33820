//! Minimization of discretized energies: graduated non-convexity with
//! Armijo gradient descent, an exhaustive oracle for tiny 1D instances, and
//! multistart Dirichlet cell minima.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::energy::{dist2, Neumaier, PairPlan};
use crate::error::{NlgError, Result};
use crate::grid::{make_grid, sample_testfn, Field, GridDomain, Mask, TestFunction};
use crate::integrands::{g_eps_sq, surrogate, surrogate_slope, IntegrandFamily, ZProfile};
use crate::rng::chunk_stream;

/// Continuation schedule; every γ stage uses the surrogate, followed by one
/// stage with the true density.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub gammas: Vec<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { gammas: vec![16.0, 4.0, 1.0], max_iter: 500, rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    OracleExact,
    /// Every node is constrained; the datum is the only feasible field.
    FullyConstrained,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max-iters",
            Status::OracleExact => "oracle-exact",
            Status::FullyConstrained => "fully-constrained",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinResult {
    pub minimizer: Field,
    pub value: f64,
    /// True-density energy after each stage (best so far).
    pub history: Vec<f64>,
    pub status: Status,
    /// Oracle only: largest energy change from moving one free node by one level.
    pub level_gap: Option<f64>,
}

/// Boundary-layer constraint: nodes of the box U within distance ε·s of its
/// complement are pinned to the datum.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    pub datum: TestFunction,
    pub layer: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DirichletSpec {
    pub fn new(datum: TestFunction, layer: f64, lo: &[f64], hi: &[f64]) -> Self {
        Self { datum, layer, lo: lo.to_vec(), hi: hi.to_vec() }
    }

    /// Mask of constrained nodes on a grid covering U.
    pub fn constrained(&self, domain: &GridDomain, eps: f64) -> Mask {
        let width = eps * self.layer;
        domain.mask_from_fn(|x| {
            let dist = (0..x.len()).map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a])).fold(f64::INFINITY, f64::min);
            dist < width
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub target: Field,
    pub tau: f64,
}

/// A discretized minimization problem on a fixed pair plan.
#[derive(Debug, Clone)]
pub struct Problem {
    pub plan: PairPlan,
    pub mask: Mask,
    pub fixed: Vec<bool>,
    /// Starting field; constrained nodes already carry their datum values.
    pub init: Field,
    pub fidelity: Option<Fidelity>,
}

impl Problem {
    /// Unconstrained problem on `mask`, starting from zero.
    pub fn free(domain: &Arc<GridDomain>, mask: &Mask, m: usize, eps: f64, cutoff: f64) -> Result<Self> {
        let plan = PairPlan::new(domain, mask, eps, cutoff)?;
        let fixed = mask.bits.iter().map(|b| !b).collect();
        Ok(Self { plan, mask: mask.clone(), fixed, init: Field::zeros(domain.clone(), m), fidelity: None })
    }

    /// Grid on U with spacing `h`, layer nodes pinned to the datum.
    pub fn dirichlet(spec: &DirichletSpec, h: f64, eps: f64, cutoff: f64) -> Result<Self> {
        let domain = Arc::new(make_grid(&spec.lo, &spec.hi, h)?);
        let init = sample_testfn(&spec.datum, &domain)?;
        let fixed_mask = spec.constrained(&domain, eps);
        let mask = domain.all().clone();
        let plan = PairPlan::new(&domain, &mask, eps, cutoff)?;
        Ok(Self { plan, mask, fixed: fixed_mask.bits, init, fidelity: None })
    }

    /// Adds τ Σ h^d |u − g|², starting from g.
    pub fn with_fidelity(mut self, target: Field, tau: f64) -> Result<Self> {
        if target.domain != self.init.domain || target.m != self.init.m {
            return Err(NlgError::DomainMismatch);
        }
        if !(tau >= 0.0) {
            return Err(NlgError::InvalidArgument(format!("tau = {tau}")));
        }
        let m = target.m;
        let mut init = self.init.clone();
        for i in 0..init.domain.len() {
            if !self.fixed[i] {
                init.values[i * m..(i + 1) * m].copy_from_slice(target.at(i));
            }
        }
        self.init = init;
        self.fidelity = Some(Fidelity { target, tau });
        Ok(self)
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| !self.fixed[i]).collect()
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.plan.domain
    }

    /// Field equal to `values` on free nodes and to the datum elsewhere.
    pub fn with_free_values(&self, values: &[f64]) -> Field {
        let m = self.init.m;
        let mut u = self.init.clone();
        for i in 0..self.fixed.len() {
            if !self.fixed[i] {
                u.values[i * m..(i + 1) * m].copy_from_slice(&values[i * m..(i + 1) * m]);
            }
        }
        u
    }

    /// Objective under the true density.
    pub fn value(&self, f: &IntegrandFamily, u: &Field) -> f64 {
        evaluate(self, f, &u.values, Stage::Exact, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Surrogate(f64),
    Exact,
}

#[inline]
fn phi(profile: ZProfile, stage: Stage, eps: f64, z2: f64) -> (f64, f64) {
    match (profile, stage) {
        (ZProfile::Arctan, _) => {
            let t = eps * z2;
            (t.atan() / eps, 1.0 / (1.0 + t * t))
        }
        (ZProfile::Min, Stage::Surrogate(gamma)) => (surrogate(eps, gamma, z2), surrogate_slope(eps, gamma, z2)),
        (ZProfile::Min, Stage::Exact) => {
            let cap = 1.0 / eps;
            (g_eps_sq(eps, z2), if z2 < cap { 1.0 } else { 0.0 })
        }
    }
}

const PARALLEL_PAIRS: usize = 100_000;

fn offset_terms(
    p: &Problem,
    f: &IntegrandFamily,
    u: &[f64],
    stage: Stage,
    idx: usize,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let plan = &p.plan;
    let o = &plan.offsets.offsets[idx];
    let eps = plan.eps;
    let m = p.init.m;
    let c = f.coeffs(eps, o.r);
    if c.rho == 0.0 && c.psi == 0.0 && c.eta == 0.0 {
        return 0.0;
    }
    let s = o.w * plan.domain.cell_volume();
    let inv = 1.0 / (eps * eps);
    let constant = f.coefficient.is_constant();
    let mut acc = Neumaier::default();
    for &(i, j) in &plan.pairs[idx] {
        let (i, j) = (i as usize, j as usize);
        let a = &u[i * m..(i + 1) * m];
        let b = &u[j * m..(j + 1) * m];
        let z2 = dist2(a, b) * inv;
        let coef = if constant { c.rho } else { c.rho * f.coefficient.at(eps, &plan.domain.node(i)) };
        let (v, dv) = phi(f.profile, stage, eps, z2);
        let zn = z2.sqrt();
        acc.add(coef * v + c.psi * zn + c.eta);
        if let Some(g) = grad.as_deref_mut() {
            let mut slope = coef * dv;
            if c.psi != 0.0 && zn > 0.0 {
                slope += c.psi / (2.0 * zn);
            }
            let k = s * slope * 2.0 * inv;
            if k != 0.0 {
                for q in 0..m {
                    let t = k * (b[q] - a[q]);
                    g[j * m + q] += t;
                    g[i * m + q] -= t;
                }
            }
        }
    }
    s * acc.value()
}

/// Objective value under `stage`; fills `grad` (zeroed here) when given.
pub fn evaluate(p: &Problem, f: &IntegrandFamily, u: &[f64], stage: Stage, grad: Option<&mut [f64]>) -> f64 {
    let n_off = p.plan.offsets.len();
    let mut total = Neumaier::default();
    match grad {
        None => {
            if p.plan.pair_count() > PARALLEL_PAIRS {
                let parts: Vec<f64> =
                    (0..n_off).into_par_iter().map(|k| offset_terms(p, f, u, stage, k, None)).collect();
                parts.into_iter().for_each(|v| total.add(v));
            } else {
                for k in 0..n_off {
                    total.add(offset_terms(p, f, u, stage, k, None));
                }
            }
        }
        Some(g) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            if p.plan.pair_count() > PARALLEL_PAIRS {
                let parts: Vec<(f64, Vec<f64>)> = (0..n_off)
                    .into_par_iter()
                    .map(|k| {
                        let mut local = vec![0.0; u.len()];
                        let v = offset_terms(p, f, u, stage, k, Some(&mut local));
                        (v, local)
                    })
                    .collect();
                for (v, local) in parts {
                    total.add(v);
                    for (a, b) in g.iter_mut().zip(local) {
                        *a += b;
                    }
                }
            } else {
                for k in 0..n_off {
                    total.add(offset_terms(p, f, u, stage, k, Some(g)));
                }
            }
        }
    }
    let mut value = total.value();
    if let Some(fid) = &p.fidelity {
        let hd = p.plan.domain.cell_volume();
        let m = fid.target.m;
        let mut acc = Neumaier::default();
        for i in p.mask.indices() {
            for q in 0..m {
                let r = u[i * m + q] - fid.target.values[i * m + q];
                acc.add(r * r);
            }
        }
        value += fid.tau * hd * acc.value();
        // gradient of the fidelity term is added by the caller
    }
    value
}

fn add_fidelity_grad(p: &Problem, u: &[f64], g: &mut [f64]) {
    if let Some(fid) = &p.fidelity {
        let hd = p.plan.domain.cell_volume();
        let m = fid.target.m;
        for i in p.mask.indices() {
            for q in 0..m {
                g[i * m + q] += 2.0 * fid.tau * hd * (u[i * m + q] - fid.target.values[i * m + q]);
            }
        }
    }
}

fn value_and_grad(p: &Problem, f: &IntegrandFamily, u: &[f64], stage: Stage, g: &mut [f64]) -> f64 {
    let v = evaluate(p, f, u, stage, Some(g));
    add_fidelity_grad(p, u, g);
    let m = p.init.m;
    for (i, fx) in p.fixed.iter().enumerate() {
        if *fx {
            g[i * m..(i + 1) * m].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    v
}

/// Curvature scale of the objective, used for the first trial step.
fn curvature(p: &Problem, f: &IntegrandFamily, stage: Stage) -> f64 {
    let eps = p.plan.eps;
    let hd = p.plan.domain.cell_volume();
    let gamma = match stage {
        Stage::Surrogate(g) => g,
        Stage::Exact => 1.0,
    };
    let amax = match f.coefficient {
        crate::integrands::Coefficient::Periodic { hi, .. } => hi,
        crate::integrands::Coefficient::Constant => 1.0,
    };
    let mut l = 0.0;
    for o in &p.plan.offsets.offsets {
        l += 4.0 * o.w * hd * f.rho.value(o.r) * amax * gamma / (eps * eps);
    }
    if let Some(fid) = &p.fidelity {
        l += 2.0 * fid.tau * hd;
    }
    l.max(1e-300)
}

/// Armijo gradient descent with Barzilai–Borwein trial steps.
fn descend(p: &Problem, f: &IntegrandFamily, u: &mut [f64], stage: Stage, sched: &Schedule) -> Result<(f64, bool)> {
    let n = u.len();
    let mut g = vec![0.0; n];
    let mut e = value_and_grad(p, f, u, stage, &mut g);
    if !e.is_finite() {
        return Err(NlgError::NonFinite(format!("objective at stage {stage:?}")));
    }
    let mut step = 1.0 / curvature(p, f, stage);
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for _ in 0..sched.max_iter {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2 == 0.0 {
            return Ok((e, true));
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            for k in 0..n {
                trial[k] = u[k] - t * g[k];
            }
            let et = value_and_grad(p, f, &trial, stage, &mut g_new);
            if !et.is_finite() {
                return Err(NlgError::NonFinite(format!("objective at stage {stage:?}")));
            }
            if et <= e - 1e-4 * t * gn2 {
                accepted = Some(et);
                break;
            }
            t *= 0.5;
        }
        let Some(et) = accepted else {
            return Ok((e, true));
        };
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..n {
            let s = trial[k] - u[k];
            sy += s * (g_new[k] - g[k]);
            ss += s * s;
        }
        let decrease = e - et;
        u.copy_from_slice(&trial);
        std::mem::swap(&mut g, &mut g_new);
        e = et;
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        if decrease <= sched.rel_tol * e.abs().max(1e-300) {
            return Ok((e, true));
        }
    }
    Ok((e, false))
}

/// Graduated non-convexity from `p.init` (or `start` when given).
pub fn minimize_gnc(f: &IntegrandFamily, p: &Problem, start: Option<&Field>, sched: &Schedule) -> Result<MinResult> {
    if f.is_custom() {
        return Err(NlgError::InvalidArgument(format!("family {} has no gradient", f.name)));
    }
    if f.m != p.init.m || f.d != p.domain().d {
        return Err(NlgError::DimensionMismatch("family vs problem".into()));
    }
    if p.fixed.iter().all(|b| *b) {
        return Err(NlgError::NoFreeNodes);
    }
    let mut u = match start {
        Some(s) => p.with_free_values(&s.values).values,
        None => p.init.values.clone(),
    };
    let mut best_u = u.clone();
    let mut best = evaluate(p, f, &u, Stage::Exact, None);
    if !best.is_finite() {
        return Err(NlgError::NonFinite("initial energy".into()));
    }
    let mut history = Vec::with_capacity(sched.gammas.len() + 1);
    let mut stages: Vec<Stage> = if f.profile == ZProfile::Min {
        sched.gammas.iter().map(|g| Stage::Surrogate(*g)).collect()
    } else {
        Vec::new()
    };
    stages.push(Stage::Exact);
    let mut converged = true;
    for (n, stage) in stages.iter().enumerate() {
        let (_, ok) = descend(p, f, &mut u, *stage, sched)?;
        if n + 1 == stages.len() {
            converged = ok;
        }
        let e = evaluate(p, f, &u, Stage::Exact, None);
        if e < best {
            best = e;
            best_u.copy_from_slice(&u);
        }
        history.push(best);
    }
    let minimizer = Field::new(p.domain().clone(), p.init.m, best_u)?;
    Ok(MinResult {
        minimizer,
        value: best,
        history,
        status: if converged { Status::Converged } else { Status::MaxIters },
        level_gap: None,
    })
}

/// Quantization for the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantization {
    pub levels: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Quantization {
    pub fn level(&self, q: usize) -> f64 {
        if self.levels == 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * q as f64 / (self.levels - 1) as f64
    }
}

struct Term {
    i: usize,
    j: usize,
    scale: f64,
    coeffs: crate::integrands::OffsetCoeffs,
}

/// Exhaustive minimum over quantized values of at most 8 free nodes (d = 1, m = 1).
pub fn brute_force_tiny(f: &IntegrandFamily, p: &Problem, quant: Quantization) -> Result<MinResult> {
    let free = p.free_nodes();
    if p.domain().d != 1 || p.init.m != 1 || free.len() > 8 || quant.levels > 9 || quant.levels == 0 {
        return Err(NlgError::InstanceTooLarge(format!(
            "d={}, m={}, {} free nodes, {} levels",
            p.domain().d,
            p.init.m,
            free.len(),
            quant.levels
        )));
    }
    if free.is_empty() {
        return Err(NlgError::NoFreeNodes);
    }
    if f.is_custom() {
        return Err(NlgError::InvalidArgument("custom families are not enumerated".into()));
    }
    let eps = p.plan.eps;
    let hd = p.domain().cell_volume();
    let pos: Vec<Option<usize>> = (0..p.fixed.len()).map(|i| free.iter().position(|&k| k == i)).collect();
    let mut constant = 0.0;
    let mut by_depth: Vec<Vec<Term>> = (0..free.len()).map(|_| Vec::new()).collect();
    for (idx, o) in p.plan.offsets.offsets.iter().enumerate() {
        let c = f.coeffs(eps, o.r);
        for &(i, j) in &p.plan.pairs[idx] {
            let (i, j) = (i as usize, j as usize);
            let t = Term { i, j, scale: o.w * hd, coeffs: c };
            match (pos[i], pos[j]) {
                (None, None) => {
                    let z2 = (p.init.values[j] - p.init.values[i]).powi(2) / (eps * eps);
                    constant += t.scale * f.density(eps, &c, &p.domain().node(i), z2);
                }
                (a, b) => by_depth[a.max(b).unwrap()].push(t),
            }
        }
    }
    let mut u = p.init.values.clone();
    let mut best = f64::INFINITY;
    let mut best_u = u.clone();
    let term_value = |u: &[f64], t: &Term| {
        let z2 = (u[t.j] - u[t.i]).powi(2) / (eps * eps);
        t.scale * f.density(eps, &t.coeffs, &p.domain().node(t.i), z2)
    };

    struct Ctx<'a> {
        free: &'a [usize],
        by_depth: &'a [Vec<Term>],
        quant: Quantization,
    }
    fn dfs(
        ctx: &Ctx,
        depth: usize,
        partial: f64,
        u: &mut Vec<f64>,
        best: &mut f64,
        best_u: &mut Vec<f64>,
        tv: &dyn Fn(&[f64], &Term) -> f64,
    ) {
        if depth == ctx.free.len() {
            if partial < *best {
                *best = partial;
                best_u.copy_from_slice(u);
            }
            return;
        }
        for q in 0..ctx.quant.levels {
            u[ctx.free[depth]] = ctx.quant.level(q);
            let add: f64 = ctx.by_depth[depth].iter().map(|t| tv(u, t)).sum();
            let next = partial + add;
            if next < *best {
                dfs(ctx, depth + 1, next, u, best, best_u, tv);
            }
        }
    }
    let ctx = Ctx { free: &free, by_depth: &by_depth, quant };
    dfs(&ctx, 0, constant, &mut u, &mut best, &mut best_u, &term_value);

    let minimizer = Field::new(p.domain().clone(), 1, best_u.clone())?;
    let value = p.value(f, &minimizer);
    let mut gap: f64 = 0.0;
    for &i in &free {
        let q = (0..quant.levels)
            .min_by(|a, b| (quant.level(*a) - best_u[i]).abs().total_cmp(&(quant.level(*b) - best_u[i]).abs()))
            .unwrap_or(0);
        for nq in [q.wrapping_sub(1), q + 1] {
            if nq < quant.levels {
                let mut v = best_u.clone();
                v[i] = quant.level(nq);
                gap = gap.max((evaluate(p, f, &v, Stage::Exact, None) - value).abs());
            }
        }
    }
    Ok(MinResult { minimizer, value, history: vec![value], status: Status::OracleExact, level_gap: Some(gap) })
}

/// Best value of a multistart GNC solve of the Dirichlet cell problem; an
/// upper bound for the constrained infimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMinimum {
    pub result: MinResult,
    pub restart: usize,
    pub upper_bound: bool,
}

/// Starting fields with one jump at a cell face: free nodes copy the nearest
/// constrained value on their side. Sorted by energy.
pub fn jump_ansatz(f: &IntegrandFamily, p: &Problem) -> Vec<(f64, Field)> {
    let dom = p.domain().clone();
    let m = p.init.m;
    let mut faces: Vec<(usize, f64)> = Vec::new();
    if dom.d == 1 {
        for c in 0..=dom.n[0] {
            faces.push((0, dom.lo[0] + c as f64 * dom.h));
        }
    } else {
        for a in 0..2 {
            let mid = dom.n[a] / 2;
            faces.push((a, dom.lo[a] + mid as f64 * dom.h));
        }
    }
    let mut out: Vec<(f64, Field)> = faces
        .par_iter()
        .filter_map(|&(axis, face)| {
            let mut u = p.init.clone();
            for i in 0..dom.len() {
                if p.fixed[i] {
                    continue;
                }
                let upper = dom.node(i)[axis] >= face;
                let mut k = [0i64; 2];
                k[axis] = if upper { 1 } else { -1 };
                let mut cur = i;
                let mut src = None;
                while let Some(next) = dom.shift(cur, k) {
                    if p.fixed[next] {
                        src = Some(next);
                        break;
                    }
                    cur = next;
                }
                let src = src?;
                let v = p.init.at(src).to_vec();
                u.values[i * m..(i + 1) * m].copy_from_slice(&v);
            }
            let e = p.value(f, &u);
            Some((e, u))
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// 𝔪_s(w, U) by GNC restarts: datum, best one-jump ansatz, noisy datum,
/// next ansatz, … (lowest value wins, ties to the lowest restart index).
#[allow(clippy::too_many_arguments)]
pub fn dirichlet_minimum(
    f: &IntegrandFamily,
    spec: &DirichletSpec,
    h: f64,
    eps: f64,
    cutoff: f64,
    restarts: usize,
    seed: u64,
    sched: &Schedule,
) -> Result<DirichletMinimum> {
    if restarts == 0 {
        return Err(NlgError::InvalidArgument("restarts must be >= 1".into()));
    }
    let p = Problem::dirichlet(spec, h, eps, cutoff)?;
    if p.fixed.iter().all(|b| *b) {
        let value = p.value(f, &p.init);
        return Ok(DirichletMinimum {
            result: MinResult {
                minimizer: p.init.clone(),
                value,
                history: vec![value],
                status: Status::FullyConstrained,
                level_gap: None,
            },
            restart: 0,
            upper_bound: false,
        });
    }
    let ansatz = jump_ansatz(f, &p);
    let spread = {
        let lo = p.init.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.init.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.1 * (hi - lo).max(1.0)
    };
    let starts: Vec<Field> = (0..restarts)
        .map(|r| {
            if r == 0 {
                return p.init.clone();
            }
            if r % 2 == 1 {
                if let Some((_, a)) = ansatz.get(r / 2) {
                    return a.clone();
                }
            }
            let mut rng = chunk_stream(seed, "restart", r);
            let normal = Normal::new(0.0, spread).expect("finite spread");
            let mut u = p.init.clone();
            for (i, fx) in p.fixed.iter().enumerate() {
                if !fx {
                    for q in 0..u.m {
                        u.values[i * u.m + q] += normal.sample(&mut rng);
                    }
                }
            }
            u
        })
        .collect();
    let results: Vec<Result<MinResult>> =
        starts.par_iter().map(|s| minimize_gnc(f, &p, Some(s), sched)).collect();
    let mut best: Option<(usize, MinResult)> = None;
    for (r, res) in results.into_iter().enumerate() {
        let res = res?;
        if best.as_ref().is_none_or(|(_, b)| res.value < b.value) {
            best = Some((r, res));
        }
    }
    let (restart, result) = best.expect("at least one restart");
    Ok(DirichletMinimum { result, restart, upper_bound: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_total;
    use crate::kernels::{make_kernel, KernelSetup};

    fn family() -> IntegrandFamily {
        IntegrandFamily::reference(&KernelSetup::reference(make_kernel("box:0.5,1", 1).unwrap()), 1).unwrap()
    }

    #[test]
    fn free_minimization_reaches_zero() {
        let f = family();
        let dom = Arc::new(make_grid(&[0.0], &[1.0], 1.0 / 32.0).unwrap());
        let mut p = Problem::free(&dom, dom.all(), 1, 1.0 / 16.0, 1.0).unwrap();
        p.init = Field::scalar(dom.clone(), |x| (7.0 * x[0]).sin());
        let r = minimize_gnc(&f, &p, None, &Schedule::default()).unwrap();
        assert!(r.value < 1e-6, "{}", r.value);
        let vals = &r.minimizer.values;
        let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-2);
    }

    #[test]
    fn constrained_nodes_are_untouched_and_history_monotone() {
        let f = family();
        let eps = 1.0 / 16.0;
        let spec = DirichletSpec::new(TestFunction::affine(&[0.0], &[10.0], 1), 1.0, &[0.0], &[1.0]);
        let p = Problem::dirichlet(&spec, eps, eps, 1.0).unwrap();
        let r = minimize_gnc(&f, &p, None, &Schedule::default()).unwrap();
        for (i, fx) in p.fixed.iter().enumerate() {
            if *fx {
                assert_eq!(r.minimizer.values[i].to_bits(), p.init.values[i].to_bits());
            }
        }
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        let e = energy_total(&f, &r.minimizer, p.domain().all(), eps, 1.0).unwrap().total;
        assert!((e - r.value).abs() <= 1e-9 * e.max(1.0));
    }

    #[test]
    fn oracle_zero_datum() {
        let f = family();
        let h = 1.0 / 6.0;
        let spec = DirichletSpec::new(TestFunction::affine(&[0.0], &[0.0], 1), 1.0, &[0.0], &[1.0]);
        let p = Problem::dirichlet(&spec, h, h, 1.0).unwrap();
        assert_eq!(p.free_nodes().len(), 4);
        let r = brute_force_tiny(&f, &p, Quantization { levels: 5, lo: -1.0, hi: 1.0 }).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.minimizer.values.iter().all(|v| *v == 0.0));
        assert_eq!(r.status, Status::OracleExact);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let f = family();
        let h = 1.0 / 32.0;
        let spec = DirichletSpec::new(TestFunction::affine(&[0.0], &[1.0], 1), 1.0, &[0.0], &[1.0]);
        let p = Problem::dirichlet(&spec, h, h, 1.0).unwrap();
        let q = Quantization { levels: 9, lo: 0.0, hi: 1.0 };
        assert!(matches!(brute_force_tiny(&f, &p, q), Err(NlgError::InstanceTooLarge(_))));
    }

    #[test]
    fn oracle_is_monotone_in_layer() {
        let f = family();
        let h = 0.1;
        let datum = TestFunction::affine(&[0.0], &[4.0], 1);
        let q = Quantization { levels: 9, lo: 0.0, hi: 4.0 };
        let v1 = brute_force_tiny(&f, &Problem::dirichlet(&DirichletSpec::new(datum.clone(), 1.0, &[0.0], &[1.0]), h, h, 1.0).unwrap(), q)
            .unwrap()
            .value;
        let v2 = brute_force_tiny(&f, &Problem::dirichlet(&DirichletSpec::new(datum, 2.0, &[0.0], &[1.0]), h, h, 1.0).unwrap(), q)
            .unwrap()
            .value;
        assert!(v2 >= v1 - 1e-12, "{v1} {v2}");
    }

    #[test]
    fn dirichlet_constant_datum_is_zero() {
        let f = family();
        let spec = DirichletSpec::new(TestFunction::affine(&[2.0], &[0.0], 1), 1.0, &[0.0], &[1.0]);
        let d = dirichlet_minimum(&f, &spec, 1.0 / 64.0, 1.0 / 16.0, 1.0, 3, 1, &Schedule::default()).unwrap();
        assert_eq!(d.result.value, 0.0);
    }

    #[test]
    fn fully_constrained_cell_returns_datum_energy() {
        let f = family();
        let spec = DirichletSpec::new(TestFunction::affine(&[0.0], &[1.0], 1), 8.0, &[0.0], &[1.0]);
        let d = dirichlet_minimum(&f, &spec, 1.0 / 16.0, 1.0 / 8.0, 1.0, 3, 1, &Schedule::default()).unwrap();
        assert_eq!(d.result.status, Status::FullyConstrained);
        let p = Problem::dirichlet(&spec, 1.0 / 16.0, 1.0 / 8.0, 1.0).unwrap();
        assert_eq!(d.result.value, p.value(&f, &p.init));
        assert!(matches!(minimize_gnc(&f, &p, None, &Schedule::default()), Err(NlgError::NoFreeNodes)));
    }
}
