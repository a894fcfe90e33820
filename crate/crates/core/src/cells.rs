//! Bulk and surface densities from Dirichlet cell problems, swept over
//! (r, s, ε) and extrapolated.

use rayon::prelude::*;

use crate::error::{NlgError, Result};
use crate::grid::{lattice_ratio, TestFunction};
use crate::integrands::IntegrandFamily;
use crate::minimize::{dirichlet_minimum, DirichletSpec, Schedule, Status};
use crate::rng::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Bulk,
    Surf,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Bulk => "bulk",
            CellKind::Surf => "surf",
        }
    }
}

/// Cell sizes r, layer widths s, and ε = r / eps_div for each divisor;
/// the grid spacing is ε / h_div.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub eps_div: Vec<usize>,
    pub h_div: usize,
    pub cutoff: f64,
    pub restarts: usize,
    pub seed: u64,
    pub schedule: Schedule,
    /// Anchor shift in units of the period ε (periodic families).
    pub anchor_shift: f64,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            r: vec![0.5, 0.25, 0.125],
            s: vec![1.0, 2.0, 4.0],
            eps_div: vec![8, 16, 32],
            h_div: 8,
            cutoff: 1.0,
            restarts: 5,
            seed: DEFAULT_SEED,
            schedule: Schedule::default(),
            anchor_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRow {
    pub r: f64,
    pub s: f64,
    pub eps: f64,
    /// 𝔪_s / r^d (bulk) or 𝔪_s / r^{d−1} (surf).
    pub value: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    /// Headline: mean-over-tail variant extrapolated in r.
    pub value: f64,
    pub last_r: f64,
    pub liminf: f64,
    pub limsup: f64,
    pub variants_agree: bool,
    /// RMS residual of the least-squares line through all r.
    pub fit_residual: f64,
    /// (r, max over s of the tail mean) per r, ascending in r.
    pub per_r: Vec<(f64, f64)>,
    pub s_monotone: bool,
    /// Slope of value in ε at the smallest r and largest s.
    pub eps_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub kind: CellKind,
    pub x: Vec<f64>,
    pub param: String,
    pub table: Vec<CellRow>,
    pub extrapolated: Extrapolation,
    /// Every value is an optimizer upper bound for the cell infimum.
    pub upper_bound: bool,
    pub homogenised: bool,
}

impl CellEstimate {
    pub fn csv_rows(&self) -> Vec<String> {
        let x: Vec<String> = self.x.iter().map(|v| format!("{v}")).collect();
        let x = x.join(";");
        let mut rows: Vec<String> = self
            .table
            .iter()
            .map(|row| format!("{},{},{},{},{},{},{:.12e}", self.kind.as_str(), x, self.param, row.r, row.s, row.eps, row.value))
            .collect();
        rows.push(format!(
            "{},{},{},extrapolated,,,{:.12e}",
            self.kind.as_str(),
            x,
            self.param,
            self.extrapolated.value
        ));
        rows
    }
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icept = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (icept, slope, rms)
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    v
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

/// Tail statistic over ε (last two), max over s, then linear extrapolation in
/// r from the two smallest r.
pub fn extrapolate_triplet(table: &[CellRow]) -> Result<Extrapolation> {
    let rs = distinct(table.iter().map(|c| c.r).collect());
    let ss = distinct(table.iter().map(|c| c.s).collect());
    if rs.is_empty() {
        return Err(NlgError::InvalidArgument("empty cell table".into()));
    }
    let mut per_r_lo = Vec::new();
    let mut per_r_mid = Vec::new();
    let mut per_r_hi = Vec::new();
    let mut s_monotone = true;
    for &r in &rs {
        let (mut lo, mut mid, mut hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut by_s: Vec<Vec<(f64, f64)>> = Vec::new();
        for &s in &ss {
            let mut rows: Vec<(f64, f64)> =
                table.iter().filter(|c| close(c.r, r) && close(c.s, s)).map(|c| (c.eps, c.value)).collect();
            if rows.len() < 2 {
                return Err(NlgError::InvalidArgument(format!("fewer than 2 eps values at r={r}, s={s}")));
            }
            rows.sort_by(|a, b| b.0.total_cmp(&a.0));
            let tail = &rows[rows.len() - 2..];
            let tmin = tail.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
            let tmax = tail.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
            let tmean = 0.5 * (tail[0].1 + tail[1].1);
            lo = lo.max(tmin);
            mid = mid.max(tmean);
            hi = hi.max(tmax);
            by_s.push(rows);
        }
        for w in by_s.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                if b.1 < a.1 - 1e-9 * a.1.abs().max(1.0) {
                    s_monotone = false;
                }
            }
        }
        per_r_lo.push(lo);
        per_r_mid.push(mid);
        per_r_hi.push(hi);
    }
    let extrap = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return v[0];
        }
        let (r1, r2) = (rs[0], rs[1]);
        v[0] - r1 * (v[1] - v[0]) / (r2 - r1)
    };
    let value = extrap(&per_r_mid);
    let liminf = extrap(&per_r_lo);
    let limsup = extrap(&per_r_hi);
    let (_, _, fit_residual) = line_fit(&rs, &per_r_mid);
    let smax = *ss.last().expect("nonempty");
    let mut tail: Vec<(f64, f64)> =
        table.iter().filter(|c| close(c.r, rs[0]) && close(c.s, smax)).map(|c| (c.eps, c.value)).collect();
    tail.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (_, eps_slope, _) = line_fit(
        &tail.iter().map(|t| t.0).collect::<Vec<_>>(),
        &tail.iter().map(|t| t.1).collect::<Vec<_>>(),
    );
    let scale = value.abs().max(1e-12);
    Ok(Extrapolation {
        value,
        last_r: per_r_mid[0],
        liminf,
        limsup,
        variants_agree: (limsup - liminf).abs() <= 0.05 * scale,
        fit_residual,
        per_r: rs.iter().copied().zip(per_r_mid).collect(),
        s_monotone,
        eps_slope,
    })
}

struct Job {
    r: f64,
    s: f64,
    eps: f64,
    h: f64,
}

fn jobs(sweep: &Sweep) -> Result<Vec<Job>> {
    if sweep.r.is_empty() || sweep.s.is_empty() || sweep.eps_div.len() < 2 {
        return Err(NlgError::SweepInfeasible("need r, s and at least two eps values".into()));
    }
    let mut out = Vec::new();
    for &r in &sweep.r {
        for &s in &sweep.s {
            for &q in &sweep.eps_div {
                if q < 8 {
                    return Err(NlgError::SweepInfeasible(format!("eps = r/{q} violates eps <= r/8")));
                }
                let eps = r / q as f64;
                let h = eps / sweep.h_div.max(1) as f64;
                lattice_ratio(eps, h).map_err(|e| NlgError::SweepInfeasible(e.to_string()))?;
                let n = r / h;
                if (n - n.round()).abs() > 1e-9 * n {
                    return Err(NlgError::SweepInfeasible(format!("h={h} does not divide r={r}")));
                }
                out.push(Job { r, s, eps, h });
            }
        }
    }
    Ok(out)
}

fn run_sweep<F>(f: &IntegrandFamily, kind: CellKind, x: &[f64], sweep: &Sweep, datum: F) -> Result<Vec<CellRow>>
where
    F: Fn(&[f64]) -> TestFunction + Sync,
{
    let d = f.d;
    let list = jobs(sweep)?;
    let rows: Vec<Result<CellRow>> = list
        .par_iter()
        .enumerate()
        .map(|(n, job)| {
            let center: Vec<f64> = x.iter().enumerate().map(|(a, v)| if a == 0 { v + sweep.anchor_shift * job.eps } else { *v }).collect();
            let lo: Vec<f64> = center.iter().map(|c| c - 0.5 * job.r).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + 0.5 * job.r).collect();
            let spec = DirichletSpec::new(datum(&center), job.s, &lo, &hi);
            let m = dirichlet_minimum(
                f,
                &spec,
                job.h,
                job.eps,
                sweep.cutoff,
                sweep.restarts,
                sweep.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                &sweep.schedule,
            )?;
            let norm = match kind {
                CellKind::Bulk => job.r.powi(d as i32),
                CellKind::Surf => job.r.powi(d as i32 - 1),
            };
            Ok(CellRow { r: job.r, s: job.s, eps: job.eps, value: m.result.value / norm, status: m.result.status })
        })
        .collect();
    rows.into_iter().collect()
}

fn check_anchor(f: &IntegrandFamily, x: &[f64]) -> Result<()> {
    if x.len() != f.d {
        return Err(NlgError::DimensionMismatch(format!("anchor in R^{} for d={}", x.len(), f.d)));
    }
    Ok(())
}

/// f_bulk(x, L) from 𝔪_s(L(· − x), Q(x, r)) / r^d.
pub fn estimate_f_bulk(f: &IntegrandFamily, x: &[f64], linear: &[f64], sweep: &Sweep) -> Result<CellEstimate> {
    check_anchor(f, x)?;
    if linear.len() != f.m * f.d {
        return Err(NlgError::DimensionMismatch(format!("L has {} entries, expected {}", linear.len(), f.m * f.d)));
    }
    let d = f.d;
    let m = f.m;
    let table = run_sweep(f, CellKind::Bulk, x, sweep, |c| {
        let offset: Vec<f64> =
            (0..m).map(|q| -(0..d).map(|j| linear[q * d + j] * c[j]).sum::<f64>()).collect();
        TestFunction::affine(&offset, linear, d)
    })?;
    let extrapolated = extrapolate_triplet(&table)?;
    let param: Vec<String> = linear.iter().map(|v| format!("{v}")).collect();
    Ok(CellEstimate {
        kind: CellKind::Bulk,
        x: x.to_vec(),
        param: format!("L={}", param.join(";")),
        table,
        extrapolated,
        upper_bound: true,
        homogenised: !f.coefficient.is_constant(),
    })
}

fn axis_normal(nu: &[f64]) -> Result<()> {
    let nz: Vec<f64> = nu.iter().copied().filter(|v| *v != 0.0).collect();
    if nz.len() != 1 || nz[0].abs() != 1.0 {
        return Err(NlgError::UnsupportedNormal(nu.to_vec()));
    }
    Ok(())
}

/// f_surf(x, ζ, ν) from 𝔪_s(u_{x,ζ,ν}, Q^ν(x, r)) / r^{d−1}; ν must be a signed axis.
pub fn estimate_f_surf(f: &IntegrandFamily, x: &[f64], zeta: &[f64], nu: &[f64], sweep: &Sweep) -> Result<CellEstimate> {
    check_anchor(f, x)?;
    if zeta.len() != f.m || nu.len() != f.d {
        return Err(NlgError::DimensionMismatch("jump or normal".into()));
    }
    axis_normal(nu)?;
    let table = run_sweep(f, CellKind::Surf, x, sweep, |c| TestFunction::step(c, zeta, nu))?;
    let extrapolated = extrapolate_triplet(&table)?;
    let z: Vec<String> = zeta.iter().map(|v| format!("{v}")).collect();
    let n: Vec<String> = nu.iter().map(|v| format!("{v}")).collect();
    Ok(CellEstimate {
        kind: CellKind::Surf,
        x: x.to_vec(),
        param: format!("zeta={};nu={}", z.join(";"), n.join(";")),
        table,
        extrapolated,
        upper_bound: true,
        homogenised: !f.coefficient.is_constant(),
    })
}
