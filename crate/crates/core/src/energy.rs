//! Evaluation of the non-local energies on grid fields:
//!
//! ```text
//! F_ε^T(u, U) = Σ_{|ξ_k| ≤ T} w_k Σ_{(i, i+k) ⊂ U} h^d f_ε(x_i, ξ_k, (u_{i+k} − u_i)/ε)
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{NlgError, Result};
use crate::grid::{
    clipped_area, clipped_length, interface_measure, offset_set, shifted_pairs, Field, GridDomain, Mask, OffsetSet,
    TestFunction,
};
use crate::integrands::{g_eps_sq, IntegrandFamily};
use crate::kernels::{kappa, limit_constants, sphere_area, EpsKernel, KernelSetup, RadialKernel};

/// Kahan–Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Neumaier::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum()
}

/// Offsets and the node pairs they connect inside a mask, built once per
/// (domain, mask, ε, T).
#[derive(Debug, Clone)]
pub struct PairPlan {
    pub domain: Arc<GridDomain>,
    pub eps: f64,
    pub offsets: OffsetSet,
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl PairPlan {
    pub fn new(domain: &Arc<GridDomain>, mask: &Mask, eps: f64, cutoff: f64) -> Result<Self> {
        let offsets = offset_set(eps, domain.h, cutoff, domain.d)?;
        if mask.bits.len() != domain.len() {
            return Err(NlgError::DimensionMismatch("mask does not match domain".into()));
        }
        let pairs = offsets
            .offsets
            .par_iter()
            .map(|o| {
                shifted_pairs(domain, mask, o.k)
                    .into_iter()
                    .map(|(i, j)| (i as u32, j as u32))
                    .collect()
            })
            .collect();
        Ok(Self { domain: domain.clone(), eps, offsets, pairs })
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if !Arc::ptr_eq(&u.domain, &self.domain) && *u.domain != *self.domain {
            return Err(NlgError::DomainMismatch);
        }
        Ok(())
    }

    /// Per-offset energies of `f` (already weighted), in offset order.
    pub fn per_offset(&self, f: &IntegrandFamily, u: &Field) -> Result<Vec<f64>> {
        self.check_field(u)?;
        if f.d != self.domain.d || f.m != u.m {
            return Err(NlgError::DimensionMismatch(format!(
                "family {} is (d={}, m={}), field is (d={}, m={})",
                f.name, f.d, f.m, self.domain.d, u.m
            )));
        }
        let eps = self.eps;
        let hd = self.domain.cell_volume();
        let parts: Vec<f64> = self
            .offsets
            .offsets
            .par_iter()
            .zip(self.pairs.par_iter())
            .map(|(o, pairs)| {
                let mut acc = Neumaier::default();
                if f.is_custom() {
                    let xi = &o.xi[..self.domain.d];
                    let mut z = vec![0.0; u.m];
                    for &(i, j) in pairs {
                        let (a, b) = (u.at(i as usize), u.at(j as usize));
                        for c in 0..u.m {
                            z[c] = (b[c] - a[c]) / eps;
                        }
                        let x = self.domain.node(i as usize);
                        acc.add(f.eval_unchecked(eps, &x[..self.domain.d], xi, &z));
                    }
                } else {
                    let c = f.coeffs(eps, o.r);
                    if c.rho == 0.0 && c.psi == 0.0 && c.eta == 0.0 {
                        return 0.0;
                    }
                    let inv = 1.0 / (eps * eps);
                    for &(i, j) in pairs {
                        let z2 = dist2(u.at(i as usize), u.at(j as usize)) * inv;
                        let x = self.domain.node(i as usize);
                        acc.add(f.density(eps, &c, &x, z2));
                    }
                }
                o.w * hd * acc.value()
            })
            .collect();
        Ok(parts)
    }

    pub fn energy(&self, f: &IntegrandFamily, u: &Field) -> Result<f64> {
        Ok(neumaier_sum(self.per_offset(f, u)?))
    }
}

/// Reference-functional components evaluated in the same pair sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub g1: f64,
    pub g2: f64,
    pub p: f64,
    pub eta_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub per_offset: Vec<([i64; 2], f64)>,
    pub cutoff: f64,
    pub components: Option<Components>,
}

/// F_ε^T(u, U).
pub fn energy_total(f: &IntegrandFamily, u: &Field, mask: &Mask, eps: f64, cutoff: f64) -> Result<EnergyBreakdown> {
    let plan = PairPlan::new(&u.domain, mask, eps, cutoff)?;
    let parts = plan.per_offset(f, u)?;
    let total = neumaier_sum(parts.iter().copied());
    if !total.is_finite() {
        return Err(NlgError::NonFinite(format!("energy of family {} at eps={eps}", f.name)));
    }
    Ok(EnergyBreakdown {
        total,
        per_offset: plan.offsets.offsets.iter().map(|o| o.k).zip(parts).collect(),
        cutoff,
        components: None,
    })
}

/// G_{1,ε}, G_{2,ε}, P_ε and the η term in one sweep; `total` is H_ε = G₂ + P.
pub fn reference_energies(
    setup: &KernelSetup,
    u: &Field,
    mask: &Mask,
    eps: f64,
    cutoff: f64,
) -> Result<EnergyBreakdown> {
    if setup.dim() != u.domain.d {
        return Err(NlgError::DimensionMismatch("kernel setup vs field".into()));
    }
    let plan = PairPlan::new(&u.domain, mask, eps, cutoff)?;
    let hd = u.domain.cell_volume();
    let parts: Vec<[f64; 4]> = plan
        .offsets
        .offsets
        .par_iter()
        .zip(plan.pairs.par_iter())
        .map(|(o, pairs)| {
            let r1 = setup.rho1.value(o.r);
            let r2 = setup.rho2.value(o.r);
            let ps = setup.psi.value(eps, o.r);
            let et = setup.eta.value(eps, o.r);
            let mut g = Neumaier::default();
            let mut p = Neumaier::default();
            let inv = 1.0 / (eps * eps);
            for &(i, j) in pairs {
                let z2 = dist2(u.at(i as usize), u.at(j as usize)) * inv;
                g.add(g_eps_sq(eps, z2));
                if ps != 0.0 {
                    p.add(z2.sqrt());
                }
            }
            let s = o.w * hd;
            let n = pairs.len() as f64;
            [s * r1 * g.value(), s * r2 * g.value(), s * ps * p.value(), s * et * n]
        })
        .collect();
    let c = Components {
        g1: neumaier_sum(parts.iter().map(|v| v[0])),
        g2: neumaier_sum(parts.iter().map(|v| v[1])),
        p: neumaier_sum(parts.iter().map(|v| v[2])),
        eta_term: neumaier_sum(parts.iter().map(|v| v[3])),
    };
    Ok(EnergyBreakdown {
        total: c.g2 + c.p,
        per_offset: plan.offsets.offsets.iter().map(|o| o.k).zip(parts.iter().map(|v| v[1] + v[2])).collect(),
        cutoff,
        components: Some(c),
    })
}

/// Energies with the unit kernel on B_r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Characteristic {
    pub g: f64,
    pub p: f64,
    pub h: f64,
    /// Lattice measure of B_r (sum of offset weights).
    pub ball: f64,
}

/// G^r_ε, P^r_ε and H^r_ε = G^r_ε + P^r_ε.
pub fn characteristic_energies(u: &Field, mask: &Mask, eps: f64, r: f64) -> Result<Characteristic> {
    let d = u.domain.d;
    let unit = RadialKernel::boxed(1.0, r, d)?;
    let setup = KernelSetup::new(unit.clone(), unit.clone(), EpsKernel::Fixed(unit), EpsKernel::zero(d))?;
    let e = reference_energies(&setup, u, mask, eps, r)?;
    let c = e.components.expect("reference sweep fills components");
    let ball = offset_set(eps, u.domain.h, r, d)?.total_weight();
    Ok(Characteristic { g: c.g1, p: c.p, h: c.g1 + c.p, ball })
}

/// Result of comparing two cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct TailGap {
    pub gap: f64,
    pub moment_bound: f64,
    /// Discrete Lipschitz constant used in the bound.
    pub lipschitz: f64,
    /// Discrete sup norm used in the bound.
    pub sup_norm: f64,
}

/// F_ε^{T_max} − F_ε^T and an a-priori bound from the declared comparison kernels.
///
/// Each added pair term is bounded by ρ₂ min(z², 1/ε) + ψ_ε z + η_ε with
/// z = min(Lip·|ξ|₁, 2‖u‖_∞/ε), and each offset carries at most |U|/h^d pairs.
pub fn tail_gap(f: &IntegrandFamily, u: &Field, mask: &Mask, eps: f64, cutoff: f64, t_max: f64) -> Result<TailGap> {
    if !(t_max > cutoff) {
        return Err(NlgError::CutoffOrder { t: cutoff, t_max });
    }
    let near = energy_total(f, u, mask, eps, cutoff)?.total;
    let far = energy_total(f, u, mask, eps, t_max)?.total;
    let gap = far - near;
    let lip = u.lipschitz();
    let sup = u.sup_norm();
    let measure = u.domain.measure(mask);
    let wide = offset_set(eps, u.domain.h, t_max, u.domain.d)?;
    let small = offset_set(eps, u.domain.h, cutoff, u.domain.d)?;
    let b = &f.bounds;
    let mut bound = Neumaier::default();
    for o in &wide.offsets {
        let w_small = small.offsets.iter().find(|s| s.k == o.k).map_or(0.0, |s| s.w);
        let dw = o.w - w_small;
        if dw <= 0.0 {
            continue;
        }
        let l1 = (o.xi[0].abs() + o.xi[1].abs()).max(o.r);
        let z = (lip * l1).min(2.0 * sup / eps);
        let term = b.rho2.value(o.r) * g_eps_sq(eps, z * z) + b.psi.value(eps, o.r) * z + b.eta.value(eps, o.r);
        bound.add(dw * measure * term);
    }
    if gap < -1e-12 * far.abs().max(1.0) {
        return Err(NlgError::NonFinite(format!("negative tail gap {gap}")));
    }
    Ok(TailGap { gap, moment_bound: bound.value(), lipschitz: lip, sup_norm: sup })
}

/// Limit-functional values of a piecewise-affine test function on a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumValues {
    /// λ₁∫|∇u|² + μ₁ H^{d−1}(J_u), with μ₁ = 2|S^{d−1}|∫|ξ|ρ₁.
    pub ms1: f64,
    pub ms2: f64,
    /// κ|Du|(U).
    pub tv: f64,
    pub h_limit: f64,
    /// Σ ∫ρ₁|ξ·ν| dξ · H^{d−1}(interface) (surface part with the direct constant).
    pub derived_surface: f64,
    /// MS₁ and MS₂ with the direct surface constants in place of μ_i.
    pub derived_ms1: f64,
    pub derived_ms2: f64,
    /// derived_ms2 + tv.
    pub derived_h: f64,
}

fn piece_measure(tf: &TestFunction, idx: usize, lo: &[f64], hi: &[f64]) -> f64 {
    let region = &tf.pieces[idx].region;
    match tf.d {
        1 => clipped_length(lo[0], hi[0], region),
        _ => clipped_area(lo, hi, region),
    }
}

pub fn continuum_limit_value(setup: &KernelSetup, tf: &TestFunction, lo: &[f64], hi: &[f64]) -> Result<ContinuumValues> {
    let d = setup.dim();
    if tf.d != d || lo.len() != d || hi.len() != d {
        return Err(NlgError::DimensionMismatch("test function, setup and box".into()));
    }
    tf.validate_jumps()?;
    let c1 = limit_constants(&setup.rho1, d)?;
    let c2 = limit_constants(&setup.rho2, d)?;
    let mut grad2 = 0.0;
    let mut grad1 = 0.0;
    for (i, p) in tf.pieces.iter().enumerate() {
        let meas = piece_measure(tf, i, lo, hi);
        let n2: f64 = p.linear.iter().map(|v| v * v).sum();
        grad2 += n2 * meas;
        grad1 += n2.sqrt() * meas;
    }
    let mut jump_meas = 0.0;
    let mut jump_tv = 0.0;
    let mut surf1 = 0.0;
    let mut surf2 = 0.0;
    for itf in &tf.interfaces {
        let meas = interface_measure(itf, lo, hi);
        if meas == 0.0 || itf.jump.iter().all(|v| *v == 0.0) {
            continue;
        }
        jump_meas += meas;
        jump_tv += itf.jump.iter().map(|v| v * v).sum::<f64>().sqrt() * meas;
        surf1 += setup.rho1.surface_constant(&itf.normal)? * meas;
        surf2 += setup.rho2.surface_constant(&itf.normal)? * meas;
    }
    let k = kappa(d);
    let ms1 = c1.lambda * grad2 + c1.mu_formula * jump_meas;
    let ms2 = c2.lambda * grad2 + c2.mu_formula * jump_meas;
    let tv = k * (grad1 + jump_tv);
    let derived_ms1 = c1.lambda * grad2 + surf1;
    let derived_ms2 = c2.lambda * grad2 + surf2;
    debug_assert!(sphere_area(d) > 0.0);
    Ok(ContinuumValues {
        ms1,
        ms2,
        tv,
        h_limit: ms2 + tv,
        derived_surface: surf1,
        derived_ms1,
        derived_ms2,
        derived_h: derived_ms2 + tv,
    })
}

/// w = φu + (1 − φ)v.
pub fn glue_fields(u: &Field, v: &Field, phi: &Field) -> Result<Field> {
    if u.domain != v.domain || u.domain != phi.domain || u.m != v.m {
        return Err(NlgError::DomainMismatch);
    }
    if phi.m != 1 {
        return Err(NlgError::DimensionMismatch("cutoff must be scalar".into()));
    }
    if phi.values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(NlgError::InvalidArgument("cutoff values outside [0, 1]".into()));
    }
    let m = u.m;
    let values = (0..u.domain.len())
        .flat_map(|i| {
            let p = phi.values[i];
            (0..m).map(move |c| (i, c, p))
        })
        .map(|(i, c, p)| p * u.values[i * m + c] + (1.0 - p) * v.values[i * m + c])
        .collect();
    Field::new(u.domain.clone(), m, values)
}
