//! ε-indexed integrand families f_ε(x, ξ, z) and pointwise checks against
//! their declared comparison kernels.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{NlgError, Result};
use crate::kernels::{EpsKernel, KernelSetup, RadialKernel};
use crate::rng::{chunk_stream, DEFAULT_SEED};

/// Violations at or below this size are floating-point noise.
pub const NOISE: f64 = 1e-12;

/// min(|z|², 1/ε) from a precomputed |z|².
#[inline]
pub fn g_eps_sq(eps: f64, z2: f64) -> f64 {
    z2.min(1.0 / eps)
}

pub fn g_eps(eps: f64, z: &[f64]) -> f64 {
    g_eps_sq(eps, z.iter().map(|v| v * v).sum())
}

/// Saturating surrogate (1/ε)·q/(q+1), q = γε|z|².
#[inline]
pub fn surrogate(eps: f64, gamma: f64, z2: f64) -> f64 {
    let q = gamma * eps * z2;
    q / (q + 1.0) / eps
}

/// d/d(|z|²) of the surrogate.
#[inline]
pub fn surrogate_slope(eps: f64, gamma: f64, z2: f64) -> f64 {
    let q = gamma * eps * z2;
    gamma / ((q + 1.0) * (q + 1.0))
}

/// How the density depends on |z|².
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZProfile {
    /// g_ε(z)
    Min,
    /// (1/ε)·arctan(ε|z|²)
    Arctan,
}

/// How the density depends on the base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Constant,
    /// `lo` where frac(x₁/ε) < 1/2, `hi` elsewhere.
    Periodic { lo: f64, hi: f64 },
}

impl Coefficient {
    #[inline]
    pub fn at(&self, eps: f64, x: &[f64]) -> f64 {
        match *self {
            Coefficient::Constant => 1.0,
            Coefficient::Periodic { lo, hi } => {
                let t = x[0] / eps;
                if t - t.floor() < 0.5 {
                    lo
                } else {
                    hi
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant)
    }
}

pub type CustomFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;

/// Per-offset kernel values, evaluated once per (ε, ξ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetCoeffs {
    pub rho: f64,
    pub psi: f64,
    pub eta: f64,
}

/// f_ε(x,ξ,z) = a(x/ε)·ρ(ξ)·φ_ε(|z|²) + ψ_ε(ξ)|z| + η_ε(ξ), or a custom closure.
#[derive(Clone)]
pub struct IntegrandFamily {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub rho: RadialKernel,
    pub psi: EpsKernel,
    pub eta: EpsKernel,
    pub profile: ZProfile,
    pub coefficient: Coefficient,
    /// Declared comparison kernels.
    pub bounds: KernelSetup,
    custom: Option<Arc<CustomFn>>,
}

impl fmt::Debug for IntegrandFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrandFamily")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("profile", &self.profile)
            .field("coefficient", &self.coefficient)
            .field("custom", &self.custom.is_some())
            .finish()
    }
}

fn check_m(m: usize) -> Result<()> {
    if (1..=3).contains(&m) {
        Ok(())
    } else {
        Err(NlgError::DimensionMismatch(format!("target dimension m={m} not in 1..=3")))
    }
}

impl IntegrandFamily {
    /// ρ₁(ξ)·g_ε(z).
    pub fn reference(setup: &KernelSetup, m: usize) -> Result<Self> {
        check_m(m)?;
        let d = setup.dim();
        let bounds = KernelSetup::new(setup.rho1.clone(), setup.rho1.clone(), setup.psi.clone(), setup.eta.clone())?
            .with_lower_bound(setup.c0, setup.r0);
        Ok(Self {
            name: "reference".into(),
            d,
            m,
            rho: setup.rho1.clone(),
            psi: EpsKernel::zero(d),
            eta: EpsKernel::zero(d),
            profile: ZProfile::Min,
            coefficient: Coefficient::Constant,
            bounds,
            custom: None,
        })
    }

    /// ρ₂(ξ)·g_ε(z) + ψ_ε(ξ)|z| + η_ε(ξ), the upper comparison density itself.
    pub fn composite(setup: &KernelSetup, m: usize) -> Result<Self> {
        check_m(m)?;
        Ok(Self {
            name: "composite".into(),
            d: setup.dim(),
            m,
            rho: setup.rho2.clone(),
            psi: setup.psi.clone(),
            eta: setup.eta.clone(),
            profile: ZProfile::Min,
            coefficient: Coefficient::Constant,
            bounds: setup.clone(),
            custom: None,
        })
    }

    /// ρ(ξ)·(1/ε)·arctan(ε|z|²), bounded by (π/4)ρ·g_ε from below and (π/2)ρ·g_ε from above.
    pub fn arctan(rho: &RadialKernel, m: usize) -> Result<Self> {
        check_m(m)?;
        let d = rho.dim();
        let lo = rho.scaled(std::f64::consts::FRAC_PI_4)?;
        let hi = rho.scaled(std::f64::consts::FRAC_PI_2)?;
        let bounds = KernelSetup::new(lo, hi, EpsKernel::zero(d), EpsKernel::zero(d))?;
        Ok(Self {
            name: "arctan".into(),
            d,
            m,
            rho: rho.clone(),
            psi: EpsKernel::zero(d),
            eta: EpsKernel::zero(d),
            profile: ZProfile::Arctan,
            coefficient: Coefficient::Constant,
            bounds,
            custom: None,
        })
    }

    /// a(x/ε)·ρ(ξ)·g_ε(z) with a 1-periodic two-valued coefficient.
    pub fn periodic(rho: &RadialKernel, lo: f64, hi: f64, m: usize) -> Result<Self> {
        check_m(m)?;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(NlgError::InvalidArgument(format!("periodic coefficient needs 0 < lo <= hi, got {lo}, {hi}")));
        }
        let d = rho.dim();
        let bounds = KernelSetup::new(rho.scaled(lo)?, rho.scaled(hi)?, EpsKernel::zero(d), EpsKernel::zero(d))?;
        Ok(Self {
            name: "periodic".into(),
            d,
            m,
            rho: rho.clone(),
            psi: EpsKernel::zero(d),
            eta: EpsKernel::zero(d),
            profile: ZProfile::Min,
            coefficient: Coefficient::Periodic { lo, hi },
            bounds,
            custom: None,
        })
    }

    /// A closure-defined family; evaluated pointwise only (no gradient).
    pub fn custom<F>(name: &str, bounds: KernelSetup, m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        check_m(m)?;
        let d = bounds.dim();
        Ok(Self {
            name: name.into(),
            d,
            m,
            rho: RadialKernel::zero(d),
            psi: EpsKernel::zero(d),
            eta: EpsKernel::zero(d),
            profile: ZProfile::Min,
            coefficient: Coefficient::Constant,
            bounds,
            custom: Some(Arc::new(f)),
        })
    }

    pub fn is_custom(&self) -> bool {
        self.custom.is_some()
    }

    /// Kernel values at ξ with |ξ| = `r`.
    #[inline]
    pub fn coeffs(&self, eps: f64, r: f64) -> OffsetCoeffs {
        OffsetCoeffs { rho: self.rho.value(r), psi: self.psi.value(eps, r), eta: self.eta.value(eps, r) }
    }

    /// Density from precomputed coefficients and |z|².
    #[inline]
    pub fn density(&self, eps: f64, c: &OffsetCoeffs, x: &[f64], z2: f64) -> f64 {
        let phi = match self.profile {
            ZProfile::Min => g_eps_sq(eps, z2),
            ZProfile::Arctan => (eps * z2).atan() / eps,
        };
        let mut v = c.rho * self.coefficient.at(eps, x) * phi;
        if c.psi != 0.0 {
            v += c.psi * z2.sqrt();
        }
        v + c.eta
    }

    /// Checked pointwise evaluation of f_ε(x, ξ, z).
    pub fn eval(&self, eps: f64, x: &[f64], xi: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != self.d || xi.len() != self.d || z.len() != self.m {
            return Err(NlgError::DimensionMismatch(format!(
                "family {} expects x,ξ ∈ R^{} and z ∈ R^{}, got {}, {}, {}",
                self.name,
                self.d,
                self.m,
                x.len(),
                xi.len(),
                z.len()
            )));
        }
        if !(eps > 0.0) {
            return Err(NlgError::InvalidArgument(format!("eps = {eps}")));
        }
        Ok(self.eval_unchecked(eps, x, xi, z))
    }

    #[inline]
    pub fn eval_unchecked(&self, eps: f64, x: &[f64], xi: &[f64], z: &[f64]) -> f64 {
        if let Some(f) = &self.custom {
            return f(eps, x, xi, z);
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z2 = z.iter().map(|v| v * v).sum();
        self.density(eps, &self.coeffs(eps, r), x, z2)
    }
}

/// Outcome of a sampled inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub check: String,
    pub samples: usize,
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(check: &str, samples: usize, lower: f64, upper: f64) -> Self {
        Self {
            check: check.into(),
            samples,
            max_lower_violation: lower,
            max_upper_violation: upper,
            pass: lower <= NOISE && upper <= NOISE,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{}",
            self.check, self.samples, self.max_lower_violation, self.max_upper_violation, self.pass
        )
    }
}

pub type SandwichReport = CheckReport;

/// Ranges for drawing (ε, x, ξ, z).
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub eps: Vec<f64>,
    pub xi_max: f64,
    /// |z| is drawn up to `z_scale/√ε`.
    pub z_scale: f64,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Sampler {
    pub fn new(d: usize) -> Self {
        Self {
            eps: (0..=10).map(|j| 2f64.powi(-j)).collect(),
            xi_max: 4.0,
            z_scale: 10.0,
            x_lo: vec![0.0; d],
            x_hi: vec![1.0; d],
            samples: 10_000,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub(crate) const CHUNK: usize = 1024;

pub(crate) fn random_vector<R: Rng>(rng: &mut R, dim: usize, max_norm: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
    let r = max_norm * rng.random::<f64>();
    for a in &mut v {
        *a *= r / n;
    }
    v
}

/// Draws one (ε, x, ξ, z) sample.
pub(crate) fn draw<R: Rng>(rng: &mut R, s: &Sampler, m: usize) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let eps = s.eps[rng.random_range(0..s.eps.len())];
    let x: Vec<f64> = s.x_lo.iter().zip(&s.x_hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
    let xi = random_vector(rng, s.x_lo.len(), s.xi_max);
    let z = random_vector(rng, m, s.z_scale / eps.sqrt());
    (eps, x, xi, z)
}

/// Runs `body` over `samples` seeded draws in fixed chunks and reduces
/// (lower, upper) violations by max in chunk order.
pub(crate) fn chunked_max<F>(seed: u64, name: &str, samples: usize, body: F) -> (f64, f64)
where
    F: Fn(&mut crate::rng::Stream, usize) -> (f64, f64) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_stream(seed, name, c);
            let n = CHUNK.min(samples - c * CHUNK);
            body(&mut rng, n)
        })
        .collect();
    parts.into_iter().fold((0.0, 0.0), |(a, b), (c, d)| (a.max(c), b.max(d)))
}

/// Relative size of `lhs − rhs` above `rhs`.
#[inline]
pub(crate) fn excess(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / rhs.abs().max(1.0)
}

/// ρ₁g_ε ≤ f_ε ≤ ρ₂g_ε + ψ_ε|z| + η_ε on seeded samples.
pub fn sandwich_check(f: &IntegrandFamily, setup: &KernelSetup, sampler: &Sampler) -> SandwichReport {
    let (lower, upper) = chunked_max(sampler.seed, "sandwich", sampler.samples, |rng, n| {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let (eps, x, xi, z) = draw(rng, sampler, f.m);
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let zn = z.iter().map(|v| v * v).sum::<f64>();
            let g = g_eps_sq(eps, zn);
            let v = f.eval_unchecked(eps, &x, &xi, &z);
            let below = setup.rho1.value(r) * g;
            let above = setup.rho2.value(r) * g + setup.psi.value(eps, r) * zn.sqrt() + setup.eta.value(eps, r);
            lo = lo.max(excess(below, v));
            hi = hi.max(excess(v, above));
        }
        (lo, hi)
    });
    CheckReport::new("sandwich", sampler.samples, lower, upper)
}

/// f_ε(x,ξ,z₁) ≤ f_ε(x,ξ,z₂) whenever |z₁| ≤ |z₂|.
pub fn monotonicity_check(f: &IntegrandFamily, sampler: &Sampler) -> CheckReport {
    let (_, upper) = chunked_max(sampler.seed, "monotonicity", sampler.samples, |rng, n| {
        let mut worst = 0.0f64;
        for _ in 0..n {
            let (eps, x, xi, z2) = draw(rng, sampler, f.m);
            let n2 = z2.iter().map(|v| v * v).sum::<f64>().sqrt();
            let z1 = random_vector(rng, f.m, n2);
            let a = f.eval_unchecked(eps, &x, &xi, &z1);
            let b = f.eval_unchecked(eps, &x, &xi, &z2);
            worst = worst.max(excess(a, b));
        }
        (0.0, worst)
    });
    CheckReport::new("monotonicity", sampler.samples, 0.0, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_kernel;

    fn box_setup(d: usize) -> KernelSetup {
        KernelSetup::reference(make_kernel("box:0.5,1", d).unwrap())
    }

    #[test]
    fn g_eps_branches() {
        assert_eq!(g_eps(0.01, &[0.5]), 0.25);
        assert_eq!(g_eps(0.01, &[20.0]), 100.0);
        assert_eq!(g_eps(0.25, &[1.0, 1.0]), 2.0);
    }

    #[test]
    fn surrogate_is_below_cap_and_matches_slope() {
        let (eps, gamma) = (0.1, 0.7);
        for z2 in [0.0, 0.3, 4.0, 100.0, 1e6] {
            let v = surrogate(eps, gamma, z2);
            assert!(v >= 0.0 && v < 1.0 / eps);
            let dz = 1e-6 * (1.0 + z2);
            let fd = (surrogate(eps, gamma, z2 + dz) - surrogate(eps, gamma, z2 - dz.min(z2))) / (dz + dz.min(z2));
            assert!((fd - surrogate_slope(eps, gamma, z2)).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn built_in_evaluations() {
        let setup = box_setup(1);
        let f = IntegrandFamily::reference(&setup, 1).unwrap();
        assert_eq!(f.eval(0.1, &[0.3], &[0.5], &[2.0]).unwrap(), 2.0);
        let rho = make_kernel("gaussian:1,1", 1).unwrap();
        let a = IntegrandFamily::arctan(&rho, 1).unwrap();
        assert_eq!(a.eval(1.0, &[0.2], &[0.0], &[0.0]).unwrap(), 0.0);
        let p = IntegrandFamily::periodic(&setup.rho1, 1.0, 2.0, 1).unwrap();
        assert_eq!(p.eval(0.1, &[0.05], &[1.0], &[1.0]).unwrap(), 2.0 * 0.5);
        assert_eq!(p.eval(0.1, &[0.01], &[1.0], &[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn eval_rejects_wrong_dimensions() {
        let f = IntegrandFamily::reference(&box_setup(1), 1).unwrap();
        assert!(matches!(f.eval(0.1, &[0.3, 0.1], &[0.5], &[1.0]), Err(NlgError::DimensionMismatch(_))));
        assert!(matches!(f.eval(0.1, &[0.3], &[0.5], &[1.0, 2.0]), Err(NlgError::DimensionMismatch(_))));
    }

    #[test]
    fn sandwich_reports() {
        let setup = box_setup(1);
        let s = Sampler::new(1);
        let r = IntegrandFamily::reference(&setup, 1).unwrap();
        let rep = sandwich_check(&r, &r.bounds, &s);
        assert!(rep.pass);
        assert_eq!((rep.max_lower_violation, rep.max_upper_violation), (0.0, 0.0));

        let p = IntegrandFamily::periodic(&setup.rho1, 1.0, 2.0, 1).unwrap();
        assert!(sandwich_check(&p, &p.bounds, &s).pass);

        let rho = make_kernel("gaussian:1,1", 2).unwrap();
        let a = IntegrandFamily::arctan(&rho, 2).unwrap();
        assert!(sandwich_check(&a, &a.bounds, &Sampler::new(2)).pass);

        let rho2 = setup.rho2.clone();
        let bad = IntegrandFamily::custom("double", setup.clone(), 1, move |eps, _x, xi, z| {
            2.0 * rho2.value(xi[0].abs()) * g_eps(eps, z)
        })
        .unwrap();
        let rep = sandwich_check(&bad, &setup, &s);
        assert!(!rep.pass);
        assert!(rep.max_upper_violation > 0.0);
    }

    #[test]
    fn monotonicity_reports() {
        let s = Sampler::new(1);
        let setup = box_setup(1);
        assert!(monotonicity_check(&IntegrandFamily::reference(&setup, 1).unwrap(), &s).pass);
        let rho = make_kernel("gaussian:1,1", 1).unwrap();
        assert!(monotonicity_check(&IntegrandFamily::arctan(&rho, 1).unwrap(), &s).pass);
        let bad = IntegrandFamily::custom("sin", setup.clone(), 1, |_, _, xi, z| {
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            0.5 * (xi[0].abs() <= 1.0) as u8 as f64 * n.sin().powi(2)
        })
        .unwrap();
        assert!(!monotonicity_check(&bad, &s).pass);
        let eps = 1.0;
        let lo = bad.eval(eps, &[0.0], &[0.5], &[std::f64::consts::FRAC_PI_2]).unwrap();
        let hi = bad.eval(eps, &[0.0], &[0.5], &[std::f64::consts::PI]).unwrap();
        assert!(lo > hi);
    }
}
