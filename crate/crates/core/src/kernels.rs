//! Radial kernels, their moments, the limit constants they induce, and the
//! admissibility conditions on a kernel setup.
//!
//! Kernel specs use a small textual grammar shared with the config files:
//!
//! ```text
//! zero
//! box:c,R                 c on |ξ| ≤ R
//! gaussian:sigma,mass     mass · (π σ²)^{-d/2} · exp(-|ξ|²/σ²)
//! power:c,p,R             c · |ξ|^p on 0 < |ξ| ≤ R
//! truncated:T:<spec>      <spec> restricted to |ξ| ≤ T
//! scaled:c:<spec>         c · <spec>
//! normalized:<spec>       <spec> rescaled so that ∫|ξ| ρ = 1
//! epspow:p:<spec>         ε-indexed family ε^p · <spec>  (ε-families only)
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Mutex;

use crate::error::{NlgError, Result};
use crate::quadrature::{adaptive, adaptive_split};

const QUAD_TOL: f64 = 1e-12;
const OUTER_STOP: f64 = 1e-10;
const GROWTH_LIMIT: f64 = 0.01;
const GROWTH_STREAK: u32 = 4;

/// Closed-form radial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Box { value: f64, radius: f64 },
    Gaussian { sigma: f64, mass: f64 },
    Power { coeff: f64, exponent: f64, radius: f64 },
    Truncated { inner: Box<Profile>, cutoff: f64 },
    Scaled { factor: f64, inner: Box<Profile> },
}

impl Profile {
    pub fn eval(&self, r: f64, dim: usize) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Box { value, radius } => {
                if r <= *radius {
                    *value
                } else {
                    0.0
                }
            }
            Profile::Gaussian { sigma, mass } => {
                let norm = (PI * sigma * sigma).powf(-(dim as f64) / 2.0);
                mass * norm * (-(r * r) / (sigma * sigma)).exp()
            }
            Profile::Power { coeff, exponent, radius } => {
                if r > 0.0 && r <= *radius {
                    coeff * r.powf(*exponent)
                } else if r == 0.0 && *exponent >= 0.0 {
                    if *exponent == 0.0 {
                        *coeff
                    } else {
                        0.0
                    }
                } else if r == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::Truncated { inner, cutoff } => {
                if r <= *cutoff {
                    inner.eval(r, dim)
                } else {
                    0.0
                }
            }
            Profile::Scaled { factor, inner } => factor * inner.eval(r, dim),
        }
    }

    /// Support radius; `None` when unbounded.
    pub fn support(&self) -> Option<f64> {
        match self {
            Profile::Zero => Some(0.0),
            Profile::Box { radius, .. } | Profile::Power { radius, .. } => Some(*radius),
            Profile::Gaussian { .. } => None,
            Profile::Truncated { inner, cutoff } => {
                Some(inner.support().map_or(*cutoff, |s| s.min(*cutoff)))
            }
            Profile::Scaled { factor, inner } => {
                if *factor == 0.0 {
                    Some(0.0)
                } else {
                    inner.support()
                }
            }
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Profile::Box { radius, .. } | Profile::Power { radius, .. } => out.push(*radius),
            Profile::Truncated { inner, cutoff } => {
                out.push(*cutoff);
                inner.breakpoints(out);
            }
            Profile::Scaled { inner, .. } => inner.breakpoints(out),
            Profile::Zero | Profile::Gaussian { .. } => {}
        }
    }

    /// Radius beyond which an unbounded profile is in its decaying tail.
    fn tail_scale(&self) -> f64 {
        match self {
            Profile::Gaussian { sigma, .. } => 6.0 * sigma,
            Profile::Truncated { inner, .. } | Profile::Scaled { inner, .. } => inner.tail_scale(),
            _ => 1.0,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::Box { value, radius } => write!(f, "box:{value},{radius}"),
            Profile::Gaussian { sigma, mass } => write!(f, "gaussian:{sigma},{mass}"),
            Profile::Power { coeff, exponent, radius } => write!(f, "power:{coeff},{exponent},{radius}"),
            Profile::Truncated { inner, cutoff } => write!(f, "truncated:{cutoff}:{inner}"),
            Profile::Scaled { factor, inner } => write!(f, "scaled:{factor}:{inner}"),
        }
    }
}

/// Surface measure of the unit sphere in dimension `dim` (counting measure for d=1).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Lebesgue measure of the ball of radius `r`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        2 => PI * r * r,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// A radially symmetric kernel ρ(ξ) = profile(|ξ|) on R^d.
pub struct RadialKernel {
    profile: Profile,
    dim: usize,
    cache: Mutex<HashMap<(u32, u64), f64>>,
}

impl Clone for RadialKernel {
    fn clone(&self) -> Self {
        let cache = self.cache.lock().expect("moment cache poisoned").clone();
        Self { profile: self.profile.clone(), dim: self.dim, cache: Mutex::new(cache) }
    }
}

impl fmt::Debug for RadialKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialKernel").field("profile", &self.profile).field("dim", &self.dim).finish()
    }
}

impl PartialEq for RadialKernel {
    fn eq(&self, other: &Self) -> bool {
        self.profile == other.profile && self.dim == other.dim
    }
}

impl RadialKernel {
    pub fn new(profile: Profile, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(NlgError::DimensionMismatch(format!("kernel dimension {dim} not in {{1,2}}")));
        }
        validate(&profile)?;
        Ok(Self { profile, dim, cache: Mutex::new(HashMap::new()) })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(Profile::Zero, dim).expect("zero kernel is valid")
    }

    pub fn boxed(value: f64, radius: f64, dim: usize) -> Result<Self> {
        Self::new(Profile::Box { value, radius }, dim)
    }

    pub fn gaussian(sigma: f64, mass: f64, dim: usize) -> Result<Self> {
        Self::new(Profile::Gaussian { sigma, mass }, dim)
    }

    pub fn truncated(&self, cutoff: f64) -> Result<Self> {
        Self::new(Profile::Truncated { inner: Box::new(self.profile.clone()), cutoff }, self.dim)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(Profile::Scaled { factor, inner: Box::new(self.profile.clone()) }, self.dim)
    }

    /// Rescales so that the first moment equals one.
    pub fn normalized(&self) -> Result<Self> {
        let m1 = self.moment(1, f64::INFINITY)?;
        if m1 <= 0.0 {
            return Err(NlgError::InvalidArgument("cannot normalize a kernel with zero first moment".into()));
        }
        self.scaled(1.0 / m1)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// ρ at radius `r`.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        self.profile.eval(r, self.dim)
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.profile.support()
    }

    pub fn is_zero(&self) -> bool {
        self.profile.support() == Some(0.0)
    }

    /// ∫_{B_T} |ξ|^k ρ(ξ) dξ; pass `f64::INFINITY` for the full-space moment.
    pub fn moment(&self, k: u32, cutoff: f64) -> Result<f64> {
        if k > 6 {
            return Err(NlgError::InvalidArgument(format!("moment order {k} > 6")));
        }
        if cutoff.is_nan() || cutoff < 0.0 {
            return Err(NlgError::InvalidArgument(format!("cutoff {cutoff}")));
        }
        let key = (k, cutoff.to_bits());
        if let Some(v) = self.cache.lock().expect("moment cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = self.radial_moment(k, cutoff)?;
        self.cache.lock().expect("moment cache poisoned").insert(key, v);
        Ok(v)
    }

    fn radial_moment(&self, k: u32, cutoff: f64) -> Result<f64> {
        let dim = self.dim;
        let sphere = sphere_area(dim);
        let power = (k as i32) + (dim as i32) - 1;
        let phi = |r: f64| sphere * r.powi(power) * self.profile.eval(r, dim);
        let upper = match self.profile.support() {
            Some(s) => s.min(cutoff),
            None => cutoff,
        };
        if upper <= 0.0 {
            return Ok(0.0);
        }
        let mut breaks = Vec::new();
        self.profile.breakpoints(&mut breaks);
        breaks.retain(|&b| b > 0.0 && b < upper);
        let first_break = breaks.iter().copied().fold(f64::INFINITY, f64::min);
        let inner_end = upper.min(1.0).min(first_break);

        let mut total = toward_zero(&phi, inner_end, k)?;
        if upper.is_finite() {
            total += adaptive_split(&phi, inner_end, upper, &breaks, QUAD_TOL);
            return Ok(total);
        }

        let last_break = breaks.iter().copied().fold(0.0, f64::max);
        let mut c = inner_end.max(last_break).max(self.profile.tail_scale());
        total += adaptive_split(&phi, inner_end, c, &breaks, QUAD_TOL);
        let mut streak = 0;
        for _ in 0..64 {
            let piece = adaptive(&phi, c, 2.0 * c, QUAD_TOL);
            let before = total;
            total += piece;
            if piece.abs() <= OUTER_STOP * total.abs() || (total == 0.0 && piece == 0.0) {
                return Ok(total);
            }
            if before > 0.0 && piece > GROWTH_LIMIT * before {
                streak += 1;
                if streak >= GROWTH_STREAK {
                    return Err(NlgError::MomentDiverges { order: k });
                }
            } else {
                streak = 0;
            }
            c *= 2.0;
        }
        Err(NlgError::MomentDiverges { order: k })
    }

    /// ∫ ρ(ξ) |ξ·ν| dξ by Cartesian quadrature (independent of the radial
    /// moment route).
    pub fn surface_constant(&self, normal: &[f64]) -> Result<f64> {
        if normal.len() != self.dim {
            return Err(NlgError::DimensionMismatch(format!(
                "normal has {} components, kernel dimension {}",
                normal.len(),
                self.dim
            )));
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(NlgError::InvalidArgument("zero normal".into()));
        }
        let nu: Vec<f64> = normal.iter().map(|v| v / norm).collect();
        let radius = self.effective_radius()?;
        if radius == 0.0 {
            return Ok(0.0);
        }
        let mut breaks = Vec::new();
        self.profile.breakpoints(&mut breaks);
        breaks.retain(|&b| b > 0.0 && b < radius);
        let tol = 1e-11;
        match self.dim {
            1 => {
                let f = |t: f64| self.value(t.abs()) * (t * nu[0]).abs();
                let mut cuts: Vec<f64> = breaks.iter().flat_map(|&b| [b, -b]).collect();
                cuts.push(0.0);
                Ok(adaptive_split(&f, -radius, radius, &cuts, tol))
            }
            _ => {
                let inner = |x: f64| {
                    let span = (radius * radius - x * x).max(0.0).sqrt();
                    if span == 0.0 {
                        return 0.0;
                    }
                    let g = |y: f64| self.value((x * x + y * y).sqrt()) * (x * nu[0] + y * nu[1]).abs();
                    let mut cuts: Vec<f64> = breaks
                        .iter()
                        .filter(|&&b| b > x.abs())
                        .flat_map(|&b| {
                            let y = (b * b - x * x).sqrt();
                            [y, -y]
                        })
                        .collect();
                    if nu[1] != 0.0 {
                        cuts.push(-x * nu[0] / nu[1]);
                    }
                    adaptive_split(&g, -span, span, &cuts, tol)
                };
                let mut cuts: Vec<f64> = breaks.iter().flat_map(|&b| [b, -b]).collect();
                if nu[0] != 0.0 && nu[1] == 0.0 {
                    cuts.push(0.0);
                }
                Ok(adaptive_split(&inner, -radius, radius, &cuts, tol))
            }
        }
    }

    /// Smallest radius carrying the first moment to relative 1e-14.
    fn effective_radius(&self) -> Result<f64> {
        if let Some(s) = self.profile.support() {
            return Ok(s);
        }
        let full = self.moment(1, f64::INFINITY)?;
        let mut r = self.profile.tail_scale();
        while full - self.moment(1, r)? > 1e-14 * full {
            r *= 1.5;
        }
        Ok(r)
    }
}

/// Integrates `phi` on (0, b] by dyadic pieces towards zero, flagging a
/// divergent singularity when pieces stop shrinking.
fn toward_zero<F: Fn(f64) -> f64>(phi: &F, b: f64, order: u32) -> Result<f64> {
    let mut total = 0.0;
    let mut hi = b;
    let mut prev_piece = f64::NAN;
    let mut streak = 0;
    for _ in 0..600 {
        let lo = 0.5 * hi;
        let piece = adaptive(phi, lo, hi, QUAD_TOL);
        if !piece.is_finite() {
            return Err(NlgError::MomentDiverges { order });
        }
        total += piece;
        if piece.abs() <= 1e-15 * total.abs() || (total == 0.0 && piece == 0.0) {
            return Ok(total);
        }
        if prev_piece.is_finite() && piece >= prev_piece * (1.0 - 1e-9) && piece > 0.0 {
            streak += 1;
            if streak >= GROWTH_STREAK {
                return Err(NlgError::MomentDiverges { order });
            }
        } else {
            streak = 0;
        }
        prev_piece = piece;
        hi = lo;
    }
    Err(NlgError::MomentDiverges { order })
}

fn validate(p: &Profile) -> Result<()> {
    match p {
        Profile::Zero => Ok(()),
        Profile::Box { value, radius } => {
            if *radius <= 0.0 || !radius.is_finite() {
                return Err(NlgError::NonPositiveScale { name: "radius", value: *radius });
            }
            if *value < 0.0 || !value.is_finite() {
                return Err(NlgError::InvalidArgument(format!("box value {value} must be >= 0")));
            }
            Ok(())
        }
        Profile::Gaussian { sigma, mass } => {
            if *sigma <= 0.0 || !sigma.is_finite() {
                return Err(NlgError::NonPositiveScale { name: "sigma", value: *sigma });
            }
            if *mass <= 0.0 || !mass.is_finite() {
                return Err(NlgError::NonPositiveScale { name: "mass", value: *mass });
            }
            Ok(())
        }
        Profile::Power { coeff, radius, exponent } => {
            if *radius <= 0.0 || !radius.is_finite() {
                return Err(NlgError::NonPositiveScale { name: "radius", value: *radius });
            }
            if *coeff < 0.0 || !coeff.is_finite() || !exponent.is_finite() {
                return Err(NlgError::InvalidArgument(format!("power kernel coefficient {coeff}")));
            }
            Ok(())
        }
        Profile::Truncated { inner, cutoff } => {
            if *cutoff <= 0.0 || cutoff.is_nan() {
                return Err(NlgError::NonPositiveScale { name: "cutoff", value: *cutoff });
            }
            validate(inner)
        }
        Profile::Scaled { factor, inner } => {
            if *factor < 0.0 || !factor.is_finite() {
                return Err(NlgError::InvalidArgument(format!("scale factor {factor} must be >= 0")));
            }
            validate(inner)
        }
    }
}

fn parse_numbers<const N: usize>(spec: &str, args: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(NlgError::UnknownKernel(spec.to_string()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| NlgError::UnknownKernel(spec.to_string()))?;
    }
    Ok(out)
}

fn parse_profile(spec: &str, dim: usize) -> Result<Profile> {
    let spec = spec.trim().trim_matches('"');
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match name.trim() {
        "zero" if rest.is_empty() => Ok(Profile::Zero),
        "box" => {
            let [value, radius] = parse_numbers::<2>(spec, rest)?;
            Ok(Profile::Box { value, radius })
        }
        "gaussian" => {
            let [sigma, mass] = parse_numbers::<2>(spec, rest)?;
            Ok(Profile::Gaussian { sigma, mass })
        }
        "power" => {
            let [coeff, exponent, radius] = parse_numbers::<3>(spec, rest)?;
            Ok(Profile::Power { coeff, exponent, radius })
        }
        "truncated" => {
            let (t, inner) = rest.split_once(':').ok_or_else(|| NlgError::UnknownKernel(spec.to_string()))?;
            let cutoff: f64 = t.trim().parse().map_err(|_| NlgError::UnknownKernel(spec.to_string()))?;
            Ok(Profile::Truncated { inner: Box::new(parse_profile(inner, dim)?), cutoff })
        }
        "scaled" => {
            let (c, inner) = rest.split_once(':').ok_or_else(|| NlgError::UnknownKernel(spec.to_string()))?;
            let factor: f64 = c.trim().parse().map_err(|_| NlgError::UnknownKernel(spec.to_string()))?;
            Ok(Profile::Scaled { factor, inner: Box::new(parse_profile(inner, dim)?) })
        }
        "normalized" => {
            let base = RadialKernel::new(parse_profile(rest, dim)?, dim)?;
            Ok(base.normalized()?.profile)
        }
        _ => Err(NlgError::UnknownKernel(spec.to_string())),
    }
}

/// Builds a kernel from its textual spec.
pub fn make_kernel(spec: &str, dim: usize) -> Result<RadialKernel> {
    RadialKernel::new(parse_profile(spec, dim)?, dim)
}

/// An ε-indexed kernel family (ψ_ε, η_ε).
#[derive(Debug, Clone, PartialEq)]
pub enum EpsKernel {
    Fixed(RadialKernel),
    /// ε^exponent · base
    Power { exponent: f64, base: RadialKernel },
}

impl EpsKernel {
    pub fn zero(dim: usize) -> Self {
        EpsKernel::Fixed(RadialKernel::zero(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            EpsKernel::Fixed(k) | EpsKernel::Power { base: k, .. } => k.dim(),
        }
    }

    fn factor(&self, eps: f64) -> f64 {
        match self {
            EpsKernel::Fixed(_) => 1.0,
            EpsKernel::Power { exponent, .. } => eps.powf(*exponent),
        }
    }

    fn base(&self) -> &RadialKernel {
        match self {
            EpsKernel::Fixed(k) | EpsKernel::Power { base: k, .. } => k,
        }
    }

    #[inline]
    pub fn value(&self, eps: f64, r: f64) -> f64 {
        let b = self.base();
        if b.is_zero() {
            return 0.0;
        }
        self.factor(eps) * b.value(r)
    }

    pub fn moment(&self, eps: f64, k: u32, cutoff: f64) -> Result<f64> {
        Ok(self.factor(eps) * self.base().moment(k, cutoff)?)
    }

    pub fn is_zero(&self) -> bool {
        self.base().is_zero()
    }

    /// The member of the family at `eps`, as a standalone kernel.
    pub fn at(&self, eps: f64) -> Result<RadialKernel> {
        match self {
            EpsKernel::Fixed(k) => Ok(k.clone()),
            EpsKernel::Power { base, .. } => base.scaled(self.factor(eps)),
        }
    }
}

impl fmt::Display for EpsKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsKernel::Fixed(k) => write!(f, "{}", k.profile()),
            EpsKernel::Power { exponent, base } => write!(f, "epspow:{exponent}:{}", base.profile()),
        }
    }
}

/// Parses an ε-family spec; plain kernel specs give ε-independent families.
pub fn make_eps_kernel(spec: &str, dim: usize) -> Result<EpsKernel> {
    let s = spec.trim().trim_matches('"');
    if let Some(rest) = s.strip_prefix("epspow:") {
        let (p, inner) = rest.split_once(':').ok_or_else(|| NlgError::UnknownKernel(spec.to_string()))?;
        let exponent: f64 = p.trim().parse().map_err(|_| NlgError::UnknownKernel(spec.to_string()))?;
        return Ok(EpsKernel::Power { exponent, base: make_kernel(inner, dim)? });
    }
    Ok(EpsKernel::Fixed(make_kernel(s, dim)?))
}

/// The comparison kernels bounding an integrand family from above and below.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSetup {
    pub rho1: RadialKernel,
    pub rho2: RadialKernel,
    pub psi: EpsKernel,
    pub eta: EpsKernel,
    pub c0: f64,
    pub r0: f64,
}

impl KernelSetup {
    /// Picks `r0 = min(1, supp ρ1)/2` and `c0` as the minimum of ρ1 on `[0, r0]`.
    pub fn new(rho1: RadialKernel, rho2: RadialKernel, psi: EpsKernel, eta: EpsKernel) -> Result<Self> {
        let d = rho1.dim();
        if rho2.dim() != d || psi.dim() != d || eta.dim() != d {
            return Err(NlgError::DimensionMismatch("kernel setup mixes dimensions".into()));
        }
        let r0 = 0.5 * rho1.support_radius().unwrap_or(1.0).min(1.0);
        let c0 = profile_min(&rho1, r0);
        Ok(Self { rho1, rho2, psi, eta, c0, r0 })
    }

    /// ρ1 = ρ2 = ρ, no linear or constant terms.
    pub fn reference(rho: RadialKernel) -> Self {
        let d = rho.dim();
        Self::new(rho.clone(), rho, EpsKernel::zero(d), EpsKernel::zero(d)).expect("same dimension")
    }

    pub fn with_lower_bound(mut self, c0: f64, r0: f64) -> Self {
        self.c0 = c0;
        self.r0 = r0;
        self
    }

    pub fn dim(&self) -> usize {
        self.rho1.dim()
    }
}

fn profile_min(k: &RadialKernel, r0: f64) -> f64 {
    if r0 <= 0.0 {
        return 0.0;
    }
    (0..=256).map(|i| k.value(r0 * i as f64 / 256.0)).fold(f64::INFINITY, f64::min)
}

/// Constants of the limit functionals induced by a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub lambda: f64,
    pub mu_formula: f64,
    pub kappa: f64,
    /// ∫ρ|ξ·ν| for a few sampled directions ν.
    pub surface_const: Vec<(Vec<f64>, f64)>,
}

impl ConstantsReport {
    /// Surface constant along the first axis.
    pub fn surface(&self) -> f64 {
        self.surface_const.first().map_or(0.0, |(_, v)| *v)
    }

    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("lambda".to_string(), self.lambda),
            ("mu_formula".to_string(), self.mu_formula),
            ("kappa".to_string(), self.kappa),
        ];
        for (nu, v) in &self.surface_const {
            let label: Vec<String> = nu.iter().map(|c| format!("{c:.6}")).collect();
            rows.push((format!("surface_const[{}]", label.join(";")), *v));
        }
        rows
    }
}

/// κ = average of |e₁·σ| over the unit sphere.
pub fn kappa(dim: usize) -> f64 {
    match dim {
        1 => 0.5 * (1.0f64.abs() + (-1.0f64).abs()),
        _ => {
            let f = |t: f64| t.cos().abs();
            adaptive_split(&f, 0.0, 2.0 * PI, &[0.5 * PI, 1.5 * PI], 1e-14) / (2.0 * PI)
        }
    }
}

pub fn limit_constants(kernel: &RadialKernel, dim: usize) -> Result<ConstantsReport> {
    if kernel.dim() != dim {
        return Err(NlgError::DimensionMismatch(format!("kernel dimension {} vs {dim}", kernel.dim())));
    }
    let m2 = kernel.moment(2, f64::INFINITY)?;
    let m1 = kernel.moment(1, f64::INFINITY)?;
    let directions: Vec<Vec<f64>> = match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => [0.0, PI / 6.0, PI / 4.0, PI / 2.0, PI]
            .iter()
            .map(|t: &f64| vec![t.cos(), t.sin()])
            .collect(),
    };
    let mut surface_const = Vec::with_capacity(directions.len());
    for nu in directions {
        let v = kernel.surface_constant(&nu)?;
        surface_const.push((nu, v));
    }
    Ok(ConstantsReport {
        lambda: m2 / dim as f64,
        mu_formula: 2.0 * sphere_area(dim) * m1,
        kappa: kappa(dim),
        surface_const,
    })
}

/// Outcome of one admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub conditions: Vec<Condition>,
    /// Finite-sample estimate of limsup ‖η_ε‖_{L¹}.
    pub lambda_eta: f64,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Extrapolates a sampled ε → value sequence to ε = 0 from its last two
/// entries, clamped to the sampled range.
fn limsup_estimate(eps: &[f64], values: &[f64]) -> f64 {
    let n = values.len();
    match n {
        0 => 0.0,
        1 => values[0],
        _ => {
            let (e1, e2) = (eps[n - 2], eps[n - 1]);
            let (v1, v2) = (values[n - 2], values[n - 1]);
            let slope = (v1 - v2) / (e1 - e2);
            let extrap = v2 - e2 * slope;
            let hi = values[n / 2..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            extrap.clamp(0.0, hi.max(0.0))
        }
    }
}

/// Checks the kernel hypotheses on a finite ε-sample. The asymptotic
/// conditions are only verified on the sample.
pub fn admissibility_report(setup: &KernelSetup, eps_sequence: &[f64]) -> AdmissibilityReport {
    let mut conditions = Vec::new();
    let decreasing = !eps_sequence.is_empty()
        && eps_sequence.iter().all(|&e| e > 0.0)
        && eps_sequence.windows(2).all(|w| w[1] < w[0]);
    conditions.push(Condition {
        name: "eps_sequence".into(),
        pass: decreasing,
        detail: format!("{} samples, strictly decreasing: {decreasing}", eps_sequence.len()),
    });

    for (label, k) in [("rho1", &setup.rho1), ("rho2", &setup.rho2)] {
        let mut detail = Vec::new();
        let mut pass = true;
        for order in 0..=2 {
            match k.moment(order, f64::INFINITY) {
                Ok(v) => detail.push(format!("m{order}={v:.10e}")),
                Err(e) => {
                    pass = false;
                    detail.push(format!("m{order}: {e}"));
                }
            }
        }
        conditions.push(Condition { name: format!("finite_momenta({label})"), pass, detail: detail.join(" ") });
    }

    let min_r0 = profile_min(&setup.rho1, setup.r0);
    conditions.push(Condition {
        name: "non_zero_in_zero".into(),
        pass: setup.c0 > 0.0 && setup.r0 > 0.0 && min_r0 >= setup.c0,
        detail: format!("min rho1 on [0,{}] = {min_r0:.6e}, c0 = {:.6e}", setup.r0, setup.c0),
    });

    let tail_start = eps_sequence.len() / 2;
    let mut psi_moments = Vec::new();
    let mut psi_mass = Vec::new();
    let mut eta_mass = Vec::new();
    let mut psi_ok = true;
    let mut finite_ok = true;
    let mut psi_detail = Vec::new();
    for &eps in eps_sequence {
        match (setup.psi.moment(eps, 1, f64::INFINITY), setup.psi.moment(eps, 0, f64::INFINITY)) {
            (Ok(m1), Ok(m0)) => {
                if (m1 - 1.0).abs() > 1e-6 {
                    psi_ok = false;
                    psi_detail.push(format!("eps={eps:.3e}: {m1:.8}"));
                }
                psi_moments.push(m1);
                psi_mass.push(m0);
            }
            _ => {
                psi_ok = false;
                finite_ok = false;
            }
        }
        match setup.eta.moment(eps, 0, f64::INFINITY) {
            Ok(v) => eta_mass.push(v),
            Err(_) => finite_ok = false,
        }
    }
    // With ψ ≡ 0 there is no P term and the normalisation is vacuous.
    let psi_absent = setup.psi.is_zero();
    conditions.push(Condition {
        name: "psi_momento".into(),
        pass: (psi_ok || psi_absent) && !eps_sequence.is_empty(),
        detail: if psi_absent {
            "psi = 0: no P term, normalisation not required".into()
        } else if psi_detail.is_empty() {
            "int |xi| psi_eps = 1 on every sample".into()
        } else {
            format!("off by more than 1e-6: {}", psi_detail.join(", "))
        },
    });

    let mut tail_rows = Vec::new();
    let mut tail_ok = finite_ok;
    for delta in [1e-1, 1e-2, 1e-3] {
        let mut found = None;
        'radius: for j in 0..48 {
            let r = 0.25 * 2f64.powi(j);
            let mut worst: f64 = 0.0;
            for &eps in &eps_sequence[tail_start..] {
                let psi_tail = setup.psi.moment(eps, 1, f64::INFINITY).and_then(|a| {
                    setup.psi.moment(eps, 1, r).map(|b| a - b)
                });
                let eta_tail = setup.eta.moment(eps, 0, f64::INFINITY).and_then(|a| {
                    setup.eta.moment(eps, 0, r).map(|b| a - b)
                });
                match (psi_tail, eta_tail) {
                    (Ok(p), Ok(e)) => worst = worst.max(p + e),
                    _ => break 'radius,
                }
            }
            if worst < delta {
                found = Some(r);
                break;
            }
        }
        match found {
            Some(r) => tail_rows.push(format!("delta={delta:e}: r={r}")),
            None => {
                tail_ok = false;
                tail_rows.push(format!("delta={delta:e}: none"));
            }
        }
    }
    conditions.push(Condition { name: "psi_eta_infinito".into(), pass: tail_ok, detail: tail_rows.join(", ") });

    let sample_tail = &eps_sequence[tail_start.min(eps_sequence.len())..];
    let psi_int = psi_mass.get(tail_start..).map_or(0.0, |v| v.iter().copied().fold(0.0, f64::max));
    conditions.push(Condition {
        name: "psi_integrale".into(),
        pass: finite_ok && psi_int.is_finite(),
        detail: format!("max int psi_eps over sample tail = {psi_int:.6e}"),
    });

    let lambda_eta = if eta_mass.len() == eps_sequence.len() {
        limsup_estimate(eps_sequence, &eta_mass)
    } else {
        f64::INFINITY
    };
    conditions.push(Condition {
        name: "Lambda".into(),
        pass: lambda_eta.is_finite(),
        detail: format!(
            "limsup |eta_eps|_L1 ~ {lambda_eta:.6e} (tail of {} samples)",
            sample_tail.len()
        ),
    });

    AdmissibilityReport { conditions, lambda_eta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn make_kernel_echoes_definitions() {
        let b = make_kernel("box:0.5,1", 1).unwrap();
        assert_eq!(b.value(0.3), 0.5);
        assert_eq!(b.value(1.0), 0.5);
        assert_eq!(b.value(1.01), 0.0);
        let g = make_kernel("gaussian:1,1", 1).unwrap();
        assert_relative_eq!(g.value(0.7), (-0.49f64).exp() / PI.sqrt(), max_relative = 1e-15);
        let t = make_kernel("truncated:2:gaussian:1,1", 1).unwrap();
        assert_eq!(t.value(1.5), g.value(1.5));
        assert_eq!(t.value(2.5), 0.0);
        assert_eq!(make_kernel("zero", 2).unwrap().value(0.0), 0.0);
    }

    #[test]
    fn make_kernel_rejects_bad_specs() {
        assert!(matches!(make_kernel("triangle:1,1", 1), Err(NlgError::UnknownKernel(_))));
        assert!(matches!(
            make_kernel("box:1,-2", 1),
            Err(NlgError::NonPositiveScale { name: "radius", .. })
        ));
        assert!(matches!(
            make_kernel("gaussian:0,1", 1),
            Err(NlgError::NonPositiveScale { name: "sigma", .. })
        ));
    }

    #[test]
    fn box_and_gaussian_moments() {
        let b = make_kernel("box:0.5,1", 1).unwrap();
        assert_relative_eq!(b.moment(2, f64::INFINITY).unwrap(), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(b.moment(0, 1.0).unwrap(), 1.0, max_relative = 1e-12);
        let g = make_kernel("gaussian:1,1", 1).unwrap();
        assert_relative_eq!(g.moment(2, f64::INFINITY).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(g.moment(0, f64::INFINITY).unwrap(), 1.0, max_relative = 1e-10);
        let g2 = make_kernel("gaussian:1,1", 2).unwrap();
        assert_relative_eq!(g2.moment(0, f64::INFINITY).unwrap(), 1.0, max_relative = 1e-10);
        // ∫|ξ|² in d=2 for mass-1 unit gaussian = σ²·d/2 = 1
        assert_relative_eq!(g2.moment(2, f64::INFINITY).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn fractional_kernel_diverges() {
        let k = make_kernel("power:1,-2.5,1", 1).unwrap();
        assert_eq!(k.moment(0, f64::INFINITY), Err(NlgError::MomentDiverges { order: 0 }));
        // |ξ|² r^{-2.5} is integrable at the origin
        let m2 = k.moment(2, f64::INFINITY).unwrap();
        assert_relative_eq!(m2, 2.0 / 0.5, max_relative = 1e-8);
    }

    #[test]
    fn moments_are_monotone_in_cutoff() {
        let g = make_kernel("gaussian:0.7,2", 2).unwrap();
        let mut prev = 0.0;
        for t in [0.1, 0.5, 1.0, 2.0, 4.0, f64::INFINITY] {
            let v = g.moment(2, t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn constants_for_box_kernel() {
        let b = make_kernel("box:0.5,1", 1).unwrap();
        let c = limit_constants(&b, 1).unwrap();
        assert_relative_eq!(c.lambda, 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(c.mu_formula, 2.0, max_relative = 1e-12);
        assert_eq!(c.kappa, 1.0);
        for (_, v) in &c.surface_const {
            assert_relative_eq!(*v, 0.5, max_relative = 1e-10);
        }
    }

    #[test]
    fn kappa_in_two_dimensions() {
        assert_relative_eq!(kappa(2), 2.0 / PI, max_relative = 1e-12);
        let c = limit_constants(&make_kernel("gaussian:1,1", 2).unwrap(), 2).unwrap();
        assert_relative_eq!(c.kappa, std::f64::consts::FRAC_2_PI, max_relative = 1e-12);
    }

    #[test]
    fn zero_kernel_constants_vanish() {
        let c = limit_constants(&RadialKernel::zero(2), 2).unwrap();
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.mu_formula, 0.0);
        assert!(c.surface_const.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn surface_constant_matches_angular_identity() {
        for spec in ["box:0.5,1", "gaussian:1,1", "truncated:1.5:gaussian:0.8,3"] {
            for d in [1, 2] {
                let k = make_kernel(spec, d).unwrap();
                let c = limit_constants(&k, d).unwrap();
                let m1 = k.moment(1, f64::INFINITY).unwrap();
                for (nu, v) in &c.surface_const {
                    assert_relative_eq!(*v, c.kappa * m1, max_relative = 1e-7);
                    let neg: Vec<f64> = nu.iter().map(|x| -x).collect();
                    assert_relative_eq!(k.surface_constant(&neg).unwrap(), *v, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn constants_scale_homogeneously() {
        let k = make_kernel("gaussian:1,1", 2).unwrap();
        let k3 = k.scaled(3.0).unwrap();
        let a = limit_constants(&k, 2).unwrap();
        let b = limit_constants(&k3, 2).unwrap();
        assert_relative_eq!(b.lambda, 3.0 * a.lambda, max_relative = 1e-10);
        assert_relative_eq!(b.mu_formula, 3.0 * a.mu_formula, max_relative = 1e-10);
        assert_relative_eq!(b.surface(), 3.0 * a.surface(), max_relative = 1e-8);
        assert_eq!(a.kappa, b.kappa);
    }

    fn eps_sample() -> Vec<f64> {
        (0..=10).map(|j| 2f64.powi(-j)).collect()
    }

    #[test]
    fn admissible_box_setup_passes() {
        let rho = make_kernel("box:0.5,1", 1).unwrap();
        let psi = make_eps_kernel("normalized:box:0.5,1", 1).unwrap();
        let setup = KernelSetup::new(rho.clone(), rho, psi, EpsKernel::zero(1)).unwrap();
        let rep = admissibility_report(&setup, &eps_sample());
        assert!(rep.all_pass(), "{rep:#?}");
    }

    #[test]
    fn reference_setup_without_psi_passes() {
        let setup = KernelSetup::reference(make_kernel("box:0.5,1", 1).unwrap());
        let rep = admissibility_report(&setup, &eps_sample());
        assert!(rep.all_pass(), "{rep:#?}");
    }

    #[test]
    fn unnormalised_psi_fails() {
        let rho = make_kernel("box:0.5,1", 1).unwrap();
        let psi = make_eps_kernel("box:1,2", 1).unwrap();
        let setup = KernelSetup::new(rho.clone(), rho, psi, EpsKernel::zero(1)).unwrap();
        assert!(!admissibility_report(&setup, &eps_sample()).get("psi_momento").unwrap().pass);
    }

    #[test]
    fn fractional_rho1_fails_finite_momenta() {
        let rho1 = make_kernel("power:1,-2.5,1", 1).unwrap();
        let rho2 = make_kernel("box:0.5,1", 1).unwrap();
        let psi = make_eps_kernel("normalized:box:0.5,1", 1).unwrap();
        let setup = KernelSetup::new(rho1, rho2, psi, EpsKernel::zero(1)).unwrap();
        let rep = admissibility_report(&setup, &eps_sample());
        let c = rep.get("finite_momenta(rho1)").unwrap();
        assert!(!c.pass);
        assert!(c.detail.contains("moment diverges"), "{}", c.detail);
    }

    #[test]
    fn vanishing_eta_has_zero_lambda() {
        let rho = make_kernel("box:0.5,1", 1).unwrap();
        let psi = make_eps_kernel("normalized:box:0.5,1", 1).unwrap();
        let eta = make_eps_kernel("epspow:1:box:1,1", 1).unwrap();
        let setup = KernelSetup::new(rho.clone(), rho, psi, eta).unwrap();
        let rep = admissibility_report(&setup, &eps_sample());
        assert!(rep.all_pass(), "{rep:#?}");
        assert!(rep.lambda_eta.abs() < 1e-12, "{}", rep.lambda_eta);
    }
}
