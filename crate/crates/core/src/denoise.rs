//! Fidelity-regularized restoration of scalar images and the synthetic
//! two-region benchmark.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use crate::error::{NlgError, Result};
use crate::grid::{make_grid, Field};
use crate::integrands::IntegrandFamily;
use crate::minimize::{minimize_gnc, MinResult, Problem, Schedule};
use crate::rng::substream;

/// Minimizes F_ε^T(u) + τ Σ h^d |u − g|² over the whole grid, starting from g.
pub fn denoise(f: &IntegrandFamily, g: &Field, eps: f64, cutoff: f64, tau: f64, sched: &Schedule) -> Result<MinResult> {
    let dom = g.domain.clone();
    let p = Problem::free(&dom, dom.all(), g.m, eps, cutoff)?.with_fidelity(g.clone(), tau)?;
    minimize_gnc(f, &p, None, sched)
}

/// A 64×64-style two-region image: `inside` on a disk, `outside` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoRegion {
    pub pixels: usize,
    /// Disk center and radius in pixel units.
    pub center: [f64; 2],
    pub radius: f64,
    pub inside: f64,
    pub outside: f64,
}

impl Default for TwoRegion {
    fn default() -> Self {
        Self { pixels: 64, center: [32.0, 32.0], radius: 20.0, inside: 1.0, outside: 0.0 }
    }
}

impl TwoRegion {
    /// Ground-truth labels, row-major over the pixel grid.
    pub fn labels(&self) -> Vec<bool> {
        let n = self.pixels;
        (0..n * n)
            .map(|i| {
                let (px, py) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
                (px - self.center[0]).hypot(py - self.center[1]) < self.radius
            })
            .collect()
    }

    /// Clean image on the unit square with spacing 1/pixels.
    pub fn clean(&self) -> Result<Field> {
        let n = self.pixels;
        let dom = Arc::new(make_grid(&[0.0, 0.0], &[1.0, 1.0], 1.0 / n as f64)?);
        let vals = self.labels().iter().map(|&b| if b { self.inside } else { self.outside }).collect();
        Field::new(dom, 1, vals)
    }

    /// Clean image plus i.i.d. Gaussian noise of standard deviation `sigma`.
    pub fn noisy(&self, sigma: f64, seed: u64) -> Result<Field> {
        let mut u = self.clean()?;
        let normal = Normal::new(0.0, sigma).map_err(|e| NlgError::InvalidArgument(e.to_string()))?;
        let mut rng = substream(seed, "denoise_noise");
        for v in &mut u.values {
            *v += normal.sample(&mut rng);
        }
        Ok(u)
    }
}

/// Whether every pixel within Chebyshev distance `margin` of `i` shares its label.
fn clear(labels: &[bool], n: usize, i: usize, margin: usize) -> bool {
    let m = margin as i64;
    let (x, y) = ((i % n) as i64, (i / n) as i64);
    for dy in -m..=m {
        for dx in -m..=m {
            let (a, b) = (x + dx, y + dy);
            if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                continue;
            }
            if labels[(b as usize) * n + a as usize] != labels[i] {
                return false;
            }
        }
    }
    true
}

fn interior(labels: &[bool], n: usize, margin: usize) -> Vec<bool> {
    (0..n * n).map(|i| clear(labels, n, i, margin)).collect()
}

fn region_variance(u: &[f64], labels: &[bool], keep: &[bool]) -> f64 {
    let mut total = 0.0;
    for side in [false, true] {
        let vals: Vec<f64> = u.iter().zip(labels).zip(keep).filter(|((_, l), k)| **l == side && **k).map(|((v, _), _)| *v).collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        total += vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let count = keep.iter().filter(|k| **k).count().max(1);
    total / count as f64
}

/// Variance and edge metrics of a restoration against a known partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseMetrics {
    pub noisy_variance: f64,
    pub restored_variance: f64,
    pub variance_reduction: f64,
    /// Misclassified pixels after thresholding midway between the region values.
    pub misclassified: usize,
    /// Largest Chebyshev distance of a misclassified pixel to the true boundary.
    pub max_edge_offset: usize,
}

impl DenoiseMetrics {
    pub fn pass(&self) -> bool {
        self.variance_reduction >= 5.0 && self.max_edge_offset <= 1
    }
}

/// Within-region variance is measured more than one pixel away from the
/// true boundary.
pub fn evaluate(scene: &TwoRegion, noisy: &Field, restored: &Field) -> DenoiseMetrics {
    let n = scene.pixels;
    let labels = scene.labels();
    let keep = interior(&labels, n, 1);
    let noisy_variance = region_variance(&noisy.values, &labels, &keep);
    let restored_variance = region_variance(&restored.values, &labels, &keep);
    let mid = 0.5 * (scene.inside + scene.outside);
    let up = scene.inside > scene.outside;
    let mut misclassified = 0;
    let mut max_edge_offset = 0;
    for (i, &l) in labels.iter().enumerate() {
        if ((restored.values[i] > mid) == up) != l {
            misclassified += 1;
            let dist = (1..n).find(|&r| !clear(&labels, n, i, r)).unwrap_or(n);
            max_edge_offset = max_edge_offset.max(dist);
        }
    }
    DenoiseMetrics {
        noisy_variance,
        restored_variance,
        variance_reduction: noisy_variance / restored_variance.max(1e-300),
        misclassified,
        max_edge_offset,
    }
}
