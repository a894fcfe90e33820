//! Adaptive Gauss–Legendre quadrature on finite intervals.

use std::sync::OnceLock;

/// Fixed-order Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

const MAX_DEPTH: u32 = 40;

/// Adaptive bisection on top of the 10-point rule. Stops on an interval once
/// the whole-interval and two-halves estimates agree to `tol` (absolute).
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let gl = rule();
    let whole = gl.integrate(f, a, b);
    let tol = rel_tol * whole.abs().max(1e-300);
    recurse(gl, f, a, b, whole, tol, 0)
}

fn recurse<F: Fn(f64) -> f64>(
    gl: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl.integrate(f, a, mid);
    let right = gl.integrate(f, mid, b);
    let halves = left + right;
    if (halves - whole).abs() <= tol || depth >= MAX_DEPTH {
        return halves;
    }
    recurse(gl, f, a, mid, left, 0.5 * tol, depth + 1)
        + recurse(gl, f, mid, b, right, 0.5 * tol, depth + 1)
}

/// Integrates over `[a, b]`, splitting at the given interior breakpoints.
pub fn adaptive_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut lo = a;
    let mut acc = 0.0;
    for c in cuts.into_iter().chain(std::iter::once(b)) {
        acc += adaptive(f, lo, c, rel_tol);
        lo = c;
    }
    acc
}
