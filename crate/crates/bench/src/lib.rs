//! Deterministic fixtures shared by the benchmarks.

use std::sync::Arc;

use nlg_core::{make_grid, make_kernel, Field, IntegrandFamily, KernelSetup};

/// A unit box in `d` dimensions with `n` cells per axis, the reference
/// family with a box kernel, and a field with one jump plus a smooth ripple.
pub fn fixture(d: usize, n: usize) -> (IntegrandFamily, Field) {
    let h = 1.0 / n as f64;
    let (lo, hi) = (vec![0.0; d], vec![1.0; d]);
    let domain = Arc::new(make_grid(&lo, &hi, h).expect("unit box divides"));
    let rho = make_kernel("box:0.5,1", d).expect("valid spec");
    let family = IntegrandFamily::reference(&KernelSetup::reference(rho), 1).expect("m = 1");
    let u = Field::scalar(domain, |x| {
        let jump = if x[0] > 0.5 { 1.0 } else { 0.0 };
        jump + 0.1 * (7.0 * x.iter().sum::<f64>()).sin()
    });
    (family, u)
}
