use std::sync::Arc;

use nlg_core::{energy_total, make_grid, make_kernel, Field, IntegrandFamily, KernelSetup};
use proptest::prelude::*;

const H: f64 = 1.0 / 16.0;

fn reference_family(d: usize) -> IntegrandFamily {
    let rho = make_kernel("gaussian:0.6,1", d).unwrap();
    IntegrandFamily::reference(&KernelSetup::reference(rho), 1).unwrap()
}

fn box_family(d: usize) -> IntegrandFamily {
    let rho = make_kernel("box:0.5,1", d).unwrap();
    IntegrandFamily::reference(&KernelSetup::reference(rho), 1).unwrap()
}

/// Double loop over nodes and integer shifts, written without the pair plan.
fn brute_energy(rho: impl Fn(f64) -> f64, values: &[f64], n: [usize; 2], d: usize, q: usize, cutoff: f64) -> f64 {
    let eps = q as f64 * H;
    let step = 1.0 / q as f64;
    let kmax = (cutoff * q as f64).floor() as i64;
    let ky = if d == 2 { kmax } else { 0 };
    // Cell-centred nodes: `side / h` per axis.
    let nx = n[0] as i64;
    let ny = if d == 2 { n[1] as i64 } else { 1 };
    let mut total = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            for ky in -ky..=ky {
                for kx in -kmax..=kmax {
                    let r = ((kx * kx + ky * ky) as f64).sqrt() * step;
                    if r > cutoff + 1e-12 {
                        continue;
                    }
                    let (jx, jy) = (ix + kx, iy + ky);
                    if jx < 0 || jx >= nx || jy < 0 || jy >= ny {
                        continue;
                    }
                    let w = if (r - cutoff).abs() < 1e-12 { 0.5 } else { 1.0 } * step.powi(d as i32);
                    let a = values[(iy * nx + ix) as usize];
                    let b = values[(jy * nx + jx) as usize];
                    let z2 = (b - a) * (b - a) / (eps * eps);
                    total += w * H.powi(d as i32) * rho(r) * z2.min(1.0 / eps);
                }
            }
        }
    }
    total
}

fn field(d: usize, side: usize, values: &[f64]) -> Field {
    let hi = side as f64 * H;
    let g = if d == 1 { make_grid(&[0.0], &[hi], H) } else { make_grid(&[0.0, 0.0], &[hi, hi], H) }.unwrap();
    let dom = Arc::new(g);
    let len = dom.len();
    Field::new(dom, 1, values[..len].to_vec()).unwrap()
}

fn energy(f: &IntegrandFamily, u: &Field, q: usize, cutoff: f64) -> f64 {
    energy_total(f, u, u.domain.all(), q as f64 * H, cutoff).unwrap().total
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_matches_brute_force_1d(v in values(12), q in 1usize..4, t in 1u32..4) {
        let cutoff = t as f64 * 0.5;
        let u = field(1, 12, &v);
        let got = energy(&box_family(1), &u, q, cutoff);
        let want = brute_energy(|r| if r <= 1.0 { 0.5 } else { 0.0 }, &v, [12, 0], 1, q, cutoff);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn energy_matches_brute_force_2d(v in values(36), q in 1usize..3) {
        let u = field(2, 6, &v);
        let rho = make_kernel("box:0.5,1", 2).unwrap();
        let got = energy(&box_family(2), &u, q, 1.0);
        let want = brute_energy(|r| rho.value(r), &v, [6, 6], 2, q, 1.0);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn energy_ignores_constant_shifts(v in values(16), c in -5.0f64..5.0) {
        let f = reference_family(1);
        let u = field(1, 16, &v);
        let shifted = u.map_nodes(|a| vec![a[0] + c]);
        let (a, b) = (energy(&f, &u, 2, 2.0), energy(&f, &shifted, 2, 2.0));
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn energy_is_reflection_invariant_2d(v in values(64)) {
        let f = reference_family(2);
        let u = field(2, 8, &v);
        let mirrored: Vec<f64> = (0..64).map(|i| v[(i / 8) * 8 + 7 - i % 8]).collect();
        let transposed: Vec<f64> = (0..64).map(|i| v[(i % 8) * 8 + i / 8]).collect();
        let e = energy(&f, &u, 2, 1.5);
        for w in [mirrored, transposed] {
            let e2 = energy(&f, &field(2, 8, &w), 2, 1.5);
            prop_assert!((e - e2).abs() <= 1e-10 * e.max(1.0), "{e} vs {e2}");
        }
    }

    #[test]
    fn clamping_does_not_increase_energy(v in values(16), a in -1.0f64..0.0, b in 0.0f64..1.0) {
        let f = reference_family(1);
        let u = field(1, 16, &v);
        let clamped = u.map_nodes(|x| vec![x[0].clamp(a, b)]);
        prop_assert!(energy(&f, &clamped, 2, 2.0) <= energy(&f, &u, 2, 2.0) + 1e-12);
    }

    #[test]
    fn energy_is_monotone_in_cutoff_and_mask(v in values(16), t1 in 1u32..6, t2 in 1u32..6) {
        let f = reference_family(1);
        let u = field(1, 16, &v);
        let (lo, hi) = (t1.min(t2) as f64 * 0.5, t1.max(t2) as f64 * 0.5);
        prop_assert!(energy(&f, &u, 2, lo) <= energy(&f, &u, 2, hi) + 1e-12);
        let inner = u.domain.box_mask(&[0.25], &[0.75]).unwrap();
        let sub = energy_total(&f, &u, &inner, 2.0 * H, hi).unwrap().total;
        prop_assert!(sub <= energy(&f, &u, 2, hi) + 1e-12);
    }

    #[test]
    fn energy_is_bounded_by_the_cap(v in values(16)) {
        let f = box_family(1);
        let u = field(1, 16, &v);
        let eps = 2.0 * H;
        // Each pair costs at most w ρ h / ε, and Σ_k w_k ρ(ξ_k) = 1 here.
        let e = energy(&f, &u, 2, 1.0);
        prop_assert!(e <= 16.0 * H / eps + 1e-12, "{e}");
        prop_assert!(e >= 0.0);
    }
}
