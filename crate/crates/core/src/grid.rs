//! Cell-centered grids on boxes, nodal fields, lattice offset sets and
//! piecewise-affine test functions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{NlgError, Result};

/// Uniform cell-centered grid on an axis-aligned box in R^d, d ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    pub d: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    /// Cells per axis.
    pub n: Vec<usize>,
    masks: BTreeMap<String, Mask>,
}

/// A named subset of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub bits: Vec<bool>,
    pub count: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let count = bits.iter().filter(|b| **b).count();
        Self { bits, count }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask::from_bits(self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect())
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        Mask::from_bits(self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect())
    }
}

fn cells_along(side: f64, h: f64) -> Result<usize> {
    let q = side / h;
    let n = q.round();
    if n < 1.0 || (q - n).abs() > 1e-9 * q.max(1.0) {
        return Err(NlgError::SpacingDoesNotDivide { side, h });
    }
    Ok(n as usize)
}

/// Builds the grid on Π(lo_i, hi_i) with spacing `h`.
pub fn make_grid(lo: &[f64], hi: &[f64], h: f64) -> Result<GridDomain> {
    let d = lo.len();
    if !(1..=2).contains(&d) || hi.len() != d {
        return Err(NlgError::DimensionMismatch(format!("box corners of length {} and {}", lo.len(), hi.len())));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(NlgError::NonPositiveScale { name: "h", value: h });
    }
    let mut n = Vec::with_capacity(d);
    for i in 0..d {
        if !(hi[i] > lo[i]) {
            return Err(NlgError::InvalidArgument(format!("empty box side {} .. {}", lo[i], hi[i])));
        }
        n.push(cells_along(hi[i] - lo[i], h)?);
    }
    let total = n.iter().product();
    let mut masks = BTreeMap::new();
    masks.insert("all".to_string(), Mask::from_bits(vec![true; total]));
    Ok(GridDomain { d, lo: lo.to_vec(), hi: hi.to_vec(), h, n, masks })
}

impl GridDomain {
    /// Unit interval or unit square.
    pub fn unit(d: usize, h: f64) -> Result<Self> {
        make_grid(&vec![0.0; d], &vec![1.0; d], h)
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    #[inline]
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.d == 1 {
            [i, 0]
        } else {
            [i % self.n[0], i / self.n[0]]
        }
    }

    #[inline]
    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.d == 1 {
            mi[0]
        } else {
            mi[0] + self.n[0] * mi[1]
        }
    }

    /// Coordinates of node `i` (cell center).
    #[inline]
    pub fn node(&self, i: usize) -> [f64; 2] {
        let mi = self.multi_index(i);
        let mut x = [0.0; 2];
        for a in 0..self.d {
            x[a] = self.lo[a] + (mi[a] as f64 + 0.5) * self.h;
        }
        x
    }

    pub fn node_vec(&self, i: usize) -> Vec<f64> {
        self.node(i)[..self.d].to_vec()
    }

    pub fn mask(&self, name: &str) -> Option<&Mask> {
        self.masks.get(name)
    }

    pub fn all(&self) -> &Mask {
        &self.masks["all"]
    }

    /// Nodes whose centers lie in Π(lo_i, hi_i); the box must be aligned to cell faces.
    pub fn box_mask(&self, lo: &[f64], hi: &[f64]) -> Result<Mask> {
        if lo.len() != self.d || hi.len() != self.d {
            return Err(NlgError::DimensionMismatch("mask box".into()));
        }
        for a in 0..self.d {
            for v in [lo[a], hi[a]] {
                let t = (v - self.lo[a]) / self.h;
                if (t - t.round()).abs() > 1e-9 * t.abs().max(1.0) {
                    return Err(NlgError::InvalidArgument(format!("mask face {v} is not on a cell face")));
                }
            }
        }
        let bits = (0..self.len())
            .map(|i| {
                let x = self.node(i);
                (0..self.d).all(|a| x[a] > lo[a] && x[a] < hi[a])
            })
            .collect();
        Ok(Mask::from_bits(bits))
    }

    pub fn mask_from_fn<F: Fn(&[f64]) -> bool>(&self, f: F) -> Mask {
        Mask::from_bits((0..self.len()).map(|i| f(&self.node(i)[..self.d])).collect())
    }

    pub fn add_mask(&mut self, name: &str, mask: Mask) -> Result<()> {
        if mask.bits.len() != self.len() {
            return Err(NlgError::DimensionMismatch(format!("mask of {} bits on {} nodes", mask.bits.len(), self.len())));
        }
        self.masks.insert(name.to_string(), mask);
        Ok(())
    }

    /// |U| at grid level.
    pub fn measure(&self, mask: &Mask) -> f64 {
        mask.count as f64 * self.cell_volume()
    }

    /// Node index of `i` shifted by lattice offset `k`, if inside the grid.
    #[inline]
    pub fn shift(&self, i: usize, k: [i64; 2]) -> Option<usize> {
        let mi = self.multi_index(i);
        let mut out = [0usize; 2];
        for a in 0..self.d {
            let j = mi[a] as i64 + k[a];
            if j < 0 || j >= self.n[a] as i64 {
                return None;
            }
            out[a] = j as usize;
        }
        Some(self.flat_index(out))
    }
}

/// All pairs (i, i+k) with both nodes in `mask`.
pub fn shifted_pairs(domain: &GridDomain, mask: &Mask, k: [i64; 2]) -> Vec<(usize, usize)> {
    mask.indices()
        .filter_map(|i| domain.shift(i, k).filter(|&j| mask.contains(j)).map(|j| (i, j)))
        .collect()
}

/// Nodal samples of an R^m-valued function, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub domain: Arc<GridDomain>,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<GridDomain>, m: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&m) {
            return Err(NlgError::DimensionMismatch(format!("m={m}")));
        }
        if values.len() != m * domain.len() {
            return Err(NlgError::DimensionMismatch(format!(
                "{} values for {} nodes × m={m}",
                values.len(),
                domain.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(NlgError::NonFinite(format!("field entry {p}")));
        }
        Ok(Self { domain, m, values })
    }

    pub fn zeros(domain: Arc<GridDomain>, m: usize) -> Self {
        let n = domain.len();
        Self { domain, m, values: vec![0.0; n * m] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> Vec<f64>>(domain: Arc<GridDomain>, m: usize, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(domain.len() * m);
        for i in 0..domain.len() {
            let v = f(&domain.node(i)[..domain.d]);
            if v.len() != m {
                return Err(NlgError::DimensionMismatch(format!("closure returned {} components", v.len())));
            }
            values.extend(v);
        }
        Self::new(domain, m, values)
    }

    /// Scalar field from a scalar closure.
    pub fn scalar<F: Fn(&[f64]) -> f64>(domain: Arc<GridDomain>, f: F) -> Self {
        let values = (0..domain.len()).map(|i| f(&domain.node(i)[..domain.d])).collect();
        Self { domain, m: 1, values }
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.domain.len())
            .map(|i| self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// max |u_j − u_i| / h over lattice neighbors.
    pub fn lipschitz(&self) -> f64 {
        let dom = &self.domain;
        let mut worst: f64 = 0.0;
        for i in 0..dom.len() {
            for a in 0..dom.d {
                let mut k = [0i64; 2];
                k[a] = 1;
                if let Some(j) = dom.shift(i, k) {
                    let d2: f64 = self.at(i).iter().zip(self.at(j)).map(|(x, y)| (y - x) * (y - x)).sum();
                    worst = worst.max(d2.sqrt() / dom.h);
                }
            }
        }
        worst
    }

    /// Σ_i h^d |u_i − v_i| over `mask`.
    pub fn l1_distance(&self, other: &Field, mask: &Mask) -> Result<f64> {
        if self.domain != other.domain || self.m != other.m {
            return Err(NlgError::DomainMismatch);
        }
        let s: f64 = mask
            .indices()
            .map(|i| self.at(i).iter().zip(other.at(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .sum();
        Ok(s * self.domain.cell_volume())
    }

    pub fn map_nodes<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Field {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.domain.len() {
            values.extend(f(self.at(i)));
        }
        Field { domain: self.domain.clone(), m: self.m, values }
    }
}

/// Componentwise clamp to [−M, M].
pub fn truncate_field(u: &Field, m_bound: f64) -> Field {
    Field {
        domain: u.domain.clone(),
        m: u.m,
        values: u.values.iter().map(|v| v.clamp(-m_bound, m_bound)).collect(),
    }
}

/// Mirror extension by `pad` cells across every face; corners by double reflection.
pub fn extend_reflect(u: &Field, pad: usize) -> Result<Field> {
    let dom = &u.domain;
    for a in 0..dom.d {
        if pad > dom.n[a] {
            return Err(NlgError::PadTooLarge { pad, side: dom.n[a] });
        }
    }
    let p = pad as f64 * dom.h;
    let lo: Vec<f64> = dom.lo.iter().map(|v| v - p).collect();
    let hi: Vec<f64> = dom.hi.iter().map(|v| v + p).collect();
    let big = Arc::new(make_grid(&lo, &hi, dom.h)?);
    let mirror = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let j = if i < 0 {
            -1 - i
        } else if i >= n {
            2 * n - 1 - i
        } else {
            i
        };
        j as usize
    };
    let mut values = Vec::with_capacity(big.len() * u.m);
    for b in 0..big.len() {
        let mi = big.multi_index(b);
        let mut src = [0usize; 2];
        for a in 0..dom.d {
            src[a] = mirror(mi[a] as i64 - pad as i64, dom.n[a]);
        }
        values.extend_from_slice(u.at(dom.flat_index(src)));
    }
    Field::new(big, u.m, values)
}

/// Lattice offsets k with ξ_k = k·h/ε and quadrature weights for ∫_{B_T} dξ.
#[derive(Debug, Clone, PartialEq)]
pub struct Offset {
    pub k: [i64; 2],
    pub xi: [f64; 2],
    pub r: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSet {
    pub offsets: Vec<Offset>,
    pub cutoff: f64,
    /// ε/h.
    pub ratio: usize,
    pub d: usize,
}

impl OffsetSet {
    pub fn total_weight(&self) -> f64 {
        self.offsets.iter().map(|o| o.w).sum()
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// ε/h as an integer, or an error.
pub fn lattice_ratio(eps: f64, h: f64) -> Result<usize> {
    if !(eps > 0.0) || !(h > 0.0) {
        return Err(NlgError::EpsNotMultiple { eps, h });
    }
    let q = eps / h;
    let n = q.round();
    if n < 1.0 || (q - n).abs() > 1e-9 * q {
        return Err(NlgError::EpsNotMultiple { eps, h });
    }
    Ok(n as usize)
}

/// Weight (h/ε)^d per lattice point in B_T; points lying exactly on the
/// sphere |ξ| = T get half weight.
pub fn offset_set(eps: f64, h: f64, cutoff: f64, d: usize) -> Result<OffsetSet> {
    let q = lattice_ratio(eps, h)?;
    if !(cutoff > 0.0) {
        return Err(NlgError::NonPositiveScale { name: "T", value: cutoff });
    }
    if !(1..=2).contains(&d) {
        return Err(NlgError::DimensionMismatch(format!("d={d}")));
    }
    let step = 1.0 / q as f64;
    let full = step.powi(d as i32);
    let kmax = (cutoff * q as f64 + 1e-9).floor() as i64;
    let ky = if d == 2 { kmax } else { 0 };
    let mut offsets = Vec::new();
    for j in -ky..=ky {
        for i in -kmax..=kmax {
            let k = [i, j];
            let xi = [i as f64 * step, j as f64 * step];
            let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            if r > cutoff + 1e-9 * step {
                continue;
            }
            let w = if (r - cutoff).abs() <= 1e-9 * step { 0.5 * full } else { full };
            offsets.push(Offset { k, xi, r, w });
        }
    }
    offsets.sort_by(|a, b| {
        let na = a.k[0] * a.k[0] + a.k[1] * a.k[1];
        let nb = b.k[0] * b.k[0] + b.k[1] * b.k[1];
        na.cmp(&nb).then(a.k.cmp(&b.k))
    });
    Ok(OffsetSet { offsets, cutoff, ratio: q, d })
}

/// The half-space {y : (y − p)·n ≥ 0}, or its open complement.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub closed: bool,
}

impl HalfSpace {
    pub fn upper(point: &[f64], normal: &[f64]) -> Self {
        Self { point: point.to_vec(), normal: normal.to_vec(), closed: true }
    }

    pub fn lower(point: &[f64], normal: &[f64]) -> Self {
        Self { point: point.to_vec(), normal: normal.to_vec(), closed: false }
    }

    #[inline]
    pub fn signed(&self, y: &[f64]) -> f64 {
        self.point.iter().zip(&self.normal).zip(y).map(|((p, n), v)| (v - p) * n).sum()
    }

    #[inline]
    pub fn contains(&self, y: &[f64]) -> bool {
        let s = self.signed(y);
        if self.closed {
            s >= 0.0
        } else {
            s < 0.0
        }
    }
}

/// An affine map y ↦ a + L y on the intersection of half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub region: Vec<HalfSpace>,
    pub offset: Vec<f64>,
    /// m × d, row-major.
    pub linear: Vec<f64>,
}

impl Piece {
    pub fn contains(&self, y: &[f64]) -> bool {
        self.region.iter().all(|h| h.contains(y))
    }

    pub fn value(&self, y: &[f64]) -> Vec<f64> {
        let d = y.len();
        self.offset
            .iter()
            .enumerate()
            .map(|(c, a)| a + (0..d).map(|j| self.linear[c * d + j] * y[j]).sum::<f64>())
            .collect()
    }
}

/// A jump across the hyperplane through `point` with normal `normal`,
/// restricted to `extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub jump: Vec<f64>,
    pub extent: Vec<HalfSpace>,
}

/// A piecewise-affine function; the first piece containing y wins.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub d: usize,
    pub m: usize,
    pub pieces: Vec<Piece>,
    pub interfaces: Vec<Interface>,
}

impl TestFunction {
    pub fn new(d: usize, m: usize, pieces: Vec<Piece>, interfaces: Vec<Interface>) -> Result<Self> {
        for p in &pieces {
            if p.offset.len() != m || p.linear.len() != m * d || p.region.iter().any(|h| h.point.len() != d) {
                return Err(NlgError::DimensionMismatch("test function piece".into()));
            }
        }
        Ok(Self { d, m, pieces, interfaces })
    }

    /// y ↦ a + L y on all of R^d.
    pub fn affine(offset: &[f64], linear: &[f64], d: usize) -> Self {
        let m = offset.len();
        assert_eq!(linear.len(), m * d);
        Self {
            d,
            m,
            pieces: vec![Piece { region: vec![], offset: offset.to_vec(), linear: linear.to_vec() }],
            interfaces: vec![],
        }
    }

    /// u_{x,ζ,ν}: ζ where (y − x)·ν ≥ 0, zero elsewhere.
    pub fn step(x: &[f64], zeta: &[f64], nu: &[f64]) -> Self {
        let d = x.len();
        let m = zeta.len();
        Self {
            d,
            m,
            pieces: vec![
                Piece { region: vec![HalfSpace::upper(x, nu)], offset: zeta.to_vec(), linear: vec![0.0; m * d] },
                Piece { region: vec![HalfSpace::lower(x, nu)], offset: vec![0.0; m], linear: vec![0.0; m * d] },
            ],
            interfaces: vec![Interface { point: x.to_vec(), normal: nu.to_vec(), jump: zeta.to_vec(), extent: vec![] }],
        }
    }

    /// a + L y, plus ζ where (y − x)·ν ≥ 0.
    pub fn affine_with_jump(offset: &[f64], linear: &[f64], x: &[f64], nu: &[f64], zeta: &[f64]) -> Self {
        let d = x.len();
        let m = offset.len();
        let up: Vec<f64> = offset.iter().zip(zeta).map(|(a, z)| a + z).collect();
        Self {
            d,
            m,
            pieces: vec![
                Piece { region: vec![HalfSpace::upper(x, nu)], offset: up, linear: linear.to_vec() },
                Piece { region: vec![HalfSpace::lower(x, nu)], offset: offset.to_vec(), linear: linear.to_vec() },
            ],
            interfaces: vec![Interface { point: x.to_vec(), normal: nu.to_vec(), jump: zeta.to_vec(), extent: vec![] }],
        }
    }

    /// Scalar 1D staircase: jumps `jumps[i]` at `points[i]` (increasing).
    pub fn staircase(points: &[f64], jumps: &[f64]) -> Result<Self> {
        if points.len() != jumps.len() || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NlgError::InvalidArgument("staircase needs increasing points, one jump each".into()));
        }
        let mut pieces = Vec::new();
        let mut level = jumps.iter().sum::<f64>();
        for (i, p) in points.iter().enumerate().rev() {
            let mut region = vec![HalfSpace::upper(&[*p], &[1.0])];
            if i + 1 < points.len() {
                region.push(HalfSpace::lower(&[points[i + 1]], &[1.0]));
            }
            pieces.push(Piece { region, offset: vec![level], linear: vec![0.0] });
            level -= jumps[i];
        }
        let region = points.first().map(|p| vec![HalfSpace::lower(&[*p], &[1.0])]).unwrap_or_default();
        pieces.push(Piece { region, offset: vec![level], linear: vec![0.0] });
        let interfaces = points
            .iter()
            .zip(jumps)
            .map(|(p, j)| Interface { point: vec![*p], normal: vec![1.0], jump: vec![*j], extent: vec![] })
            .collect();
        Self::new(1, 1, pieces, interfaces)
    }

    pub fn eval(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.pieces.iter().find(|p| p.contains(y)).map(|p| p.value(y))
    }

    /// Checks that every interface's jump matches the pieces on its two sides
    /// at a probe point of the interface.
    pub fn validate_jumps(&self) -> Result<()> {
        for (n, itf) in self.interfaces.iter().enumerate() {
            let norm = itf.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || itf.jump.len() != self.m || itf.point.len() != self.d {
                return Err(NlgError::NotPiecewiseAffine(format!("interface {n} is malformed")));
            }
            let delta = 1e-9;
            let plus: Vec<f64> = itf.point.iter().zip(&itf.normal).map(|(p, v)| p + delta * v / norm).collect();
            let minus: Vec<f64> = itf.point.iter().zip(&itf.normal).map(|(p, v)| p - delta * v / norm).collect();
            let (a, b) = match (self.eval(&plus), self.eval(&minus)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(NlgError::NotPiecewiseAffine(format!("interface {n} is not covered"))),
            };
            for c in 0..self.m {
                if ((a[c] - b[c]) - itf.jump[c]).abs() > 1e-6 * (1.0 + itf.jump[c].abs()) {
                    return Err(NlgError::NotPiecewiseAffine(format!(
                        "interface {n}: pieces jump by {} but metadata says {}",
                        a[c] - b[c],
                        itf.jump[c]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nodal sampling; ties on interfaces go to the closed ("≥ 0") side.
pub fn sample_testfn(tf: &TestFunction, domain: &Arc<GridDomain>) -> Result<Field> {
    if tf.d != domain.d {
        return Err(NlgError::DimensionMismatch(format!("test function in R^{} on a grid in R^{}", tf.d, domain.d)));
    }
    let mut values = Vec::with_capacity(domain.len() * tf.m);
    for i in 0..domain.len() {
        let x = domain.node(i);
        let v = tf.eval(&x[..domain.d]).ok_or(NlgError::UncoveredNode(i))?;
        values.extend(v);
    }
    Field::new(domain.clone(), tf.m, values)
}

/// Area of the box Π(lo, hi) ∩ half-spaces (d = 2), by polygon clipping.
pub fn clipped_area(lo: &[f64], hi: &[f64], cuts: &[HalfSpace]) -> f64 {
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for c in cuts {
        poly = clip_polygon(&poly, c);
        if poly.is_empty() {
            return 0.0;
        }
    }
    let mut a = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a.abs()
}

fn clip_polygon(poly: &[[f64; 2]], c: &HalfSpace) -> Vec<[f64; 2]> {
    // Open and closed half-spaces have the same measure.
    let s = |p: &[f64; 2]| c.signed(p);
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = if c.closed { (s(&p), s(&q)) } else { (-s(&p), -s(&q)) };
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Length of [lo, hi] ∩ half-spaces (d = 1).
pub fn clipped_length(lo: f64, hi: f64, cuts: &[HalfSpace]) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for c in cuts {
        let n = c.normal[0];
        let p = c.point[0];
        let keep_right = (n > 0.0) == c.closed;
        if n == 0.0 {
            continue;
        }
        if keep_right {
            a = a.max(p);
        } else {
            b = b.min(p);
        }
    }
    (b - a).max(0.0)
}

/// H^{d−1} of the interface inside the box: a point count in d = 1, a clipped
/// segment length in d = 2.
pub fn interface_measure(itf: &Interface, lo: &[f64], hi: &[f64]) -> f64 {
    match lo.len() {
        1 => {
            let p = itf.point[0];
            let inside = p > lo[0] && p < hi[0] && itf.extent.iter().all(|h| h.contains(&[p]));
            if inside {
                1.0
            } else {
                0.0
            }
        }
        _ => {
            let n = &itf.normal;
            let tangent = [-n[1], n[0]];
            let tn = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
            let t = [tangent[0] / tn, tangent[1] / tn];
            let p = &itf.point;
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
            for ax in 0..2 {
                if t[ax].abs() < 1e-15 {
                    if p[ax] <= lo[ax] || p[ax] >= hi[ax] {
                        return 0.0;
                    }
                    continue;
                }
                let s1 = (lo[ax] - p[ax]) / t[ax];
                let s2 = (hi[ax] - p[ax]) / t[ax];
                a = a.max(s1.min(s2));
                b = b.min(s1.max(s2));
            }
            for h in &itf.extent {
                let dn: f64 = h.normal.iter().zip(&t).map(|(x, y)| x * y).sum();
                let s0 = h.signed(p);
                let sign = if h.closed { 1.0 } else { -1.0 };
                let (dn, s0) = (sign * dn, sign * s0);
                if dn.abs() < 1e-15 {
                    if s0 < 0.0 {
                        return 0.0;
                    }
                } else if dn > 0.0 {
                    a = a.max(-s0 / dn);
                } else {
                    b = b.min(-s0 / dn);
                }
            }
            (b - a).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_nodes() {
        let g = make_grid(&[0.0], &[1.0], 0.25).unwrap();
        let xs: Vec<f64> = (0..g.len()).map(|i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(GridDomain::unit(2, 0.5).unwrap().len(), 4);
        assert!(matches!(make_grid(&[0.0], &[1.0], 0.3), Err(NlgError::SpacingDoesNotDivide { .. })));
    }

    #[test]
    fn box_masks_have_exact_measure() {
        let g = GridDomain::unit(2, 0.125).unwrap();
        let m = g.box_mask(&[0.25, 0.0], &[0.75, 0.5]).unwrap();
        assert!((g.measure(&m) - 0.25).abs() < 1e-15);
        assert!(g.box_mask(&[0.3, 0.0], &[0.75, 0.5]).is_err());
    }

    #[test]
    fn offset_set_examples() {
        let o = offset_set(0.1, 0.025, 1.0, 1).unwrap();
        assert_eq!(o.len(), 9);
        assert!((o.total_weight() - 2.0).abs() < 1e-12);
        let o = offset_set(0.1, 0.1, 1.0, 1).unwrap();
        let ks: Vec<i64> = o.offsets.iter().map(|x| x.k[0]).collect();
        assert_eq!(ks, vec![0, -1, 1]);
        assert!((o.total_weight() - 2.0).abs() < 1e-12);
        let o = offset_set(0.1, 0.1, 1.0, 2).unwrap();
        assert_eq!(o.len(), 5);
        let tol = 2.0 * 2.0 * std::f64::consts::PI;
        assert!((o.total_weight() - std::f64::consts::PI).abs() <= tol);
        assert!(matches!(offset_set(0.1, 0.03, 1.0, 1), Err(NlgError::EpsNotMultiple { .. })));
    }

    #[test]
    fn offset_weights_converge_in_two_dimensions() {
        let o = offset_set(1.0, 1.0 / 32.0, 1.0, 2).unwrap();
        assert!((o.total_weight() - std::f64::consts::PI).abs() < 2.0 * std::f64::consts::PI / 32.0);
    }

    #[test]
    fn pair_counts() {
        let g = GridDomain::unit(1, 0.25).unwrap();
        let all = g.all().clone();
        assert_eq!(shifted_pairs(&g, &all, [1, 0]).len(), 3);
        assert_eq!(shifted_pairs(&g, &all, [0, 0]), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(shifted_pairs(&g, &all, [5, 0]).is_empty());
    }

    #[test]
    fn sampling_test_functions() {
        let g = Arc::new(GridDomain::unit(1, 0.25).unwrap());
        let u = sample_testfn(&TestFunction::step(&[0.5], &[1.0], &[1.0]), &g).unwrap();
        assert_eq!(u.values, vec![0.0, 0.0, 1.0, 1.0]);
        let g2 = Arc::new(GridDomain::unit(1, 0.5).unwrap());
        let u = sample_testfn(&TestFunction::affine(&[0.0], &[2.0], 1), &g2).unwrap();
        assert_eq!(u.values, vec![0.5, 1.5]);
        let tf = TestFunction::affine_with_jump(&[0.0], &[1.0], &[0.5], &[1.0], &[3.0]);
        let u = sample_testfn(&tf, &g).unwrap();
        assert_eq!(u.values, vec![0.125, 0.375, 3.625, 3.875]);
        tf.validate_jumps().unwrap();
        // a node exactly on the interface takes the upper value
        let g3 = Arc::new(GridDomain::unit(1, 0.25).unwrap());
        let u = sample_testfn(&TestFunction::step(&[0.375], &[1.0], &[1.0]), &g3).unwrap();
        assert_eq!(u.values, vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn uncovered_nodes_are_reported() {
        let g = Arc::new(GridDomain::unit(1, 0.25).unwrap());
        let mut tf = TestFunction::step(&[0.5], &[1.0], &[1.0]);
        tf.pieces.pop();
        assert_eq!(sample_testfn(&tf, &g), Err(NlgError::UncoveredNode(0)));
    }

    #[test]
    fn staircase_levels() {
        let tf = TestFunction::staircase(&[0.25, 0.5, 0.75], &[1.0, 1.0, 1.0]).unwrap();
        tf.validate_jumps().unwrap();
        assert_eq!(tf.eval(&[0.1]).unwrap(), vec![0.0]);
        assert_eq!(tf.eval(&[0.6]).unwrap(), vec![2.0]);
        assert_eq!(tf.eval(&[0.9]).unwrap(), vec![3.0]);
    }

    #[test]
    fn truncation_examples() {
        let g = Arc::new(make_grid(&[0.0], &[3.0], 1.0).unwrap());
        let u = Field::new(g, 1, vec![-5.0, 0.2, 7.0]).unwrap();
        assert_eq!(truncate_field(&u, 1.0).values, vec![-1.0, 0.2, 1.0]);
        assert_eq!(truncate_field(&u, 7.0), u);
    }

    #[test]
    fn reflection_examples() {
        let g = Arc::new(make_grid(&[0.0], &[3.0], 1.0).unwrap());
        let u = Field::new(g.clone(), 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(extend_reflect(&u, 1).unwrap().values, vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        assert!(matches!(extend_reflect(&u, 4), Err(NlgError::PadTooLarge { .. })));
        let g2 = Arc::new(GridDomain::unit(2, 0.25).unwrap());
        let c = Field::scalar(g2, |_| 2.5);
        assert!(extend_reflect(&c, 3).unwrap().values.iter().all(|v| *v == 2.5));
    }

    #[test]
    fn clipping_measures() {
        let h = HalfSpace::upper(&[0.5, 0.5], &[1.0, 1.0]);
        assert!((clipped_area(&[0.0, 0.0], &[1.0, 1.0], std::slice::from_ref(&h)) - 0.5).abs() < 1e-15);
        let itf = Interface { point: vec![0.5, 0.5], normal: vec![1.0, 1.0], jump: vec![1.0], extent: vec![] };
        assert!((interface_measure(&itf, &[0.0, 0.0], &[1.0, 1.0]) - 2f64.sqrt()).abs() < 1e-12);
        let itf = Interface { point: vec![0.5, 0.2], normal: vec![1.0, 0.0], jump: vec![1.0], extent: vec![] };
        assert!((interface_measure(&itf, &[0.0, 0.0], &[1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(clipped_length(0.0, 1.0, &[HalfSpace::lower(&[0.3], &[1.0])]), 0.3);
    }

    proptest! {
        #[test]
        fn offsets_are_symmetric(q in 1usize..6, t in 0.5f64..3.0, d in 1usize..3) {
            let o = offset_set(q as f64 * 0.01, 0.01, t, d).unwrap();
            for a in &o.offsets {
                let neg = [-a.k[0], -a.k[1]];
                let b = o.offsets.iter().find(|b| b.k == neg).expect("mirror offset");
                prop_assert_eq!(a.w, b.w);
                prop_assert!(a.r <= t + 1e-12);
            }
        }

        #[test]
        fn pairs_reverse_bijectively(n in 2usize..9, k0 in -4i64..5, k1 in -4i64..5) {
            let g = GridDomain::unit(2, 1.0 / n as f64).unwrap();
            let m = g.mask_from_fn(|x| x[0] + 0.3 * x[1] < 0.9);
            let fwd = shifted_pairs(&g, &m, [k0, k1]);
            let mut back: Vec<(usize, usize)> = shifted_pairs(&g, &m, [-k0, -k1]).into_iter().map(|(i, j)| (j, i)).collect();
            back.sort();
            let mut f = fwd.clone();
            f.sort();
            prop_assert_eq!(f, back);
        }

        #[test]
        fn clamp_chain(vals in proptest::collection::vec(-20.0f64..20.0, 1..12), m in 0.1f64..5.0) {
            let g = Arc::new(make_grid(&[0.0], &[vals.len() as f64], 1.0).unwrap());
            let u = Field::new(g, 1, vals).unwrap();
            let a = truncate_field(&truncate_field(&u, m + 1.0), m);
            prop_assert_eq!(&a, &truncate_field(&u, m));
            let lo = truncate_field(&u, m);
            let hi = truncate_field(&u, m + 1.0);
            for i in 1..u.values.len() {
                prop_assert!((lo.values[i] - lo.values[i - 1]).abs() <= (hi.values[i] - hi.values[i - 1]).abs() + 1e-15);
            }
        }

        #[test]
        fn sample_then_truncate_matches_clamped_pieces(l in -4.0f64..4.0, a in -2.0f64..2.0, m in 0.2f64..3.0) {
            let g = Arc::new(GridDomain::unit(1, 1.0 / 16.0).unwrap());
            let tf = TestFunction::affine(&[a], &[l], 1);
            let u = truncate_field(&sample_testfn(&tf, &g).unwrap(), m);
            for i in 0..g.len() {
                let x = g.node(i)[0];
                prop_assert_eq!(u.values[i], (a + l * x).clamp(-m, m));
            }
        }
    }
}
