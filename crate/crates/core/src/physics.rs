//! Scalar diffusion with the fictitious-domain indicator: element systems on
//! leaves, boundary data, exact solutions and the energy-norm error.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::basis::{BasisScratch, DofMap, FieldApproximation, LeafBasis};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySide, BoundingBox, ElementId, EntityKind, Mesh, Point};
use crate::quadrature::{gauss_legendre, gauss_rule, leaf_quadrature, EmbeddedDomain, LeafQuadrature, QuadratureCell};

pub type Source = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// Normal flux `t_N . n` given the point and the outward normal.
pub type Flux = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    fn direction(&self) -> (Point, f64) {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len == 0.0 {
            ([0.0, 0.0], 0.0)
        } else {
            ([d[0] / len, d[1] / len], len)
        }
    }

    /// Distance of `x` from the segment.
    pub fn distance(&self, x: Point) -> f64 {
        let (d, len) = self.direction();
        let v = [x[0] - self.a[0], x[1] - self.a[1]];
        let t = (v[0] * d[0] + v[1] * d[1]).clamp(0.0, len);
        let p = [self.a[0] + t * d[0] - x[0], self.a[1] + t * d[1] - x[1]];
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    pub fn contains(&self, x: Point, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Parameter interval of `other` ∩ `self` along `other` (`[0, 1]` = whole
    /// of `other`), if the two are collinear and overlap.
    pub fn clip(&self, other: &Segment, tol: f64) -> Option<(f64, f64)> {
        let line = Segment { a: self.a, b: self.b };
        let (d, len) = other.direction();
        if len == 0.0 {
            return self.contains(other.a, tol).then_some((0.0, 1.0));
        }
        let perp = |x: Point| {
            let (dd, _) = line.direction();
            ((x[0] - line.a[0]) * dd[1] - (x[1] - line.a[1]) * dd[0]).abs()
        };
        if perp(other.a) > tol || perp(other.b) > tol {
            return None;
        }
        let t = |x: Point| ((x[0] - other.a[0]) * d[0] + (x[1] - other.a[1]) * d[1]) / len;
        let (t0, t1) = {
            let (u, v) = (t(self.a), t(self.b));
            (u.min(v).max(0.0), u.max(v).min(1.0))
        };
        (t1 - t0 > tol / len || (len <= tol && t1 >= t0)).then_some((t0, t1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletSegment {
    pub segment: Segment,
    pub value: f64,
}

#[derive(Clone)]
pub struct NeumannSegment {
    pub segment: Segment,
    pub flux: Flux,
}

impl fmt::Debug for NeumannSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeumannSegment").field("segment", &self.segment).finish_non_exhaustive()
    }
}

#[derive(Clone, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<DirichletSegment>,
    pub neumann: Vec<NeumannSegment>,
    pub source: Option<Source>,
}

impl fmt::Debug for BoundaryConditions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryConditions")
            .field("dirichlet", &self.dirichlet)
            .field("neumann", &self.neumann)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl BoundaryConditions {
    pub fn new(dirichlet: Vec<DirichletSegment>, neumann: Vec<NeumannSegment>, source: Option<Source>) -> Result<Self> {
        for d in &dirichlet {
            if d.value != 0.0 {
                return Err(Error::NonHomogeneousDirichlet(d.value));
            }
            for n in &neumann {
                if let Some((t0, t1)) = d.segment.clip(&n.segment, 1e-12) {
                    let (_, len) = n.segment.direction();
                    if len == 0.0 || (t1 - t0) * len > 1e-12 {
                        return Err(Error::OverlappingBoundaryConditions);
                    }
                }
            }
        }
        Ok(Self { dirichlet, neumann, source })
    }

    /// Homogeneous Dirichlet data on the given segments, nothing else.
    pub fn dirichlet_only(segments: &[Segment]) -> Self {
        Self {
            dirichlet: segments.iter().map(|&segment| DirichletSegment { segment, value: 0.0 }).collect(),
            ..Default::default()
        }
    }

    /// L-shaped benchmark: zero on the two legs meeting at the re-entrant
    /// corner, exact normal flux on the outer boundary.
    pub fn lshape() -> Self {
        let exact = LShapeExact;
        let flux: Flux = Arc::new(move |x: Point, n: Point| {
            let g = exact.gradient(x).unwrap_or([0.0, 0.0]);
            g[0] * n[0] + g[1] * n[1]
        });
        let seg = |a: Point, b: Point| Segment::new(a, b);
        let neumann = [
            seg([1.0, 0.0], [1.0, 1.0]),
            seg([-1.0, 1.0], [1.0, 1.0]),
            seg([-1.0, -1.0], [-1.0, 1.0]),
            seg([-1.0, -1.0], [0.0, -1.0]),
        ]
        .into_iter()
        .map(|segment| NeumannSegment { segment, flux: flux.clone() })
        .collect();
        Self::new(
            vec![
                DirichletSegment { segment: seg([0.0, 0.0], [1.0, 0.0]), value: 0.0 },
                DirichletSegment { segment: seg([0.0, -1.0], [0.0, 0.0]), value: 0.0 },
            ],
            neumann,
            None,
        )
        .expect("L-shape boundary segments are disjoint")
    }
}

/// Dense element matrix and load vector over a leaf's active DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSystem {
    pub dofs: Vec<usize>,
    /// Row-major `n x n`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl ElementSystem {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dofs.len() + j]
    }
}

/// `K[i][j] = sum w alpha grad N_i . grad N_j`, `f[i] = sum w alpha N_i f`.
pub fn element_system(
    mesh: &Mesh,
    basis: &LeafBasis,
    quadrature: &LeafQuadrature,
    source: Option<&Source>,
) -> ElementSystem {
    let n = basis.len();
    let mut matrix = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut values = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    let mut scratch = BasisScratch::default();
    for p in quadrature.points() {
        basis.evaluate_into(mesh, p.x, &mut values, &mut grads, &mut scratch);
        let wa = p.weight * p.alpha;
        for i in 0..n {
            let gi = grads[i];
            let row = &mut matrix[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wa * (gi[0] * grads[j][0] + gi[1] * grads[j][1]);
            }
        }
        if let Some(f) = source {
            let fx = f(p.x) * wa;
            for i in 0..n {
                rhs[i] += fx * values[i];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            matrix[i * n + j] = matrix[j * n + i];
        }
    }
    ElementSystem { dofs: basis.dofs(), matrix, rhs }
}

/// Load of a normal flux on one boundary side of a leaf, integrated over the
/// part of the side covered by `segment` (the whole side if `None`).
pub fn neumann_load(
    mesh: &Mesh,
    basis: &LeafBasis,
    side: usize,
    segment: Option<&Segment>,
    flux: &Flux,
) -> Result<Vec<f64>> {
    let s = mesh.boundary_sides(basis.leaf).into_iter().find(|s| s.side == side).ok_or(Error::InteriorSegment)?;
    Ok(side_load(mesh, basis, &s, segment, flux))
}

fn side_load(mesh: &Mesh, basis: &LeafBasis, s: &BoundarySide, segment: Option<&Segment>, flux: &Flux) -> Vec<f64> {
    let n = basis.len();
    let mut load = vec![0.0; n];
    let side_seg = Segment::new(s.a, s.b);
    let (t0, t1) = match segment {
        Some(seg) => match seg.clip(&side_seg, mesh.tolerance()) {
            Some(r) => r,
            None => return load,
        },
        None => (0.0, 1.0),
    };
    let mut values = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    let mut scratch = BasisScratch::default();
    let (_, len) = side_seg.direction();
    if len == 0.0 {
        basis.evaluate_into(mesh, s.a, &mut values, &mut grads, &mut scratch);
        let g = flux(s.a, s.normal);
        load.iter_mut().zip(&values).for_each(|(l, v)| *l += g * v);
        return load;
    }
    let (xs, ws) = gauss_legendre(basis.max_order() + 1);
    let span = (t1 - t0) * len;
    for (xi, w) in xs.iter().zip(&ws) {
        let t = t0 + 0.5 * (xi + 1.0) * (t1 - t0);
        let x = [s.a[0] + t * (s.b[0] - s.a[0]), s.a[1] + t * (s.b[1] - s.a[1])];
        basis.evaluate_into(mesh, x, &mut values, &mut grads, &mut scratch);
        let g = flux(x, s.normal) * w * 0.5 * span;
        load.iter_mut().zip(&values).for_each(|(l, v)| *l += g * v);
    }
    load
}

/// Boundary value problem: data plus optional embedded geometry.
#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub bcs: BoundaryConditions,
    pub embedded: Option<EmbeddedDomain>,
    pub spacetree_depth: usize,
}

impl Problem {
    pub fn leaf_quadrature(&self, mesh: &Mesh, basis: &LeafBasis) -> LeafQuadrature {
        leaf_quadrature(mesh, basis.leaf, basis.max_order(), self.embedded.as_ref(), self.spacetree_depth)
    }

    /// Element system of a leaf including Neumann loads on its boundary sides.
    pub fn leaf_system(&self, mesh: &Mesh, dofs: &DofMap, leaf: ElementId) -> ElementSystem {
        let basis = dofs.leaf_basis(mesh, leaf);
        let quad = self.leaf_quadrature(mesh, &basis);
        let mut sys = element_system(mesh, &basis, &quad, self.bcs.source.as_ref());
        if !self.bcs.neumann.is_empty() {
            for side in mesh.boundary_sides(leaf) {
                for seg in &self.bcs.neumann {
                    let load = side_load(mesh, &basis, &side, Some(&seg.segment), &seg.flux);
                    sys.rhs.iter_mut().zip(load).for_each(|(r, l)| *r += l);
                }
            }
        }
        sys
    }
}

/// Homogeneous Dirichlet constraints and the numbering of the free DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    free_index: Vec<Option<usize>>,
    free_to_global: Vec<usize>,
}

impl Constraints {
    pub fn none(total: usize) -> Self {
        Self { free_index: (0..total).map(Some).collect(), free_to_global: (0..total).collect() }
    }

    /// Constrains every mode of every active entity lying on a Dirichlet segment.
    pub fn new(mesh: &Mesh, dofs: &DofMap, bcs: &BoundaryConditions) -> Result<Self> {
        let tol = mesh.tolerance();
        let mut constrained = vec![false; dofs.total()];
        for d in &bcs.dirichlet {
            if d.value != 0.0 {
                return Err(Error::NonHomogeneousDirichlet(d.value));
            }
        }
        for (id, e) in mesh.entities().filter(|(_, e)| e.active) {
            let on = bcs.dirichlet.iter().any(|d| match e.kind {
                EntityKind::Node => d.segment.contains(e.lo, tol),
                EntityKind::Edge if mesh.dim() == 2 => d.segment.contains(e.lo, tol) && d.segment.contains(e.hi, tol),
                _ => false,
            });
            if on {
                for dof in dofs.entity_dofs(mesh, id) {
                    constrained[dof] = true;
                }
            }
        }
        let mut free_index = vec![None; dofs.total()];
        let mut free_to_global = Vec::new();
        for (g, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[g] = Some(free_to_global.len());
                free_to_global.push(g);
            }
        }
        Ok(Self { free_index, free_to_global })
    }

    pub fn n_free(&self) -> usize {
        self.free_to_global.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.free_index.len() - self.free_to_global.len()
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_to_global(&self) -> &[usize] {
        &self.free_to_global
    }

    /// Eliminates constrained rows and columns and renumbers to free indices.
    pub fn reduce(&self, sys: &ElementSystem) -> ElementSystem {
        let n = sys.len();
        let keep: Vec<(usize, usize)> = (0..n).filter_map(|i| self.free_index[sys.dofs[i]].map(|f| (i, f))).collect();
        let m = keep.len();
        let mut matrix = Vec::with_capacity(m * m);
        for &(i, _) in &keep {
            for &(j, _) in &keep {
                matrix.push(sys.matrix[i * n + j]);
            }
        }
        ElementSystem {
            dofs: keep.iter().map(|&(_, f)| f).collect(),
            matrix,
            rhs: keep.iter().map(|&(i, _)| sys.rhs[i]).collect(),
        }
    }

    /// Expands a free-DOF vector to all DOFs (constrained entries zero).
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.free_index.len()];
        for (f, &g) in self.free_to_global.iter().enumerate() {
            out[g] = free[f];
        }
        out
    }
}

pub trait ExactSolution: Send + Sync {
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> Result<Point>;
    /// Point where the gradient is unbounded, if any.
    fn singular_point(&self) -> Option<Point> {
        None
    }
}

/// `r^(2/3) sin(2 theta / 3)` on the L-shape, theta in `[0, 3 pi / 2]`
/// measured from the positive x axis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LShapeExact;

pub const LSHAPE_LAMBDA: f64 = 2.0 / 3.0;

impl LShapeExact {
    pub fn angle(x: Point) -> f64 {
        let t = x[1].atan2(x[0]);
        if t < 0.0 {
            t + 2.0 * PI
        } else {
            t
        }
    }
}

impl ExactSolution for LShapeExact {
    fn value(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(LSHAPE_LAMBDA) * (2.0 / 3.0 * Self::angle(x)).sin()
    }

    fn gradient(&self, x: Point) -> Result<Point> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::Singularity(x[0], x[1]));
        }
        let t = 2.0 / 3.0 * Self::angle(x);
        let (s, c) = t.sin_cos();
        let f = 2.0 / 3.0 * r.powf(-4.0 / 3.0);
        Ok([f * (x[0] * s - x[1] * c), f * (x[1] * s + x[0] * c)])
    }

    fn singular_point(&self) -> Option<Point> {
        Some([0.0, 0.0])
    }
}

/// Convenience wrapper returning the L-shape value and gradient.
pub fn lshape_exact(x: Point) -> (f64, Result<Point>) {
    (LShapeExact.value(x), LShapeExact.gradient(x))
}

/// `a + b x + c y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearField {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ExactSolution for LinearField {
    fn value(&self, x: Point) -> f64 {
        self.a + self.b * x[0] + self.c * x[1]
    }

    fn gradient(&self, _x: Point) -> Result<Point> {
        Ok([self.b, self.c])
    }
}

/// `x y (2 - x^2 - y^2)`: vanishes on both axes and has zero normal derivative
/// on the unit circle; `-laplace u = 12 x y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuarterDiskExact;

impl QuarterDiskExact {
    pub fn source(x: Point) -> f64 {
        12.0 * x[0] * x[1]
    }
}

impl ExactSolution for QuarterDiskExact {
    fn value(&self, x: Point) -> f64 {
        x[0] * x[1] * (2.0 - x[0] * x[0] - x[1] * x[1])
    }

    fn gradient(&self, x: Point) -> Result<Point> {
        let (a, b) = (x[0], x[1]);
        Ok([b * (2.0 - 3.0 * a * a - b * b), a * (2.0 - a * a - 3.0 * b * b)])
    }
}

/// Levels of geometric grading towards a singular point inside a leaf.
const SINGULAR_GRADING: usize = 48;

fn error_cells(bounds: BoundingBox, dim: usize, q: usize, singular: Option<Point>) -> Vec<QuadratureCell> {
    let touches = |b: &BoundingBox, s: Point| b.contains(s, dim, 1e-12 * b.width(0));
    let Some(s) = singular.filter(|&s| touches(&bounds, s)) else {
        return vec![gauss_rule(q, dim, bounds)];
    };
    let mut out = Vec::new();
    let mut stack = vec![(bounds, 0usize)];
    let ny = if dim == 2 { 2 } else { 1 };
    while let Some((b, depth)) = stack.pop() {
        if depth == SINGULAR_GRADING || !touches(&b, s) {
            out.push(gauss_rule(q, dim, b));
            continue;
        }
        for iy in 0..ny {
            for ix in 0..2 {
                stack.push((b.child(ix, iy, dim), depth + 1));
            }
        }
    }
    out
}

/// Energy-norm error `sqrt(int |grad u_h - grad u|^2)` with quadrature raised by
/// two orders on each leaf, graded towards the exact solution's singular point.
pub fn energy_error(mesh: &Mesh, dofs: &DofMap, field: &FieldApproximation, exact: &dyn ExactSolution) -> Result<f64> {
    energy_error_in(mesh, dofs, field, exact, None, 0)
}

/// As [`energy_error`], restricted to the physical part of an embedded domain
/// resolved by a space tree of the given depth.
pub fn energy_error_in(
    mesh: &Mesh,
    dofs: &DofMap,
    field: &FieldApproximation,
    exact: &dyn ExactSolution,
    embedded: Option<&EmbeddedDomain>,
    depth: usize,
) -> Result<f64> {
    let dim = mesh.dim();
    let mut total = 0.0;
    for leaf in mesh.active_leaf_elements() {
        let basis = dofs.leaf_basis(mesh, leaf);
        let q = basis.max_order() + 3;
        let bounds = mesh.element(leaf).bounds;
        let cells = match embedded {
            Some(g) => crate::quadrature::spacetree_cells(bounds, dim, g, depth, q),
            None => error_cells(bounds, dim, q, exact.singular_point()),
        };
        let n = basis.len();
        let mut values = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        let mut scratch = BasisScratch::default();
        for p in cells.iter().flat_map(|c| c.points.iter()) {
            if p.alpha != 1.0 {
                continue;
            }
            basis.evaluate_into(mesh, p.x, &mut values, &mut grads, &mut scratch);
            let mut gh = [0.0; 2];
            for (k, s) in basis.shapes.iter().enumerate() {
                let c = field.coefficients[s.dof];
                gh[0] += c * grads[k][0];
                gh[1] += c * grads[k][1];
            }
            let ge = exact.gradient(p.x)?;
            let d = [gh[0] - ge[0], if dim == 2 { gh[1] - ge[1] } else { 0.0 }];
            total += p.weight * (d[0] * d[0] + d[1] * d[1]);
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::OrderField;
    use crate::mesh::BaseMeshSpec;
    use approx::assert_relative_eq;

    #[test]
    fn hat_stiffness_1d() {
        let h = 0.25;
        let mesh = Mesh::new(&BaseMeshSpec::interval(1.0, 1.0 + h, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let sys = Problem::default().leaf_system(&mesh, &dofs, 0);
        let k = 1.0 / h;
        for (got, want) in sys.matrix.iter().zip([k, -k, -k, k]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(sys.rhs.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn bilinear_stiffness_unit_square() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 1, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let sys = Problem::default().leaf_system(&mesh, &dofs, 0);
        // nodes (0,0) (1,0) (0,1) (1,1): (1,0) and (0,1) are adjacent to (0,0), (1,1) is opposite
        let expected = [
            [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
            [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
            [-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0],
            [-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(sys.entry(i, j), expected[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_with_nodal_zero_row_sums() {
        let mut mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [2.0, 1.0], 2, 1)).unwrap();
        mesh.refine(&[0]).unwrap();
        mesh.refine(&[3]).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(4)).unwrap();
        for leaf in mesh.active_leaf_elements() {
            let sys = Problem::default().leaf_system(&mesh, &dofs, leaf);
            let n = sys.len();
            for i in 0..n {
                for j in 0..n {
                    assert!((sys.entry(i, j) - sys.entry(j, i)).abs() <= 1e-13 * sys.entry(i, i).abs().max(1.0));
                }
            }
        }
        // unrefined element: nodal layer is a partition of unity
        let basis = dofs.leaf_basis(&mesh, 1);
        let sys = Problem::default().leaf_system(&mesh, &dofs, 1);
        let nodal: Vec<usize> =
            (0..basis.len()).filter(|&k| basis.shapes[k].ix < 2 && basis.shapes[k].iy < 2).collect();
        assert_eq!(nodal.len(), 4);
        for i in 0..sys.len() {
            let s: f64 = nodal.iter().map(|&j| sys.entry(i, j)).sum();
            assert!(s.abs() < 1e-13);
        }
    }

    #[test]
    fn empty_active_list_gives_empty_system() {
        let basis = LeafBasis { leaf: 0, dim: 2, chain: vec![0], chain_orders: vec![1], shapes: vec![] };
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 1, 1)).unwrap();
        let q = leaf_quadrature(&mesh, 0, 1, None, 0);
        let sys = element_system(&mesh, &basis, &q, None);
        assert!(sys.is_empty() && sys.matrix.is_empty());
    }

    #[test]
    fn neumann_constant_flux() {
        let h = 0.5;
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [h, h], 1, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let basis = dofs.leaf_basis(&mesh, 0);
        let g = 3.0;
        let flux: Flux = Arc::new(move |_, _| g);
        let load = neumann_load(&mesh, &basis, 0, None, &flux).unwrap();
        // bottom side carries nodes 0 and 1
        assert_relative_eq!(load[0], g * h / 2.0, epsilon = 1e-14);
        assert_relative_eq!(load[1], g * h / 2.0, epsilon = 1e-14);
        assert_eq!(load[2], 0.0);
        let zero: Flux = Arc::new(|_, _| 0.0);
        assert!(neumann_load(&mesh, &basis, 1, None, &zero).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn neumann_rejects_interior_side() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [2.0, 1.0], 2, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let basis = dofs.leaf_basis(&mesh, 0);
        let flux: Flux = Arc::new(|_, _| 1.0);
        assert_eq!(neumann_load(&mesh, &basis, 3, None, &flux), Err(Error::InteriorSegment));
    }

    #[test]
    fn boundary_condition_validation() {
        let d = DirichletSegment { segment: Segment::new([0.0, 0.0], [1.0, 0.0]), value: 0.0 };
        let flux: Flux = Arc::new(|_, _| 1.0);
        let overlapping = NeumannSegment { segment: Segment::new([0.5, 0.0], [2.0, 0.0]), flux: flux.clone() };
        assert!(matches!(
            BoundaryConditions::new(vec![d], vec![overlapping], None),
            Err(Error::OverlappingBoundaryConditions)
        ));
        let touching = NeumannSegment { segment: Segment::new([1.0, 0.0], [1.0, 1.0]), flux };
        assert!(BoundaryConditions::new(vec![d], vec![touching], None).is_ok());
        let nonzero = DirichletSegment { value: 1.0, ..d };
        assert!(matches!(BoundaryConditions::new(vec![nonzero], vec![], None), Err(Error::NonHomogeneousDirichlet(_))));
    }

    #[test]
    fn dirichlet_counts() {
        let mesh = Mesh::new(&BaseMeshSpec::rectangle([0.0, 0.0], [1.0, 1.0], 1, 1)).unwrap();
        let dofs = DofMap::new(&mesh, &OrderField::Uniform(1)).unwrap();
        let none = Constraints::new(&mesh, &dofs, &BoundaryConditions::default()).unwrap();
        assert_eq!(none.n_free(), 4);
        let sides = [
            Segment::new([0.0, 0.0], [1.0, 0.0]),
            Segment::new([0.0, 1.0], [1.0, 1.0]),
            Segment::new([0.0, 0.0], [0.0, 1.0]),
            Segment::new([1.0, 0.0], [1.0, 1.0]),
        ];
        let all = Constraints::new(&mesh, &dofs, &BoundaryConditions::dirichlet_only(&sides)).unwrap();
        assert_eq!(all.n_free(), 0);
    }

    #[test]
    fn lshape_exact_values() {
        let t = 3.0 * PI / 4.0;
        let (v, _) = lshape_exact([t.cos(), t.sin()]);
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        let (v0, g0) = lshape_exact([0.0, 0.0]);
        assert_eq!(v0, 0.0);
        assert!(matches!(g0, Err(Error::Singularity(..))));
        // zero on both Dirichlet legs
        assert!(LShapeExact.value([0.5, 0.0]).abs() < 1e-15);
        assert!(LShapeExact.value([0.0, -0.5]).abs() < 1e-15);
    }

    #[test]
    fn lshape_gradient_vs_finite_difference() {
        let h = 1e-6;
        for &x in &[[0.3, 0.7], [-0.6, 0.2], [-0.4, -0.8], [0.9, 0.05]] {
            let g = LShapeExact.gradient(x).unwrap();
            let fx = (LShapeExact.value([x[0] + h, x[1]]) - LShapeExact.value([x[0] - h, x[1]])) / (2.0 * h);
            let fy = (LShapeExact.value([x[0], x[1] + h]) - LShapeExact.value([x[0], x[1] - h])) / (2.0 * h);
            assert!(((fx - g[0]) / g[0]).abs() < 1e-6, "{x:?}");
            assert!(((fy - g[1]) / g[1]).abs() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn quarter_disk_manufactured_solution() {
        // -laplace u = f by central differences
        let h = 1e-4;
        let x = [0.3, 0.4];
        let u = |p: Point| QuarterDiskExact.value(p);
        let lap = (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h]) + u([x[0], x[1] - h]) - 4.0 * u(x))
            / (h * h);
        assert_relative_eq!(-lap, QuarterDiskExact::source(x), max_relative = 1e-6);
        // zero normal derivative on the arc
        let t: f64 = 0.7;
        let p = [t.cos(), t.sin()];
        let g = QuarterDiskExact.gradient(p).unwrap();
        assert!((g[0] * p[0] + g[1] * p[1]).abs() < 1e-14);
    }

    #[test]
    fn segment_clip() {
        let s = Segment::new([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(s.clip(&Segment::new([0.5, 0.0], [1.5, 0.0]), 1e-12), Some((0.0, 0.5)));
        assert_eq!(s.clip(&Segment::new([0.0, 1.0], [1.0, 1.0]), 1e-12), None);
        assert_eq!(s.clip(&Segment::new([1.0, 0.0], [2.0, 0.0]), 1e-12), None);
    }
}
