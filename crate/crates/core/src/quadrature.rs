//! Composed Gauss-Legendre integration on integration domains and space-tree
//! resolution of embedded geometry for the finite cell method.

use serde::{Deserialize, Serialize};

use crate::basis::DofMap;
use crate::mesh::{BoundingBox, ElementId, Mesh, Point};

/// Gauss-Legendre points (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            // P_1' = 1 everywhere
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePoint {
    pub x: Point,
    pub weight: f64,
    /// Fictitious-domain indicator at the point.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureCell {
    pub bounds: BoundingBox,
    pub points: Vec<QuadraturePoint>,
}

impl QuadratureCell {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().map(|p| p.weight * f(p.x)).sum()
    }
}

/// Tensor Gauss rule with `q` points per axis mapped onto `bounds`; weights
/// carry the physical measure.
pub fn gauss_rule(q: usize, dim: usize, bounds: BoundingBox) -> QuadratureCell {
    let (x, w) = gauss_legendre(q);
    let half = [0.5 * bounds.width(0), 0.5 * bounds.width(1)];
    let mut points = Vec::with_capacity(q.pow(dim as u32));
    if dim == 1 {
        for i in 0..q {
            points.push(QuadraturePoint {
                x: bounds.from_reference([x[i], 0.0], 1),
                weight: w[i] * half[0],
                alpha: 1.0,
            });
        }
    } else {
        for j in 0..q {
            for i in 0..q {
                points.push(QuadraturePoint {
                    x: bounds.from_reference([x[i], x[j]], 2),
                    weight: w[i] * w[j] * half[0] * half[1],
                    alpha: 1.0,
                });
            }
        }
    }
    QuadratureCell { bounds, points }
}

/// Implicit geometry built from primitives by set operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Geometry {
    /// `normal . x <= offset`
    HalfPlane {
        normal: Point,
        offset: f64,
    },
    Disk {
        center: Point,
        radius: f64,
    },
    Rect {
        lo: Point,
        hi: Point,
    },
    Union {
        of: Vec<Geometry>,
    },
    Intersect {
        of: Vec<Geometry>,
    },
    Subtract {
        from: Box<Geometry>,
        remove: Box<Geometry>,
    },
    Complement {
        of: Box<Geometry>,
    },
}

impl Geometry {
    pub fn contains(&self, x: Point) -> bool {
        match self {
            Geometry::HalfPlane { normal, offset } => normal[0] * x[0] + normal[1] * x[1] <= *offset,
            Geometry::Disk { center, radius } => {
                let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            Geometry::Rect { lo, hi } => x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1],
            Geometry::Union { of } => of.iter().any(|g| g.contains(x)),
            Geometry::Intersect { of } => of.iter().all(|g| g.contains(x)),
            Geometry::Subtract { from, remove } => from.contains(x) && !remove.contains(x),
            Geometry::Complement { of } => !of.contains(x),
        }
    }
}

/// Physical domain embedded in the mesh, with the fictitious indicator value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDomain {
    pub geometry: Geometry,
    pub epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

impl EmbeddedDomain {
    pub fn new(geometry: Geometry, epsilon: f64) -> Self {
        Self { geometry, epsilon }
    }

    pub fn alpha(&self, x: Point) -> f64 {
        if self.geometry.contains(x) {
            1.0
        } else {
            self.epsilon
        }
    }
}

fn corners(b: &BoundingBox, dim: usize) -> Vec<Point> {
    if dim == 1 {
        vec![b.lo, b.hi]
    } else {
        vec![b.lo, [b.hi[0], b.lo[1]], [b.lo[0], b.hi[1]], b.hi]
    }
}

/// Recursive space-tree integration cells for `bounds`: cells sampled fully
/// inside or outside stay whole with a uniform indicator, cut cells are bisected
/// until `depth`, where the indicator is taken pointwise.
pub fn spacetree_cells(
    bounds: BoundingBox,
    dim: usize,
    domain: &EmbeddedDomain,
    depth: usize,
    q: usize,
) -> Vec<QuadratureCell> {
    let mut out = Vec::new();
    let mut stack = vec![(bounds, 0usize)];
    while let Some((b, level)) = stack.pop() {
        let mut cell = gauss_rule(q, dim, b);
        let mut inside = 0;
        let mut samples = 0;
        for x in corners(&b, dim).into_iter().chain(cell.points.iter().map(|p| p.x)) {
            samples += 1;
            if domain.geometry.contains(x) {
                inside += 1;
            }
        }
        if inside == samples || inside == 0 {
            let alpha = if inside == 0 { domain.epsilon } else { 1.0 };
            cell.points.iter_mut().for_each(|p| p.alpha = alpha);
            out.push(cell);
        } else if level >= depth {
            cell.points.iter_mut().for_each(|p| p.alpha = domain.alpha(p.x));
            out.push(cell);
        } else {
            let ny = if dim == 2 { 2 } else { 1 };
            // reversed push keeps the output in child order
            for iy in (0..ny).rev() {
                for ix in (0..2).rev() {
                    stack.push((b.child(ix, iy, dim), level + 1));
                }
            }
        }
    }
    out
}

/// A leaf projected onto its base element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationDomain {
    pub base: ElementId,
    pub leaf: ElementId,
    /// Leaf footprint in the base element's reference coordinates.
    pub reference: BoundingBox,
    /// Gauss points per axis.
    pub order: usize,
}

/// Integration domains of one base element, in leaf pre-order.
pub fn integration_domains(mesh: &Mesh, dofs: &DofMap, base: ElementId) -> Vec<IntegrationDomain> {
    let dim = mesh.dim();
    let bb = mesh.element(base).bounds;
    mesh.leaves_of(base)
        .into_iter()
        .map(|leaf| {
            let lb = mesh.element(leaf).bounds;
            let order =
                mesh.ancestors(leaf).iter().map(|&e| dofs.orders().order(mesh.element(e).level)).max().unwrap_or(1) + 1;
            IntegrationDomain {
                base,
                leaf,
                reference: BoundingBox { lo: bb.to_reference(lb.lo, dim), hi: bb.to_reference(lb.hi, dim) },
                order,
            }
        })
        .collect()
}

/// Quadrature of one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafQuadrature {
    pub cells: Vec<QuadratureCell>,
    /// Gauss points per axis (highest contributing order + 1).
    pub order: usize,
}

impl LeafQuadrature {
    /// Total number of integration points.
    pub fn n_gp(&self) -> usize {
        self.cells.iter().map(|c| c.points.len()).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &QuadraturePoint> {
        self.cells.iter().flat_map(|c| c.points.iter())
    }
}

/// Quadrature of `leaf` for functions up to `max_order` on its chain,
/// optionally resolving embedded geometry to space-tree `depth`.
pub fn leaf_quadrature(
    mesh: &Mesh,
    leaf: ElementId,
    max_order: usize,
    geometry: Option<&EmbeddedDomain>,
    depth: usize,
) -> LeafQuadrature {
    let q = max_order + 1;
    let bounds = mesh.element(leaf).bounds;
    let cells = match geometry {
        None => vec![gauss_rule(q, mesh.dim(), bounds)],
        Some(g) => spacetree_cells(bounds, mesh.dim(), g, depth, q),
    };
    LeafQuadrature { cells, order: q }
}
