//! Integrated Legendre shape functions, their association with topological
//! entities and the global numbering of active modes.
//!
//! On a leaf the non-zero functions are the active modes of every element on
//! the ancestor chain; each is evaluated in its own element's reference frame.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ElementId, EntityId, EntityKind, Mesh, Point};

/// Polynomial order: uniform, or one order per refinement level (the last
/// entry applies to all deeper levels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderField {
    Uniform(usize),
    Graded(Vec<usize>),
}

impl OrderField {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            OrderField::Uniform(p) => *p >= 1,
            OrderField::Graded(ps) => !ps.is_empty() && ps.iter().all(|&p| p >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("polynomial orders must be >= 1".into()))
        }
    }

    pub fn order(&self, level: usize) -> usize {
        match self {
            OrderField::Uniform(p) => *p,
            OrderField::Graded(ps) => ps[level.min(ps.len() - 1)],
        }
    }

    /// Order of an unrefined base element.
    pub fn base_order(&self) -> usize {
        self.order(0)
    }
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    // (P_n, P_{n-1}); P_{-1} is reported as 0.
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Legendre polynomial `P_n(x)`.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_pair(n, x).0
}

/// One-dimensional shape `k` and its derivative: `k = 0, 1` are the nodal hats
/// `(1 - xi)/2` and `(1 + xi)/2`, `k >= 2` the internal mode of degree `k`.
pub fn shape_1d(k: usize, xi: f64) -> (f64, f64) {
    match k {
        0 => (0.5 * (1.0 - xi), -0.5),
        1 => (0.5 * (1.0 + xi), 0.5),
        _ => {
            let (pk, pk1) = legendre_pair(k, xi);
            let pk2 = legendre(k - 2, xi);
            let s = (2.0 * (2 * k - 1) as f64).sqrt();
            ((pk - pk2) / s, ((2 * k - 1) as f64 / 2.0).sqrt() * pk1)
        }
    }
}

/// Fills values and derivatives of shapes `0..=p` at `xi`.
fn shape_table(p: usize, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
    values[0] = 0.5 * (1.0 - xi);
    derivs[0] = -0.5;
    if p == 0 {
        return;
    }
    values[1] = 0.5 * (1.0 + xi);
    derivs[1] = 0.5;
    if p < 2 {
        return;
    }
    // Legendre recursion carried alongside.
    let mut leg = [1.0, xi, 0.0];
    let mut legs = vec![1.0, xi];
    legs.reserve(p);
    for n in 1..p {
        leg[2] = ((2 * n + 1) as f64 * xi * leg[1] - n as f64 * leg[0]) / (n + 1) as f64;
        legs.push(leg[2]);
        leg[0] = leg[1];
        leg[1] = leg[2];
    }
    for k in 2..=p {
        values[k] = (legs[k] - legs[k - 2]) / (2.0 * (2 * k - 1) as f64).sqrt();
        derivs[k] = ((2 * k - 1) as f64 / 2.0).sqrt() * legs[k - 1];
    }
}

/// Integrated Legendre mode `j >= 1` on `[-1, 1]`: `j = 1, 2` are the nodal
/// hats, `j >= 3` the internal functions vanishing at both ends.
pub fn integrated_legendre(j: usize, xi: f64) -> Result<f64> {
    if j == 0 || !(-1.0..=1.0).contains(&xi) {
        return Err(Error::ShapeDomain { mode: j, xi });
    }
    Ok(shape_1d(j - 1, xi).0)
}

pub fn entity_mode_count(kind: EntityKind, p: usize) -> usize {
    match kind {
        EntityKind::Node => 1,
        EntityKind::Edge => p.saturating_sub(1),
        EntityKind::Face => p.saturating_sub(1).pow(2),
    }
}

/// Tensor indices `(ix, iy)` of every mode of local entity `local` of order `p`.
pub fn local_mode_indices(dim: usize, local: usize, p: usize) -> Vec<(u8, u8)> {
    let internal = 2..=p as u8;
    if dim == 1 {
        return match local {
            0 | 1 => vec![(local as u8, 0)],
            _ => internal.map(|k| (k, 0)).collect(),
        };
    }
    match local {
        0..=3 => vec![((local & 1) as u8, (local >> 1) as u8)],
        4 => internal.map(|k| (k, 0)).collect(),
        5 => internal.map(|k| (k, 1)).collect(),
        6 => internal.map(|k| (0, k)).collect(),
        7 => internal.map(|k| (1, k)).collect(),
        _ => internal.clone().flat_map(|i| (2..=p as u8).map(move |j| (i, j))).collect(),
    }
}

/// One non-zero function on a leaf: global DOF plus where to evaluate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalShape {
    pub dof: usize,
    /// Position of the owning element in [`LeafBasis::chain`].
    pub chain_index: u8,
    pub ix: u8,
    pub iy: u8,
}

/// The cross-level concatenation of active functions on one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBasis {
    pub leaf: ElementId,
    pub dim: usize,
    /// Ancestor chain, base element first.
    pub chain: Vec<ElementId>,
    pub chain_orders: Vec<usize>,
    pub shapes: Vec<LocalShape>,
}

/// Scratch tables reused across evaluation points.
#[derive(Debug, Default, Clone)]
pub struct BasisScratch {
    vx: Vec<f64>,
    dx: Vec<f64>,
    vy: Vec<f64>,
    dy: Vec<f64>,
}

impl LeafBasis {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn dofs(&self) -> Vec<usize> {
        self.shapes.iter().map(|s| s.dof).collect()
    }

    /// Highest order over the ancestor chain.
    pub fn max_order(&self) -> usize {
        self.chain_orders.iter().copied().max().unwrap_or(1)
    }

    /// Values and physical gradients of every shape at `x` (must lie in the leaf).
    pub fn evaluate(&self, mesh: &Mesh, x: Point) -> Result<(Vec<f64>, Vec<Point>)> {
        let leaf = mesh.element(self.leaf);
        if !leaf.bounds.contains(x, self.dim, mesh.tolerance()) {
            return Err(Error::PointOutsideElement(x[0], x[1], self.leaf));
        }
        let mut values = vec![0.0; self.len()];
        let mut grads = vec![[0.0; 2]; self.len()];
        self.evaluate_into(mesh, x, &mut values, &mut grads, &mut BasisScratch::default());
        Ok((values, grads))
    }

    /// Unchecked evaluation into caller-provided buffers of length `len()`.
    pub fn evaluate_into(
        &self,
        mesh: &Mesh,
        x: Point,
        values: &mut [f64],
        grads: &mut [Point],
        scratch: &mut BasisScratch,
    ) {
        let stride = self.max_order() + 1;
        let n = self.chain.len() * stride;
        for buf in [&mut scratch.vx, &mut scratch.dx, &mut scratch.vy, &mut scratch.dy] {
            buf.resize(n, 0.0);
        }
        let mut scale = Vec::with_capacity(self.chain.len());
        for (c, (&el, &p)) in self.chain.iter().zip(&self.chain_orders).enumerate() {
            let b = mesh.element(el).bounds;
            let xi = b.to_reference(x, self.dim);
            let r = c * stride..c * stride + p + 1;
            shape_table(p, xi[0], &mut scratch.vx[r.clone()], &mut scratch.dx[r.clone()]);
            if self.dim == 2 {
                shape_table(p, xi[1], &mut scratch.vy[r.clone()], &mut scratch.dy[r]);
                scale.push([2.0 / b.width(0), 2.0 / b.width(1)]);
            } else {
                scale.push([2.0 / b.width(0), 0.0]);
            }
        }
        for (k, s) in self.shapes.iter().enumerate() {
            let c = s.chain_index as usize;
            let ix = c * stride + s.ix as usize;
            if self.dim == 1 {
                values[k] = scratch.vx[ix];
                grads[k] = [scratch.dx[ix] * scale[c][0], 0.0];
            } else {
                let iy = c * stride + s.iy as usize;
                values[k] = scratch.vx[ix] * scratch.vy[iy];
                grads[k] =
                    [scratch.dx[ix] * scratch.vy[iy] * scale[c][0], scratch.vx[ix] * scratch.dy[iy] * scale[c][1]];
            }
        }
    }
}

/// Global enumeration of active (entity, mode) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    dim: usize,
    orders: OrderField,
    total: usize,
    entity_first: Vec<Option<usize>>,
    entity_order: Vec<usize>,
    dof_entity: Vec<(EntityId, u32)>,
}

impl DofMap {
    /// Numbers modes in entity creation order, then mode index.
    pub fn new(mesh: &Mesh, orders: &OrderField) -> Result<DofMap> {
        orders.validate()?;
        let cap = mesh.entity_capacity();
        let mut entity_first = vec![None; cap];
        let mut entity_order = vec![0; cap];
        let mut dof_entity = Vec::new();
        let mut total = 0;
        for (id, e) in mesh.entities() {
            let p = e
                .owners()
                .iter()
                .map(|&o| orders.order(mesh.element(o).level))
                .min()
                .unwrap_or_else(|| orders.order(e.level));
            entity_order[id] = p;
            if !e.active {
                continue;
            }
            let n = entity_mode_count(e.kind, p);
            if n == 0 {
                continue;
            }
            entity_first[id] = Some(total);
            dof_entity.extend((0..n as u32).map(|m| (id, m)));
            total += n;
        }
        Ok(DofMap { dim: mesh.dim(), orders: orders.clone(), total, entity_first, entity_order, dof_entity })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn orders(&self) -> &OrderField {
        &self.orders
    }

    pub fn entity_order(&self, id: EntityId) -> usize {
        self.entity_order[id]
    }

    /// Global DOFs of an entity (empty when inactive or without modes).
    pub fn entity_dofs(&self, mesh: &Mesh, id: EntityId) -> Range<usize> {
        match self.entity_first[id] {
            Some(f) => f..f + entity_mode_count(mesh.entity(id).kind, self.entity_order[id]),
            None => 0..0,
        }
    }

    /// Entity and mode index carrying a global DOF.
    pub fn dof_entity(&self, dof: usize) -> (EntityId, usize) {
        let (e, m) = self.dof_entity[dof];
        (e, m as usize)
    }

    /// Collects the active functions of `leaf` along its ancestor chain.
    pub fn leaf_basis(&self, mesh: &Mesh, leaf: ElementId) -> LeafBasis {
        let chain = mesh.ancestors(leaf);
        let chain_orders: Vec<usize> = chain.iter().map(|&e| self.orders.order(mesh.element(e).level)).collect();
        let mut shapes = Vec::new();
        for (c, &el) in chain.iter().enumerate() {
            for (local, &ent) in mesh.element(el).entities().iter().enumerate() {
                let Some(first) = self.entity_first[ent] else { continue };
                let p = self.entity_order[ent];
                for (m, (ix, iy)) in local_mode_indices(self.dim, local, p).into_iter().enumerate() {
                    shapes.push(LocalShape { dof: first + m, chain_index: c as u8, ix, iy });
                }
            }
        }
        LeafBasis { leaf, dim: self.dim, chain, chain_orders, shapes }
    }

    /// Active DOF lists of every leaf in the canonical leaf order.
    pub fn leaf_lists(&self, mesh: &Mesh) -> Vec<(ElementId, Vec<usize>)> {
        mesh.active_leaf_elements().into_iter().map(|l| (l, self.leaf_basis(mesh, l).dofs())).collect()
    }

    /// Number of active functions on a leaf without materialising the basis.
    pub fn leaf_dof_count(&self, mesh: &Mesh, leaf: ElementId) -> usize {
        mesh.ancestors(leaf)
            .iter()
            .flat_map(|&el| mesh.element(el).entities().iter())
            .map(|&ent| self.entity_dofs(mesh, ent).len())
            .sum()
    }
}

/// Coefficients of a discrete field over a [`DofMap`]; the field is the sum of
/// the contributions of all mesh levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldApproximation {
    pub coefficients: Vec<f64>,
}

impl FieldApproximation {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coefficients: vec![0.0; n] }
    }

    /// Value and gradient at `x`.
    pub fn evaluate(&self, mesh: &Mesh, dofs: &DofMap, x: Point) -> Result<(f64, Point)> {
        let leaf = mesh.find_leaf(x).ok_or(Error::PointOutsideMesh(x[0], x[1]))?;
        let basis = dofs.leaf_basis(mesh, leaf);
        let (v, g) = basis.evaluate(mesh, x)?;
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for (k, s) in basis.shapes.iter().enumerate() {
            let c = self.coefficients[s.dof];
            value += c * v[k];
            grad[0] += c * g[k][0];
            grad[1] += c * g[k][1];
        }
        Ok((value, grad))
    }

    /// Contribution of each mesh level to the value at `x` (index = level).
    pub fn level_contributions(&self, mesh: &Mesh, dofs: &DofMap, x: Point) -> Result<Vec<f64>> {
        let leaf = mesh.find_leaf(x).ok_or(Error::PointOutsideMesh(x[0], x[1]))?;
        let basis = dofs.leaf_basis(mesh, leaf);
        let (v, _) = basis.evaluate(mesh, x)?;
        let mut out = vec![0.0; basis.chain.len()];
        for (k, s) in basis.shapes.iter().enumerate() {
            out[s.chain_index as usize] += self.coefficients[s.dof] * v[k];
        }
        Ok(out)
    }
}
