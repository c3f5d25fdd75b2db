//! Structured base meshes with recursive superposition refinement.
//!
//! Every element owns its own topological entities (nodes, edges, face). Entities
//! of equal level at equal position are shared between neighbours through an
//! integer lattice key, so no floating-point comparison decides identity.
//! Activation of entities follows two rules:
//!
//! * compatibility: an overlay entity (level >= 1) on the boundary of the union of
//!   its level's elements is switched off, which gives the overlay homogeneous
//!   Dirichlet data and keeps the sum of all levels C0;
//! * linear independence: an entity whose geometric sub-entities on a finer level
//!   carry an active entity is switched off.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ElementId = usize;
pub type EntityId = usize;
pub type Point = [f64; 2];

/// Deepest refinement level the lattice keys can represent.
pub const MAX_LEVEL: usize = 30;
const LATTICE_BITS: i32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Point,
    pub hi: Point,
}

impl BoundingBox {
    pub fn new(lo: Point, hi: Point) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Point {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    pub fn measure(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.width(a)).product()
    }

    pub fn contains(&self, x: Point, dim: usize, tol: f64) -> bool {
        (0..dim).all(|a| x[a] >= self.lo[a] - tol && x[a] <= self.hi[a] + tol)
    }

    /// Maps a physical point to the reference box `[-1, 1]^dim`.
    pub fn to_reference(&self, x: Point, dim: usize) -> Point {
        let mut xi = [0.0; 2];
        for a in 0..dim {
            xi[a] = 2.0 * (x[a] - self.lo[a]) / self.width(a) - 1.0;
        }
        xi
    }

    pub fn from_reference(&self, xi: Point, dim: usize) -> Point {
        let mut x = [0.0; 2];
        for a in 0..dim {
            x[a] = self.lo[a] + 0.5 * (xi[a] + 1.0) * self.width(a);
        }
        x
    }

    /// Child box `(ix, iy)` of an isotropic bisection.
    pub fn child(&self, ix: usize, iy: usize, dim: usize) -> BoundingBox {
        let c = self.center();
        let mut lo = self.lo;
        let mut hi = self.hi;
        for (a, i) in [ix, iy].into_iter().enumerate().take(dim) {
            if i == 0 {
                hi[a] = c[a];
            } else {
                lo[a] = c[a];
            }
        }
        BoundingBox { lo, hi }
    }
}

/// One axis-aligned rectangle of the base mesh, split into `nx` by `ny` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub lo: Point,
    pub hi: Point,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeshSpec {
    pub dim: usize,
    pub patches: Vec<Patch>,
}

impl BaseMeshSpec {
    /// The three-quadrant L-shaped domain `[-1,1]^2 \ (0,1)x(-1,0)` with the
    /// re-entrant corner at the origin, each quadrant split into `res x res` cells.
    pub fn lshape(res: usize) -> Self {
        let quad = |lo: Point, hi: Point| Patch { lo, hi, nx: res, ny: res };
        Self {
            dim: 2,
            patches: vec![quad([0.0, 0.0], [1.0, 1.0]), quad([-1.0, 0.0], [0.0, 1.0]), quad([-1.0, -1.0], [0.0, 0.0])],
        }
    }

    pub fn rectangle(lo: Point, hi: Point, nx: usize, ny: usize) -> Self {
        Self { dim: 2, patches: vec![Patch { lo, hi, nx, ny }] }
    }

    pub fn interval(a: f64, b: f64, n: usize) -> Self {
        Self { dim: 1, patches: vec![Patch { lo: [a, 0.0], hi: [b, 0.0], nx: n, ny: 1 }] }
    }

    pub fn element_count(&self) -> usize {
        self.patches.iter().map(|p| p.nx * if self.dim == 2 { p.ny } else { 1 }).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBaseMesh(m));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dimension {} is not supported", self.dim));
        }
        if self.patches.is_empty() {
            return bad("no patches".into());
        }
        for (i, p) in self.patches.iter().enumerate() {
            if p.nx == 0 || (self.dim == 2 && p.ny == 0) {
                return bad(format!("patch {i} has zero resolution"));
            }
            if (0..self.dim).any(|a| !p.lo[a].is_finite() || !p.hi[a].is_finite() || p.hi[a] <= p.lo[a]) {
                return bad(format!("patch {i} is degenerate"));
            }
        }
        for i in 0..self.patches.len() {
            for j in i + 1..self.patches.len() {
                let (a, b) = (&self.patches[i], &self.patches[j]);
                let overlap = (0..self.dim).all(|ax| a.lo[ax].max(b.lo[ax]) < a.hi[ax].min(b.hi[ax]));
                if overlap {
                    return bad(format!("patches {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }

    fn min_spacing(&self) -> f64 {
        let mut h = f64::INFINITY;
        for p in &self.patches {
            h = h.min((p.hi[0] - p.lo[0]) / p.nx as f64);
            if self.dim == 2 {
                h = h.min((p.hi[1] - p.lo[1]) / p.ny as f64);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Node,
    Edge,
    Face,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologicalEntity {
    pub kind: EntityKind,
    pub level: usize,
    /// Geometric extent; `lo == hi` for nodes.
    pub lo: Point,
    pub hi: Point,
    pub active: bool,
    owners: Vec<ElementId>,
    alive: bool,
}

impl TopologicalEntity {
    pub fn owners(&self) -> &[ElementId] {
        &self.owners
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: ElementId,
    pub level: usize,
    pub bounds: BoundingBox,
    pub parent: Option<ElementId>,
    children: Vec<ElementId>,
    base: ElementId,
    /// Local entity layout. 2D: nodes (0,0) (1,0) (0,1) (1,1), edges bottom,
    /// top, left, right, then the face. 1D: two nodes, then the interior.
    entities: Vec<EntityId>,
    alive: bool,
}

impl Element {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self) -> &[ElementId] {
        &self.children
    }

    pub fn base(&self) -> ElementId {
        self.base
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }
}

/// A side of an element lying on the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySide {
    pub element: ElementId,
    /// Local side index: 2D bottom, top, left, right; 1D left, right.
    pub side: usize,
    pub a: Point,
    pub b: Point,
    pub normal: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EntityKey {
    level: usize,
    kind: EntityKind,
    lo: [i64; 2],
    hi: [i64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PatchIndex {
    first: ElementId,
    patch: Patch,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    elements: Vec<Element>,
    base_elements: Vec<ElementId>,
    patches: Vec<PatchIndex>,
    entities: Vec<TopologicalEntity>,
    keys: HashMap<EntityKey, EntityId>,
    steps: usize,
    origin: Point,
    quantum: f64,
    tolerance: f64,
}

impl Mesh {
    /// Builds the level-0 mesh. Elements are created patch by patch, row-major.
    pub fn new(spec: &BaseMeshSpec) -> Result<Mesh> {
        spec.validate()?;
        let h = spec.min_spacing();
        let mut origin = [f64::INFINITY; 2];
        for p in &spec.patches {
            for (o, lo) in origin.iter_mut().zip(p.lo).take(spec.dim) {
                *o = o.min(lo);
            }
        }
        if spec.dim == 1 {
            origin[1] = 0.0;
        }
        let mut mesh = Mesh {
            dim: spec.dim,
            elements: Vec::with_capacity(spec.element_count()),
            base_elements: Vec::with_capacity(spec.element_count()),
            patches: Vec::with_capacity(spec.patches.len()),
            entities: Vec::new(),
            keys: HashMap::new(),
            steps: 0,
            origin,
            quantum: h * 2f64.powi(-LATTICE_BITS),
            tolerance: h * 1e-9,
        };
        for patch in &spec.patches {
            mesh.patches.push(PatchIndex { first: mesh.elements.len(), patch: *patch });
            let ny = if spec.dim == 2 { patch.ny } else { 1 };
            for iy in 0..ny {
                for ix in 0..patch.nx {
                    let coord = |a: usize, i: usize, n: usize| {
                        if i == n {
                            patch.hi[a]
                        } else {
                            patch.lo[a] + (patch.hi[a] - patch.lo[a]) * i as f64 / n as f64
                        }
                    };
                    let lo = [coord(0, ix, patch.nx), if spec.dim == 2 { coord(1, iy, ny) } else { 0.0 }];
                    let hi = [coord(0, ix + 1, patch.nx), if spec.dim == 2 { coord(1, iy + 1, ny) } else { 0.0 }];
                    let id = mesh.push_element(0, BoundingBox { lo, hi }, None);
                    mesh.base_elements.push(id);
                }
            }
        }
        mesh.check_conformity(spec)?;
        mesh.update_activation();
        Ok(mesh)
    }

    fn check_conformity(&self, spec: &BaseMeshSpec) -> Result<()> {
        if self.dim != 2 || spec.patches.len() < 2 {
            return Ok(());
        }
        let tol = self.tolerance;
        for ent in self.entities.iter().filter(|e| e.kind == EntityKind::Edge && e.owners.len() == 1) {
            let own_patch = self.patch_of(ent.owners[0]);
            for (pi, p) in spec.patches.iter().enumerate() {
                if pi == own_patch {
                    continue;
                }
                // Does the edge overlap a side of patch p with positive length?
                let axis = if (ent.lo[1] - ent.hi[1]).abs() <= tol { 0 } else { 1 };
                let fixed = 1 - axis;
                let on_side = (ent.lo[fixed] - p.lo[fixed]).abs() <= tol || (ent.lo[fixed] - p.hi[fixed]).abs() <= tol;
                let overlap = ent.hi[axis].min(p.hi[axis]) - ent.lo[axis].max(p.lo[axis]);
                if on_side && overlap > tol {
                    return Err(Error::InvalidBaseMesh(format!(
                        "patch {own_patch} and patch {pi} meet with non-matching vertices near ({}, {})",
                        ent.lo[0], ent.lo[1]
                    )));
                }
            }
        }
        Ok(())
    }

    fn patch_of(&self, base: ElementId) -> usize {
        self.patches.iter().rposition(|p| p.first <= base).unwrap_or(0)
    }

    fn lattice(&self, x: Point) -> [i64; 2] {
        [
            ((x[0] - self.origin[0]) / self.quantum).round() as i64,
            ((x[1] - self.origin[1]) / self.quantum).round() as i64,
        ]
    }

    fn key(&self, level: usize, kind: EntityKind, lo: Point, hi: Point) -> EntityKey {
        EntityKey { level, kind, lo: self.lattice(lo), hi: self.lattice(hi) }
    }

    fn local_entity_geometry(&self, b: &BoundingBox) -> Vec<(EntityKind, Point, Point)> {
        use EntityKind::*;
        let (lo, hi) = (b.lo, b.hi);
        if self.dim == 1 {
            return vec![(Node, lo, lo), (Node, hi, hi), (Edge, lo, hi)];
        }
        let p00 = lo;
        let p10 = [hi[0], lo[1]];
        let p01 = [lo[0], hi[1]];
        let p11 = hi;
        vec![
            (Node, p00, p00),
            (Node, p10, p10),
            (Node, p01, p01),
            (Node, p11, p11),
            (Edge, p00, p10),
            (Edge, p01, p11),
            (Edge, p00, p01),
            (Edge, p10, p11),
            (Face, lo, hi),
        ]
    }

    fn push_element(&mut self, level: usize, bounds: BoundingBox, parent: Option<ElementId>) -> ElementId {
        let id = self.elements.len();
        let base = parent.map_or(id, |p| self.elements[p].base);
        let mut entities = Vec::with_capacity(9);
        for (kind, lo, hi) in self.local_entity_geometry(&bounds) {
            let key = self.key(level, kind, lo, hi);
            let eid = match self.keys.get(&key) {
                Some(&e) => e,
                None => {
                    let e = self.entities.len();
                    self.entities.push(TopologicalEntity {
                        kind,
                        level,
                        lo,
                        hi,
                        active: true,
                        owners: Vec::new(),
                        alive: true,
                    });
                    self.keys.insert(key, e);
                    e
                }
            };
            self.entities[eid].owners.push(id);
            entities.push(eid);
        }
        self.elements.push(Element { id, level, bounds, parent, children: Vec::new(), base, entities, alive: true });
        id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn element(&self, id: ElementId) -> &Element {
        &self.elements[id]
    }

    pub fn get_element(&self, id: ElementId) -> Result<&Element> {
        self.elements.get(id).filter(|e| e.alive).ok_or(Error::UnknownElement(id))
    }

    pub fn entity(&self, id: EntityId) -> &TopologicalEntity {
        &self.entities[id]
    }

    /// Size of the entity arena, including retired slots.
    pub fn entity_capacity(&self) -> usize {
        self.entities.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = (EntityId, &TopologicalEntity)> {
        self.entities.iter().enumerate().filter(|(_, e)| e.alive)
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.alive)
    }

    pub fn base_elements(&self) -> &[ElementId] {
        &self.base_elements
    }

    pub fn max_level(&self) -> usize {
        self.elements().map(|e| e.level).max().unwrap_or(0)
    }

    /// Chain from the base element down to `id` (inclusive).
    pub fn ancestors(&self, id: ElementId) -> Vec<ElementId> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = self.elements[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    /// Active leaves in depth-first pre-order, base elements in creation order.
    pub fn active_leaf_elements(&self) -> Vec<ElementId> {
        let mut out = Vec::with_capacity(self.elements.len());
        let mut stack = Vec::new();
        for &b in &self.base_elements {
            stack.push(b);
            while let Some(id) = stack.pop() {
                let e = &self.elements[id];
                if e.is_leaf() {
                    out.push(id);
                } else {
                    stack.extend(e.children.iter().rev());
                }
            }
        }
        out
    }

    /// Active leaves below (and including) one base element, pre-order.
    pub fn leaves_of(&self, base: ElementId) -> Vec<ElementId> {
        let mut out = Vec::new();
        let mut stack = vec![base];
        while let Some(id) = stack.pop() {
            let e = &self.elements[id];
            if e.is_leaf() {
                out.push(id);
            } else {
                stack.extend(e.children.iter().rev());
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.elements().filter(|e| e.is_leaf()).count()
    }

    /// Active leaves whose closure contains `x`.
    pub fn leaves_touching(&self, x: Point) -> Vec<ElementId> {
        self.active_leaf_elements()
            .into_iter()
            .filter(|&id| self.elements[id].bounds.contains(x, self.dim, self.tolerance))
            .collect()
    }

    /// Bisects every marked active leaf isotropically.
    pub fn refine(&mut self, marked: &[ElementId]) -> Result<()> {
        let mut marked = marked.to_vec();
        marked.sort_unstable();
        marked.dedup();
        for &id in &marked {
            let e = self.get_element(id)?;
            if !e.is_leaf() {
                return Err(Error::NotALeaf(id));
            }
            if e.level + 1 > MAX_LEVEL {
                return Err(Error::LevelLimit(MAX_LEVEL));
            }
        }
        if marked.is_empty() {
            return Ok(());
        }
        let ny = if self.dim == 2 { 2 } else { 1 };
        for id in marked {
            let (level, bounds) = (self.elements[id].level, self.elements[id].bounds);
            let mut children = Vec::with_capacity(1 << self.dim);
            for iy in 0..ny {
                for ix in 0..2 {
                    children.push(self.push_element(level + 1, bounds.child(ix, iy, self.dim), Some(id)));
                }
            }
            self.elements[id].children = children;
        }
        self.steps += 1;
        self.update_activation();
        Ok(())
    }

    /// Removes the children of every marked element; surviving ids are unchanged.
    pub fn coarsen(&mut self, marked: &[ElementId]) -> Result<()> {
        let mut marked = marked.to_vec();
        marked.sort_unstable();
        marked.dedup();
        for &id in &marked {
            let e = self.get_element(id)?;
            if e.is_leaf() {
                return Err(Error::CannotCoarsen(id, "element is not refined"));
            }
            if e.children.iter().any(|&c| !self.elements[c].is_leaf()) {
                return Err(Error::CannotCoarsen(id, "children are refined further"));
            }
        }
        if marked.is_empty() {
            return Ok(());
        }
        for id in marked {
            let children = std::mem::take(&mut self.elements[id].children);
            for c in children {
                self.elements[c].alive = false;
                for k in 0..self.elements[c].entities.len() {
                    let eid = self.elements[c].entities[k];
                    self.entities[eid].owners.retain(|&o| o != c);
                    if self.entities[eid].owners.is_empty() {
                        let ent = &self.entities[eid];
                        let key = self.key(ent.level, ent.kind, ent.lo, ent.hi);
                        self.keys.remove(&key);
                        self.entities[eid].alive = false;
                    }
                }
            }
        }
        while self.elements.last().is_some_and(|e| !e.alive) {
            self.elements.pop();
        }
        while self.entities.last().is_some_and(|e| !e.alive) {
            self.entities.pop();
        }
        self.update_activation();
        Ok(())
    }

    /// Refines `steps` times the leaves touching `x`.
    pub fn refine_towards(&mut self, x: Point, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let marked = self.leaves_touching(x);
            self.refine(&marked)?;
        }
        Ok(())
    }

    /// Coarsens every refined element back to the base mesh.
    pub fn coarsen_all(&mut self) -> Result<()> {
        loop {
            let marked: Vec<ElementId> = self
                .elements()
                .filter(|e| !e.is_leaf() && e.children.iter().all(|&c| self.elements[c].is_leaf()))
                .map(|e| e.id)
                .collect();
            if marked.is_empty() {
                return Ok(());
            }
            self.coarsen(&marked)?;
        }
    }

    /// Level-(l+1) entities geometrically inside entity `id` of level l.
    pub fn sub_entities(&self, id: EntityId) -> Vec<EntityId> {
        use EntityKind::*;
        let e = &self.entities[id];
        let l = e.level + 1;
        let mid = [0.5 * (e.lo[0] + e.hi[0]), 0.5 * (e.lo[1] + e.hi[1])];
        let mut wanted: Vec<(EntityKind, Point, Point)> = Vec::with_capacity(9);
        match e.kind {
            Node => wanted.push((Node, e.lo, e.lo)),
            Edge => {
                wanted.push((Node, mid, mid));
                wanted.push((Edge, e.lo, mid));
                wanted.push((Edge, mid, e.hi));
            }
            Face => {
                let (lo, hi) = (e.lo, e.hi);
                wanted.push((Node, mid, mid));
                wanted.push((Edge, [mid[0], lo[1]], mid));
                wanted.push((Edge, mid, [mid[0], hi[1]]));
                wanted.push((Edge, [lo[0], mid[1]], mid));
                wanted.push((Edge, mid, [hi[0], mid[1]]));
                let b = BoundingBox { lo, hi };
                for iy in 0..2 {
                    for ix in 0..2 {
                        let c = b.child(ix, iy, 2);
                        wanted.push((Face, c.lo, c.hi));
                    }
                }
            }
        }
        wanted.into_iter().filter_map(|(k, lo, hi)| self.keys.get(&self.key(l, k, lo, hi)).copied()).collect()
    }

    /// Recomputes entity activation from scratch (compatibility, then linear
    /// independence from the finest level down).
    pub fn update_activation(&mut self) {
        let full_node = 1usize << self.dim;
        let mut by_level: Vec<Vec<EntityId>> = Vec::new();
        for (id, e) in self.entities.iter_mut().enumerate() {
            if !e.alive {
                continue;
            }
            e.active = e.level == 0
                || match e.kind {
                    EntityKind::Node => e.owners.len() == full_node,
                    EntityKind::Edge if self.dim == 2 => e.owners.len() == 2,
                    _ => true,
                };
            if by_level.len() <= e.level {
                by_level.resize(e.level + 1, Vec::new());
            }
            by_level[e.level].push(id);
        }
        let mut covered = vec![false; self.entities.len()];
        for level in (0..by_level.len().saturating_sub(1)).rev() {
            for &id in &by_level[level] {
                let hit = self.sub_entities(id).into_iter().any(|s| self.entities[s].active || covered[s]);
                if hit {
                    covered[id] = true;
                    self.entities[id].active = false;
                }
            }
        }
    }

    /// Locates the active leaf containing `x` (first match on shared boundaries).
    pub fn find_leaf(&self, x: Point) -> Option<ElementId> {
        let tol = self.tolerance;
        for pi in &self.patches {
            let p = &pi.patch;
            let inside = (0..self.dim).all(|a| x[a] >= p.lo[a] - tol && x[a] <= p.hi[a] + tol);
            if !inside {
                continue;
            }
            let cell = |a: usize, n: usize| {
                let t = ((x[a] - p.lo[a]) / (p.hi[a] - p.lo[a]) * n as f64).floor();
                (t.max(0.0) as usize).min(n - 1)
            };
            let ix = cell(0, p.nx);
            let iy = if self.dim == 2 { cell(1, p.ny) } else { 0 };
            let mut id = pi.first + iy * p.nx + ix;
            loop {
                let e = &self.elements[id];
                if e.is_leaf() {
                    return Some(id);
                }
                id = *e.children.iter().find(|&&c| self.elements[c].bounds.contains(x, self.dim, tol))?;
            }
        }
        None
    }

    /// Sides of `id` that lie on the boundary of the computational domain.
    pub fn boundary_sides(&self, id: ElementId) -> Vec<BoundarySide> {
        let e = &self.elements[id];
        let base = &self.elements[e.base];
        let b = e.bounds;
        let tol = self.tolerance;
        let mut out = Vec::new();
        if self.dim == 1 {
            for side in 0..2 {
                let (x, bx, n) = if side == 0 { (b.lo, base.bounds.lo, -1.0) } else { (b.hi, base.bounds.hi, 1.0) };
                if (x[0] - bx[0]).abs() <= tol && self.entities[base.entities[side]].owners.len() == 1 {
                    out.push(BoundarySide { element: id, side, a: x, b: x, normal: [n, 0.0] });
                }
            }
            return out;
        }
        // (fixed axis, use hi?, outward normal, endpoints)
        let sides = [
            (1, false, [0.0, -1.0], [b.lo[0], b.lo[1]], [b.hi[0], b.lo[1]]),
            (1, true, [0.0, 1.0], [b.lo[0], b.hi[1]], [b.hi[0], b.hi[1]]),
            (0, false, [-1.0, 0.0], [b.lo[0], b.lo[1]], [b.lo[0], b.hi[1]]),
            (0, true, [1.0, 0.0], [b.hi[0], b.lo[1]], [b.hi[0], b.hi[1]]),
        ];
        for (side, (axis, hi, normal, pa, pb)) in sides.into_iter().enumerate() {
            let mine = if hi { b.hi[axis] } else { b.lo[axis] };
            let theirs = if hi { base.bounds.hi[axis] } else { base.bounds.lo[axis] };
            if (mine - theirs).abs() <= tol && self.entities[base.entities[4 + side]].owners.len() == 1 {
                out.push(BoundarySide { element: id, side, a: pa, b: pb, normal });
            }
        }
        out
    }

    /// Structural equality: element tree, geometry and activation, ignoring
    /// the step counter.
    pub fn same_structure(&self, other: &Mesh) -> bool {
        self.dim == other.dim
            && self.elements == other.elements
            && self.entities == other.entities
            && self.base_elements == other.base_elements
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Axis-aligned bounding box of the whole mesh.
    pub fn bounding_box(&self) -> BoundingBox {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &b in &self.base_elements {
            let bb = self.elements[b].bounds;
            for a in 0..2 {
                lo[a] = lo[a].min(bb.lo[a]);
                hi[a] = hi[a].max(bb.hi[a]);
            }
        }
        BoundingBox { lo, hi }
    }
}
