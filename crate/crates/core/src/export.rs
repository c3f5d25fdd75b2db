//! Text exports: VTK unstructured-grid XML of the active leaves and a CSV
//! probe of the discrete solution on a uniform grid.

use std::fmt::Write as _;

use crate::basis::{DofMap, FieldApproximation};
use crate::mesh::{ElementId, Mesh};
use crate::partition::{LeafWeight, RankPartition};

const VTK_LINE: u8 = 3;
const VTK_QUAD: u8 = 9;

/// One cell per active leaf with `level`, `rank`, `order` and `w_star` cell
/// data, plus a `u_h` point field when a solution is given.
pub fn vtu(
    mesh: &Mesh,
    dofs: &DofMap,
    leaves: &[ElementId],
    partition: &RankPartition,
    weights: &[LeafWeight],
    solution: Option<&FieldApproximation>,
) -> String {
    let dim = mesh.dim();
    let corners = if dim == 2 { 4 } else { 2 };
    let mut points = Vec::with_capacity(leaves.len() * corners);
    for &l in leaves {
        let b = mesh.element(l).bounds;
        if dim == 2 {
            // counter-clockwise for VTK_QUAD
            points.extend([b.lo, [b.hi[0], b.lo[1]], b.hi, [b.lo[0], b.hi[1]]]);
        } else {
            points.extend([b.lo, b.hi]);
        }
    }
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n<UnstructuredGrid>\n");
    let _ = writeln!(s, "<Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">", points.len(), leaves.len());
    s.push_str("<Points>\n<DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n");
    for p in &points {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    s.push_str("</DataArray>\n</Points>\n<Cells>\n<DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
    for c in 0..leaves.len() {
        let ids: Vec<String> = (0..corners).map(|k| (c * corners + k).to_string()).collect();
        let _ = writeln!(s, "{}", ids.join(" "));
    }
    s.push_str("</DataArray>\n<DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
    for c in 0..leaves.len() {
        let _ = writeln!(s, "{}", (c + 1) * corners);
    }
    s.push_str("</DataArray>\n<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
    let kind = if dim == 2 { VTK_QUAD } else { VTK_LINE };
    for _ in leaves {
        let _ = writeln!(s, "{kind}");
    }
    s.push_str("</DataArray>\n</Cells>\n<CellData>\n");
    let int_array = |s: &mut String, name: &str, values: &mut dyn Iterator<Item = usize>| {
        let _ = writeln!(s, "<DataArray type=\"Int32\" Name=\"{name}\" format=\"ascii\">");
        for v in values {
            let _ = writeln!(s, "{v}");
        }
        s.push_str("</DataArray>\n");
    };
    int_array(&mut s, "level", &mut leaves.iter().map(|&l| mesh.element(l).level));
    int_array(&mut s, "rank", &mut (0..leaves.len()).map(|i| partition.rank_of(i)));
    int_array(&mut s, "order", &mut leaves.iter().map(|&l| dofs.orders().order(mesh.element(l).level)));
    s.push_str("<DataArray type=\"Float64\" Name=\"w_star\" format=\"ascii\">\n");
    for w in weights {
        let _ = writeln!(s, "{:e}", w.w_star);
    }
    s.push_str("</DataArray>\n</CellData>\n");
    if let Some(u) = solution {
        s.push_str("<PointData>\n<DataArray type=\"Float64\" Name=\"u_h\" format=\"ascii\">\n");
        for (k, p) in points.iter().enumerate() {
            let leaf = leaves[k / corners];
            let basis = dofs.leaf_basis(mesh, leaf);
            let v = basis
                .evaluate(mesh, *p)
                .map(|(vals, _)| basis.shapes.iter().zip(vals).map(|(sh, n)| u.coefficients[sh.dof] * n).sum::<f64>())
                .unwrap_or(f64::NAN);
            let _ = writeln!(s, "{v:e}");
        }
        s.push_str("</DataArray>\n</PointData>\n");
    }
    s.push_str("</Piece>\n</UnstructuredGrid>\n</VTKFile>\n");
    s
}

/// `x,y,u_h` on an `n x n` grid over the mesh bounding box; points outside the
/// mesh are skipped.
pub fn probe_csv(mesh: &Mesh, dofs: &DofMap, solution: &FieldApproximation, n: usize) -> String {
    let b = mesh.bounding_box();
    let mut out = String::from("x,y,u_h\n");
    let ny = if mesh.dim() == 2 { n } else { 1 };
    for j in 0..ny {
        for i in 0..n {
            let t = |k: usize, m: usize| if m > 1 { k as f64 / (m - 1) as f64 } else { 0.5 };
            let x = [b.lo[0] + t(i, n) * b.width(0), b.lo[1] + t(j, ny) * b.width(1)];
            if let Ok((v, _)) = solution.evaluate(mesh, dofs, x) {
                let _ = writeln!(out, "{},{},{:.12e}", x[0], x[1], v);
            }
        }
    }
    out
}
