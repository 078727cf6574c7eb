use log::warn;

use super::element::{p2_gradients, p2_values, ElementGeometry};
use super::quadrature::{gauss3_unit, TriangleRule};
use super::shape::ShapeSpec;
use crate::error::{check_dim, Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    P1,
    P2,
}

impl Space {
    pub fn ndofs(self, mesh: &Mesh) -> usize {
        match self {
            Space::P1 => mesh.num_vertices(),
            Space::P2 => mesh.num_nodes(),
        }
    }
}

fn element(mesh: &Mesh, tri: usize) -> ElementGeometry {
    ElementGeometry::new(mesh.vertex_coords(tri))
}

fn p1_dofs(mesh: &Mesh, tri: usize) -> [usize; 3] {
    let t = &mesh.triangles()[tri];
    [0, 1, 2].map(|k| mesh.p1_index(t[k]).expect("triangle corner is a vertex"))
}

/// `M_ij = \int phi_i phi_j`.
pub fn assemble_mass(mesh: &Mesh, space: Space) -> CsrMatrix {
    let n = space.ndofs(mesh);
    let ntri = mesh.triangles().len();
    match space {
        Space::P1 => {
            let mut tb = TripletBuilder::with_capacity(n, n, 9 * ntri);
            for tri in 0..ntri {
                let geo = element(mesh, tri);
                let dofs = p1_dofs(mesh, tri);
                for i in 0..3 {
                    for j in 0..3 {
                        let f = if i == j { 2.0 } else { 1.0 };
                        tb.add(dofs[i], dofs[j], geo.area * f / 12.0);
                    }
                }
            }
            tb.build().with_symmetric_flag(true)
        }
        Space::P2 => {
            let rule = TriangleRule::degree5();
            let mut tb = TripletBuilder::with_capacity(n, n, 36 * ntri);
            for tri in 0..ntri {
                let geo = element(mesh, tri);
                let dofs = &mesh.triangles()[tri];
                let mut local = [[0.0; 6]; 6];
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let phi = p2_values(*l);
                    let jw = 2.0 * geo.area * w;
                    for i in 0..6 {
                        for j in 0..6 {
                            local[i][j] += jw * phi[i] * phi[j];
                        }
                    }
                }
                scatter6(&mut tb, dofs, &local);
            }
            tb.build().with_symmetric_flag(true)
        }
    }
}

/// `K_ij = \int grad phi_i . grad phi_j`.
pub fn assemble_stiffness(mesh: &Mesh, space: Space) -> CsrMatrix {
    let n = space.ndofs(mesh);
    let ntri = mesh.triangles().len();
    match space {
        Space::P1 => {
            let mut tb = TripletBuilder::with_capacity(n, n, 9 * ntri);
            for tri in 0..ntri {
                let geo = element(mesh, tri);
                let g = geo.grad_lambda;
                let dofs = p1_dofs(mesh, tri);
                for i in 0..3 {
                    for j in 0..3 {
                        tb.add(dofs[i], dofs[j], geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
                    }
                }
            }
            tb.build().with_symmetric_flag(true)
        }
        Space::P2 => {
            // gradients are linear, so the degree-2 rule is exact
            let rule = TriangleRule::degree2();
            let mut tb = TripletBuilder::with_capacity(n, n, 36 * ntri);
            for tri in 0..ntri {
                let geo = element(mesh, tri);
                let dofs = &mesh.triangles()[tri];
                let mut local = [[0.0; 6]; 6];
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let grad = p2_gradients(*l, &geo.grad_lambda);
                    let jw = 2.0 * geo.area * w;
                    for i in 0..6 {
                        for j in 0..6 {
                            local[i][j] += jw * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                        }
                    }
                }
                scatter6(&mut tb, dofs, &local);
            }
            tb.build().with_symmetric_flag(true)
        }
    }
}

/// `N_ij = \int (v . grad phi_j) phi_i` for a P2 velocity given at the P2
/// nodes of `mesh`.
pub fn assemble_advection(mesh: &Mesh, velocity: &[[f64; 2]]) -> Result<CsrMatrix> {
    check_dim("advection velocity", mesh.num_nodes(), velocity.len())?;
    let n = mesh.num_nodes();
    let rule = TriangleRule::degree5();
    let mut tb = TripletBuilder::with_capacity(n, n, 36 * mesh.triangles().len());
    for (tri, dofs) in mesh.triangles().iter().enumerate() {
        if dofs.iter().all(|&d| velocity[d] == [0.0, 0.0]) {
            continue;
        }
        let geo = element(mesh, tri);
        let mut local = [[0.0; 6]; 6];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(*l);
            let grad = p2_gradients(*l, &geo.grad_lambda);
            let mut v = [0.0; 2];
            for k in 0..6 {
                v[0] += phi[k] * velocity[dofs[k]][0];
                v[1] += phi[k] * velocity[dofs[k]][1];
            }
            let jw = 2.0 * geo.area * w;
            for j in 0..6 {
                let conv = v[0] * grad[j][0] + v[1] * grad[j][1];
                for i in 0..6 {
                    local[i][j] += jw * conv * phi[i];
                }
            }
        }
        scatter6(&mut tb, dofs, &local);
    }
    Ok(tb.build())
}

fn scatter6(tb: &mut TripletBuilder, dofs: &[usize; 6], local: &[[f64; 6]; 6]) {
    for i in 0..6 {
        for j in 0..6 {
            tb.add(dofs[i], dofs[j], local[i][j]);
        }
    }
}

/// `f_i = \int_Omega s phi_i` (P2) for a rectangle indicator `s`. The
/// rectangle is clipped against each triangle, so the result is exact on any
/// mesh.
pub fn assemble_load_domain(mesh: &Mesh, shape: &ShapeSpec) -> Result<Vec<f64>> {
    shape.validate()?;
    let ShapeSpec::IndicatorRectangle { x0, x1, y0, y1, amplitude } = *shape else {
        return Err(Error::invalid("domain load requires an indicator-rectangle shape"));
    };
    let mut load = vec![0.0; mesh.num_nodes()];
    let rule = TriangleRule::degree5();
    let mut covered = 0.0;
    for (tri, dofs) in mesh.triangles().iter().enumerate() {
        let geo = element(mesh, tri);
        let poly = clip_to_rectangle(&geo.vertices, [x0, x1], [y0, y1]);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            let sub = ElementGeometry::new([poly[0], poly[k], poly[k + 1]]);
            if sub.area.abs() < 1e-300 || !sub.area.is_finite() {
                continue;
            }
            covered += sub.area.abs();
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let p = sub.point(*l);
                let phi = p2_values(geo.barycentric(p));
                let jw = 2.0 * sub.area.abs() * w * amplitude;
                for i in 0..6 {
                    load[dofs[i]] += jw * phi[i];
                }
            }
        }
    }
    if covered == 0.0 {
        warn!("shape {shape:?} has empty support on the mesh; load is zero");
    }
    Ok(load)
}

/// Sutherland-Hodgman clipping of a triangle against an axis-aligned box.
fn clip_to_rectangle(tri: &[[f64; 2]; 3], x: [f64; 2], y: [f64; 2]) -> Vec<[f64; 2]> {
    let mut poly: Vec<[f64; 2]> = tri.to_vec();
    // (axis, bound, keep_greater)
    let planes = [(0, x[0], true), (0, x[1], false), (1, y[0], true), (1, y[1], false)];
    for (axis, bound, keep_greater) in planes {
        if poly.is_empty() {
            break;
        }
        let inside = |p: &[f64; 2]| if keep_greater { p[axis] >= bound } else { p[axis] <= bound };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut q = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
                q[axis] = bound;
                out.push(q);
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    poly
}

/// `f_i = \int_{Gamma_tag} s phi_i` over the boundary edges carrying `tag`.
/// Indicator shapes are clipped to their segment along each edge.
pub fn assemble_load_boundary(mesh: &Mesh, tag: BoundaryTag, shape: &ShapeSpec) -> Result<Vec<f64>> {
    shape.validate()?;
    let edges: Vec<_> = mesh.boundary_edges().iter().filter(|e| e.tag == tag).collect();
    if edges.is_empty() {
        return Err(Error::UnknownTag(format!("{tag} (no boundary edges carry it)")));
    }
    let x = mesh.nodes();
    let mut load = vec![0.0; mesh.num_nodes()];
    for edge in edges {
        let [a, b, mid] = edge.nodes;
        let (pa, pb) = (x[a], x[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let (s0, s1) = match shape {
            ShapeSpec::BoundaryIndicator { segment, .. } => {
                match edge_overlap(pa, pb, segment) {
                    Some(range) => range,
                    None => continue,
                }
            }
            _ => (0.0, 1.0),
        };
        for (g, w) in gauss3_unit() {
            let s = s0 + (s1 - s0) * g;
            let p = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let val = match shape {
                ShapeSpec::BoundaryIndicator { amplitude, .. } => *amplitude,
                other => other.boundary_value(p),
            };
            if val == 0.0 {
                continue;
            }
            let jw = w * (s1 - s0) * len * val;
            load[a] += jw * (1.0 - s) * (1.0 - 2.0 * s);
            load[b] += jw * s * (2.0 * s - 1.0);
            load[mid] += jw * 4.0 * s * (1.0 - s);
        }
    }
    Ok(load)
}

/// Parameter interval of edge `pa -> pb` that lies on `segment`.
fn edge_overlap(pa: [f64; 2], pb: [f64; 2], segment: &crate::mesh::Segment) -> Option<(f64, f64)> {
    if !segment.contains(pa) && !segment.contains(pb) {
        // both ends off the segment; the edge may still straddle it entirely
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        if !segment.contains(mid) {
            return None;
        }
    }
    // coordinate along the side
    let along = |p: [f64; 2]| match segment.side {
        crate::mesh::Side::Left | crate::mesh::Side::Right => p[1],
        crate::mesh::Side::Bottom | crate::mesh::Side::Top => p[0],
    };
    let (ua, ub) = (along(pa), along(pb));
    if (ub - ua).abs() < 1e-300 {
        return None;
    }
    let to_s = |u: f64| ((u - ua) / (ub - ua)).clamp(0.0, 1.0);
    let (s_lo, s_hi) = {
        let (s1, s2) = (to_s(segment.lo), to_s(segment.hi));
        (s1.min(s2), s1.max(s2))
    };
    (s_hi > s_lo).then_some((s_lo, s_hi))
}

/// Nodal interpolant of `f` in P2.
pub fn interpolate<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, f: F) -> Vec<f64> {
    mesh.nodes().iter().map(|&p| f(p)).collect()
}

/// Evaluates a P2 field at a point.
pub fn evaluate(mesh: &Mesh, coeffs: &[f64], p: [f64; 2]) -> Option<f64> {
    let (tri, bary) = mesh.locate(p)?;
    let phi = p2_values(bary);
    let dofs = &mesh.triangles()[tri];
    Some((0..6).map(|k| phi[k] * coeffs[dofs[k]]).sum())
}

/// `|| u_h - f ||_{L2}` computed with the degree-5 rule.
pub fn l2_error<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, coeffs: &[f64], f: F) -> f64 {
    let rule = TriangleRule::degree5();
    let mut acc = 0.0;
    for (tri, dofs) in mesh.triangles().iter().enumerate() {
        let geo = element(mesh, tri);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(*l);
            let uh: f64 = (0..6).map(|k| phi[k] * coeffs[dofs[k]]).sum();
            let d = uh - f(geo.point(*l));
            acc += 2.0 * geo.area * w * d * d;
        }
    }
    acc.sqrt()
}
