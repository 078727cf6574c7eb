//! Per-triangle geometry and Lagrange basis functions.

/// Affine triangle data: area and the (constant) barycentric gradients.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / det;
        ElementGeometry {
            vertices,
            area: 0.5 * det,
            grad_lambda: [
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ],
        }
    }

    pub fn point(&self, l: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    /// Barycentric coordinates of a physical point.
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let v0 = self.vertices[0];
        let d = [p[0] - v0[0], p[1] - v0[1]];
        let g = &self.grad_lambda;
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// P1 values at barycentric point.
#[inline]
pub fn p1_values(l: [f64; 3]) -> [f64; 3] {
    l
}

/// P2 values; local order is vertices then the midpoints opposite each vertex.
#[inline]
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

#[inline]
pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for k in 0..2 {
        out[0][k] = (4.0 * l[0] - 1.0) * g[0][k];
        out[1][k] = (4.0 * l[1] - 1.0) * g[1][k];
        out[2][k] = (4.0 * l[2] - 1.0) * g[2][k];
        out[3][k] = 4.0 * (l[1] * g[2][k] + l[2] * g[1][k]);
        out[4][k] = 4.0 * (l[2] * g[0][k] + l[0] * g[2][k]);
        out[5][k] = 4.0 * (l[0] * g[1][k] + l[1] * g[0][k]);
    }
    out
}

/// Element mass matrix for P1 by quadrature.
pub fn p1_element_mass(vertices: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let geo = ElementGeometry::new(vertices);
    let rule = super::TriangleRule::degree2();
    let mut m = [[0.0; 3]; 3];
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let phi = p1_values(*l);
        let jw = 2.0 * geo.area * w;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += jw * phi[i] * phi[j];
            }
        }
    }
    m
}

pub fn p1_element_stiffness(vertices: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let geo = ElementGeometry::new(vertices);
    let g = geo.grad_lambda;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_basis_is_nodal() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ];
        for (i, l) in nodes.iter().enumerate() {
            let v = p2_values(*l);
            for (j, vj) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradients_match_finite_differences() {
        let geo = ElementGeometry::new([[0.1, 0.2], [0.7, 0.25], [0.3, 0.9]]);
        let p = [0.35, 0.4];
        let l = geo.barycentric(p);
        let grads = p2_gradients(l, &geo.grad_lambda);
        let h = 1e-6;
        for k in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += h;
            pm[k] -= h;
            let vp = p2_values(geo.barycentric(pp));
            let vm = p2_values(geo.barycentric(pm));
            for i in 0..6 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - grads[i][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn barycentric_roundtrip() {
        let geo = ElementGeometry::new([[0.0, 0.0], [2.0, 0.5], [0.5, 1.5]]);
        let l = [0.2, 0.3, 0.5];
        let back = geo.barycentric(geo.point(l));
        for k in 0..3 {
            assert!((back[k] - l[k]).abs() < 1e-14);
        }
    }

    /// Exact integral over the reference triangle of x^a y^b.
    fn mono(a: i32, b: i32) -> f64 {
        let f = |n: i32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn p1_mass_matches_symbolic_integration() {
        // On the reference triangle: lambda0 = 1 - x - y, lambda1 = x, lambda2 = y.
        // Products expand to monomials; integrate each exactly.
        // Coefficients of lambda_i as (c, cx, cy).
        let lam = [(1.0, -1.0, -1.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)];
        let m = p1_element_mass([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        for i in 0..3 {
            for j in 0..3 {
                let (a0, ax, ay) = lam[i];
                let (b0, bx, by) = lam[j];
                let exact = a0 * b0 * mono(0, 0)
                    + (a0 * bx + ax * b0) * mono(1, 0)
                    + (a0 * by + ay * b0) * mono(0, 1)
                    + ax * bx * mono(2, 0)
                    + ay * by * mono(0, 2)
                    + (ax * by + ay * bx) * mono(1, 1);
                assert!((m[i][j] - exact).abs() < 1e-15);
            }
        }
        // unit-area triangle: (1/12) [[2,1,1],[1,2,1],[1,1,2]]
        let s = 2f64.sqrt();
        let unit = p1_element_mass([[0.0, 0.0], [s, 0.0], [0.0, s]]);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 / 12.0 } else { 1.0 / 12.0 };
                assert!((unit[i][j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p1_stiffness_reference_triangle() {
        let k = p1_element_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let expect = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - 0.5 * expect[i][j]).abs() < 1e-15);
            }
        }
    }
}
