//! Exact element integrals of the quadratic energy densities: per element a
//! constant Hessian, linear term, and offset of the elemental potential in
//! the stacked nodal unknowns, so forces are a single matrix-vector product.

use crate::error::Result;
use crate::material::Material;
use crate::mesh::{Marker, Mesh};
use crate::state::State;
use nalgebra::{DMatrix, DVector};

/// Per-element quadratic form of the potential:
/// V_K(q) = 1/2 q . H q + c . q + const, with q the element's nodal
/// unknowns in node-major layout [u_a (d), nu_a (k)] per local node.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    dim: usize,
    desc_dim: usize,
    h: Vec<DMatrix<f64>>,
    c: Vec<DVector<f64>>,
    offset: Vec<f64>,
}

impl ElementMatrices {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    /// Unknowns per local node.
    pub fn node_width(&self) -> usize {
        self.dim + self.desc_dim
    }

    /// Unknowns per element.
    pub fn local_len(&self) -> usize {
        (self.dim + 1) * self.node_width()
    }

    pub fn hessian(&self, e: usize) -> &DMatrix<f64> {
        &self.h[e]
    }

    pub fn linear(&self, e: usize) -> &DVector<f64> {
        &self.c[e]
    }

    pub fn offset(&self, e: usize) -> f64 {
        self.offset[e]
    }

    /// Collects the element's nodal unknowns from a state whose positions
    /// are current on the element's nodes.
    pub fn gather(&self, mesh: &Mesh, state: &State, e: usize) -> DVector<f64> {
        let w = self.node_width();
        let mut q = DVector::zeros(self.local_len());
        for (loc, &a) in mesh.element_nodes(e).iter().enumerate() {
            for (i, &v) in state.u_node(a).iter().enumerate() {
                q[loc * w + i] = v;
            }
            for (i, &v) in state.nu_node(a).iter().enumerate() {
                q[loc * w + self.dim + i] = v;
            }
        }
        q
    }

    /// Gradient of V_K at q.
    pub fn force(&self, e: usize, q: &DVector<f64>) -> DVector<f64> {
        &self.h[e] * q + &self.c[e]
    }

    /// V_K(q).
    pub fn potential(&self, e: usize, q: &DVector<f64>) -> f64 {
        0.5 * (q.transpose() * &self.h[e] * q)[(0, 0)] + self.c[e].dot(q) + self.offset[e]
    }
}

/// Integrates the elastic form, external potential, and traction exactly
/// over each element (gradients constant, values affine on simplices).
pub fn precompute(mesh: &Mesh, material: &Material) -> Result<ElementMatrices> {
    let d = mesh.dim();
    let k = mesh.desc_dim();
    let w = d + k;
    let loc = d + 1;
    let nq = loc * w;
    let xi_len = material.elastic.xi_len();
    let rho = material.rho;

    let mut hs = Vec::with_capacity(mesh.n_elements());
    let mut cs = Vec::with_capacity(mesh.n_elements());
    let mut offsets = Vec::with_capacity(mesh.n_elements());

    for e in 0..mesh.n_elements() {
        let vol = mesh.volume(e);
        let m1 = vol / loc as f64; // integral of one shape function
        // Integral of N_a N_b.
        let m2 = |a: usize, b: usize| {
            vol * (1.0 + if a == b { 1.0 } else { 0.0 }) / ((loc * (loc + 1)) as f64)
        };

        // xi(x) = (B + sum_a N_a(x) S_a) q, with B carrying the constant
        // gradient blocks and S_a injecting nu_a into the value block.
        let mut b = DMatrix::<f64>::zeros(xi_len, nq);
        let mut s: Vec<DMatrix<f64>> = vec![DMatrix::zeros(xi_len, nq); loc];
        for a in 0..loc {
            let g = mesh.local_gradient(e, a);
            for i in 0..d {
                for j in 0..d {
                    b[(i * d + j, a * w + i)] = g[j];
                }
            }
            for p in 0..k {
                for j in 0..d {
                    b[(d * d + k + p * d + j, a * w + d + p)] = g[j];
                }
                s[a][(d * d + p, a * w + d + p)] = 1.0;
            }
        }

        let q_mat = material.elastic.matrix();
        // Quadratic part of rho * integral of e: accumulate A with
        // integral e = q . A q, Hessian contribution 2 rho A.
        let mut a_mat = vol * b.transpose() * q_mat * &b;
        for a in 0..loc {
            let cross = b.transpose() * q_mat * &s[a];
            a_mat += m1 * (&cross + cross.transpose());
            for bn in 0..loc {
                a_mat += m2(a, bn) * s[a].transpose() * q_mat * &s[bn];
            }
        }
        let mut h = rho * (&a_mat + a_mat.transpose());

        // External potential: z(x) = sum_a N_a(x) q_a directly in the nodal
        // blocks; quadratic part uses the same moment integrals.
        let w_mat = material.external.matrix();
        let g_vec = material.external.linear();
        let mut c = DVector::<f64>::zeros(nq);
        for a in 0..loc {
            for bn in 0..loc {
                let f = rho * m2(a, bn);
                for r in 0..w {
                    for cidx in 0..w {
                        h[(a * w + r, bn * w + cidx)] += f * w_mat[(r, cidx)];
                    }
                }
            }
            for r in 0..w {
                c[a * w + r] += rho * m1 * g_vec[r];
            }
        }
        hs.push(h);
        cs.push(c);
        offsets.push(rho * material.external.offset() * vol);
    }

    // Traction enters the owning element's linear term with a minus sign:
    // V includes -integral of t . u, so the kick accelerates along t.
    for (fi, facet) in mesh.boundary().iter().enumerate() {
        if facet.marker != Marker::Traction {
            continue;
        }
        let t = material.traction.on_facet(fi);
        if t.norm() == 0.0 {
            continue;
        }
        let share = facet.measure / d as f64; // integral of N_a on the facet
        let e = facet.element;
        let conn = mesh.element_nodes(e);
        for &a in &facet.nodes {
            let locn = conn.iter().position(|&b| b == a).expect("facet node in owner");
            for i in 0..d {
                cs[e][locn * w + i] -= share * t[i];
            }
        }
    }

    Ok(ElementMatrices {
        dim: d,
        desc_dim: k,
        h: hs,
        c: cs,
        offset: offsets,
    })
}

/// Per-node displacement force covectors for element `e` (the spatial
/// integrals multiplying the time step in the velocity kick; the kick is
/// u_dot -= dt * force / m).
pub fn force_u(
    matrices: &ElementMatrices,
    mesh: &Mesh,
    state: &State,
    e: usize,
) -> Vec<DVector<f64>> {
    let q = matrices.gather(mesh, state, e);
    let f = matrices.force(e, &q);
    let w = matrices.node_width();
    (0..mesh.dim() + 1)
        .map(|loc| f.rows(loc * w, matrices.dim()).into_owned())
        .collect()
}

/// Per-node descriptor force covectors for element `e`.
pub fn force_nu(
    matrices: &ElementMatrices,
    mesh: &Mesh,
    state: &State,
    e: usize,
) -> Vec<DVector<f64>> {
    let q = matrices.gather(mesh, state, e);
    let f = matrices.force(e, &q);
    let w = matrices.node_width();
    (0..mesh.dim() + 1)
        .map(|loc| f.rows(loc * w + matrices.dim(), matrices.desc_dim()).into_owned())
        .collect()
}

/// Total potential V at the state's nodal values.
pub fn potential_v(matrices: &ElementMatrices, mesh: &Mesh, state: &State) -> f64 {
    (0..mesh.n_elements())
        .map(|e| {
            let q = matrices.gather(mesh, state, e);
            matrices.potential(e, &q)
        })
        .sum()
}
