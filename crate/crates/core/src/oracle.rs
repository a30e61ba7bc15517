//! Exact reference solutions for fully quadratic problems: the semidiscrete
//! equations in dense matrix form, integrated by matrix exponential on the
//! augmented first-order system.

use crate::assembly;
use crate::error::{Error, Result};
use crate::material::{ChiModel, Material};
use crate::mesh::{lumped_coefficients, Mesh};
use crate::state::InitialData;
use nalgebra::{DMatrix, DVector};

/// Dense semidiscrete system M x'' = -K x - C x' + f on the free channels,
/// with x the stacked nodal unknowns (all u channels, then all nu channels).
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// Full problem size (constrained channels included).
    pub n_dofs: usize,
    /// Indices of unconstrained channels.
    pub free: Vec<usize>,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Constant load on the free channels.
    pub load: DVector<f64>,
    /// Constant part of the potential (external offset integral).
    pub offset: f64,
}

impl LinearSystem {
    /// Builds a system directly from free-channel matrices (no constraints).
    pub fn from_parts(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        load: DVector<f64>,
    ) -> LinearSystem {
        let n = mass.nrows();
        LinearSystem {
            n_dofs: n,
            free: (0..n).collect(),
            mass,
            damping,
            stiffness,
            load,
            offset: 0.0,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Quadratic energy 1/2 v.Mv + 1/2 x.Kx - f.x + offset of a free-channel
    /// state.
    pub fn energy(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * (v.transpose() * &self.mass * v)[(0, 0)]
            + 0.5 * (x.transpose() * &self.stiffness * x)[(0, 0)]
            - self.load.dot(x)
            + self.offset
    }

    /// Scatters a free-channel vector to the full layout with zeros on the
    /// constrained channels.
    pub fn scatter(&self, free_vec: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_dofs);
        for (i, &idx) in self.free.iter().enumerate() {
            full[idx] = free_vec[i];
        }
        full
    }

    /// Restricts a full-layout vector to the free channels.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.free.len(), |i, _| full[self.free[i]])
    }
}

/// Global channel index of the u component c of node a.
pub fn u_dof(mesh: &Mesh, a: usize, c: usize) -> usize {
    a * mesh.dim() + c
}

/// Global channel index of the nu component c of node a.
pub fn nu_dof(mesh: &Mesh, a: usize, c: usize) -> usize {
    mesh.n_nodes() * mesh.dim() + a * mesh.desc_dim() + c
}

/// Assembles the dense semidiscrete system for quadratic co-energies.
pub fn assemble(mesh: &Mesh, material: &Material) -> Result<LinearSystem> {
    if !material.chi.is_quadratic() {
        return Err(Error::Integrator(
            "no linear reference system exists for a non-quadratic co-energy".into(),
        ));
    }
    let (d, k, n) = (mesh.dim(), mesh.desc_dim(), mesh.n_nodes());
    let n_dofs = n * (d + k);
    let coeffs = lumped_coefficients(mesh, material.rho, material.rho_bar_density(), material.eta)?;
    let matrices = assembly::precompute(mesh, material)?;

    let mut mass = DMatrix::<f64>::zeros(n_dofs, n_dofs);
    let mut damping = DMatrix::<f64>::zeros(n_dofs, n_dofs);
    for a in 0..n {
        for c in 0..d {
            let i = u_dof(mesh, a, c);
            mass[(i, i)] = coeffs.mass(a);
        }
        match &material.chi {
            ChiModel::ScalarQuadratic { .. } => {
                for c in 0..k {
                    let i = nu_dof(mesh, a, c);
                    mass[(i, i)] = coeffs.rho_bar_nodal(a);
                }
            }
            ChiModel::MatrixQuadratic { omega } => {
                for r in 0..k {
                    for c in 0..k {
                        mass[(nu_dof(mesh, a, r), nu_dof(mesh, a, c))] =
                            coeffs.volume[a] * omega[(r, c)];
                    }
                }
            }
            ChiModel::General(_) => unreachable!(),
        }
        for c in 0..k {
            let i = nu_dof(mesh, a, c);
            damping[(i, i)] = coeffs.eta_nodal(a);
        }
    }

    let mut stiffness = DMatrix::<f64>::zeros(n_dofs, n_dofs);
    let mut c_glob = DVector::<f64>::zeros(n_dofs);
    let mut offset = 0.0;
    let w = d + k;
    let local_to_global = |mesh: &Mesh, e: usize, li: usize| -> usize {
        let a = mesh.element_nodes(e)[li / w];
        let r = li % w;
        if r < d {
            u_dof(mesh, a, r)
        } else {
            nu_dof(mesh, a, r - d)
        }
    };
    for e in 0..mesh.n_elements() {
        let h = matrices.hessian(e);
        let c = matrices.linear(e);
        offset += matrices.offset(e);
        for li in 0..h.nrows() {
            let gi = local_to_global(mesh, e, li);
            c_glob[gi] += c[li];
            for lj in 0..h.ncols() {
                stiffness[(gi, local_to_global(mesh, e, lj))] += h[(li, lj)];
            }
        }
    }

    let mut free = Vec::with_capacity(n_dofs);
    for a in 0..n {
        if !mesh.is_fixed_u(a) {
            for c in 0..d {
                free.push(u_dof(mesh, a, c));
            }
        }
    }
    for a in 0..n {
        if !mesh.is_fixed_nu(a) {
            for c in 0..k {
                free.push(nu_dof(mesh, a, c));
            }
        }
    }
    free.sort_unstable();

    let p = free.len();
    let pick = |m: &DMatrix<f64>| {
        DMatrix::from_fn(p, p, |i, j| m[(free[i], free[j])])
    };
    Ok(LinearSystem {
        n_dofs,
        mass: pick(&mass),
        damping: pick(&damping),
        stiffness: pick(&stiffness),
        load: DVector::from_fn(p, |i, _| -c_glob[free[i]]),
        free,
        offset,
    })
}

/// Stacks initial data into full-layout (x0, v0).
pub fn stack_initial(mesh: &Mesh, init: &InitialData) -> (DVector<f64>, DVector<f64>) {
    let (d, k, n) = (mesh.dim(), mesh.desc_dim(), mesh.n_nodes());
    let n_dofs = n * (d + k);
    let mut x0 = DVector::zeros(n_dofs);
    let mut v0 = DVector::zeros(n_dofs);
    for a in 0..n {
        for c in 0..d {
            x0[u_dof(mesh, a, c)] = init.u0[a * d + c];
            v0[u_dof(mesh, a, c)] = init.u_dot0[a * d + c];
        }
        for c in 0..k {
            x0[nu_dof(mesh, a, c)] = init.nu0[a * k + c];
            v0[nu_dof(mesh, a, c)] = init.nu_dot0[a * k + c];
        }
    }
    (x0, v0)
}

/// Evaluates the exact solution at the given (ascending) times, starting
/// from the full-layout initial state at t0. Returns full-layout (x, v)
/// pairs with zeros on the constrained channels.
pub fn exact_solution(
    sys: &LinearSystem,
    x0_full: &DVector<f64>,
    v0_full: &DVector<f64>,
    t0: f64,
    times: &[f64],
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let p = sys.n_free();
    let minv = sys
        .mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Integrator("singular mass on a free channel".into()))?;

    // Augmented generator on z = (x, v, 1).
    let dim = 2 * p + 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..p {
        a[(i, p + i)] = 1.0;
    }
    let mk = &minv * &sys.stiffness;
    let mc = &minv * &sys.damping;
    let mf = &minv * &sys.load;
    for i in 0..p {
        for j in 0..p {
            a[(p + i, j)] = -mk[(i, j)];
            a[(p + i, p + j)] = -mc[(i, j)];
        }
        a[(p + i, 2 * p)] = mf[i];
    }

    let mut z = DVector::<f64>::zeros(dim);
    z.rows_mut(0, p).copy_from(&sys.restrict(x0_full));
    z.rows_mut(p, p).copy_from(&sys.restrict(v0_full));
    z[2 * p] = 1.0;

    let mut out = Vec::with_capacity(times.len());
    let mut t_cur = t0;
    for &t in times {
        if t < t_cur - 1e-14 {
            return Err(Error::Integrator("oracle sample times must be ascending".into()));
        }
        let dt = t - t_cur;
        if dt > 0.0 {
            z = (a.clone() * dt).exp() * z;
            t_cur = t;
        }
        let x = sys.scatter(&z.rows(0, p).into_owned());
        let v = sys.scatter(&z.rows(p, p).into_owned());
        out.push((x, v));
    }
    Ok(out)
}

/// Generalized eigenvector of K x = lambda M x with the smallest eigenvalue,
/// scattered back to the full dof layout and normalized to unit mass norm.
pub fn lowest_mode(sys: &LinearSystem) -> Result<DVector<f64>> {
    let p = sys.n_free();
    if p == 0 {
        return Err(Error::Integrator("no free dofs for a modal excitation".into()));
    }
    let mut m_f = DMatrix::zeros(p, p);
    let mut k_f = DMatrix::zeros(p, p);
    for (i, &gi) in sys.free.iter().enumerate() {
        for (j, &gj) in sys.free.iter().enumerate() {
            m_f[(i, j)] = sys.mass[(gi, gj)];
            k_f[(i, j)] = sys.stiffness[(gi, gj)];
        }
    }
    let m_eig = m_f.symmetric_eigen();
    if m_eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Integrator("mass matrix is not positive definite".into()));
    }
    // M^{-1/2} K M^{-1/2} shares eigenvalues with the generalized problem.
    let inv_sqrt = &m_eig.eigenvectors
        * DMatrix::from_diagonal(&m_eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * m_eig.eigenvectors.transpose();
    let s = &inv_sqrt * &k_f * &inv_sqrt;
    let s_eig = ((&s + s.transpose()) * 0.5).symmetric_eigen();
    let mut best = 0;
    for i in 1..p {
        if s_eig.eigenvalues[i] < s_eig.eigenvalues[best] {
            best = i;
        }
    }
    let y = s_eig.eigenvectors.column(best).into_owned();
    Ok(sys.scatter(&(inv_sqrt * y)))
}

/// Central finite differences, O(step^2).
pub fn finite_difference_gradient(
    f: &dyn Fn(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    step: f64,
) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += step;
        m[i] -= step;
        (f(&p) - f(&m)) / (2.0 * step)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{ElasticForm, ExternalPotential, TractionField};
    use crate::mesh::sample;
    use approx::assert_relative_eq;

    fn scalar_system(m: f64, c: f64, k: f64, f: f64) -> LinearSystem {
        LinearSystem::from_parts(
            DMatrix::from_element(1, 1, m),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, k),
            DVector::from_element(1, f),
        )
    }

    #[test]
    fn harmonic_oscillator() {
        let sys = scalar_system(1.0, 0.0, 1.0, 0.0);
        let x0 = DVector::from_element(1, 1.0);
        let v0 = DVector::zeros(1);
        let states = exact_solution(&sys, &x0, &v0, 0.0, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(states[0].0[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(states[1].0[0], 1.0f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(states[1].1[0], -(1.0f64.sin()), epsilon = 1e-12);
    }

    #[test]
    fn pure_dissipation_decay() {
        // m v' = -c v with m = c = 1: v(t) = e^{-t}.
        let sys = scalar_system(1.0, 1.0, 0.0, 0.0);
        let x0 = DVector::zeros(1);
        let v0 = DVector::from_element(1, 1.0);
        let states = exact_solution(&sys, &x0, &v0, 0.0, &[2.0]).unwrap();
        assert_relative_eq!(states[0].1[0], (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn constant_load_accelerates() {
        // x'' = f: x(t) = f t^2 / 2.
        let sys = scalar_system(2.0, 0.0, 0.0, 3.0);
        let states =
            exact_solution(&sys, &DVector::zeros(1), &DVector::zeros(1), 0.0, &[2.0]).unwrap();
        assert_relative_eq!(states[0].0[0], 1.5 * 4.0 / 2.0, epsilon = 1e-10);
    }

    fn nu_only_material(mesh: &Mesh) -> Material {
        let n = 7;
        let mut q = DMatrix::zeros(n, n);
        q[(4, 4)] = 1.0; // |nu|^2 slot for d = 2, k = 1
        Material::new(
            ElasticForm::new(2, 1, q).unwrap(),
            ExternalPotential::zero(2, 1),
            TractionField::zero(mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn nu_block_is_exact_pairing_matrix() {
        let mesh = sample::reference_triangle(1);
        let sys = assemble(&mesh, &nu_only_material(&mesh)).unwrap();
        // nu dofs are channels 6, 7, 8 of the full layout; no constraints.
        let base = 6;
        let vol = 0.5;
        for a in 0..3 {
            for b in 0..3 {
                let expect = 2.0 * vol * (1.0 + if a == b { 1.0 } else { 0.0 }) / (3.0 * 4.0);
                assert_relative_eq!(
                    sys.stiffness[(base + a, base + b)],
                    expect,
                    epsilon = 1e-12
                );
            }
        }
        // u block carries no stiffness for this material.
        for i in 0..6 {
            for j in 0..sys.n_dofs {
                assert_eq!(sys.stiffness[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn zero_material_gives_affine_motion() {
        let mesh = sample::reference_triangle(1);
        let material = Material::new(
            ElasticForm::new(2, 1, DMatrix::zeros(7, 7)).unwrap(),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap();
        let sys = assemble(&mesh, &material).unwrap();
        assert_eq!(sys.stiffness.norm(), 0.0);
        let mut init = InitialData::zero(&mesh);
        init.set_node_u(&mesh, 0, &[0.0, 0.0], &[1.0, -2.0]);
        let (x0, v0) = stack_initial(&mesh, &init);
        let states = exact_solution(&sys, &x0, &v0, 0.0, &[0.5]).unwrap();
        assert_relative_eq!(states[0].0[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(states[0].0[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn assembled_stiffness_symmetric_and_energy_conserved() {
        use rand::{Rng, SeedableRng};
        let mesh = sample::unit_square(1, vec![]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let n = 7;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
        let q = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.1;
        let material = Material::new(
            ElasticForm::new(2, 1, q).unwrap(),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap();
        let sys = assemble(&mesh, &material).unwrap();
        assert!((&sys.stiffness - sys.stiffness.transpose()).norm() < 1e-12);

        let mut init = InitialData::zero(&mesh);
        init.set_node_u(&mesh, 1, &[0.1, -0.2], &[0.3, 0.0]);
        init.set_node_nu(&mesh, 2, &[0.2], &[-0.1]);
        let (x0, v0) = stack_initial(&mesh, &init);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let states = exact_solution(&sys, &x0, &v0, 0.0, &times).unwrap();
        let e0 = sys.energy(&sys.restrict(&states[0].0), &sys.restrict(&states[0].1));
        for (x, v) in &states {
            let e = sys.energy(&sys.restrict(x), &sys.restrict(v));
            assert_relative_eq!(e, e0, epsilon = 1e-9);
        }
    }

    #[test]
    fn damped_energy_nonincreasing() {
        let mesh = sample::unit_square(1, vec![]);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            1.0,
        )
        .unwrap();
        let sys = assemble(&mesh, &material).unwrap();
        let mut init = InitialData::zero(&mesh);
        init.set_node_nu(&mesh, 0, &[0.0], &[1.0]);
        init.set_node_nu(&mesh, 3, &[0.4], &[0.0]);
        let (x0, v0) = stack_initial(&mesh, &init);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let states = exact_solution(&sys, &x0, &v0, 0.0, &times).unwrap();
        let mut prev = f64::INFINITY;
        for (x, v) in &states {
            let e = sys.energy(&sys.restrict(x), &sys.restrict(v));
            assert!(e <= prev + 1e-10);
            prev = e;
        }
    }

    #[test]
    fn general_chi_rejected() {
        use crate::material::GeneralChi;
        let mesh = sample::reference_triangle(1);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::General(GeneralChi {
                base: 1.5,
                eps: 0.2,
                wave: 1.0,
                gamma: 1.0,
                xi: 2.0,
            }),
            0.0,
        )
        .unwrap();
        assert!(assemble(&mesh, &material).is_err());
    }

    #[test]
    fn fd_gradient_basics() {
        let f = |x: &DVector<f64>| x.norm_squared();
        let g = finite_difference_gradient(&f, &DVector::from_vec(vec![1.0, 2.0]), 1e-4);
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 4.0, epsilon = 1e-8);
        let lin = |x: &DVector<f64>| 3.0 * x[0] - x[1];
        let gl = finite_difference_gradient(&lin, &DVector::from_vec(vec![5.0, -2.0]), 0.5);
        assert_relative_eq!(gl[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(gl[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn lowest_mode_minimizes_rayleigh_quotient() {
        use crate::material::{ElasticForm, ExternalPotential, TractionField};
        use crate::mesh::sample;
        let mesh = sample::unit_square(1, vec![]);
        let material = Material::new(
            ElasticForm::scaled_identity(2, 1, 1.0),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            0.0,
        )
        .unwrap();
        let sys = assemble(&mesh, &material).unwrap();
        let x = lowest_mode(&sys).unwrap();
        let rq = |v: &DVector<f64>| (v.dot(&(&sys.stiffness * v))) / (v.dot(&(&sys.mass * v)));
        let lam = rq(&x);
        // Unit mass norm and a generalized eigen residual.
        assert_relative_eq!(x.dot(&(&sys.mass * &x)), 1.0, epsilon = 1e-10);
        let res = &sys.stiffness * &x - &sys.mass * &x * lam;
        assert!(res.norm() < 1e-9, "eigen residual {}", res.norm());
        // No probe vector beats the mode's Rayleigh quotient.
        for i in 0..sys.n_dofs {
            let mut p = DVector::zeros(sys.n_dofs);
            p[i] = 1.0;
            assert!(rq(&p) >= lam - 1e-10);
        }
    }
}
