//! Synchronous variational integrator: explicit displacement kick plus an
//! implicit, strongly monotone per-step map for the descriptor update.

use crate::assembly;
use crate::error::{Error, Result};
use crate::material::{chi_partials, ChiModel, Material};
use crate::mesh::{lumped_coefficients, Mesh, NodalCoefficients};
use crate::state::{InitialData, State, Trajectory};
use crate::timeset::TimeSet;
use nalgebra::{DMatrix, DVector};

/// Quadrature rule for the co-energy integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Nodal (vertex) rule: diagonalizes the pairing, decouples the
    /// per-node solves.
    Vertex,
    /// Interior-point rule (edge midpoints on triangles, the symmetric
    /// 4-point rule on tetrahedra): couples nodes within each element.
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOptions {
    pub quadrature: Quadrature,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            quadrature: Quadrature::Vertex,
            tol: 1e-12,
            max_iters: 50,
        }
    }
}

/// Quadrature points of one element: (weight, shape values at the point).
fn quad_points(mesh: &Mesh, e: usize, rule: Quadrature) -> Vec<(f64, Vec<f64>)> {
    let d = mesh.dim();
    let vol = mesh.volume(e);
    match rule {
        Quadrature::Vertex => (0..d + 1)
            .map(|a| {
                let mut n = vec![0.0; d + 1];
                n[a] = 1.0;
                (vol / (d + 1) as f64, n)
            })
            .collect(),
        Quadrature::Gauss => match d {
            2 => {
                // Edge midpoints, exact through degree 2.
                let pairs = [(0, 1), (1, 2), (0, 2)];
                pairs
                    .iter()
                    .map(|&(a, b)| {
                        let mut n = vec![0.0; 3];
                        n[a] = 0.5;
                        n[b] = 0.5;
                        (vol / 3.0, n)
                    })
                    .collect()
            }
            3 => {
                let a = 0.585_410_196_624_968_5;
                let b = 0.138_196_601_125_010_5;
                (0..4)
                    .map(|i| {
                        let mut n = vec![b; 4];
                        n[i] = a;
                        (vol / 4.0, n)
                    })
                    .collect()
            }
            _ => unreachable!(),
        },
    }
}

/// Frozen data of one implicit step: the map Psi whose root is the
/// descriptor field at the next instant.
pub struct PsiContext<'a> {
    mesh: &'a Mesh,
    chi: &'a ChiModel,
    coeffs: &'a NodalCoefficients,
    rule: Quadrature,
    /// t_{i+1} - t_i.
    dt: f64,
    /// t_i - t_{i-1}.
    dt_prev: f64,
    /// Descriptor values at t_i, flat n*k.
    nu_cur: Vec<f64>,
    /// Rates held on [t_{i-1}, t_i), flat n*k.
    nu_dot_prev: Vec<f64>,
    /// Monotonicity window 2 gamma / (2 xi + gamma).
    pub t0_window: f64,
    pub window_violated: bool,
}

impl<'a> PsiContext<'a> {
    pub fn new(
        mesh: &'a Mesh,
        chi: &'a ChiModel,
        coeffs: &'a NodalCoefficients,
        rule: Quadrature,
        t_prev: f64,
        t_cur: f64,
        t_next: f64,
        nu_cur: Vec<f64>,
        nu_dot_prev: Vec<f64>,
    ) -> Result<PsiContext<'a>> {
        if !(t_prev < t_cur && t_cur < t_next) {
            return Err(Error::Integrator(format!(
                "need t_prev < t_cur < t_next, got {t_prev}, {t_cur}, {t_next}"
            )));
        }
        let gamma = chi.gamma();
        let xi = chi.xi();
        let t0_window = 2.0 * gamma / (2.0 * xi + gamma);
        Ok(PsiContext {
            mesh,
            chi,
            coeffs,
            rule,
            dt: t_next - t_cur,
            dt_prev: t_cur - t_prev,
            nu_cur,
            nu_dot_prev,
            t0_window,
            window_violated: t_next - t_cur >= t0_window,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn desc_dim(&self) -> usize {
        self.mesh.desc_dim()
    }

    /// Psi at the trial descriptor field (flat n*k). Rows of constrained
    /// nodes measure the trial deviation directly so roots keep them fixed.
    pub fn eval(&self, nu_trial: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.desc_dim();
        let n = self.mesh.n_nodes();
        if nu_trial.len() != n * k {
            return Err(Error::Dimension("trial field sized for a different mesh".into()));
        }
        let mut psi = DVector::<f64>::zeros(n * k);
        let node_vec = |flat: &[f64], a: usize| DVector::from_column_slice(&flat[a * k..(a + 1) * k]);

        for e in 0..self.mesh.n_elements() {
            let conn = self.mesh.element_nodes(e);
            for (wq, shape) in quad_points(self.mesh, e, self.rule) {
                let mut nu_i = DVector::<f64>::zeros(k);
                let mut nu_im1 = DVector::<f64>::zeros(k);
                let mut rate_prev = DVector::<f64>::zeros(k);
                let mut rate_trial = DVector::<f64>::zeros(k);
                for (loc, &a) in conn.iter().enumerate() {
                    let na = shape[loc];
                    if na == 0.0 {
                        continue;
                    }
                    let nc = node_vec(&self.nu_cur, a);
                    let np = node_vec(&self.nu_dot_prev, a);
                    nu_i += na * &nc;
                    nu_im1 += na * (&nc - self.dt_prev * &np);
                    rate_prev += na * np;
                    let trial = nu_trial.rows(a * k, k).into_owned();
                    rate_trial += na * (trial - nc) / self.dt;
                }
                let (_, dn_trial, dz_trial) = chi_partials(self.chi, &nu_i, &rate_trial)?;
                let (_, _, dz_prev) = chi_partials(self.chi, &nu_im1, &rate_prev)?;
                let term = dz_trial - dz_prev + self.dt * dn_trial;
                for (loc, &a) in conn.iter().enumerate() {
                    let na = shape[loc];
                    if na == 0.0 {
                        continue;
                    }
                    for c in 0..k {
                        psi[a * k + c] += wq * na * term[c];
                    }
                }
            }
        }

        for a in 0..n {
            if self.mesh.is_fixed_nu(a) {
                for c in 0..k {
                    psi[a * k + c] = nu_trial[a * k + c] - self.nu_cur[a * k + c];
                }
            } else {
                let eta = self.coeffs.eta_nodal(a);
                for c in 0..k {
                    psi[a * k + c] += eta * (nu_trial[a * k + c] - self.nu_cur[a * k + c]);
                }
            }
        }
        Ok(psi)
    }

    /// Solves Psi(nu) = rhs. Quadratic co-energies make Psi affine, so one
    /// assembled linear solve is exact; otherwise a damped Newton iteration
    /// with a finite-difference Jacobian and a residual line search runs
    /// until |Psi - rhs| <= tol.
    pub fn solve(&self, rhs: &DVector<f64>, opts: &SyncOptions) -> Result<DVector<f64>> {
        self.solve_counted(rhs, opts).map(|(x, _)| x)
    }

    /// As [`solve`](Self::solve), also reporting the iteration count.
    pub fn solve_counted(
        &self,
        rhs: &DVector<f64>,
        opts: &SyncOptions,
    ) -> Result<(DVector<f64>, usize)> {
        if !(opts.tol > 0.0) {
            return Err(Error::Integrator("solver tolerance must be positive".into()));
        }
        let m = self.nu_cur.len();
        let x0 = DVector::from_column_slice(&self.nu_cur);
        let mut x = x0.clone();
        let mut r = self.eval(&x)? - rhs;
        if r.norm() <= opts.tol {
            return Ok((x, 0));
        }

        let jacobian = |at: &DVector<f64>, base: &DVector<f64>| -> Result<DMatrix<f64>> {
            let mut j = DMatrix::<f64>::zeros(m, m);
            let step = if self.chi.is_quadratic() { 1.0 } else { 1e-7 };
            for col in 0..m {
                let mut p = at.clone();
                p[col] += step;
                let fp = self.eval(&p)?;
                j.set_column(col, &((fp - base) / step));
            }
            Ok(j)
        };

        for iter in 0..opts.max_iters {
            let j = jacobian(&x, &(r.clone() + rhs))?;
            let delta = j
                .lu()
                .solve(&(-&r))
                .ok_or_else(|| Error::NoConvergence {
                    residual: r.norm(),
                    iters: iter,
                })?;
            // Backtracking on the residual norm keeps the monotone solve
            // from overshooting away from the root.
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = &x + alpha * &delta;
                let rc = self.eval(&cand)? - rhs;
                if rc.norm() < r.norm() || rc.norm() <= opts.tol {
                    x = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NoConvergence {
                    residual: r.norm(),
                    iters: iter + 1,
                });
            }
            if r.norm() <= opts.tol {
                return Ok((x, iter + 1));
            }
        }
        Err(Error::NoConvergence {
            residual: r.norm(),
            iters: opts.max_iters,
        })
    }
}

#[derive(Debug)]
pub struct SyncResult {
    pub trajectory: Trajectory,
    pub warnings: Vec<String>,
    /// Largest iteration count any implicit solve needed.
    pub max_solve_iters: usize,
}

/// Runs the synchronous integrator on a synchronous time set.
pub fn run(
    mesh: &Mesh,
    material: &Material,
    set: &TimeSet,
    init: &InitialData,
    opts: &SyncOptions,
) -> Result<SyncResult> {
    if !set.is_synchronous() {
        return Err(Error::Integrator(
            "synchronous integration requires identical elemental time sets".into(),
        ));
    }
    let times = set.elemental(0).to_vec();
    let coeffs = lumped_coefficients(mesh, material.rho, material.rho_bar_density(), material.eta)?;
    let matrices = assembly::precompute(mesh, material)?;
    let (d, k) = (mesh.dim(), mesh.desc_dim());
    let n = mesh.n_nodes();

    let mut warnings = Vec::new();
    let gamma = material.chi.gamma();
    let xi = material.chi.xi();
    let t0_window = 2.0 * gamma / (2.0 * xi + gamma);
    let max_gap = times.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    if max_gap >= t0_window {
        warnings.push(format!(
            "step {max_gap:.3e} is outside the monotonicity window {t0_window:.3e}; \
             the implicit solves are best-effort"
        ));
    }

    let mut state = State::new(mesh, init, times[0])?;
    let mut trajectory = Trajectory::new(d, k, times[0], *times.last().expect("nonempty"), n);
    for a in 0..n {
        trajectory.nodes[a].push(
            times[0],
            state.u_node(a),
            state.nu_node(a),
            state.u_dot_node(a),
            state.nu_dot_node(a),
        );
    }

    let vertex_scalar = opts.quadrature == Quadrature::Vertex && material.chi.is_scalar_quadratic();
    let mut max_solve_iters = 0usize;

    for i in 1..times.len() - 1 {
        let t = times[i];
        let dt = times[i + 1] - t;
        for a in 0..n {
            state.advance_node(a, t);
        }
        state.time = t;

        // Global forces at the current positions.
        let mut f_u = vec![0.0f64; n * d];
        let mut f_nu = vec![0.0f64; n * k];
        let w = d + k;
        for e in 0..mesh.n_elements() {
            let q = matrices.gather(mesh, &state, e);
            let f = matrices.force(e, &q);
            for (loc, &a) in mesh.element_nodes(e).iter().enumerate() {
                for c in 0..d {
                    f_u[a * d + c] += f[loc * w + c];
                }
                for c in 0..k {
                    f_nu[a * k + c] += f[loc * w + d + c];
                }
            }
        }

        // Explicit displacement kick.
        for a in 0..n {
            if mesh.is_fixed_u(a) {
                continue;
            }
            let m_a = coeffs.mass(a);
            for c in 0..d {
                state.u_dot[a * d + c] -= dt * f_u[a * d + c] / m_a;
            }
        }

        // Implicit descriptor update.
        if vertex_scalar {
            // Closed form, arithmetic matched to the asynchronous kick.
            for a in 0..n {
                if mesh.is_fixed_nu(a) {
                    continue;
                }
                let rb = coeffs.rho_bar_nodal(a);
                let et = coeffs.eta_nodal(a);
                let denom = rb + et * dt;
                for c in 0..k {
                    let old = state.nu_dot[a * k + c];
                    state.nu_dot[a * k + c] = (rb * old - dt * f_nu[a * k + c]) / denom;
                }
            }
        } else {
            let ctx = PsiContext::new(
                mesh,
                &material.chi,
                &coeffs,
                opts.quadrature,
                times[i - 1],
                t,
                times[i + 1],
                state.nu.clone(),
                state.nu_dot.clone(),
            )?;
            let rhs = DVector::from_fn(n * k, |idx, _| -dt * f_nu[idx]);
            let (next, iters) = ctx.solve_counted(&rhs, opts)?;
            for a in 0..n {
                if mesh.is_fixed_nu(a) {
                    continue;
                }
                for c in 0..k {
                    state.nu_dot[a * k + c] = (next[a * k + c] - state.nu[a * k + c]) / dt;
                }
            }
            max_solve_iters = max_solve_iters.max(iters);
        }

        state.check_finite(0)?;
        for a in 0..n {
            trajectory.nodes[a].push(
                t,
                state.u_node(a),
                state.nu_node(a),
                state.u_dot_node(a),
                state.nu_dot_node(a),
            );
        }
    }

    let tf = *times.last().expect("nonempty");
    for a in 0..n {
        state.advance_node(a, tf);
        trajectory.nodes[a].push(
            tf,
            state.u_node(a),
            state.nu_node(a),
            state.u_dot_node(a),
            state.nu_dot_node(a),
        );
    }

    Ok(SyncResult {
        trajectory,
        warnings,
        max_solve_iters,
    })
}
