//! Energies, discrete action, pointwise variation of rates, and the
//! empirical convergence harness.

use crate::assembly::{self, ElementMatrices};
use crate::avi;
use crate::error::{Error, Result};
use crate::material::{chi_partials, Material};
use crate::mesh::{lumped_coefficients, Mesh, NodalCoefficients};
use crate::oracle;
use crate::state::{Channel, InitialData, State, Trajectory};
use crate::sync::{self, SyncOptions};
use crate::timeset::{self, Mode, Policy, TimeSet};
use nalgebra::DVector;

/// Energy breakdown at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Energy {
    pub kinetic_u: f64,
    /// Kinetic co-energy integral of the descriptor rates (lumped).
    pub kinetic_nu: f64,
    pub potential: f64,
    pub total: f64,
}

/// Snapshot of the trajectory as a state at time t.
pub fn state_at(trajectory: &Trajectory, t: f64) -> Result<State> {
    if t < trajectory.t0 - 1e-12 || t > trajectory.tf + 1e-12 {
        return Err(Error::Integrator(format!(
            "time {t} outside the run interval [{}, {}]",
            trajectory.t0, trajectory.tf
        )));
    }
    let (d, k) = (trajectory.dim, trajectory.desc_dim);
    let n = trajectory.nodes.len();
    let mut state = State {
        dim: d,
        desc_dim: k,
        time: t,
        u: vec![0.0; n * d],
        nu: vec![0.0; n * k],
        u_dot: vec![0.0; n * d],
        nu_dot: vec![0.0; n * k],
        node_time: vec![t; n],
    };
    for a in 0..n {
        state.u[a * d..(a + 1) * d].copy_from_slice(&trajectory.u_at(a, t));
        state.nu[a * k..(a + 1) * k].copy_from_slice(&trajectory.nu_at(a, t));
        state.u_dot[a * d..(a + 1) * d].copy_from_slice(&trajectory.u_dot_at(a, t));
        state.nu_dot[a * k..(a + 1) * k].copy_from_slice(&trajectory.nu_dot_at(a, t));
    }
    Ok(state)
}

/// Total energy at time t: lumped kinetic terms plus the potential.
pub fn energy(
    mesh: &Mesh,
    material: &Material,
    matrices: &ElementMatrices,
    coeffs: &NodalCoefficients,
    trajectory: &Trajectory,
    t: f64,
) -> Result<Energy> {
    let state = state_at(trajectory, t)?;
    let d = mesh.dim();
    let mut kinetic_u = 0.0;
    let mut kinetic_nu = 0.0;
    for a in 0..mesh.n_nodes() {
        let vsq: f64 = state.u_dot[a * d..(a + 1) * d].iter().map(|v| v * v).sum();
        kinetic_u += 0.5 * coeffs.mass(a) * vsq;
        let nu_a = DVector::from_column_slice(state.nu_node(a));
        let zeta_a = DVector::from_column_slice(state.nu_dot_node(a));
        let (chi_val, _, _) = chi_partials(&material.chi, &nu_a, &zeta_a)?;
        kinetic_nu += coeffs.volume[a] * chi_val;
    }
    let potential = assembly::potential_v(matrices, mesh, &state);
    Ok(Energy {
        kinetic_u,
        kinetic_nu,
        potential,
        total: kinetic_u + kinetic_nu + potential,
    })
}

/// Integral of |rate|^2 of one node channel over [s, e] (rates piecewise
/// constant on the node's instants).
fn rate_square_integral(
    trajectory: &Trajectory,
    a: usize,
    channel: Channel,
    s: f64,
    e: f64,
) -> f64 {
    let h = &trajectory.nodes[a];
    let width = match channel {
        Channel::U => trajectory.dim,
        Channel::Nu => trajectory.desc_dim,
    };
    let rates = match channel {
        Channel::U => &h.u_dot,
        Channel::Nu => &h.nu_dot,
    };
    let mut acc = 0.0;
    for i in 0..h.times.len() {
        let seg_s = h.times[i].max(s);
        let seg_e = if i + 1 < h.times.len() {
            h.times[i + 1]
        } else {
            e
        }
        .min(e);
        if seg_e <= seg_s {
            continue;
        }
        let sq: f64 = rates[i * width..(i + 1) * width].iter().map(|v| v * v).sum();
        acc += sq * (seg_e - seg_s);
    }
    acc
}

/// Fully discrete action sum: per element and elemental step, the exact
/// time integral of the lumped kinetic terms minus the elemental potential
/// sampled at the step's left endpoint.
pub fn discrete_action(
    mesh: &Mesh,
    matrices: &ElementMatrices,
    coeffs: &NodalCoefficients,
    set: &TimeSet,
    trajectory: &Trajectory,
) -> Result<f64> {
    let rho_bar_share = |e: usize| coeffs.rho_bar_elem(e);
    let mut action = 0.0;
    let w = mesh.dim() + mesh.desc_dim();
    for e in 0..set.n_elements() {
        let times = set.elemental(e);
        let m_share = coeffs.mass_elem(e);
        for j in 0..times.len() - 1 {
            let (s, t_next) = (times[j], times[j + 1]);
            for &a in mesh.element_nodes(e) {
                action += 0.5 * m_share * rate_square_integral(trajectory, a, Channel::U, s, t_next);
                action +=
                    0.5 * rho_bar_share(e) * rate_square_integral(trajectory, a, Channel::Nu, s, t_next);
            }
            // Elemental potential at the left endpoint.
            let mut q = DVector::zeros(matrices.local_len());
            for (loc, &a) in mesh.element_nodes(e).iter().enumerate() {
                let u = trajectory.u_at(a, s);
                let nu = trajectory.nu_at(a, s);
                for c in 0..mesh.dim() {
                    q[loc * w + c] = u[c];
                }
                for c in 0..mesh.desc_dim() {
                    q[loc * w + mesh.dim() + c] = nu[c];
                }
            }
            action -= (t_next - s) * matrices.potential(e, &q);
        }
    }
    Ok(action)
}

/// Sum over all nodes of the absolute rate jumps whose preceding segment
/// intersects [t1, t2].
pub fn pointwise_variation(
    trajectory: &Trajectory,
    channel: Channel,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    if !(t1 <= t2) || t1 < trajectory.t0 - 1e-12 || t2 > trajectory.tf + 1e-12 {
        return Err(Error::Integrator(format!("invalid variation window [{t1}, {t2}]")));
    }
    let width = match channel {
        Channel::U => trajectory.dim,
        Channel::Nu => trajectory.desc_dim,
    };
    let mut total = 0.0;
    for h in &trajectory.nodes {
        let rates = match channel {
            Channel::U => &h.u_dot,
            Channel::Nu => &h.nu_dot,
        };
        for i in 1..h.times.len() {
            if h.times[i - 1] > t2 || h.times[i] < t1 {
                continue;
            }
            let mut sq = 0.0;
            for c in 0..width {
                let d = rates[i * width + c] - rates[(i - 1) * width + c];
                sq += d * d;
            }
            total += sq.sqrt();
        }
    }
    Ok(total)
}

/// Discrete dissipation pairing: left-endpoint test values,
/// sum_a sum_i eta_a (nu_a(t_a^i) - nu_a(t_a^{i-1})) . phi_a(t_a^{i-1}).
pub fn dissipation_discrete(
    mesh: &Mesh,
    coeffs: &NodalCoefficients,
    set: &TimeSet,
    nu: &Trajectory,
    phi: &Trajectory,
) -> f64 {
    pair_dissipation(mesh, coeffs, set, nu, phi, false)
}

/// Time-continuous dissipation pairing of piecewise-affine fields:
/// same jump sum with trapezoidal test values.
pub fn dissipation_continuous(
    mesh: &Mesh,
    coeffs: &NodalCoefficients,
    set: &TimeSet,
    nu: &Trajectory,
    phi: &Trajectory,
) -> f64 {
    pair_dissipation(mesh, coeffs, set, nu, phi, true)
}

fn pair_dissipation(
    mesh: &Mesh,
    coeffs: &NodalCoefficients,
    set: &TimeSet,
    nu: &Trajectory,
    phi: &Trajectory,
    trapezoid: bool,
) -> f64 {
    let k = mesh.desc_dim();
    let mut total = 0.0;
    for a in 0..mesh.n_nodes() {
        let times = set.nodal_times(mesh, a);
        let eta_a = coeffs.eta_nodal(a);
        for i in 1..times.len() {
            let (t_prev, t_cur) = (times[i - 1].0, times[i].0);
            let nu_prev = nu.nu_at(a, t_prev);
            let nu_cur = nu.nu_at(a, t_cur);
            let phi_prev = phi.nu_at(a, t_prev);
            let phi_cur = phi.nu_at(a, t_cur);
            for c in 0..k {
                let test = if trapezoid {
                    0.5 * (phi_cur[c] + phi_prev[c])
                } else {
                    phi_prev[c]
                };
                total += eta_a * (nu_cur[c] - nu_prev[c]) * test;
            }
        }
    }
    total
}

/// Lumped space-time pairing of the descriptor rates of two trajectories
/// over [t1, t2]: sum_a w_a int nu_dot_a . phi_dot_a dt (rates piecewise
/// constant on the union of both nodal grids).
pub fn rate_pairing_integral(
    mesh: &Mesh,
    coeffs: &NodalCoefficients,
    nu: &Trajectory,
    phi: &Trajectory,
    t1: f64,
    t2: f64,
) -> f64 {
    let k = mesh.desc_dim();
    let mut total = 0.0;
    for a in 0..mesh.n_nodes() {
        let mut cuts: Vec<f64> = nu.nodes[a]
            .times
            .iter()
            .chain(phi.nodes[a].times.iter())
            .copied()
            .filter(|&t| t > t1 && t < t2)
            .collect();
        cuts.push(t1);
        cuts.push(t2);
        cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite times"));
        cuts.dedup();
        for w in cuts.windows(2) {
            let nd = nu.nu_dot_at(a, w[0]);
            let pd = phi.nu_dot_at(a, w[0]);
            let dot: f64 = (0..k).map(|c| nd[c] * pd[c]).sum();
            total += coeffs.volume[a] * dot * (w[1] - w[0]);
        }
    }
    total
}

/// Least-squares slope of y against x.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Integrator selection for the convergence harness.
#[derive(Debug, Clone)]
pub enum IntegratorKind {
    /// Asynchronous runs on jittered elemental sets.
    Avi { seed: u64, max_ratio: f64 },
    /// Synchronous runs on uniform sets.
    Sync(SyncOptions),
}

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub level: usize,
    pub t_theta: f64,
    pub tau_theta: f64,
    pub sup_err: f64,
    pub l2_rate_err: f64,
    pub pv_u: f64,
    pub pv_nu: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Coarse to fine.
    pub levels: Vec<LevelReport>,
    /// Mean of log2 ratios of successive sup-norm discrepancies.
    pub order_estimate: Option<f64>,
    /// False when the discrepancy sequence is not strictly decreasing.
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("level,T_theta,tau_theta,sup_err,l2_rate_err,pV_u,pV_nu,max_rate\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.level, l.t_theta, l.tau_theta, l.sup_err, l.l2_rate_err, l.pv_u, l.pv_nu,
                l.max_rate
            ));
        }
        match self.order_estimate {
            Some(p) => out.push_str(&format!("# order_estimate = {p:.3}\n")),
            None => out.push_str("# order_estimate unavailable\n"),
        }
        if !self.monotone {
            out.push_str("# warning: discrepancies not strictly decreasing\n");
        }
        out
    }
}

fn sample_grid(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t0 + (tf - t0) * i as f64 / n as f64).collect()
}

/// Sup-norm of nodal value discrepancy and L2 norm of rate discrepancy
/// between two trajectories, sampled on a grid.
pub fn trajectory_discrepancy(a: &Trajectory, b: &Trajectory, grid: &[f64]) -> (f64, f64) {
    let mut sup = 0.0f64;
    let mut l2 = 0.0f64;
    let dt = if grid.len() > 1 {
        (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
    } else {
        1.0
    };
    for &t in grid {
        for node in 0..a.nodes.len() {
            for (x, y) in a.u_at(node, t).iter().zip(b.u_at(node, t)) {
                sup = sup.max((x - y).abs());
            }
            for (x, y) in a.nu_at(node, t).iter().zip(b.nu_at(node, t)) {
                sup = sup.max((x - y).abs());
            }
            for (x, y) in a.u_dot_at(node, t).iter().zip(b.u_dot_at(node, t)) {
                l2 += (x - y) * (x - y) * dt;
            }
            for (x, y) in a.nu_dot_at(node, t).iter().zip(b.nu_dot_at(node, t)) {
                l2 += (x - y) * (x - y) * dt;
            }
        }
    }
    (sup, l2.sqrt())
}

/// Discrepancy of a trajectory against the exact linear solution.
pub fn oracle_discrepancy(
    trajectory: &Trajectory,
    mesh: &Mesh,
    sys: &oracle::LinearSystem,
    init: &InitialData,
    grid: &[f64],
) -> Result<(f64, f64)> {
    let (x0, v0) = oracle::stack_initial(mesh, init);
    let states = oracle::exact_solution(sys, &x0, &v0, trajectory.t0, grid)?;
    let (d, k) = (mesh.dim(), mesh.desc_dim());
    let mut sup = 0.0f64;
    let mut l2 = 0.0f64;
    let dt = if grid.len() > 1 {
        (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
    } else {
        1.0
    };
    for (gi, &t) in grid.iter().enumerate() {
        let (ref xs, ref vs) = states[gi];
        for a in 0..mesh.n_nodes() {
            let u = trajectory.u_at(a, t);
            let ud = trajectory.u_dot_at(a, t);
            for c in 0..d {
                let idx = oracle::u_dof(mesh, a, c);
                sup = sup.max((u[c] - xs[idx]).abs());
                l2 += (ud[c] - vs[idx]) * (ud[c] - vs[idx]) * dt;
            }
            let nu = trajectory.nu_at(a, t);
            let nd = trajectory.nu_dot_at(a, t);
            for c in 0..k {
                let idx = oracle::nu_dof(mesh, a, c);
                sup = sup.max((nu[c] - xs[idx]).abs());
                l2 += (nd[c] - vs[idx]) * (nd[c] - vs[idx]) * dt;
            }
        }
    }
    Ok((sup, l2.sqrt()))
}

/// Runs one integrator over a family of refined time sets (step counts
/// n, 2n, 4n, ...) and measures discrepancies against the exact solution
/// when one exists (synchronous, quadratic data), otherwise against the
/// finest level. `threads` caps concurrent level runs.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    mesh: &Mesh,
    material: &Material,
    init: &InitialData,
    t0: f64,
    tf: f64,
    kind: &IntegratorKind,
    base_n: usize,
    levels: usize,
    threads: usize,
) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::Integrator("a convergence study needs at least 3 levels".into()));
    }
    let threads = threads.max(1);

    let run_level = |level: usize| -> Result<(Trajectory, f64, f64)> {
        let n = base_n * (1usize << level);
        let (set, traj) = match kind {
            IntegratorKind::Avi { seed, max_ratio } => {
                let set = timeset::build(
                    mesh,
                    t0,
                    tf,
                    &Policy::Jittered {
                        n,
                        seed: seed.wrapping_add(level as u64),
                        max_ratio: *max_ratio,
                    },
                    Mode::Strict,
                )?;
                let out = avi::run(mesh, material, &set, init)
                    .map_err(|e| Error::Integrator(format!("level {level}: {e}")))?;
                (set, out.trajectory)
            }
            IntegratorKind::Sync(opts) => {
                let set = timeset::build(mesh, t0, tf, &Policy::Uniform { n }, Mode::Relaxed)?;
                let out = sync::run(mesh, material, &set, init, opts)
                    .map_err(|e| Error::Integrator(format!("level {level}: {e}")))?;
                (set, out.trajectory)
            }
        };
        let m = set.metrics();
        Ok((traj, m.t_theta, m.tau_theta))
    };

    // Run levels, up to `threads` at a time.
    let mut results: Vec<Option<Result<(Trajectory, f64, f64)>>> =
        (0..levels).map(|_| None).collect();
    for chunk_start in (0..levels).step_by(threads) {
        let chunk_end = (chunk_start + threads).min(levels);
        let outputs: Vec<(usize, Result<(Trajectory, f64, f64)>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|level| scope.spawn(move || (level, run_level(level))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("level thread")).collect()
        });
        for (level, r) in outputs {
            results[level] = Some(r);
        }
    }
    let mut runs = Vec::with_capacity(levels);
    for r in results {
        runs.push(r.expect("all levels scheduled")?);
    }

    let grid = sample_grid(t0, tf, 200);
    let use_oracle = matches!(kind, IntegratorKind::Sync(_)) && material.chi.is_quadratic();
    let sys = if use_oracle {
        Some(oracle::assemble(mesh, material)?)
    } else {
        None
    };

    let mut reports = Vec::with_capacity(levels);
    for (level, (traj, t_theta, tau_theta)) in runs.iter().enumerate() {
        let (sup_err, l2_rate_err) = match &sys {
            Some(sys) => oracle_discrepancy(traj, mesh, sys, init, &grid)?,
            None => {
                if level == levels - 1 {
                    (0.0, 0.0)
                } else {
                    trajectory_discrepancy(traj, &runs[levels - 1].0, &grid)
                }
            }
        };
        reports.push(LevelReport {
            level,
            t_theta: *t_theta,
            tau_theta: *tau_theta,
            sup_err,
            l2_rate_err,
            pv_u: pointwise_variation(traj, Channel::U, t0, tf)?,
            pv_nu: pointwise_variation(traj, Channel::Nu, t0, tf)?,
            max_rate: traj.max_rate(),
        });
    }

    let usable = if sys.is_some() { levels } else { levels - 1 };
    let mut ratios = Vec::new();
    let mut monotone = true;
    for i in 1..usable {
        let (e0, e1) = (reports[i - 1].sup_err, reports[i].sup_err);
        if e1 >= e0 {
            monotone = false;
        }
        if e0 > 0.0 && e1 > 0.0 {
            ratios.push((e0 / e1).log2());
        }
    }
    let order_estimate = if ratios.is_empty() {
        None
    } else {
        Some(ratios.iter().sum::<f64>() / ratios.len() as f64)
    };

    Ok(ConvergenceReport {
        levels: reports,
        order_estimate,
        monotone,
    })
}

/// Convenience: energy series of a trajectory on a uniform grid.
pub fn energy_series(
    mesh: &Mesh,
    material: &Material,
    trajectory: &Trajectory,
    samples: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let coeffs = lumped_coefficients(mesh, material.rho, material.rho_bar_density(), material.eta)?;
    let matrices = assembly::precompute(mesh, material)?;
    let grid = sample_grid(trajectory.t0, trajectory.tf, samples);
    let mut es = Vec::with_capacity(grid.len());
    for &t in &grid {
        es.push(energy(mesh, material, &matrices, &coeffs, trajectory, t)?.total);
    }
    Ok((grid, es))
}
