//! Nodal state, initial data, and piecewise-affine trajectories.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Initial nodal fields. Flat layout: `u0[a*d..a*d+d]`, `nu0[a*k..a*k+k]`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: Vec<f64>,
    pub nu0: Vec<f64>,
    pub u_dot0: Vec<f64>,
    pub nu_dot0: Vec<f64>,
}

impl InitialData {
    pub fn zero(mesh: &Mesh) -> InitialData {
        let n = mesh.n_nodes();
        InitialData {
            u0: vec![0.0; n * mesh.dim()],
            nu0: vec![0.0; n * mesh.desc_dim()],
            u_dot0: vec![0.0; n * mesh.dim()],
            nu_dot0: vec![0.0; n * mesh.desc_dim()],
        }
    }

    /// Same constant value on every (unconstrained) node.
    pub fn constant(
        mesh: &Mesh,
        u: &[f64],
        nu: &[f64],
        u_dot: &[f64],
        nu_dot: &[f64],
    ) -> Result<InitialData> {
        let (d, k) = (mesh.dim(), mesh.desc_dim());
        if u.len() != d || u_dot.len() != d || nu.len() != k || nu_dot.len() != k {
            return Err(Error::Dimension(
                "constant initial data must have lengths d, k, d, k".into(),
            ));
        }
        let mut init = InitialData::zero(mesh);
        for a in 0..mesh.n_nodes() {
            init.u0[a * d..(a + 1) * d].copy_from_slice(u);
            init.u_dot0[a * d..(a + 1) * d].copy_from_slice(u_dot);
            init.nu0[a * k..(a + 1) * k].copy_from_slice(nu);
            init.nu_dot0[a * k..(a + 1) * k].copy_from_slice(nu_dot);
        }
        Ok(init)
    }

    pub fn set_node_u(&mut self, mesh: &Mesh, a: usize, u: &[f64], u_dot: &[f64]) {
        let d = mesh.dim();
        self.u0[a * d..(a + 1) * d].copy_from_slice(u);
        self.u_dot0[a * d..(a + 1) * d].copy_from_slice(u_dot);
    }

    pub fn set_node_nu(&mut self, mesh: &Mesh, a: usize, nu: &[f64], nu_dot: &[f64]) {
        let k = mesh.desc_dim();
        self.nu0[a * k..(a + 1) * k].copy_from_slice(nu);
        self.nu_dot0[a * k..(a + 1) * k].copy_from_slice(nu_dot);
    }
}

/// Mutable integration state. Positions and rates live per node; `node_time`
/// records the instant each node's position was last made current, so
/// asynchronous kicks can advance nodes lazily.
#[derive(Debug, Clone)]
pub struct State {
    pub dim: usize,
    pub desc_dim: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub nu: Vec<f64>,
    pub u_dot: Vec<f64>,
    pub nu_dot: Vec<f64>,
    pub node_time: Vec<f64>,
}

impl State {
    /// Builds the state at `t0`, zeroing constrained channels.
    pub fn new(mesh: &Mesh, init: &InitialData, t0: f64) -> Result<State> {
        let (d, k, n) = (mesh.dim(), mesh.desc_dim(), mesh.n_nodes());
        if init.u0.len() != n * d
            || init.nu0.len() != n * k
            || init.u_dot0.len() != n * d
            || init.nu_dot0.len() != n * k
        {
            return Err(Error::Dimension("initial data sized for a different mesh".into()));
        }
        let mut state = State {
            dim: d,
            desc_dim: k,
            time: t0,
            u: init.u0.clone(),
            nu: init.nu0.clone(),
            u_dot: init.u_dot0.clone(),
            nu_dot: init.nu_dot0.clone(),
            node_time: vec![t0; n],
        };
        for a in 0..n {
            if mesh.is_fixed_u(a) {
                state.u[a * d..(a + 1) * d].fill(0.0);
                state.u_dot[a * d..(a + 1) * d].fill(0.0);
            }
            if mesh.is_fixed_nu(a) {
                state.nu[a * k..(a + 1) * k].fill(0.0);
                state.nu_dot[a * k..(a + 1) * k].fill(0.0);
            }
        }
        Ok(state)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_time.len()
    }

    pub fn u_node(&self, a: usize) -> &[f64] {
        &self.u[a * self.dim..(a + 1) * self.dim]
    }

    pub fn nu_node(&self, a: usize) -> &[f64] {
        &self.nu[a * self.desc_dim..(a + 1) * self.desc_dim]
    }

    pub fn u_dot_node(&self, a: usize) -> &[f64] {
        &self.u_dot[a * self.dim..(a + 1) * self.dim]
    }

    pub fn nu_dot_node(&self, a: usize) -> &[f64] {
        &self.nu_dot[a * self.desc_dim..(a + 1) * self.desc_dim]
    }

    /// Moves node `a` along its current rates up to time `t`.
    pub fn advance_node(&mut self, a: usize, t: f64) {
        let dt = t - self.node_time[a];
        if dt == 0.0 {
            return;
        }
        debug_assert!(dt > 0.0, "node {a} advanced backwards by {dt}");
        for c in 0..self.dim {
            self.u[a * self.dim + c] += dt * self.u_dot[a * self.dim + c];
        }
        for c in 0..self.desc_dim {
            self.nu[a * self.desc_dim + c] += dt * self.nu_dot[a * self.desc_dim + c];
        }
        self.node_time[a] = t;
    }

    pub fn check_finite(&self, element: usize) -> Result<()> {
        let bad = self
            .u
            .iter()
            .chain(&self.nu)
            .chain(&self.u_dot)
            .chain(&self.nu_dot)
            .any(|v| !v.is_finite());
        if bad {
            return Err(Error::NonFinite {
                time: self.time,
                element,
                msg: "non-finite nodal value or rate".into(),
            });
        }
        Ok(())
    }
}

/// Field selector for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    U,
    Nu,
}

/// One node's sampled history: values and right-limit rates at its nodal
/// instants. Between instants the value is affine and the rate constant.
#[derive(Debug, Clone, Default)]
pub struct NodeHistory {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub nu: Vec<f64>,
    pub u_dot: Vec<f64>,
    pub nu_dot: Vec<f64>,
}

impl NodeHistory {
    pub fn push(&mut self, t: f64, u: &[f64], nu: &[f64], u_dot: &[f64], nu_dot: &[f64]) {
        self.times.push(t);
        self.u.extend_from_slice(u);
        self.nu.extend_from_slice(nu);
        self.u_dot.extend_from_slice(u_dot);
        self.nu_dot.extend_from_slice(nu_dot);
    }

    /// Index of the segment containing t: largest i with times[i] <= t.
    fn segment(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }
}

/// Full discrete trajectory of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim: usize,
    pub desc_dim: usize,
    pub t0: f64,
    pub tf: f64,
    pub nodes: Vec<NodeHistory>,
}

impl Trajectory {
    pub fn new(dim: usize, desc_dim: usize, t0: f64, tf: f64, n_nodes: usize) -> Trajectory {
        Trajectory {
            dim,
            desc_dim,
            t0,
            tf,
            nodes: vec![NodeHistory::default(); n_nodes],
        }
    }

    fn interp(&self, a: usize, t: f64, width: usize, vals: &[f64], rates: &[f64]) -> Vec<f64> {
        let h = &self.nodes[a];
        let i = h.segment(t);
        let dt = t - h.times[i];
        (0..width)
            .map(|c| vals[i * width + c] + dt * rates[i * width + c])
            .collect()
    }

    /// Displacement of node `a` at time t (affine between instants).
    pub fn u_at(&self, a: usize, t: f64) -> Vec<f64> {
        let h = &self.nodes[a];
        self.interp(a, t, self.dim, &h.u, &h.u_dot)
    }

    pub fn nu_at(&self, a: usize, t: f64) -> Vec<f64> {
        let h = &self.nodes[a];
        self.interp(a, t, self.desc_dim, &h.nu, &h.nu_dot)
    }

    /// Right-limit rate of node `a` at time t.
    pub fn u_dot_at(&self, a: usize, t: f64) -> Vec<f64> {
        let h = &self.nodes[a];
        let i = h.segment(t);
        h.u_dot[i * self.dim..(i + 1) * self.dim].to_vec()
    }

    pub fn nu_dot_at(&self, a: usize, t: f64) -> Vec<f64> {
        let h = &self.nodes[a];
        let i = h.segment(t);
        h.nu_dot[i * self.desc_dim..(i + 1) * self.desc_dim].to_vec()
    }

    /// Checks that stored values chain affinely along each node's instants.
    pub fn check_affine_consistency(&self, tol: f64) -> Result<()> {
        for (a, h) in self.nodes.iter().enumerate() {
            for i in 1..h.times.len() {
                let dt = h.times[i] - h.times[i - 1];
                for c in 0..self.dim {
                    let pred = h.u[(i - 1) * self.dim + c] + dt * h.u_dot[(i - 1) * self.dim + c];
                    if (pred - h.u[i * self.dim + c]).abs() > tol {
                        return Err(Error::Integrator(format!(
                            "node {a}: displacement does not chain affinely at instant {i}"
                        )));
                    }
                }
                for c in 0..self.desc_dim {
                    let pred =
                        h.nu[(i - 1) * self.desc_dim + c] + dt * h.nu_dot[(i - 1) * self.desc_dim + c];
                    if (pred - h.nu[i * self.desc_dim + c]).abs() > tol {
                        return Err(Error::Integrator(format!(
                            "node {a}: descriptor does not chain affinely at instant {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest rate magnitude (per node, euclidean over channels) in the run.
    pub fn max_rate(&self) -> f64 {
        let mut m = 0.0f64;
        for h in &self.nodes {
            for i in 0..h.times.len() {
                let su: f64 = h.u_dot[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .map(|v| v * v)
                    .sum();
                let sn: f64 = h.nu_dot[i * self.desc_dim..(i + 1) * self.desc_dim]
                    .iter()
                    .map(|v| v * v)
                    .sum();
                m = m.max(su.sqrt() + sn.sqrt());
            }
        }
        m
    }

    /// Writes the trajectory as CSV lines `t,node,channel,value,rate`.
    /// Channels are named `u0..u{d-1}` and `nu0..nu{k-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,node,channel,value,rate\n");
        for (a, h) in self.nodes.iter().enumerate() {
            for i in 0..h.times.len() {
                let t = h.times[i];
                for c in 0..self.dim {
                    out.push_str(&format!(
                        "{t},{a},u{c},{},{}\n",
                        h.u[i * self.dim + c],
                        h.u_dot[i * self.dim + c]
                    ));
                }
                for c in 0..self.desc_dim {
                    out.push_str(&format!(
                        "{t},{a},nu{c},{},{}\n",
                        h.nu[i * self.desc_dim + c],
                        h.nu_dot[i * self.desc_dim + c]
                    ));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample, Marker};
    use approx::assert_relative_eq;

    #[test]
    fn constrained_channels_zeroed() {
        let mesh = sample::unit_square(1, vec![(vec![0, 1], Marker::FixedU)]);
        let init = InitialData::constant(&mesh, &[1.0, 2.0], &[3.0], &[4.0, 5.0], &[6.0]).unwrap();
        let state = State::new(&mesh, &init, 0.0).unwrap();
        assert_eq!(state.u_node(0), &[0.0, 0.0]);
        assert_eq!(state.u_dot_node(1), &[0.0, 0.0]);
        assert_eq!(state.u_node(2), &[1.0, 2.0]);
        assert_eq!(state.nu_node(0), &[3.0]);
    }

    #[test]
    fn advance_is_affine() {
        let mesh = sample::reference_triangle(1);
        let init = InitialData::constant(&mesh, &[0.0, 0.0], &[1.0], &[2.0, 0.0], &[-1.0]).unwrap();
        let mut state = State::new(&mesh, &init, 0.0).unwrap();
        state.advance_node(0, 0.5);
        assert_relative_eq!(state.u_node(0)[0], 1.0);
        assert_relative_eq!(state.nu_node(0)[0], 0.5);
        assert_relative_eq!(state.node_time[0], 0.5);
        // Idempotent at the same time.
        state.advance_node(0, 0.5);
        assert_relative_eq!(state.u_node(0)[0], 1.0);
    }

    #[test]
    fn trajectory_interpolation_and_rates() {
        let mut traj = Trajectory::new(1, 1, 0.0, 1.0, 1);
        traj.nodes[0].push(0.0, &[0.0], &[0.0], &[1.0], &[2.0]);
        traj.nodes[0].push(0.5, &[0.5], &[1.0], &[-1.0], &[0.0]);
        traj.nodes[0].push(1.0, &[0.0], &[1.0], &[0.0], &[0.0]);
        assert_relative_eq!(traj.u_at(0, 0.25)[0], 0.25);
        assert_relative_eq!(traj.u_at(0, 0.75)[0], 0.25);
        assert_relative_eq!(traj.nu_at(0, 0.25)[0], 0.5);
        assert_eq!(traj.u_dot_at(0, 0.25)[0], 1.0);
        assert_eq!(traj.u_dot_at(0, 0.5)[0], -1.0);
        traj.check_affine_consistency(1e-12).unwrap();
        assert_relative_eq!(traj.max_rate(), 3.0);
    }

    #[test]
    fn affine_consistency_detects_breaks() {
        let mut traj = Trajectory::new(1, 1, 0.0, 1.0, 1);
        traj.nodes[0].push(0.0, &[0.0], &[0.0], &[1.0], &[0.0]);
        traj.nodes[0].push(1.0, &[0.5], &[0.0], &[1.0], &[0.0]);
        assert!(traj.check_affine_consistency(1e-12).is_err());
    }
}
