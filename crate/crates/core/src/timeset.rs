//! Elemental, nodal, and global time sets with asynchronicity metrics.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generation policy for the elemental time sets.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Every element gets the same uniform partition with n steps.
    Uniform { n: usize },
    /// Element e gets a uniform partition with n[e] steps.
    PerElementUniform { n: Vec<usize> },
    /// Element gaps drawn uniformly in [1, sqrt(max_ratio)] and normalized,
    /// which bounds the asynchronicity ratio by max_ratio.
    Jittered { n: usize, seed: u64, max_ratio: f64 },
}

/// Interior-coincidence handling across elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Interiors of distinct elemental sets must be disjoint.
    Strict,
    /// Coincidences allowed; ties broken by ascending element index.
    Relaxed,
}

/// Asynchronicity metrics of a time set.
#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    /// Largest gap of the global set.
    pub h_theta: f64,
    /// Largest elemental gap.
    pub t_theta: f64,
    /// Largest elemental gap / smallest elemental gap.
    pub tau_theta: f64,
    /// Largest global gap / smallest global gap.
    pub tau_prime_theta: f64,
}

#[derive(Debug, Clone)]
pub struct TimeSet {
    t0: f64,
    tf: f64,
    elemental: Vec<Vec<f64>>,
    global: Vec<f64>,
    mode: Mode,
    /// Strict mode requested but interior coincidences forced relaxed.
    pub fell_back_to_relaxed: bool,
}

impl TimeSet {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn n_elements(&self) -> usize {
        self.elemental.len()
    }

    pub fn elemental(&self, e: usize) -> &[f64] {
        &self.elemental[e]
    }

    /// Sorted, deduplicated union of the elemental sets.
    pub fn global(&self) -> &[f64] {
        &self.global
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// True when every element carries the identical set.
    pub fn is_synchronous(&self) -> bool {
        self.elemental.iter().all(|s| *s == self.elemental[0])
    }

    pub fn metrics(&self) -> Metrics {
        let mut t_theta = 0.0f64;
        let mut min_elem = f64::INFINITY;
        for set in &self.elemental {
            for w in set.windows(2) {
                let gap = w[1] - w[0];
                t_theta = t_theta.max(gap);
                min_elem = min_elem.min(gap);
            }
        }
        let mut h_theta = 0.0f64;
        let mut min_glob = f64::INFINITY;
        for w in self.global.windows(2) {
            let gap = w[1] - w[0];
            h_theta = h_theta.max(gap);
            min_glob = min_glob.min(gap);
        }
        Metrics {
            h_theta,
            t_theta,
            tau_theta: t_theta / min_elem,
            tau_prime_theta: h_theta / min_glob,
        }
    }

    /// Merged nodal instants for node `a` with the owning element of each
    /// interior instant (smallest element index on coincidence). Endpoints
    /// are included and attributed to the smallest adjacent element.
    pub fn nodal_times(&self, mesh: &Mesh, a: usize) -> Vec<(f64, usize)> {
        let mut merged: Vec<(f64, usize)> = Vec::new();
        for &e in mesh.elements_of_node(a) {
            for &t in &self.elemental[e] {
                merged.push((t, e));
            }
        }
        merged.sort_by(|x, y| {
            x.0.partial_cmp(&y.0)
                .expect("finite times")
                .then(x.1.cmp(&y.1))
        });
        merged.dedup_by(|next, keep| next.0 == keep.0);
        merged
    }
}

/// Successor of `t` in an ordered instant list; None at the last instant.
pub fn successor(times: &[(f64, usize)], t: f64) -> Option<f64> {
    times.iter().map(|&(x, _)| x).find(|&x| x > t)
}

fn uniform_partition(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    // Endpoint-exact: interior points computed by ratio so the last entry
    // is tf bit-exactly.
    let mut set = Vec::with_capacity(n + 1);
    for i in 0..=n {
        set.push(t0 + (tf - t0) * (i as f64 / n as f64));
    }
    set[n] = tf;
    set
}

/// Builds the elemental time sets for the given policy and mode.
pub fn build(mesh: &Mesh, t0: f64, tf: f64, policy: &Policy, mode: Mode) -> Result<TimeSet> {
    if !(t0 < tf) {
        return Err(Error::TimeSet(format!("need t0 < tf, got [{t0}, {tf}]")));
    }
    let m = mesh.n_elements();
    let elemental: Vec<Vec<f64>> = match policy {
        Policy::Uniform { n } => {
            if *n < 1 {
                return Err(Error::TimeSet("uniform policy needs n >= 1".into()));
            }
            vec![uniform_partition(t0, tf, *n); m]
        }
        Policy::PerElementUniform { n } => {
            if n.len() != m {
                return Err(Error::TimeSet(format!(
                    "per-element policy lists {} step counts for {m} elements",
                    n.len()
                )));
            }
            if n.iter().any(|&x| x < 1) {
                return Err(Error::TimeSet("per-element policy needs n >= 1".into()));
            }
            n.iter().map(|&x| uniform_partition(t0, tf, x)).collect()
        }
        Policy::Jittered { n, seed, max_ratio } => {
            if *n < 1 {
                return Err(Error::TimeSet("jittered policy needs n >= 1".into()));
            }
            if !(*max_ratio >= 1.0) {
                return Err(Error::TimeSet("jittered policy needs max_ratio >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let hi = max_ratio.sqrt();
            (0..m)
                .map(|_| {
                    let gaps: Vec<f64> = (0..*n).map(|_| rng.gen_range(1.0..hi.max(1.0 + 1e-12))).collect();
                    let total: f64 = gaps.iter().sum();
                    let mut set = Vec::with_capacity(n + 1);
                    let mut acc = 0.0;
                    set.push(t0);
                    for g in &gaps[..n - 1] {
                        acc += g;
                        set.push(t0 + (tf - t0) * acc / total);
                    }
                    set.push(tf);
                    set
                })
                .collect()
        }
    };

    // Global union.
    let mut global: Vec<f64> = elemental.iter().flatten().copied().collect();
    global.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    global.dedup();

    // Interior-disjointness check for strict mode.
    let mut fell_back = false;
    let mut mode = mode;
    if mode == Mode::Strict && m > 1 {
        let interior_count: usize = elemental
            .iter()
            .map(|s| s.len().saturating_sub(2))
            .sum();
        let global_interior = global.len() - 2;
        if global_interior != interior_count {
            mode = Mode::Relaxed;
            fell_back = true;
        }
    }

    let set = TimeSet {
        t0,
        tf,
        elemental,
        global,
        mode,
        fell_back_to_relaxed: fell_back,
    };
    for (e, s) in set.elemental.iter().enumerate() {
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::TimeSet(format!("element {e} set not strictly increasing")));
        }
    }
    Ok(set)
}
