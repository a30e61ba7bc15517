//! Asynchronous variational integrator: element-owned time sets, explicit
//! velocity kicks at interior elemental instants, and a closed-form
//! dissipative descriptor update using the precomputed successor instant.

use crate::assembly::{self, ElementMatrices};
use crate::error::{Error, Result};
use crate::material::Material;
use crate::mesh::{lumped_coefficients, Mesh, NodalCoefficients};
use crate::state::{InitialData, State, Trajectory};
use crate::timeset::TimeSet;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// One recorded rate jump at a nodal instant.
#[derive(Debug, Clone, Copy)]
pub struct Jump {
    pub time: f64,
    /// Owning element (smallest index on grouped coincident events).
    pub element: usize,
    pub node: usize,
    /// Euclidean norm of the displacement-rate jump.
    pub du: f64,
    /// Euclidean norm of the descriptor-rate jump.
    pub dnu: f64,
}

#[derive(Debug)]
pub struct AviResult {
    pub trajectory: Trajectory,
    pub jumps: Vec<Jump>,
    pub n_events: usize,
    pub warnings: Vec<String>,
}

/// Heap entry: next interior instant of an element. Ordered by time with an
/// element-index tie-break so coincident events pop in ascending order.
#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    element: usize,
    /// Index of `time` within the element's set.
    index: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.element == other.element
    }
}
impl Eq for Event {}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we want earliest-first.
        other
            .time
            .total_cmp(&self.time)
            .then(other.element.cmp(&self.element))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// CFL-style step ceiling: 0.5 sqrt(min nodal mass / stiffness bound).
/// Heuristic only; exceeding it produces a warning, never an error.
pub fn stability_ceiling(
    matrices: &ElementMatrices,
    mesh: &Mesh,
    coeffs: &NodalCoefficients,
) -> f64 {
    let min_mass = (0..mesh.n_nodes())
        .map(|a| coeffs.mass(a).min(coeffs.rho_bar_nodal(a)))
        .fold(f64::INFINITY, f64::min);
    let stiff = (0..mesh.n_elements())
        .map(|e| {
            matrices
                .hessian(e)
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |m, &l| m.max(l.abs()))
        })
        .fold(0.0f64, f64::max)
        * mesh.n_elements() as f64;
    if stiff <= 0.0 {
        f64::INFINITY
    } else {
        0.5 * (min_mass / stiff).sqrt()
    }
}

/// Runs the asynchronous integrator. Coincident elemental instants (relaxed
/// mode) are processed as one grouped update per node: impulses accumulate
/// over the group's elements in ascending element order before the rates
/// change, so synchronous elemental sets reproduce the synchronous scheme
/// exactly.
pub fn run(
    mesh: &Mesh,
    material: &Material,
    set: &TimeSet,
    init: &InitialData,
) -> Result<AviResult> {
    if !material.chi.is_scalar_quadratic() {
        return Err(Error::Integrator(
            "asynchronous integration requires the scalar quadratic co-energy".into(),
        ));
    }
    let rho_bar = material.chi.rho_bar().expect("scalar quadratic");
    let coeffs = lumped_coefficients(mesh, material.rho, rho_bar, material.eta)?;
    let matrices = assembly::precompute(mesh, material)?;

    let mut warnings = Vec::new();
    let metrics = set.metrics();
    let ceiling = stability_ceiling(&matrices, mesh, &coeffs);
    if metrics.t_theta > ceiling {
        warnings.push(format!(
            "largest elemental step {:.3e} exceeds the stability ceiling {:.3e}",
            metrics.t_theta, ceiling
        ));
    }

    let (d, k) = (mesh.dim(), mesh.desc_dim());
    let n_nodes = mesh.n_nodes();
    let t0 = set.t0();
    let tf = set.tf();

    let mut state = State::new(mesh, init, t0)?;
    let mut trajectory = Trajectory::new(d, k, t0, tf, n_nodes);
    for a in 0..n_nodes {
        trajectory.nodes[a].push(
            t0,
            state.u_node(a),
            state.nu_node(a),
            state.u_dot_node(a),
            state.nu_dot_node(a),
        );
    }

    // Nodal instants with owners, and a monotone cursor per node used to
    // look up the successor gap of the dissipative update.
    let nodal: Vec<Vec<(f64, usize)>> = (0..n_nodes).map(|a| set.nodal_times(mesh, a)).collect();
    let mut cursor = vec![0usize; n_nodes];

    let mut heap = BinaryHeap::new();
    for e in 0..set.n_elements() {
        if set.elemental(e).len() > 2 {
            heap.push(Event {
                time: set.elemental(e)[1],
                element: e,
                index: 1,
            });
        }
    }

    let mut jumps = Vec::new();
    let mut n_events = 0usize;
    // Scratch: accumulated impulses for the nodes touched by a group.
    let mut imp_u = vec![0.0f64; n_nodes * d];
    let mut imp_nu = vec![0.0f64; n_nodes * k];
    let mut touched: Vec<(usize, usize)> = Vec::new(); // (node, owner element)

    while let Some(first) = heap.pop() {
        let t = first.time;
        let mut group = vec![first];
        while let Some(next) = heap.peek() {
            if next.time == t {
                group.push(heap.pop().expect("peeked"));
            } else {
                break;
            }
        }
        n_events += group.len();
        state.time = t;

        // Advance every node the group touches, then evaluate all element
        // forces against the advanced positions.
        touched.clear();
        for ev in &group {
            for &a in mesh.element_nodes(ev.element) {
                if !touched.iter().any(|&(b, _)| b == a) {
                    touched.push((a, ev.element));
                    state.advance_node(a, t);
                }
            }
        }
        for ev in &group {
            let e = ev.element;
            let dt = set.elemental(e)[ev.index + 1] - t;
            let q = matrices.gather(mesh, &state, e);
            let f = matrices.force(e, &q);
            let w = d + k;
            for (loc, &a) in mesh.element_nodes(e).iter().enumerate() {
                for c in 0..d {
                    imp_u[a * d + c] += dt * f[loc * w + c];
                }
                for c in 0..k {
                    imp_nu[a * k + c] += dt * f[loc * w + d + c];
                }
            }
        }

        // One combined rate update per touched node.
        for &(a, owner) in &touched {
            let times = &nodal[a];
            while cursor[a] + 1 < times.len() && times[cursor[a] + 1].0 <= t {
                cursor[a] += 1;
            }
            debug_assert!(times[cursor[a]].0 == t, "event off the nodal grid");
            let delta = times
                .get(cursor[a] + 1)
                .map(|&(s, _)| s - t)
                .ok_or_else(|| Error::Integrator(format!("node {a} kicked at the final instant")))?;

            let mut du = 0.0f64;
            let mut dnu = 0.0f64;
            if !mesh.is_fixed_u(a) {
                let m_a = coeffs.mass(a);
                for c in 0..d {
                    let step = imp_u[a * d + c] / m_a;
                    state.u_dot[a * d + c] -= step;
                    du += step * step;
                }
            }
            if !mesh.is_fixed_nu(a) {
                let rb = coeffs.rho_bar_nodal(a);
                let et = coeffs.eta_nodal(a);
                let denom = rb + et * delta;
                for c in 0..k {
                    let old = state.nu_dot[a * k + c];
                    let new = (rb * old - imp_nu[a * k + c]) / denom;
                    state.nu_dot[a * k + c] = new;
                    dnu += (new - old) * (new - old);
                }
            }
            jumps.push(Jump {
                time: t,
                element: owner,
                node: a,
                du: du.sqrt(),
                dnu: dnu.sqrt(),
            });
            trajectory.nodes[a].push(
                t,
                state.u_node(a),
                state.nu_node(a),
                state.u_dot_node(a),
                state.nu_dot_node(a),
            );
            for c in 0..d {
                imp_u[a * d + c] = 0.0;
            }
            for c in 0..k {
                imp_nu[a * k + c] = 0.0;
            }
        }

        state.check_finite(group[0].element)?;

        // Re-enqueue each group element's next interior instant.
        for ev in &group {
            let s = set.elemental(ev.element);
            if ev.index + 2 < s.len() {
                heap.push(Event {
                    time: s[ev.index + 1],
                    element: ev.element,
                    index: ev.index + 1,
                });
            }
        }
    }

    for a in 0..n_nodes {
        state.advance_node(a, tf);
        trajectory.nodes[a].push(
            tf,
            state.u_node(a),
            state.nu_node(a),
            state.u_dot_node(a),
            state.nu_dot_node(a),
        );
    }

    Ok(AviResult {
        trajectory,
        jumps,
        n_events,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{ChiModel, ElasticForm, ExternalPotential, TractionField};
    use crate::mesh::{sample, Mesh};
    use crate::timeset::{build, Mode, Policy};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn free_material(mesh: &Mesh, q: DMatrix<f64>, g: Option<DVector<f64>>, eta: f64) -> Material {
        let (d, k) = (mesh.dim(), mesh.desc_dim());
        let n = d + k;
        let external = match g {
            Some(g) => ExternalPotential::new(d, k, DMatrix::zeros(n, n), g, 0.0).unwrap(),
            None => ExternalPotential::zero(d, k),
        };
        Material::new(
            ElasticForm::new(d, k, q).unwrap(),
            external,
            TractionField::zero(mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            eta,
        )
        .unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let mesh = sample::unit_square(1, vec![]);
        let material = free_material(&mesh, DMatrix::zeros(7, 7), None, 0.0);
        let set = build(&mesh, 0.0, 1.0, &Policy::Uniform { n: 10 }, Mode::Relaxed).unwrap();
        let out = run(&mesh, &material, &set, &InitialData::zero(&mesh)).unwrap();
        for h in &out.trajectory.nodes {
            assert!(h.u.iter().all(|&v| v == 0.0));
            assert!(h.nu.iter().all(|&v| v == 0.0));
            assert!(h.u_dot.iter().all(|&v| v == 0.0));
            assert!(h.nu_dot.iter().all(|&v| v == 0.0));
        }
        assert!(out.jumps.iter().all(|j| j.du == 0.0 && j.dnu == 0.0));
    }

    #[test]
    fn constant_force_telescopes() {
        // Constant load g on the u-channel, no stiffness: each of the n-1
        // interior kicks changes the rate by -h * g1 (the lumped mass and
        // the lumped load share the same nodal volume).
        let mesh = sample::reference_triangle(1);
        let g1 = 0.7;
        let material = free_material(
            &mesh,
            DMatrix::zeros(7, 7),
            Some(DVector::from_vec(vec![g1, 0.0, 0.0])),
            0.0,
        );
        let n = 10;
        let set = build(&mesh, 0.0, 1.0, &Policy::Uniform { n }, Mode::Relaxed).unwrap();
        let out = run(&mesh, &material, &set, &InitialData::zero(&mesh)).unwrap();
        let h = 1.0 / n as f64;
        let expected = -((n - 1) as f64) * h * g1;
        for a in 0..3 {
            assert_relative_eq!(
                out.trajectory.u_dot_at(a, 1.0)[0],
                expected,
                epsilon = 1e-12
            );
        }
        assert_eq!(out.n_events, n - 1);
    }

    #[test]
    fn dissipative_rate_update() {
        // rho_bar = eta densities cancel: with zero force and successor gap
        // 0.1, the first interior kick scales the rate by 1/1.1.
        let mesh = sample::reference_triangle(1);
        let material = Material::new(
            ElasticForm::new(2, 1, DMatrix::zeros(7, 7)).unwrap(),
            ExternalPotential::zero(2, 1),
            TractionField::zero(&mesh),
            1.0,
            ChiModel::ScalarQuadratic { rho_bar: 1.0 },
            1.0,
        )
        .unwrap();
        let set = build(&mesh, 0.0, 1.0, &Policy::Uniform { n: 10 }, Mode::Relaxed).unwrap();
        let init = InitialData::constant(&mesh, &[0.0; 2], &[0.0], &[0.0; 2], &[1.0]).unwrap();
        let out = run(&mesh, &material, &set, &init).unwrap();
        assert_relative_eq!(
            out.trajectory.nu_dot_at(0, 0.15)[0],
            1.0 / 1.1,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            out.trajectory.nu_dot_at(0, 0.25)[0],
            1.0 / 1.1_f64.powi(2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn momentum_conserved_for_gradient_energies() {
        let mesh = sample::unit_square(1, vec![]);
        let mut q = DMatrix::zeros(7, 7);
        for i in (0..4).chain(5..7) {
            q[(i, i)] = 1.0; // grad u and grad nu blocks only
        }
        let material = free_material(&mesh, q, None, 0.0);
        let set = build(
            &mesh,
            0.0,
            1.0,
            &Policy::Jittered {
                n: 100,
                seed: 9,
                max_ratio: 2.0,
            },
            Mode::Strict,
        )
        .unwrap();
        let mut init = InitialData::zero(&mesh);
        init.set_node_u(&mesh, 0, &[0.1, 0.0], &[1.0, -0.5]);
        init.set_node_u(&mesh, 2, &[0.0, 0.2], &[0.0, 0.8]);
        let out = run(&mesh, &material, &set, &init).unwrap();
        let coeffs = lumped_coefficients(&mesh, 1.0, 1.0, 0.0).unwrap();
        let momentum = |t: f64| -> [f64; 2] {
            let mut p = [0.0; 2];
            for a in 0..mesh.n_nodes() {
                let v = out.trajectory.u_dot_at(a, t);
                p[0] += coeffs.mass(a) * v[0];
                p[1] += coeffs.mass(a) * v[1];
            }
            p
        };
        let p0 = momentum(0.0);
        for &t in &[0.25, 0.5, 0.75, 1.0] {
            let p = momentum(t);
            assert_relative_eq!(p[0], p0[0], epsilon = 1e-12);
            assert_relative_eq!(p[1], p0[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_replay() {
        let mesh = sample::unit_square(1, vec![]);
        let material = free_material(&mesh, DMatrix::identity(7, 7), None, 0.5);
        let set = build(
            &mesh,
            0.0,
            1.0,
            &Policy::Jittered {
                n: 40,
                seed: 4,
                max_ratio: 2.0,
            },
            Mode::Strict,
        )
        .unwrap();
        let init = InitialData::constant(&mesh, &[0.1, 0.0], &[0.2], &[0.0, 0.0], &[0.0]).unwrap();
        let a = run(&mesh, &material, &set, &init).unwrap();
        let b = run(&mesh, &material, &set, &init).unwrap();
        for (ha, hb) in a.trajectory.nodes.iter().zip(&b.trajectory.nodes) {
            assert_eq!(ha.times, hb.times);
            assert_eq!(ha.u, hb.u);
            assert_eq!(ha.nu, hb.nu);
            assert_eq!(ha.u_dot, hb.u_dot);
            assert_eq!(ha.nu_dot, hb.nu_dot);
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
        let set = build(&mesh, 0.0, 1.0, &Policy::Uniform { n: 4 }, Mode::Relaxed).unwrap();
        assert!(run(&mesh, &material, &set, &InitialData::zero(&mesh)).is_err());
    }

    #[test]
    fn trajectory_chains_affinely() {
        let mesh = sample::unit_square(1, vec![]);
        let material = free_material(&mesh, DMatrix::identity(7, 7), None, 0.3);
        let set = build(
            &mesh,
            0.0,
            1.0,
            &Policy::Jittered {
                n: 30,
                seed: 8,
                max_ratio: 2.0,
            },
            Mode::Strict,
        )
        .unwrap();
        let init = InitialData::constant(&mesh, &[0.05, 0.0], &[0.1], &[0.0, 0.1], &[0.2]).unwrap();
        let out = run(&mesh, &material, &set, &init).unwrap();
        out.trajectory.check_affine_consistency(1e-10).unwrap();
    }
}
