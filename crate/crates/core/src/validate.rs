//! Whole-problem validation: model constants, mesh shape-function
//! identities, and sampled strong monotonicity of the per-step map.

use crate::error::Result;
use crate::material::{validate_assumptions, AssumptionReport, Material, SamplingOptions};
use crate::mesh::{lumped_coefficients, Mesh};
use crate::sync::{PsiContext, Quadrature};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub assumptions: AssumptionReport,
    pub lines: Vec<CheckLine>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    /// One line per check, stable prefixes for downstream parsing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&format!(
                "{} {:<22} {}\n",
                if l.pass { "PASS" } else { "FAIL" },
                l.name,
                l.detail
            ));
        }
        out.push_str(&format!(
            "     constants             lambda={:.6e} Lambda={:.6e} Xi1={:.6e} gamma={:.6e} Xi={:.6e} Xi2={:.6e} T0={:.6e}\n",
            self.assumptions.lambda,
            self.assumptions.big_lambda,
            self.assumptions.xi1,
            self.assumptions.gamma,
            self.assumptions.xi,
            self.assumptions.xi2,
            self.assumptions.t0,
        ));
        out
    }
}

/// Shape-function identities at random interior points: values sum to one,
/// gradients sum to zero.
fn mesh_checks(mesh: &Mesh, rng: &mut ChaCha8Rng, lines: &mut Vec<CheckLine>) {
    let d = mesh.dim();
    let mut worst_pu = 0.0f64;
    let mut worst_grad = 0.0f64;
    for e in 0..mesh.n_elements() {
        for _ in 0..5 {
            // Random barycentric point, mapped to physical coordinates.
            let mut bary: Vec<f64> = (0..d + 1).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = bary.iter().sum();
            bary.iter_mut().for_each(|b| *b /= s);
            let mut x = vec![0.0; d];
            for (loc, &a) in mesh.element_nodes(e).iter().enumerate() {
                for c in 0..d {
                    x[c] += bary[loc] * mesh.node(a)[c];
                }
            }
            let vals = mesh.shape_values(e, &x);
            worst_pu = worst_pu.max((vals.iter().sum::<f64>() - 1.0).abs());
            for c in 0..d {
                let g: f64 = (0..d + 1).map(|loc| mesh.local_gradient(e, loc)[c]).sum();
                worst_grad = worst_grad.max(g.abs());
            }
        }
    }
    lines.push(CheckLine {
        name: "mesh.partition_of_unity",
        pass: worst_pu <= 1e-12,
        detail: format!("max |sum N_a - 1| = {worst_pu:.3e}"),
    });
    lines.push(CheckLine {
        name: "mesh.gradient_sum_zero",
        pass: worst_grad <= 1e-12,
        detail: format!("max |sum grad N_a| = {worst_grad:.3e}"),
    });
    let min_vol = (0..mesh.n_elements())
        .map(|e| mesh.volume(e))
        .fold(f64::INFINITY, f64::min);
    lines.push(CheckLine {
        name: "mesh.positive_volumes",
        pass: min_vol > 0.0,
        detail: format!("min |K| = {min_vol:.3e}"),
    });
}

/// Sampled strong monotonicity of the per-step map at half the predicted
/// invertibility window.
fn monotonicity_check(
    mesh: &Mesh,
    material: &Material,
    t0_window: f64,
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<CheckLine>,
) -> Result<()> {
    let coeffs = lumped_coefficients(mesh, material.rho, material.rho_bar_density(), material.eta)?;
    let dt = 0.5 * t0_window;
    let m = mesh.n_nodes() * mesh.desc_dim();
    let ctx = PsiContext::new(
        mesh,
        &material.chi,
        &coeffs,
        Quadrature::Vertex,
        -dt,
        0.0,
        dt,
        vec![0.1; m],
        vec![0.0; m],
    )?;
    let gamma = material.chi.gamma();
    let mut min_margin = f64::INFINITY;
    for _ in 0..100 {
        let x = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let diff = &x - &y;
        let gap = (ctx.eval(&x)? - ctx.eval(&y)?).dot(&diff)
            - 0.5 * gamma * diff.norm_squared();
        min_margin = min_margin.min(gap);
    }
    lines.push(CheckLine {
        name: "psi.strong_monotonicity",
        pass: min_margin >= -1e-9,
        detail: format!(
            "min margin over 100 pairs at dt = {dt:.3e}: {min_margin:.3e}"
        ),
    });
    Ok(())
}

/// Full validation suite; failures are report lines, not errors.
pub fn validate(mesh: &Mesh, material: &Material, seed: u64) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assumptions = validate_assumptions(
        material,
        SamplingOptions {
            seed,
            ..SamplingOptions::default()
        },
    );
    let mut lines = Vec::new();
    mesh_checks(mesh, &mut rng, &mut lines);
    lines.push(CheckLine {
        name: "elastic.coercive",
        pass: assumptions.coercive,
        detail: format!(
            "lambda = {:.6e}, Lambda = {:.6e}",
            assumptions.lambda, assumptions.big_lambda
        ),
    });
    lines.push(CheckLine {
        name: "potential.growth",
        pass: assumptions.potential_growth,
        detail: format!("Xi1 = {:.6e}, Xi2 = {:.6e}", assumptions.xi1, assumptions.xi2),
    });
    lines.push(CheckLine {
        name: "chi.hessian_bounded",
        pass: assumptions.chi_hessian_bounded,
        detail: format!("Xi = {:.6e}", assumptions.xi),
    });
    lines.push(CheckLine {
        name: "chi.convex",
        pass: assumptions.chi_convex,
        detail: format!("gamma = {:.6e}", assumptions.gamma),
    });
    lines.push(CheckLine {
        name: "psi.window",
        pass: assumptions.t0 > 0.0,
        detail: format!("T0 = 2*gamma/(2*Xi+gamma) = {:.6e}", assumptions.t0),
    });
    if assumptions.chi_convex && assumptions.t0 > 0.0 {
        monotonicity_check(mesh, material, assumptions.t0, &mut rng, &mut lines)?;
    }
    Ok(ValidationReport { assumptions, lines })
}
