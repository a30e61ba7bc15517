//! Batch driver: run an integrator from a config file, study convergence,
//! validate model assumptions, or inspect a mesh.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use cbvi::config::{IntegratorChoice, RunConfig};
use cbvi::diagnostics::{self, IntegratorKind};
use cbvi::material::Material;
use cbvi::mesh::{self, lumped_coefficients, Mesh};
use cbvi::state::{InitialData, Trajectory};
use cbvi::timeset::{self, TimeSet};
use cbvi::{assembly, avi, sync, validate, Error};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cbvi", version, about = "Variational integrators for complex-body dynamics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured integrator and write the trajectory CSV.
    Run { config: PathBuf },
    /// Refinement study across doubled step counts.
    Converge {
        config: PathBuf,
        /// Number of refinement levels (at least 3).
        #[arg(long)]
        levels: usize,
    },
    /// Check model assumptions and report computed constants.
    Validate { config: PathBuf },
    /// Print mesh statistics.
    MeshInfo { mesh: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integrator(_) | Error::NonFinite { .. } | Error::NoConvergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config } => cmd_run(&config),
        Cmd::Converge { config, levels } => cmd_converge(&config, levels),
        Cmd::Validate { config } => cmd_validate(&config),
        Cmd::MeshInfo { mesh } => cmd_mesh_info(&mesh),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Problem {
    cfg: RunConfig,
    mesh: Mesh,
    material: Material,
    init: InitialData,
}

fn load_problem(path: &Path) -> Result<Problem, Error> {
    let cfg = RunConfig::load(path)?;
    let mesh = cfg.load_mesh()?;
    let material = cfg.build_material(&mesh)?;
    let init = cfg.build_initial(&mesh, &material)?;
    Ok(Problem {
        cfg,
        mesh,
        material,
        init,
    })
}

fn integrate(p: &Problem, set: &TimeSet) -> Result<(Trajectory, Vec<String>, usize), Error> {
    match p.cfg.integrator {
        IntegratorChoice::Avi => {
            let out = avi::run(&p.mesh, &p.material, set, &p.init)?;
            Ok((out.trajectory, out.warnings, out.n_events))
        }
        IntegratorChoice::Sync => {
            let out = sync::run(&p.mesh, &p.material, set, &p.init, &p.cfg.sync)?;
            let steps = set.global().len().saturating_sub(2);
            Ok((out.trajectory, out.warnings, steps))
        }
    }
}

fn cmd_run(path: &Path) -> Result<(), Error> {
    let p = load_problem(path)?;
    let set = timeset::build(
        &p.mesh,
        p.cfg.t0,
        p.cfg.tf,
        &p.cfg.timeset_policy(),
        p.cfg.timeset.mode,
    )?;
    let (trajectory, warnings, n_events) = integrate(&p, &set)?;

    std::fs::create_dir_all(&p.cfg.output_dir)?;
    let csv_path = p.cfg.output_dir.join("trajectory.csv");
    std::fs::write(&csv_path, trajectory.to_csv())?;

    let metrics = set.metrics();
    let coeffs = lumped_coefficients(
        &p.mesh,
        p.material.rho,
        p.material.rho_bar_density(),
        p.material.eta,
    )?;
    let matrices = assembly::precompute(&p.mesh, &p.material)?;
    let final_energy =
        diagnostics::energy(&p.mesh, &p.material, &matrices, &coeffs, &trajectory, p.cfg.tf)?;

    println!(
        "integrator = {}",
        match p.cfg.integrator {
            IntegratorChoice::Avi => "avi",
            IntegratorChoice::Sync => "sync",
        }
    );
    println!("T_theta = {:.6e}", metrics.t_theta);
    println!("tau_theta = {:.6e}", metrics.tau_theta);
    println!("events = {n_events}");
    println!("final_energy = {:.9e}", final_energy.total);
    println!("trajectory = {}", csv_path.display());
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn thread_cap(levels: usize) -> usize {
    std::env::var("AVI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(levels)
}

fn cmd_converge(path: &Path, levels: usize) -> Result<(), Error> {
    if levels < 3 {
        return Err(Error::Config {
            key: "levels".into(),
            msg: format!("a study needs at least 3 levels, got {levels}"),
        });
    }
    let p = load_problem(path)?;
    let kind = match p.cfg.integrator {
        IntegratorChoice::Avi => IntegratorKind::Avi {
            seed: p.cfg.timeset.seed.unwrap_or(p.cfg.seed),
            max_ratio: p.cfg.timeset.max_ratio,
        },
        IntegratorChoice::Sync => IntegratorKind::Sync(p.cfg.sync),
    };
    let report = diagnostics::convergence_study(
        &p.mesh,
        &p.material,
        &p.init,
        p.cfg.t0,
        p.cfg.tf,
        &kind,
        p.cfg.timeset.n,
        levels,
        thread_cap(levels),
    )?;

    std::fs::create_dir_all(&p.cfg.output_dir)?;
    let csv_path = p.cfg.output_dir.join("convergence.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    print!("{}", report.to_csv());
    println!("# report = {}", csv_path.display());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Error> {
    let p = load_problem(path)?;
    let report = validate::validate(&p.mesh, &p.material, p.cfg.seed)?;
    print!("{}", report.render());
    println!("result: {}", if report.all_pass() { "PASS" } else { "FAIL" });
    Ok(())
}

fn cmd_mesh_info(path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    let mesh = mesh::load_mesh(&text)?;
    println!("dim = {}", mesh.dim());
    println!("descriptor_dim = {}", mesh.desc_dim());
    println!("nodes = {}", mesh.n_nodes());
    println!("elements = {}", mesh.n_elements());
    println!("total_volume = {:.9e}", mesh.total_volume());
    println!("boundary_facets = {}", mesh.boundary().len());
    for (i, f) in mesh.boundary().iter().enumerate() {
        println!(
            "  facet {i}: nodes {:?} marker {} measure {:.6e}",
            f.nodes,
            f.marker.as_str(),
            f.measure
        );
    }
    Ok(())
}
