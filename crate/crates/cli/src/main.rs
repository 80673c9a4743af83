//! Scenario-driven front end: every subcommand reads one scenario file,
//! writes CSV artifacts with a provenance header, and prints one
//! `key=value` summary line per metric.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::Matrix6;
use sha2::{Digest, Sha256};

use stokestrack_core::control::{
    basis_traction_table, build_control_basis, build_control_law, fit_controls_at_pose,
    BuildDiagnostics, ControlLaw, EvalMode,
};
use stokestrack_core::dynamics::{elementary_solutions, resistance_matrix};
use stokestrack_core::geometry::{BoundaryDiscretization, Pose, RigidState};
use stokestrack_core::sim::{free_run, switch_off_experiment, track, SimulationRecord};
use stokestrack_core::stokes::StokesSolver;
use stokestrack_core::{PatchTag, Scenario, StokesSolution};

#[derive(Parser)]
#[command(
    name = "stokestrack",
    about = "Trajectory tracking of a rigid body in a bounded Stokes flow"
)]
struct Cli {
    /// Scenario file (TOML)
    #[arg(long, global = true, default_value = "scenarios/default.toml")]
    scenario: PathBuf,
    /// Output directory for CSV artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's evaluation mode
    #[arg(long, global = true, value_parser = ["full", "fast"])]
    mode: Option<String>,
    /// Override the scenario's random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resistance matrix at the scenario's start pose, with drag oracle
    Resistance,
    /// Build the control law and report per-node fit diagnostics
    FitControls,
    /// Closed-loop tracking of the scenario trajectory
    Track,
    /// Uncontrolled dynamics from the trajectory's initial state
    FreeRun,
    /// Evaluate the gain along a free trajectory
    SwitchOff,
    /// Error decay under time-step and basis refinement
    Convergence,
}

struct Run {
    scenario: Scenario,
    provenance: String,
    out: PathBuf,
    mode: EvalMode,
}

impl Run {
    fn load(cli: &Cli) -> Result<Self> {
        let text = fs::read_to_string(&cli.scenario)
            .with_context(|| format!("reading scenario {}", cli.scenario.display()))?;
        let mut scenario = Scenario::from_toml(&text)
            .with_context(|| format!("invalid scenario {}", cli.scenario.display()))?;
        if let Some(mode) = &cli.mode {
            scenario.run.mode = mode.clone();
        }
        if let Some(seed) = cli.seed {
            scenario.run.seed = seed;
        }
        let hash = hex(&Sha256::digest(text.as_bytes()));
        let mut provenance = String::new();
        writeln!(provenance, "# scenario_sha256={hash}")?;
        writeln!(provenance, "# mode={} seed={}", scenario.run.mode, scenario.run.seed)?;
        writeln!(
            provenance,
            "# domain_radius={} gamma_cap={} delta={}",
            scenario.geometry.domain_radius, scenario.geometry.gamma_cap, scenario.geometry.delta
        )?;
        let mode = if scenario.run.mode == "full" {
            EvalMode::Full
        } else {
            EvalMode::Fast
        };
        Ok(Self {
            mode,
            scenario,
            provenance,
            out: cli.out.clone(),
        })
    }

    fn write_csv(&self, name: &str, header: &str, body: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, format!("{}{header}\n{body}", self.provenance))?;
        Ok(path)
    }

    fn build_law(&self) -> Result<(ControlLaw, BuildDiagnostics)> {
        let sc = &self.scenario;
        Ok(build_control_law(
            &sc.shape()?,
            &sc.domain()?,
            &sc.solver,
            sc.geometry.solid_resolution,
            sc.geometry.outer_resolution,
            sc.grid(),
            sc.control.basis_size,
            sc.control.bump_radius,
            sc.control.epsilon_rel,
            sc.bounds(),
        )?)
    }

    fn start_pose(&self) -> Result<Pose> {
        Ok(self.scenario.trajectory()?.sample(0.0).0)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn f(x: f64) -> String {
    format!("{x:.12e}")
}

fn solve_at(
    sc: &Scenario,
    pose: &Pose,
) -> Result<(Arc<BoundaryDiscretization>, StokesSolver, Vec<StokesSolution>, Matrix6<f64>)> {
    let shape = sc.shape()?;
    let domain = sc.domain()?;
    let disc = Arc::new(BoundaryDiscretization::assemble(
        &shape,
        pose,
        &domain,
        sc.geometry.solid_resolution,
        sc.geometry.outer_resolution,
    )?);
    let solver = StokesSolver::new(&shape, pose, &domain, disc.clone(), &sc.solver)?;
    let elem = elementary_solutions(&solver, pose)?;
    let k = resistance_matrix(&elem)?.k;
    Ok((disc, solver, elem.solutions, k))
}

fn cmd_resistance(run: &Run) -> Result<()> {
    let start = Instant::now();
    let pose = run.start_pose()?;
    let (_, _, _, k) = solve_at(&run.scenario, &pose)?;
    let eig = k.symmetric_eigen().eigenvalues;
    let a = run.scenario.shape()?.bounding_radius();
    let trans = (k[(0, 0)] + k[(1, 1)] + k[(2, 2)]) / 3.0;
    let rot = (k[(3, 3)] + k[(4, 4)] + k[(5, 5)]) / 3.0;
    let free_trans = 6.0 * std::f64::consts::PI * a;
    let free_rot = 8.0 * std::f64::consts::PI * a.powi(3);

    let mut body = String::new();
    for i in 0..6 {
        for j in 0..6 {
            writeln!(body, "K,{i},{j},{}", f(k[(i, j)]))?;
        }
    }
    for (i, e) in eig.iter().enumerate() {
        writeln!(body, "eigenvalue,{i},,{}", f(*e))?;
    }
    writeln!(body, "drag_deviation_translation,,,{}", f((trans - free_trans).abs() / free_trans))?;
    writeln!(body, "drag_deviation_rotation,,,{}", f((rot - free_rot).abs() / free_rot))?;
    let path = run.write_csv("resistance.csv", "quantity,i,j,value", &body)?;

    println!("artifact={}", path.display());
    println!("min_eigenvalue={}", f(eig.min()));
    println!("max_eigenvalue={}", f(eig.max()));
    println!("drag_deviation_translation={}", f((trans - free_trans).abs() / free_trans));
    println!("drag_deviation_rotation={}", f((rot - free_rot).abs() / free_rot));
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_fit_controls(run: &Run) -> Result<()> {
    let start = Instant::now();
    let (law, diag) = run.build_law()?;

    let mut body = String::new();
    for (i, node) in law.nodes.iter().enumerate() {
        writeln!(
            body,
            "{i},{},{},{},{},{},{},{}",
            f(node.coords[0]),
            f(node.coords[1]),
            f(node.coords[2]),
            f(node.fit_residual),
            f(node.min_eigenvalue),
            f(node.asymmetry),
            f(node.control_matrix_cond)
        )?;
    }
    let residuals = run.write_csv(
        "fit_residuals.csv",
        "node,h0,h1,h2,fit_residual,min_eigenvalue,asymmetry,control_matrix_cond",
        &body,
    )?;

    let mut log = String::new();
    for (i, rec) in diag.solve_records.iter().enumerate() {
        writeln!(log, "{i},{},{}", f(rec.residual), f(rec.condition_estimate))?;
    }
    let solve_log = run.write_csv("solve_log.csv", "solve,residual,condition_estimate", &log)?;

    fs::create_dir_all(&run.out)?;
    let archive = run.out.join("law.json");
    fs::write(&archive, serde_json::to_vec(&law)?)?;

    println!("artifact={}", residuals.display());
    println!("artifact={}", solve_log.display());
    println!("artifact={}", archive.display());
    println!("nodes={}", law.nodes.len());
    println!("eps_bar={}", f(law.eps_bar));
    println!(
        "max_solver_residual={}",
        f(diag
            .solve_records
            .iter()
            .map(|r| r.residual)
            .fold(0.0, f64::max))
    );
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn series_csv(record: &SimulationRecord) -> Result<String> {
    let mut body = String::new();
    for r in &record.rows {
        let mut line = vec![f(r.t)];
        line.extend(r.h.iter().map(|x| f(*x)));
        line.extend(r.rot.iter().map(|x| f(*x)));
        line.extend(r.linear.iter().map(|x| f(*x)));
        line.extend(r.angular.iter().map(|x| f(*x)));
        line.extend(r.mu.iter().map(|x| f(*x)));
        line.push(f(r.cost));
        line.push(f(r.position_error));
        line.push(f(r.rotation_error));
        line.push(f(r.linear_velocity_error));
        line.push(f(r.angular_velocity_error));
        writeln!(body, "{}", line.join(","))?;
    }
    Ok(body)
}

const SERIES_HEADER: &str = "t,h0,h1,h2,r00,r10,r20,r01,r11,r21,r02,r12,r22,v0,v1,v2,w0,w1,w2,mu1,mu2,mu3,mu4,mu5,mu6,cost,position_error,rotation_error,linear_velocity_error,angular_velocity_error";

fn cmd_track(run: &Run) -> Result<()> {
    let start = Instant::now();
    let (law, _) = run.build_law()?;
    let trajectory = run.scenario.trajectory()?;
    let record = track(
        &law,
        &trajectory,
        run.scenario.run.duration,
        run.scenario.run.dt,
        run.mode,
    )?;
    let path = run.write_csv("track.csv", SERIES_HEADER, &series_csv(&record)?)?;
    println!("artifact={}", path.display());
    println!("truncated={}", record.truncated);
    println!("sup_position_error={}", f(record.sup_position_error));
    println!("sup_rotation_error={}", f(record.sup_rotation_error));
    println!("sup_linear_velocity_error={}", f(record.sup_linear_velocity_error));
    println!("sup_angular_velocity_error={}", f(record.sup_angular_velocity_error));
    println!("max_cost={}", f(record.max_cost));
    println!("max_mu={}", f(record.max_mu));
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn initial_state(run: &Run) -> Result<RigidState> {
    let (pose, velocity, _) = run.scenario.trajectory()?.sample(0.0);
    Ok(RigidState { pose, velocity })
}

fn cmd_free_run(run: &Run) -> Result<()> {
    let start = Instant::now();
    let (law, _) = run.build_law()?;
    let initial = initial_state(run)?;
    let (rows, truncated) = free_run(
        &law,
        &initial,
        run.scenario.run.duration,
        run.scenario.run.dt,
    )?;
    let mut body = String::new();
    for r in &rows {
        let mut line = vec![f(r.t)];
        line.extend(r.state.pose.h.iter().map(|x| f(*x)));
        line.extend(r.state.pose.rot.iter().map(|x| f(*x)));
        line.extend(r.state.velocity.iter().map(|x| f(*x)));
        line.push(f(r.kinetic_energy));
        writeln!(body, "{}", line.join(","))?;
    }
    let path = run.write_csv(
        "free_run.csv",
        "t,h0,h1,h2,r00,r10,r20,r01,r11,r21,r02,r12,r22,v0,v1,v2,w0,w1,w2,kinetic_energy",
        &body,
    )?;
    println!("artifact={}", path.display());
    println!("truncated={truncated}");
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        println!("initial_energy={}", f(first.kinetic_energy));
        println!("final_energy={}", f(last.kinetic_energy));
    }
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_switch_off(run: &Run) -> Result<()> {
    let start = Instant::now();
    let (law, _) = run.build_law()?;
    let initial = initial_state(run)?;
    let report = switch_off_experiment(
        &law,
        &law,
        &initial,
        run.scenario.run.duration,
        run.scenario.run.dt,
    )?;
    let mut body = String::new();
    for (i, mu) in report.mu_norms.iter().enumerate() {
        writeln!(body, "{},{}", f(i as f64 * run.scenario.run.dt), f(*mu))?;
    }
    let path = run.write_csv("switch_off.csv", "t,mu_norm", &body)?;
    println!("artifact={}", path.display());
    println!("truncated={}", report.truncated);
    println!("max_mu={}", f(report.max_mu));
    println!("max_resistive_force={}", f(report.max_resistive_force));
    println!("max_momentum_rate={}", f(report.max_momentum_rate));
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_convergence(run: &Run) -> Result<()> {
    let start = Instant::now();
    let sc = &run.scenario;
    let (law, _) = run.build_law()?;
    let trajectory = sc.trajectory()?;

    let mut body = String::new();
    for level in 0..3 {
        let dt = sc.run.dt / 2f64.powi(level);
        let record = track(&law, &trajectory, sc.run.duration, dt, run.mode)?;
        writeln!(body, "timestep,{},{}", f(dt), f(record.sup_position_error))?;
    }

    // fit residual under nested basis refinement at the start pose
    let pose = run.start_pose()?;
    let (disc, solver, _, k) = solve_at(sc, &pose)?;
    let outer_nodes: Vec<_> = disc
        .nodes
        .iter()
        .filter(|n| n.tag != PatchTag::Solid)
        .cloned()
        .collect();
    let domain = sc.domain()?;
    let mut sizes = vec![6usize, 12, 24];
    if !sizes.contains(&sc.control.basis_size) {
        sizes.push(sc.control.basis_size);
        sizes.sort_unstable();
    }
    for n_b in sizes {
        let basis = build_control_basis(&domain, &outer_nodes, n_b, sc.control.bump_radius)?;
        let table = basis_traction_table(&solver, &basis, disc.solid_idx.len())?;
        let (_, residual) = fit_controls_at_pose(&table, &k, f64::INFINITY)?;
        writeln!(body, "basis,{},{}", f(n_b as f64), f(residual))?;
    }
    let path = run.write_csv("convergence.csv", "study,parameter,value", &body)?;
    println!("artifact={}", path.display());
    println!("eps_bar={}", f(law.eps_bar));
    println!("runtime_seconds={:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = Run::load(&cli).and_then(|run| match cli.command {
        Command::Resistance => cmd_resistance(&run),
        Command::FitControls => cmd_fit_controls(&run),
        Command::Track => cmd_track(&run),
        Command::FreeRun => cmd_free_run(&run),
        Command::SwitchOff => cmd_switch_off(&run),
        Command::Convergence => cmd_convergence(&run),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
