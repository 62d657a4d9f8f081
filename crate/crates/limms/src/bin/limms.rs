//! Command-line front end: FK/IK queries, dexterity maps, and scenario runs
//! with CSV traces and SVG plots.
//!
//! Exit codes: 0 success, 2 parse/config error, 3 out-of-limits input,
//! 4 limit violation during a run, 5 simulation abort.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Rotation3, Vector3};

use limms::ik::{solve_ik, IkSettings};
use limms::kinematics::{fk, traditional_chain, BaseEnd, JointVector, Pose, TRADITIONAL_LIMITS};
use limms::model::{load_config, nominal_params, ModuleParams, ScenarioKind};
use limms::sim::{self, SimError, Trace};
use limms::workspace::{
    center_axis_stats, dexterity_map, dexterity_map_chain, export_grid_csv, map_ik_settings,
    DexterityGrid, GridSpec,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_LIMITS: u8 = 3;
const EXIT_VIOLATION: u8 = 4;
const EXIT_ABORT: u8 = 5;

#[derive(Parser)]
#[command(name = "limms", version, about = "Kinematics, dexterity maps, and scenario simulation for a symmetric dual-base 6-DoF module")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward kinematics for a joint configuration.
    Fk(FkArgs),
    /// Inverse kinematics for a target pose.
    Ik(IkArgs),
    /// Dexterity map over a voxel grid.
    Dexterity(DexterityArgs),
    /// Run a scenario from a config file.
    Run(RunArgs),
    /// List parameter presets and scenario kinds.
    Presets,
}

#[derive(Args)]
struct FkArgs {
    /// Parameter preset: `nominal` or `traditional`.
    #[arg(long, default_value = "nominal")]
    preset: String,
    /// Six comma-separated joint angles in rad.
    #[arg(long, value_parser = parse_joints)]
    q: JointVector6,
    /// Base end: A or B.
    #[arg(long, default_value = "A", value_parser = parse_base)]
    base: BaseEnd,
}

#[derive(Args)]
struct IkArgs {
    #[arg(long, default_value = "nominal")]
    preset: String,
    /// Target position `x,y,z` in m (base frame).
    #[arg(long, value_parser = parse_vec3)]
    pos: Vec3Arg,
    /// Target orientation as a rotation vector `rx,ry,rz` in rad.
    #[arg(long, default_value = "0,0,0", value_parser = parse_vec3)]
    rotvec: Vec3Arg,
    #[arg(long, default_value = "A", value_parser = parse_base)]
    base: BaseEnd,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DexterityArgs {
    /// Parameter preset: `limms` or `traditional`.
    #[arg(long, default_value = "limms")]
    preset: String,
    /// Cube side length of the mapped region, m.
    #[arg(long, default_value_t = 1.6)]
    extent: f64,
    /// Voxel edge length, m.
    #[arg(long, default_value_t = 0.05)]
    voxel: f64,
    /// Orientation samples per voxel.
    #[arg(long = "n-orient", default_value_t = 72)]
    n_orient: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "dexterity.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config TOML.
    config: PathBuf,
    /// Output directory for traces, metadata, and plots.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug)]
struct JointVector6(JointVector);

#[derive(Clone, Copy, Debug)]
struct Vec3Arg(Vector3<f64>);

fn parse_joints(s: &str) -> Result<JointVector6, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 6 {
        return Err(format!("--q needs 6 comma-separated angles, got {}", parts.len()));
    }
    let mut q = [0.0; 6];
    for (i, p) in parts.iter().enumerate() {
        q[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("--q component {}: {e}", i + 1))?;
    }
    Ok(JointVector6(q))
}

fn parse_vec3(s: &str) -> Result<Vec3Arg, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected 3 comma-separated values, got {}", parts.len()));
    }
    let mut v = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("component {}: {e}", i + 1))?;
    }
    Ok(Vec3Arg(Vector3::new(v[0], v[1], v[2])))
}

fn parse_base(s: &str) -> Result<BaseEnd, String> {
    match s {
        "A" | "a" => Ok(BaseEnd::EndA),
        "B" | "b" => Ok(BaseEnd::EndB),
        other => Err(format!("--base must be A or B, got {other:?}")),
    }
}

fn module_preset(name: &str) -> Result<ModuleParams, String> {
    match name {
        "nominal" => Ok(nominal_params()),
        other => Err(format!("unknown preset {other:?}; try `limms presets`")),
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("LIMMS_SIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn print_pose(pose: &Pose) {
    println!("rotation:");
    let m = pose.rotation.matrix();
    for r in 0..3 {
        println!(
            "  [{:+.9} {:+.9} {:+.9}]",
            m[(r, 0)],
            m[(r, 1)],
            m[(r, 2)]
        );
    }
    println!(
        "translation: [{:.9}, {:.9}, {:.9}] m",
        pose.translation.x, pose.translation.y, pose.translation.z
    );
}

fn cmd_fk(args: &FkArgs) -> ExitCode {
    let params = match module_preset(&args.preset) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match fk(&params, &args.q.0, args.base) {
        Ok(pose) => {
            print_pose(&pose);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_LIMITS)
        }
    }
}

fn cmd_ik(args: &IkArgs) -> ExitCode {
    let params = match module_preset(&args.preset) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let rotvec = args.rotvec.0;
    let rotation = if rotvec.norm() > 0.0 {
        Rotation3::from_scaled_axis(rotvec)
    } else {
        Rotation3::identity()
    };
    let target = Pose::new(rotation, args.pos.0);
    let settings = IkSettings {
        seed: args.seed,
        ..Default::default()
    };
    match solve_ik(&params, &target, args.base, &settings, None) {
        Ok(result) => {
            println!(
                "converged: {} (iters {}, pos err {:.3e} m, rot err {:.3e} rad)",
                result.converged, result.iters, result.final_pos_err, result.final_rot_err
            );
            println!(
                "q: [{}]",
                result
                    .q
                    .iter()
                    .map(|v| format!("{v:.9}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            if result.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ABORT)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn build_grid(args: &DexterityArgs) -> Result<DexterityGrid, String> {
    if !(args.voxel > 0.0) || !(args.extent > 0.0) || args.extent < args.voxel {
        return Err(format!(
            "invalid grid: extent {} m, voxel {} m",
            args.extent, args.voxel
        ));
    }
    let spec = GridSpec::centered_cube(args.extent, args.voxel);
    let settings = map_ik_settings();
    let grid = match args.preset.as_str() {
        "limms" => dexterity_map(
            &nominal_params(),
            BaseEnd::EndA,
            &spec,
            args.n_orient,
            &settings,
            args.seed,
        ),
        "traditional" => {
            let chain = traditional_chain();
            let reach = chain.max_reach(&TRADITIONAL_LIMITS, 9);
            dexterity_map_chain(
                &chain,
                &TRADITIONAL_LIMITS,
                reach,
                &spec,
                args.n_orient,
                &settings,
                args.seed,
            )
        }
        other => return Err(format!("unknown preset {other:?}; try `limms presets`")),
    }
    .map_err(|e| e.to_string())?;
    Ok(grid)
}

fn cmd_dexterity(args: &DexterityArgs) -> ExitCode {
    init_thread_pool();
    let t0 = Instant::now();
    let grid = match build_grid(args) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = export_grid_csv(&grid, &args.preset, &args.out) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let half = 0.5 * args.extent;
    let (axis_mean, axis_nonzero) = center_axis_stats(&grid, -half, half);
    let total_mean = grid.values.iter().sum::<f64>() / grid.values.len() as f64;
    println!("preset: {}", args.preset);
    println!("voxels: {} ({} orientations each)", grid.values.len(), args.n_orient);
    println!("center-axis mean dexterity: {axis_mean:.4} ({:.1}% nonzero)", 100.0 * axis_nonzero);
    println!("overall mean dexterity: {total_mean:.4}");
    println!("wrote {} (+ sidecar) in {:.1?}", args.out.display(), t0.elapsed());
    ExitCode::SUCCESS
}

fn run_report(scenario: ScenarioKind, trace: &Trace, wall: std::time::Duration, outputs: &[PathBuf]) -> bool {
    let peak_tau = trace.peak_abs_torque();
    let peak_qd = trace.peak_abs_velocity();
    let pass = trace.saturation_events == 0;
    println!("scenario: {scenario}");
    println!("wall time: {wall:.1?}");
    println!(
        "peak |tau| per joint (N*m): [{}]",
        peak_tau.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", ")
    );
    println!(
        "peak |qd| per joint (rad/s): [{}]",
        peak_qd.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
    );
    println!("saturation events: {}", trace.saturation_events);
    for event in &trace.events {
        println!("event: {event}");
    }
    for path in outputs {
        println!("wrote: {}", path.display());
    }
    println!("result: {}", if pass { "pass" } else { "fail (limit violation)" });
    pass
}

/// Minimal SVG line plot of one column family (torque or velocity) vs time.
fn write_svg_plot(
    trace: &Trace,
    module_filter: usize,
    select: impl Fn(&limms::sim::TraceRow) -> [f64; 6],
    title: &str,
    path: &PathBuf,
) -> std::io::Result<()> {
    const W: f64 = 860.0;
    const H: f64 = 420.0;
    const M: f64 = 50.0;
    let rows: Vec<&limms::sim::TraceRow> =
        trace.rows.iter().filter(|r| r.module == module_filter).collect();
    if rows.is_empty() {
        return Ok(());
    }
    let t_max = rows.last().unwrap().t_s.max(1e-9);
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for r in &rows {
        for v in select(r) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |t: f64| M + (W - 2.0 * M) * t / t_max;
    let y = |v: f64| H - M - (H - 2.0 * M) * (v - lo) / (hi - lo);
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    );
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"#888\"/>\n",
        H - M,
        W - M,
        H - M,
        H - M
    ));
    if lo < 0.0 && hi > 0.0 {
        svg.push_str(&format!(
            "<line x1=\"{M}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#ccc\" stroke-dasharray=\"4\"/>\n",
            y(0.0),
            W - M
        ));
    }
    let stride = (rows.len() / 800).max(1);
    for j in 0..6 {
        let mut points = String::new();
        for r in rows.iter().step_by(stride) {
            let v = select(r)[j];
            points.push_str(&format!("{:.1},{:.1} ", x(r.t_s), y(v)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            colors[j],
            points.trim_end()
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">j{}</text>\n",
            W - M + 6.0,
            M + 14.0 * j as f64,
            colors[j],
            j + 1
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    init_thread_pool();
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let t0 = Instant::now();
    let result = match cfg.scenario {
        ScenarioKind::DualLift => sim::dual_lift::run_dual_lift(&cfg),
        ScenarioKind::QuadrupedTrot => sim::trot::run_quadruped_trot(&cfg),
        ScenarioKind::WheelBalance => sim::balance::run_wheel_balance(&cfg),
        ScenarioKind::DexterityMap => {
            eprintln!("error: use the `dexterity` subcommand for dexterity maps");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let trace = match result {
        Ok(t) => t,
        Err(e @ (SimError::Config(_) | SimError::Control(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("simulation aborted: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
    };
    let wall = t0.elapsed();
    if let Err(e) = std::fs::create_dir_all(&args.out_dir) {
        eprintln!("error: cannot create {}: {e}", args.out_dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let stem = cfg.scenario.to_string();
    let csv_path = args.out_dir.join(format!("{stem}.csv"));
    if let Err(e) = trace.write_csv(&cfg, &csv_path) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let torque_path = args.out_dir.join(format!("{stem}_torque.svg"));
    let velocity_path = args.out_dir.join(format!("{stem}_velocity.svg"));
    let plot = write_svg_plot(&trace, 0, |r| r.tau, "Joint torques (N*m) vs t (s)", &torque_path)
        .and_then(|_| {
            write_svg_plot(
                &trace,
                0,
                |r| r.qd,
                "Joint velocities (rad/s) vs t (s)",
                &velocity_path,
            )
        });
    if let Err(e) = plot {
        eprintln!("error writing plots: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let outputs = [
        csv_path.clone(),
        csv_path.with_extension("meta.toml"),
        torque_path,
        velocity_path,
    ];
    let pass = run_report(cfg.scenario, &trace, wall, &outputs);
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn cmd_presets() -> ExitCode {
    println!("module presets:");
    println!("  nominal      symmetric dual-base module (reach 0.75 m, 31 N*m, 2 rad/s)");
    println!("  traditional  fixed-base arm with offset wrist (dexterity comparisons only)");
    println!("scenarios (config `scenario = ...`):");
    for kind in [
        ScenarioKind::DualLift,
        ScenarioKind::QuadrupedTrot,
        ScenarioKind::WheelBalance,
    ] {
        println!("  {kind}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fk(args) => cmd_fk(args),
        Command::Ik(args) => cmd_ik(args),
        Command::Dexterity(args) => cmd_dexterity(args),
        Command::Run(args) => cmd_run(args),
        Command::Presets => cmd_presets(),
    }
}
