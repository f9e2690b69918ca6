//! Command-line front end: model loading, frame lifting, detectability and
//! identifiability analysis, stealthy-attack synthesis, simulation, alarm
//! thresholds, and the bundled UAS demonstration experiments.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when `--strict` is set and
//! the analysis verdict is "vulnerable" (detectability) or "not
//! identifiable" (identifiability).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use liftguard::detect::{self, Verdict, Witness};
use liftguard::identify;
use liftguard::model::{lift, simulate, InputSource, LiftedPlant, ModeSystem};
use liftguard::synth::{self, AttackPlan};
use liftguard::{io, uas, Error, Result};

#[derive(Parser)]
#[command(
    name = "liftguard",
    version,
    about = "Attack detectability, identifiability, and stealthy-attack synthesis \
             for lifted multi-rate linear systems",
    after_help = "Set LIFTGUARD_LOG=debug (or trace/info/warn) for diagnostics."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model + schedule inputs shared by every analysis command.
#[derive(Args)]
struct PlantArgs {
    /// Path to the model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Path to the sensor-schedule JSON file.
    #[arg(long)]
    schedule: PathBuf,
}

impl PlantArgs {
    fn load(&self) -> Result<LiftedPlant> {
        let model = io::load_model(&self.model)?;
        let schedule = io::load_schedule(&self.schedule)?;
        lift(&model, &schedule)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the lifted frame model and write its matrices as CSV.
    Lift {
        #[command(flatten)]
        plant: PlantArgs,
        /// Output directory for the lifted matrices.
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze one attack mode: detectable or vulnerable (with witness).
    Detectability {
        #[command(flatten)]
        plant: PlantArgs,
        /// Attack mode to analyze.
        #[arg(long)]
        mode: String,
        /// Optional output directory for the report and subspace bases.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 2 when the verdict is "vulnerable".
        #[arg(long)]
        strict: bool,
    },
    /// Check pairwise discernibility of a set of attack modes.
    Identifiability {
        #[command(flatten)]
        plant: PlantArgs,
        /// Comma-separated list of attack modes.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        /// Optional output directory for the verdict report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 2 when the mode set is not identifiable.
        #[arg(long)]
        strict: bool,
    },
    /// Synthesize a certified stealthy attack for a vulnerable mode.
    Synth {
        #[command(flatten)]
        plant: PlantArgs,
        /// Attack mode to attack.
        #[arg(long)]
        mode: String,
        /// Stealth budget: the plan keeps every ||y_k|| at or below this.
        #[arg(long, default_value_t = 1e-3)]
        budget: f64,
        /// Target severity for the single-shot plan kinds.
        #[arg(long, default_value_t = 10.0)]
        severity: f64,
        /// Output directory for the plan JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a mode's deviation system, optionally under a saved plan.
    Simulate {
        #[command(flatten)]
        plant: PlantArgs,
        /// Attack mode driving the simulation.
        #[arg(long)]
        mode: String,
        /// Optional attack plan JSON (from `synth`); omitted = no attack.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Number of frames to simulate.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// RNG seed for the noise sequence.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-frame noise bound (0 = noise-free).
        #[arg(long, default_value_t = 0.0)]
        noise_bound: f64,
        /// Tolerance when checking the trace against the plan certificate.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Output directory for the trace CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute alarm thresholds (epsilon, delta) for a detectable mode.
    Thresholds {
        #[command(flatten)]
        plant: PlantArgs,
        /// Attack mode to calibrate.
        #[arg(long)]
        mode: String,
        /// Impulse-response truncation horizon.
        #[arg(long, default_value_t = 120)]
        horizon: usize,
        /// Optional output directory for the thresholds JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the bundled UAS case study (vulnerability, detection,
    /// identification) and write all traces and reports.
    UasDemo {
        /// RNG seed shared by the noise-driven experiments.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the experiment artifacts.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LIFTGUARD_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Lift { plant, out } => cmd_lift(&plant, &out),
        Command::Detectability {
            plant,
            mode,
            out,
            strict,
        } => cmd_detectability(&plant, &mode, out.as_deref(), strict),
        Command::Identifiability {
            plant,
            modes,
            out,
            strict,
        } => cmd_identifiability(&plant, &modes, out.as_deref(), strict),
        Command::Synth {
            plant,
            mode,
            budget,
            severity,
            out,
        } => cmd_synth(&plant, &mode, budget, severity, &out),
        Command::Simulate {
            plant,
            mode,
            plan,
            horizon,
            seed,
            noise_bound,
            tol,
            out,
        } => cmd_simulate(&plant, &mode, plan.as_deref(), horizon, seed, noise_bound, tol, &out),
        Command::Thresholds {
            plant,
            mode,
            horizon,
            out,
        } => cmd_thresholds(&plant, &mode, horizon, out.as_deref()),
        Command::UasDemo { seed, out } => cmd_uas_demo(seed, &out),
    }
}

fn cmd_lift(plant_args: &PlantArgs, out: &Path) -> Result<ExitCode> {
    let plant = plant_args.load()?;
    std::fs::create_dir_all(out)?;
    io::write_matrix_csv(&out.join("a.csv"), &plant.a)?;
    io::write_matrix_csv(&out.join("b_u.csv"), &plant.b_u)?;
    io::write_matrix_csv(&out.join("c.csv"), &plant.c)?;
    io::write_matrix_csv(&out.join("d_u.csv"), &plant.d_u)?;
    io::write_matrix_csv(&out.join("b_w.csv"), &plant.b_w)?;
    io::write_matrix_csv(&out.join("d_w.csv"), &plant.d_w)?;
    io::write_matrix_csv(&out.join("e.csv"), &plant.e)?;
    io::write_matrix_csv(&out.join("f_w.csv"), &plant.f_w)?;
    for mode in &plant.mode_ids {
        io::write_matrix_csv(&out.join(format!("b_a_{mode}.csv")), &plant.b_a[mode])?;
        io::write_matrix_csv(&out.join(format!("d_a_{mode}.csv")), &plant.d_a[mode])?;
        io::write_matrix_csv(&out.join(format!("f_a_{mode}.csv")), &plant.f_a[mode])?;
    }
    println!(
        "lifted: T={} state={} outputs={} modes=[{}] -> {}",
        plant.frame_period,
        plant.state_dim(),
        plant.output_dim(),
        plant.mode_ids.join(", "),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_detectability(
    plant_args: &PlantArgs,
    mode: &str,
    out: Option<&Path>,
    strict: bool,
) -> Result<ExitCode> {
    let plant = plant_args.load()?;
    let report = detect::analyze_detectability(&plant, mode)?;
    let verdict = match report.verdict {
        Verdict::Detectable => "detectable",
        Verdict::Vulnerable => "vulnerable",
    };
    let condition = report
        .triggered_condition
        .map(|c| format!("{c:?}"))
        .unwrap_or_else(|| "none".into());
    println!(
        "mode `{mode}`: {verdict} (condition: {condition}, dim V* = {})",
        report.geo.v_star.dim()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_json(&dir.join("detectability.json"), &io::report_to_file(&report))?;
        io::write_matrix_csv(&dir.join("v_basis.csv"), report.geo.v.basis())?;
        io::write_matrix_csv(&dir.join("controllable_basis.csv"), report.geo.c_space.basis())?;
        io::write_matrix_csv(&dir.join("v_star_basis.csv"), report.geo.v_star.basis())?;
        io::write_matrix_csv(&dir.join("friend_m.csv"), &report.geo.friend.m)?;
        io::write_matrix_csv(&dir.join("friend_n.csv"), &report.geo.friend.n_mat)?;
    }
    if strict && report.verdict == Verdict::Vulnerable {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_identifiability(
    plant_args: &PlantArgs,
    modes: &[String],
    out: Option<&Path>,
    strict: bool,
) -> Result<ExitCode> {
    if modes.is_empty() {
        return Err(Error::InvalidModel("--modes requires at least one mode".into()));
    }
    let plant = plant_args.load()?;
    let matrix = identify::check_identifiable(&plant, modes)?;
    for rep in &matrix.pairwise {
        println!(
            "pair ({}, {}): {}",
            rep.p,
            rep.q,
            if rep.discernible { "discernible" } else { "indiscernible" }
        );
    }
    println!(
        "mode set [{}]: {}",
        modes.join(", "),
        if matrix.identifiable { "identifiable" } else { "not identifiable" }
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_json(&dir.join("identifiability.json"), &io::identifiability_to_file(&matrix))?;
    }
    if strict && !matrix.identifiable {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(
    plant_args: &PlantArgs,
    mode: &str,
    budget: f64,
    severity: f64,
    out: &Path,
) -> Result<ExitCode> {
    let plant = plant_args.load()?;
    let sys = plant.mode_system(Some(mode))?;
    let report = detect::analyze_mode(&sys, mode)?;
    let plan = match &report.witness {
        None => {
            return Err(Error::InvalidModel(format!(
                "mode `{mode}` is detectable; no stealthy attack exists"
            )))
        }
        Some(Witness::KernelDirection(dir)) => synth::synth_condition_i(&sys, dir, severity)?,
        Some(Witness::SeverityResponse(w)) => {
            synth::synth_condition_ii(&sys, &report.geo.friend, w, severity)?
        }
        Some(Witness::Eigenspace(w)) => {
            synth::synth_condition_iii(&sys, &report.geo, w, budget)?
        }
    };
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("plan.json"), &plan)?;
    println!(
        "mode `{mode}`: synthesized {:?} plan (stealth bound {:.3e}) -> {}",
        plan.kind,
        plan.certificate.stealth_bound,
        out.join("plan.json").display()
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    plant_args: &PlantArgs,
    mode: &str,
    plan_path: Option<&Path>,
    horizon: usize,
    seed: u64,
    noise_bound: f64,
    tol: f64,
    out: &Path,
) -> Result<ExitCode> {
    let plant = plant_args.load()?;
    let sys = plant.mode_system(Some(mode))?;
    let plan: Option<AttackPlan> = match plan_path {
        Some(p) => Some(serde_json::from_reader(std::fs::File::open(p)?)?),
        None => None,
    };
    let attack = match &plan {
        Some(p) => InputSource::Policy(p),
        None => InputSource::Zero,
    };
    let noise_seq;
    let noise = if noise_bound > 0.0 {
        noise_seq = uas::noise_sequence(seed, horizon, sys.noise_dim(), noise_bound);
        InputSource::Sequence(&noise_seq)
    } else {
        InputSource::Zero
    };
    let x0 = DVector::zeros(sys.state_dim());
    let trace = simulate(&sys, &x0, &attack, &noise, horizon)?;
    std::fs::create_dir_all(out)?;
    io::write_trace_csv(&out.join("trace.csv"), &trace)?;
    println!(
        "simulated {horizon} frames: max ||y|| = {:.6e}, max ||z|| = {:.6e} -> {}",
        trace.max_y_norm(),
        trace.max_z_norm(),
        out.join("trace.csv").display()
    );
    if let Some(p) = &plan {
        check_certificate(&sys, p, &trace, noise_bound, tol);
    }
    Ok(ExitCode::SUCCESS)
}

/// Compare a noise-free trace against the plan's stealth certificate.
fn check_certificate(
    sys: &ModeSystem,
    plan: &AttackPlan,
    trace: &liftguard::model::SimulationTrace,
    noise_bound: f64,
    tol: f64,
) {
    if noise_bound > 0.0 {
        println!("certificate check skipped: trace includes noise");
        return;
    }
    let bound = plan.certificate.stealth_bound;
    let scale = bound.abs().max(1.0);
    let max_y = trace.max_y_norm();
    if max_y <= bound + tol * scale {
        println!("certificate holds: max ||y|| = {max_y:.6e} <= stealth bound {bound:.6e}");
    } else {
        println!(
            "certificate VIOLATED: max ||y|| = {max_y:.6e} > stealth bound {bound:.6e} \
             (tolerance {tol:.1e})"
        );
    }
    let _ = sys;
}

fn cmd_thresholds(
    plant_args: &PlantArgs,
    mode: &str,
    horizon: usize,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let plant = plant_args.load()?;
    let sys = plant.mode_system(Some(mode))?;
    let report = detect::analyze_mode(&sys, mode)?;
    let t = detect::compute_thresholds(&sys, &report, horizon)?;
    println!(
        "mode `{mode}`: epsilon = {:.6e}, delta = {:.6e} (over-approximation; \
         delta_bar = {:.6e}, delta_noise = {:.6e})",
        t.epsilon, t.delta, t.delta_bar, t.delta_noise
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_json(&dir.join("thresholds.json"), &io::thresholds_to_file(&t))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_uas_demo(seed: u64, out: &Path) -> Result<ExitCode> {
    std::fs::create_dir_all(out)?;
    let v = uas::experiment_vulnerability(Some(out))?;
    println!(
        "vulnerability: per-step mode `{}` is vulnerable; {:?} plan keeps \
         max ||y|| = {:.3e} while ||z_499|| = {:.3e}",
        v.report.mode,
        v.plan.kind,
        v.trace.max_y_norm(),
        v.trace.zs.last().map(|z| z.norm()).unwrap_or(0.0)
    );
    let d = uas::experiment_detection(seed, Some(out))?;
    println!(
        "detection: lifted mode `{}` is detectable; epsilon = {:.3e}, delta = {:.3e}, \
         noise-only alarm = {:?}, attack alarm frame = {:?}",
        d.report.mode,
        d.thresholds.epsilon,
        d.thresholds.delta,
        detect::alarm(&d.noise_trace, d.thresholds.epsilon),
        d.alarm_frame
    );
    let i = uas::experiment_identification(seed, Some(out))?;
    for (true_mode, hist) in &i.histories {
        println!(
            "identification: true mode `{true_mode}` -> estimate {:?}",
            hist.final_set
        );
    }
    println!(
        "identification: no attack -> estimate {:?}",
        i.no_attack_history.final_set
    );
    println!("artifacts written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
