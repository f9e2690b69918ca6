//! Two-dimensional UAS navigation fixture and its three demonstration
//! experiments: per-step vulnerability with a synthesized stealthy attack,
//! detection after lifting in a secure low-rate off-board sensor, and
//! two-mode spoof identification.
//!
//! The vehicle tracks a reference with an observer-based controller; GPS
//! position measurements are spoofable. States stack plant deviation
//! (position, velocity) and observer deviation. On-board monitoring sees
//! the GPS measurement and the observer state every step; a secure
//! off-board position measurement arrives once per five steps.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::detect::{self, DetectabilityReport, Thresholds, Verdict, Witness};
use crate::error::{Error, Result};
use crate::identify::{
    build_residual_bank, calibrate_identification_thresholds, check_identifiable,
    run_identification, IdentifiabilityMatrix, IdentificationHistory,
};
use crate::io;
use crate::linalg;
use crate::model::{
    lift, simulate, InputSource, LiftedPlant, NominalModel, SensorSchedule, SensorSpec,
    SimulationTrace,
};
use crate::synth::{self, AttackPlan};

/// Full-attack mode id (north and east spoofed together).
pub const MODE_BOTH: &str = "both";
/// North-position spoof only.
pub const MODE_NORTH: &str = "north";
/// East-position spoof only.
pub const MODE_EAST: &str = "east";

#[derive(Debug, Clone)]
pub struct UasScenario {
    pub dt: f64,
    pub a_o: DMatrix<f64>,
    pub b_o: DMatrix<f64>,
    pub l_o: DMatrix<f64>,
    pub c_o: DMatrix<f64>,
    pub k_o: DMatrix<f64>,
    /// 8-state deviation model with on-board (GPS + observer state) and
    /// off-board (secure position) sensors and modes both/north/east.
    pub model: NominalModel,
    /// One step per frame, on-board sensor only.
    pub per_step_schedule: SensorSchedule,
    /// Five steps per frame: on-board every step, off-board once.
    pub lifted_schedule: SensorSchedule,
}

/// Build the fixture with the published gains.
pub fn scenario() -> UasScenario {
    let dt = 0.1;
    let i2 = DMatrix::identity(2, 2);
    let z2 = DMatrix::zeros(2, 2);
    let a_o = linalg::block2x2(&i2, &(dt * &i2), &z2, &i2);
    let b_o = linalg::vcat(&[dt * dt / 2.0 * &i2, dt * &i2]);
    let l_o = linalg::vcat(&[1.09 * &i2, 0.94 * &i2]);
    let c_o = linalg::hcat(&[i2.clone(), z2.clone()]);
    let k_o = linalg::hcat(&[9.89 * &i2, 7.24 * &i2]);

    let bk = &b_o * &k_o;
    let lc = &l_o * &c_o;
    let a_hat = linalg::block2x2(&a_o, &(-&bk), &lc, &(&a_o - &bk - &lc));
    let b_u_hat = linalg::vcat(&[bk.clone(), bk.clone()]);
    let e_hat = linalg::hcat(&[i2.clone(), DMatrix::zeros(2, 6)]);
    let b_w = {
        let z42 = DMatrix::zeros(4, 2);
        linalg::block2x2(&b_o, &z42, &z42, &l_o)
    };

    // attack channels per mode: the spoof enters the observer through L_o
    // and the on-board GPS measurement directly; single-axis modes zero the
    // other column so all modes share input width 2
    let b_a_full = linalg::vcat(&[DMatrix::zeros(4, 2), l_o.clone()]);
    let d_a_full = linalg::vcat(&[i2.clone(), DMatrix::zeros(4, 2)]);
    let select = |m: &DMatrix<f64>, col: usize| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        out.set_column(col, &m.column(col));
        out
    };
    let mut b_a = BTreeMap::new();
    let mut d_a_onboard = BTreeMap::new();
    let mut d_a_offboard = BTreeMap::new();
    for (mode, cols) in [
        (MODE_BOTH, None),
        (MODE_NORTH, Some(0usize)),
        (MODE_EAST, Some(1usize)),
    ] {
        let (b, d) = match cols {
            None => (b_a_full.clone(), d_a_full.clone()),
            Some(c) => (select(&b_a_full, c), select(&d_a_full, c)),
        };
        b_a.insert(mode.to_string(), b);
        d_a_onboard.insert(mode.to_string(), d);
        d_a_offboard.insert(mode.to_string(), DMatrix::zeros(2, 2));
    }

    // on-board monitoring: GPS measurement and observer state
    let c_onboard = {
        let top = linalg::hcat(&[c_o.clone(), DMatrix::zeros(2, 4)]);
        let bottom = linalg::hcat(&[DMatrix::zeros(4, 4), DMatrix::identity(4, 4)]);
        linalg::vcat(&[top, bottom])
    };
    let d_w_onboard = {
        let top = linalg::hcat(&[DMatrix::zeros(2, 2), i2.clone()]);
        linalg::vcat(&[top, DMatrix::zeros(4, 4)])
    };
    let onboard = SensorSpec {
        c: c_onboard,
        d_u: DMatrix::zeros(6, 4),
        d_a: d_a_onboard,
        d_w: d_w_onboard,
    };
    // secure off-board position measurement
    let offboard = SensorSpec {
        c: linalg::hcat(&[c_o.clone(), DMatrix::zeros(2, 4)]),
        d_u: DMatrix::zeros(2, 4),
        d_a: d_a_offboard,
        d_w: DMatrix::zeros(2, 4),
    };

    let model = NominalModel {
        a_hat,
        b_u_hat,
        sensors: vec![onboard, offboard],
        b_a,
        b_w,
        e_hat,
    };
    UasScenario {
        dt,
        a_o,
        b_o,
        l_o,
        c_o,
        k_o,
        model,
        per_step_schedule: SensorSchedule {
            frame_period: 1,
            samples: vec![vec![0], vec![]],
        },
        lifted_schedule: SensorSchedule {
            frame_period: 5,
            samples: vec![vec![0, 1, 2, 3, 4], vec![0]],
        },
    }
}

impl UasScenario {
    /// The per-step deviation system (T = 1, on-board monitoring only).
    pub fn per_step_plant(&self) -> Result<LiftedPlant> {
        lift(&self.model, &self.per_step_schedule)
    }

    /// The lifted deviation system (T = 5 with the off-board sample).
    pub fn lifted_plant(&self) -> Result<LiftedPlant> {
        lift(&self.model, &self.lifted_schedule)
    }
}

/// A seeded noise vector, uniform in the closed ball of the given radius
/// (Gaussian direction, radial CDF inversion — rejection sampling is
/// hopeless in 20 dimensions).
pub fn noise_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let v = DVector::from_fn(dim, |_, _| {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    });
    let n = v.norm().max(1e-300);
    let r: f64 = rng.gen_range(0.0..1.0f64).powf(1.0 / dim as f64);
    v * (radius * r / n)
}

/// Seeded per-frame noise sequence.
pub fn noise_sequence(
    seed: u64,
    frames: usize,
    dim: usize,
    radius: f64,
) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames).map(|_| noise_ball(&mut rng, dim, radius)).collect()
}

#[derive(Debug)]
pub struct VulnerabilityExperiment {
    pub report: DetectabilityReport,
    pub plan: AttackPlan,
    /// Attacked noise-free run over 500 steps.
    pub trace: SimulationTrace,
    /// Same horizon with the attack disengaged.
    pub baseline: SimulationTrace,
}

/// Documented stealth budget for the per-step attack demonstration.
pub const VULN_STEALTH_BUDGET: f64 = 1e-3;

/// Per-step analysis and stealthy-attack demonstration: the on-board
/// monitor alone leaves the system vulnerable at eigenvalue 1, and the
/// constructed attack grows the position deviation linearly while the
/// monitored output stays within the stealth budget.
pub fn experiment_vulnerability(out: Option<&Path>) -> Result<VulnerabilityExperiment> {
    let sc = scenario();
    let plant = sc.per_step_plant()?;
    let sys = plant.mode_system(Some(MODE_BOTH))?;
    let report = detect::analyze_mode(&sys, MODE_BOTH)?;
    let witness = match &report.witness {
        Some(Witness::Eigenspace(w)) => w.clone(),
        _ => {
            return Err(Error::InvalidModel(
                "per-step analysis did not produce the expected eigenvalue witness".into(),
            ))
        }
    };
    let plan = synth::synth_condition_iii(&sys, &report.geo, &witness, VULN_STEALTH_BUDGET)?;
    let x0 = DVector::zeros(sys.state_dim());
    let trace = simulate(&sys, &x0, &InputSource::Policy(&plan), &InputSource::Zero, 500)?;
    let baseline = simulate(&sys, &x0, &InputSource::Zero, &InputSource::Zero, 500)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_trace_csv(&dir.join("vulnerability_attack.csv"), &trace)?;
        io::write_trace_csv(&dir.join("vulnerability_baseline.csv"), &baseline)?;
        io::write_json(&dir.join("vulnerability_report.json"), &io::report_to_file(&report))?;
        io::write_json(&dir.join("vulnerability_plan.json"), &plan)?;
    }
    Ok(VulnerabilityExperiment {
        report,
        plan,
        trace,
        baseline,
    })
}

#[derive(Debug)]
pub struct DetectionExperiment {
    pub report: DetectabilityReport,
    pub thresholds: Thresholds,
    /// Noise-only run: no false alarm expected.
    pub noise_trace: SimulationTrace,
    /// Attack run (with the same noise) and its alarm frame.
    pub attack_trace: SimulationTrace,
    pub alarm_frame: Option<usize>,
    /// First frame with `||z_k|| >= delta`.
    pub z_cross_frame: Option<usize>,
    pub seed: u64,
}

/// Per-frame noise bound used by the detection and identification
/// experiments (thresholds are calibrated against `||w_k|| <= 1`).
pub const NOISE_BOUND: f64 = 1.0;

/// Run the detection experiment on the lifted system: the off-board sample
/// makes the full spoof detectable; thresholds are computed, a noise-only
/// run stays below `epsilon`, and the previously stealthy attack (scaled so
/// severity crosses `delta` mid-run) trips the alarm.
pub fn experiment_detection(seed: u64, out: Option<&Path>) -> Result<DetectionExperiment> {
    let sc = scenario();
    let plant = sc.lifted_plant()?;
    let sys = plant.mode_system(Some(MODE_BOTH))?;
    let report = detect::analyze_mode(&sys, MODE_BOTH)?;
    if report.verdict != Verdict::Detectable {
        return Err(Error::ModeVulnerable(MODE_BOTH.into()));
    }
    let thresholds = detect::compute_thresholds(&sys, &report, 120)?;

    let frames = 200usize;
    let t_len = sc.lifted_schedule.frame_period;
    let noise = noise_sequence(seed, frames, sys.noise_dim(), NOISE_BOUND);
    let x0 = DVector::zeros(sys.state_dim());
    let noise_trace = simulate(&sys, &x0, &InputSource::Zero, &InputSource::Sequence(&noise), frames)?;

    // the per-step stealthy attack, rescaled so the position deviation
    // crosses delta near mid-run, then folded into frame blocks
    let per_step = sc.per_step_plant()?;
    let ps_sys = per_step.mode_system(Some(MODE_BOTH))?;
    let ps_report = detect::analyze_mode(&ps_sys, MODE_BOTH)?;
    let witness = match &ps_report.witness {
        Some(Witness::Eigenspace(w)) => w.clone(),
        _ => {
            return Err(Error::InvalidModel(
                "per-step analysis did not produce the expected eigenvalue witness".into(),
            ))
        }
    };
    let plan = synth::synth_condition_iii(&ps_sys, &ps_report.geo, &witness, VULN_STEALTH_BUDGET)?;
    let steps = frames * t_len;
    let ps_x0 = DVector::zeros(ps_sys.state_dim());
    let ps_trace = simulate(&ps_sys, &ps_x0, &InputSource::Policy(&plan), &InputSource::Zero, steps)?;
    // rescale so ||z|| reaches delta at roughly half the horizon
    let z_mid = ps_trace.zs[steps / 2].norm();
    let factor = if z_mid > 0.0 { 1.5 * thresholds.delta / z_mid } else { 1.0 };
    let attack_frames: Vec<DVector<f64>> = (0..frames)
        .map(|k| {
            let mut block = DVector::zeros(t_len * ps_sys.attack_dim());
            for s in 0..t_len {
                let a = &ps_trace.attacks[k * t_len + s] * factor;
                block.rows_mut(s * ps_sys.attack_dim(), ps_sys.attack_dim()).copy_from(&a);
            }
            block
        })
        .collect();
    let attack_trace = simulate(
        &sys,
        &x0,
        &InputSource::Sequence(&attack_frames),
        &InputSource::Sequence(&noise),
        frames,
    )?;
    let alarm_frame = detect::alarm(&attack_trace, thresholds.epsilon);
    let z_cross_frame = attack_trace
        .zs
        .iter()
        .position(|z| z.norm() >= thresholds.delta);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_trace_csv(&dir.join("detection_noise_only.csv"), &noise_trace)?;
        io::write_trace_csv(&dir.join("detection_attack.csv"), &attack_trace)?;
        io::write_json(&dir.join("detection_report.json"), &io::report_to_file(&report))?;
        io::write_json(&dir.join("detection_thresholds.json"), &io::thresholds_to_file(&thresholds))?;
    }
    Ok(DetectionExperiment {
        report,
        thresholds,
        noise_trace,
        attack_trace,
        alarm_frame,
        z_cross_frame,
        seed,
    })
}

#[derive(Debug)]
pub struct IdentificationExperiment {
    pub matrix: IdentifiabilityMatrix,
    /// Residual histories keyed by the true mode of the run.
    pub histories: BTreeMap<String, IdentificationHistory>,
    /// Attack-free history: the estimate set must stay complete.
    pub no_attack_history: IdentificationHistory,
    pub epsilons: BTreeMap<String, f64>,
    pub seed: u64,
}

/// Run the identification experiment on the lifted system: north and east
/// spoof modes are discernible, and for each true mode the residual bank
/// eliminates the other mode while keeping the true one.
pub fn experiment_identification(seed: u64, out: Option<&Path>) -> Result<IdentificationExperiment> {
    let sc = scenario();
    let plant = sc.lifted_plant()?;
    let modes = vec![MODE_NORTH.to_string(), MODE_EAST.to_string()];
    let matrix = check_identifiable(&plant, &modes)?;
    let epsilons = calibrate_identification_thresholds(&plant, &modes, NOISE_BOUND)?;
    let bank = build_residual_bank(&plant, &modes, &epsilons)?;

    let frames = 60usize;
    let t_len = sc.lifted_schedule.frame_period;
    let mut histories = BTreeMap::new();
    let mut no_attack_history = None;
    for (run, true_mode) in [
        (0u64, Some(MODE_NORTH)),
        (1u64, Some(MODE_EAST)),
        (2u64, None),
    ] {
        let sys = plant.mode_system(true_mode)?;
        let noise = noise_sequence(seed.wrapping_add(run), frames, sys.noise_dim(), NOISE_BOUND);
        let x0 = DVector::zeros(sys.state_dim());
        let trace = match true_mode {
            None => simulate(&sys, &x0, &InputSource::Zero, &InputSource::Sequence(&noise), frames)?,
            Some(mode) => {
                // single-axis stealthy ramp attack, strong enough that the
                // wrong-mode residual fires within the first window
                let ps = sc.per_step_plant()?;
                let ps_sys = ps.mode_system(Some(mode))?;
                let ps_report = detect::analyze_mode(&ps_sys, mode)?;
                let witness = match &ps_report.witness {
                    Some(Witness::Eigenspace(w)) => w.clone(),
                    _ => {
                        return Err(Error::InvalidModel(
                            "single-axis per-step analysis did not produce an eigenvalue witness"
                                .into(),
                        ))
                    }
                };
                let plan =
                    synth::synth_condition_iii(&ps_sys, &ps_report.geo, &witness, VULN_STEALTH_BUDGET)?;
                let steps = frames * t_len;
                let ps_x0 = DVector::zeros(ps_sys.state_dim());
                let ps_trace =
                    simulate(&ps_sys, &ps_x0, &InputSource::Policy(&plan), &InputSource::Zero, steps)?;
                let z_early = ps_trace.zs[3 * t_len].norm();
                let factor = if z_early > 0.0 { 10.0 / z_early } else { 1.0 };
                let attack_frames: Vec<DVector<f64>> = (0..frames)
                    .map(|k| {
                        let m_a = ps_sys.attack_dim();
                        let mut block = DVector::zeros(t_len * m_a);
                        for s in 0..t_len {
                            let a = &ps_trace.attacks[k * t_len + s] * factor;
                            block.rows_mut(s * m_a, m_a).copy_from(&a);
                        }
                        block
                    })
                    .collect();
                simulate(
                    &sys,
                    &x0,
                    &InputSource::Sequence(&attack_frames),
                    &InputSource::Sequence(&noise),
                    frames,
                )?
            }
        };
        let hist = run_identification(&bank, &trace, 0)?;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            let tag = true_mode.unwrap_or("none");
            io::write_identification_csv(&dir.join(format!("identification_{tag}.csv")), &hist)?;
            io::write_trace_csv(&dir.join(format!("identification_trace_{tag}.csv")), &trace)?;
        }
        match true_mode {
            Some(mode) => {
                histories.insert(mode.to_string(), hist);
            }
            None => no_attack_history = Some(hist),
        }
    }
    if let Some(dir) = out {
        io::write_json(&dir.join("identifiability.json"), &io::identifiability_to_file(&matrix))?;
        io::write_json(&dir.join("identification_epsilons.json"), &epsilons)?;
    }
    Ok(IdentificationExperiment {
        matrix,
        histories,
        no_attack_history: no_attack_history.expect("attack-free run always executes"),
        epsilons,
        seed,
    })
}
