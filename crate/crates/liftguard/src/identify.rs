//! Pairwise attack-mode discernibility and residual-bank identification.
//!
//! Two modes are *discernible* when no attack in one mode can be explained
//! as an attack in the other: formally, the augmented difference system
//! pairing the two hypotheses admits no stealthy-and-severe input. Online
//! identification projects sliding output windows onto each mode's
//! consistent-output subspace and eliminates modes whose residual exceeds
//! its calibrated threshold.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::detect::{analyze_mode, compute_friend_diagnostics, DetectabilityReport, Verdict};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{stack_markov, stack_observability, LiftedPlant, ModeSystem, SimulationTrace};
use crate::subspace::Subspace;

/// The difference system of two attack-mode hypotheses `p` and `q`: states
/// stack `(x^p, x^q)`, attacks stack `(a^p, a^q)`, the output is the
/// difference `y^p - y^q`, and the severity stacks both.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub p: String,
    pub q: String,
    /// Assembled augmented system (noise channels stacked; the difference
    /// output has zero noise feedthrough since both halves share `D^w`).
    pub sys: ModeSystem,
    /// Maximal output-nulling subspace of the augmented attack channel.
    pub v_pq: Subspace,
    /// State dimension of each half.
    pub half_dim: usize,
}

/// Assemble the augmented pair system for modes `p != q`.
pub fn build_augmented(plant: &LiftedPlant, p: &str, q: &str) -> Result<AugmentedPair> {
    if p == q {
        return Err(Error::InvalidModel(format!(
            "augmented pair requires distinct modes, got {p} twice"
        )));
    }
    let sp = plant.mode_system(Some(p))?;
    let sq = plant.mode_system(Some(q))?;
    let n = sp.state_dim();
    let zero_nn = DMatrix::zeros(n, n);
    let a = linalg::block2x2(&sp.a, &zero_nn, &zero_nn, &sq.a);
    let b_a = linalg::block2x2(
        &sp.b_a,
        &DMatrix::zeros(n, sq.attack_dim()),
        &DMatrix::zeros(n, sp.attack_dim()),
        &sq.b_a,
    );
    let c = linalg::hcat(&[sp.c.clone(), -sq.c.clone()]);
    let d_a = linalg::hcat(&[sp.d_a.clone(), -sq.d_a.clone()]);
    let e = linalg::block2x2(
        &sp.e,
        &DMatrix::zeros(sp.e.nrows(), n),
        &DMatrix::zeros(sq.e.nrows(), n),
        &sq.e,
    );
    let f_a = linalg::block2x2(
        &sp.f_a,
        &DMatrix::zeros(sp.f_a.nrows(), sq.attack_dim()),
        &DMatrix::zeros(sq.f_a.nrows(), sp.attack_dim()),
        &sq.f_a,
    );
    // both halves see the same physical noise; the difference output has
    // zero noise feedthrough
    let b_w = linalg::vcat(&[sp.b_w.clone(), sq.b_w.clone()]);
    let d_w = DMatrix::zeros(c.nrows(), sp.b_w.ncols());
    let f_w = linalg::vcat(&[sp.f_w.clone(), sq.f_w.clone()]);
    let sys = ModeSystem {
        a,
        b_a,
        c,
        d_a,
        b_w,
        d_w,
        e,
        f_a,
        f_w,
    };
    let v_pq = crate::subspace::max_output_nulling(&sys.a, &sys.b_a, &sys.c, &sys.d_a)?;
    Ok(AugmentedPair {
        p: p.to_string(),
        q: q.to_string(),
        sys,
        v_pq,
        half_dim: n,
    })
}

#[derive(Debug, Clone)]
pub struct DiscernibilityReport {
    pub p: String,
    pub q: String,
    pub discernible: bool,
    /// Full stealthy-attack analysis of the augmented system; its witness,
    /// when present, is the indiscernibility witness.
    pub analysis: DetectabilityReport,
    /// `||F_pq N||` for the computed friend of `V_pq` — nonzero means an
    /// output-invisible input difference carries severity.
    pub f_n_norm: f64,
    /// `||(E_pq + F_pq M) V_pq||` — nonzero means the indistinguishable
    /// state set carries severity.
    pub ev_norm: f64,
}

/// Decide discernibility of a built pair.
///
/// The verdict is the detectability analysis of the augmented system: the
/// pair is discernible exactly when no stealthy input of the difference
/// system can grow either hypothesis's severity. The classical algebraic
/// diagnostics (`F_pq N`, severity on `V_pq`) are reported alongside.
pub fn check_discernibility(pair: &AugmentedPair) -> Result<DiscernibilityReport> {
    let name = format!("{}|{}", pair.p, pair.q);
    let analysis = analyze_mode(&pair.sys, &name)?;
    let (f_n_norm, ev_norm) = compute_friend_diagnostics(&pair.sys, &analysis);
    Ok(DiscernibilityReport {
        p: pair.p.clone(),
        q: pair.q.clone(),
        discernible: analysis.verdict == Verdict::Detectable,
        analysis,
        f_n_norm,
        ev_norm,
    })
}

#[derive(Debug, Clone)]
pub struct IdentifiabilityMatrix {
    pub modes: Vec<String>,
    pub pairwise: Vec<DiscernibilityReport>,
    pub identifiable: bool,
}

/// Check all unordered mode pairs; the set is identifiable when every pair
/// is discernible (vacuously true for singletons).
pub fn check_identifiable(plant: &LiftedPlant, modes: &[String]) -> Result<IdentifiabilityMatrix> {
    let mut pairwise = Vec::new();
    let mut identifiable = true;
    for i in 0..modes.len() {
        for j in (i + 1)..modes.len() {
            let pair = build_augmented(plant, &modes[i], &modes[j])?;
            let rep = check_discernibility(&pair)?;
            identifiable &= rep.discernible;
            pairwise.push(rep);
        }
    }
    Ok(IdentifiabilityMatrix {
        modes: modes.to_vec(),
        pairwise,
        identifiable,
    })
}

/// Per-mode window data: `O` stacks `C A^j` for `j = 0..=n+1`, `G` is the
/// block-lower-triangular attack propagation, and `p_perp` projects onto
/// the orthogonal complement of `Im [O G]` — the outputs *inconsistent*
/// with the mode.
#[derive(Debug, Clone)]
pub struct ModeBank {
    pub o: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub p_perp: DMatrix<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualBank {
    pub modes: Vec<String>,
    pub banks: BTreeMap<String, ModeBank>,
    /// Window length in frames (`n + 2`).
    pub window: usize,
}

/// Build the bank for `modes` with given per-mode thresholds.
pub fn build_residual_bank(
    plant: &LiftedPlant,
    modes: &[String],
    thresholds: &BTreeMap<String, f64>,
) -> Result<ResidualBank> {
    let n = plant.state_dim();
    let window = n + 2;
    let mut banks = BTreeMap::new();
    for q in modes {
        let sys = plant.mode_system(Some(q))?;
        let o = stack_observability(&sys.a, &sys.c, window);
        let g = stack_markov(&sys.a, &sys.b_a, &sys.c, &sys.d_a, window);
        let range = linalg::col_space(&linalg::hcat(&[o.clone(), g.clone()]), None);
        let p_perp =
            DMatrix::identity(o.nrows(), o.nrows()) - &range * range.transpose();
        let epsilon = *thresholds
            .get(q)
            .ok_or_else(|| Error::ModeMissing(q.clone()))?;
        banks.insert(
            q.clone(),
            ModeBank {
                o,
                g,
                p_perp,
                epsilon,
            },
        );
    }
    Ok(ResidualBank {
        modes: modes.to_vec(),
        banks,
        window,
    })
}

/// Residual of one stacked output window against mode `q`: the norm of the
/// window component no `(x, a)`-trajectory of mode `q` can produce.
pub fn window_residual(bank: &ModeBank, window: &DVector<f64>) -> f64 {
    (&bank.p_perp * window).norm()
}

#[derive(Debug, Clone)]
pub struct IdentificationStep {
    /// Start frame of the window.
    pub frame: usize,
    /// Residual per mode, ordered as `history.modes`.
    pub residuals: Vec<f64>,
    /// Membership of the estimate set after this step's elimination.
    pub active: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct IdentificationHistory {
    pub modes: Vec<String>,
    pub steps: Vec<IdentificationStep>,
    /// Modes still in the estimate set at the end.
    pub final_set: Vec<String>,
    /// Set when every mode was eliminated: the observed attack matches no
    /// modeled mode.
    pub unmodeled_attack: bool,
}

/// Run the elimination logic over sliding windows starting at
/// `alarm_frame`: `Q_{k+1} = Q_k \ { q : r^q_k >= epsilon^q }`.
pub fn run_identification(
    bank: &ResidualBank,
    trace: &SimulationTrace,
    alarm_frame: usize,
) -> Result<IdentificationHistory> {
    let frames = trace.ys.len();
    if alarm_frame + bank.window > frames {
        return Err(Error::WindowUnderflow {
            need: alarm_frame + bank.window,
            have: frames,
        });
    }
    let p_dim = trace.ys.first().map(|y| y.len()).unwrap_or(0);
    let mut active: Vec<bool> = vec![true; bank.modes.len()];
    let mut steps = Vec::new();
    for k0 in alarm_frame..=(frames - bank.window) {
        let mut window = DVector::zeros(p_dim * bank.window);
        for j in 0..bank.window {
            window.rows_mut(j * p_dim, p_dim).copy_from(&trace.ys[k0 + j]);
        }
        let mut residuals = Vec::with_capacity(bank.modes.len());
        for (i, q) in bank.modes.iter().enumerate() {
            let mb = &bank.banks[q];
            let r = window_residual(mb, &window);
            residuals.push(r);
            if active[i] && r >= mb.epsilon {
                active[i] = false;
            }
        }
        steps.push(IdentificationStep {
            frame: k0,
            residuals,
            active: active.clone(),
        });
    }
    let final_set: Vec<String> = bank
        .modes
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|(q, _)| q.clone())
        .collect();
    let unmodeled_attack = final_set.is_empty();
    Ok(IdentificationHistory {
        modes: bank.modes.clone(),
        steps,
        final_set,
        unmodeled_attack,
    })
}

const MARGIN: f64 = 0.05;
const FLOOR: f64 = 1e-9;

/// Calibrate per-mode residual thresholds under `||w_k|| <= noise_bound`.
///
/// The window projector annihilates `O x_{k0}` for *any* initial state, so
/// pre-window noise cannot leak into the residual; only in-window noise
/// survives, through the windowed noise map `G^w`. The exact bound is
/// `||P_perp G^w|| * sqrt(window) * noise_bound`, inflated by the safety
/// margin plus a floor.
pub fn calibrate_identification_thresholds(
    plant: &LiftedPlant,
    modes: &[String],
    noise_bound: f64,
) -> Result<BTreeMap<String, f64>> {
    let rho = linalg::spectral_radius(&plant.a);
    if rho >= 1.0 {
        return Err(Error::ThresholdsUndefined { rho });
    }
    let n = plant.state_dim();
    let window = n + 2;
    let mut out = BTreeMap::new();
    for q in modes {
        let sys = plant.mode_system(Some(q))?;
        let o = stack_observability(&sys.a, &sys.c, window);
        let g = stack_markov(&sys.a, &sys.b_a, &sys.c, &sys.d_a, window);
        let range = linalg::col_space(&linalg::hcat(&[o.clone(), g]), None);
        let p_perp =
            DMatrix::identity(o.nrows(), o.nrows()) - &range * range.transpose();
        let g_w = stack_markov(&sys.a, &sys.b_w, &sys.c, &sys.d_w, window);
        let gain = linalg::spectral_norm(&(&p_perp * g_w));
        let eps = (1.0 + MARGIN) * gain * (window as f64).sqrt() * noise_bound + FLOOR;
        out.insert(q.clone(), eps);
    }
    Ok(out)
}
