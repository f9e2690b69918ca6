//! Nominal plant description, sensor schedules, frame lifting, and
//! simulation of the deviation dynamics.
//!
//! The deviation system tracks the difference between the attacked and the
//! nominal trajectories, so the control input cancels and only the attack
//! and noise channels drive the state.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// One sensor: its measurement map and per-channel feedthrough terms.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    /// Measurement map, `p_i x n`.
    pub c: DMatrix<f64>,
    /// Control feedthrough, `p_i x m_u`.
    pub d_u: DMatrix<f64>,
    /// Attack feedthrough per mode, `p_i x m_a`.
    pub d_a: BTreeMap<String, DMatrix<f64>>,
    /// Noise feedthrough, `p_i x m_w`.
    pub d_w: DMatrix<f64>,
}

/// The per-step plant with its attack and noise channels and severity map.
#[derive(Debug, Clone)]
pub struct NominalModel {
    /// Per-step dynamics, `n x n`; must be Schur stable.
    pub a_hat: DMatrix<f64>,
    /// Control input map, `n x m_u`.
    pub b_u_hat: DMatrix<f64>,
    pub sensors: Vec<SensorSpec>,
    /// Attack input map per mode, `n x m_a`.
    pub b_a: BTreeMap<String, DMatrix<f64>>,
    /// Noise input map, `n x m_w`.
    pub b_w: DMatrix<f64>,
    /// Severity map, `p_z x n`.
    pub e_hat: DMatrix<f64>,
}

impl NominalModel {
    pub fn state_dim(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn mode_ids(&self) -> Vec<String> {
        self.b_a.keys().cloned().collect()
    }

    /// Check dimensional consistency and nominal stability.
    pub fn validate(&self, strict_stability: bool) -> Result<()> {
        let n = self.a_hat.nrows();
        if self.a_hat.ncols() != n {
            return Err(Error::InvalidModel("a_hat must be square".into()));
        }
        let check = |name: &str, rows: usize, expect: usize| -> Result<()> {
            if rows != expect {
                return Err(Error::DimensionMismatch {
                    context: name.into(),
                    expected: expect.to_string(),
                    got: rows.to_string(),
                });
            }
            Ok(())
        };
        check("b_u_hat rows", self.b_u_hat.nrows(), n)?;
        check("b_w rows", self.b_w.nrows(), n)?;
        check("e_hat cols", self.e_hat.ncols(), n)?;
        let m_a = self.attack_dim()?;
        for (mode, b) in &self.b_a {
            check(&format!("b_a[{mode}] rows"), b.nrows(), n)?;
            check(&format!("b_a[{mode}] cols"), b.ncols(), m_a)?;
        }
        for (i, s) in self.sensors.iter().enumerate() {
            let p_i = s.c.nrows();
            check(&format!("sensor {i} c cols"), s.c.ncols(), n)?;
            check(&format!("sensor {i} d_u rows"), s.d_u.nrows(), p_i)?;
            check(&format!("sensor {i} d_u cols"), s.d_u.ncols(), self.b_u_hat.ncols())?;
            check(&format!("sensor {i} d_w rows"), s.d_w.nrows(), p_i)?;
            check(&format!("sensor {i} d_w cols"), s.d_w.ncols(), self.b_w.ncols())?;
            for mode in self.b_a.keys() {
                let d = s.d_a.get(mode).ok_or_else(|| {
                    Error::InvalidModel(format!("sensor {i} lacks d_a for mode `{mode}`"))
                })?;
                check(&format!("sensor {i} d_a[{mode}] rows"), d.nrows(), p_i)?;
                check(&format!("sensor {i} d_a[{mode}] cols"), d.ncols(), m_a)?;
            }
        }
        let rho = linalg::spectral_radius(&self.a_hat);
        if rho >= 1.0 {
            if strict_stability {
                return Err(Error::UnstablePlant { rho });
            }
            log::warn!("nominal dynamics not Schur stable: spectral radius {rho:.6}");
        }
        Ok(())
    }

    /// Attack input width, shared by all modes.
    pub fn attack_dim(&self) -> Result<usize> {
        let mut dims = self.b_a.values().map(|b| b.ncols());
        let first = dims.next().unwrap_or(0);
        if dims.any(|d| d != first) {
            return Err(Error::InvalidModel(
                "attack modes must share the same input width".into(),
            ));
        }
        Ok(first)
    }
}

/// Frame period and per-sensor sample offsets (0-based within the frame).
#[derive(Debug, Clone)]
pub struct SensorSchedule {
    pub frame_period: usize,
    /// `samples[i]` lists the offsets at which sensor `i` samples.
    pub samples: Vec<Vec<usize>>,
}

impl SensorSchedule {
    pub fn validate(&self, num_sensors: usize) -> Result<()> {
        if self.frame_period == 0 {
            return Err(Error::EmptySchedule);
        }
        if self.samples.len() != num_sensors {
            return Err(Error::DimensionMismatch {
                context: "schedule sensor count".into(),
                expected: num_sensors.to_string(),
                got: self.samples.len().to_string(),
            });
        }
        let mut total = 0;
        for offs in &self.samples {
            if !offs.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::BadSchedule);
            }
            if offs.iter().any(|&t| t >= self.frame_period) {
                return Err(Error::BadSchedule);
            }
            total += offs.len();
        }
        if total == 0 {
            return Err(Error::EmptySchedule);
        }
        Ok(())
    }
}

/// The lifted frame model: one step of this system equals `T` steps of the
/// per-step plant, with inputs stacked frame-wise (offset-major) and outputs
/// stacked sensor-major, offsets increasing within each sensor.
#[derive(Debug, Clone)]
pub struct LiftedPlant {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d_u: DMatrix<f64>,
    pub b_a: BTreeMap<String, DMatrix<f64>>,
    pub d_a: BTreeMap<String, DMatrix<f64>>,
    pub b_w: DMatrix<f64>,
    pub d_w: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f_a: BTreeMap<String, DMatrix<f64>>,
    pub f_w: DMatrix<f64>,
    pub mode_ids: Vec<String>,
    pub frame_period: usize,
}

/// The deviation system of one attack mode: state driven by attack and
/// noise, with residual output `y` and severity output `z`.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub a: DMatrix<f64>,
    pub b_a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d_a: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub d_w: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f_a: DMatrix<f64>,
    pub f_w: DMatrix<f64>,
}

impl ModeSystem {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn attack_dim(&self) -> usize {
        self.b_a.ncols()
    }
    pub fn noise_dim(&self) -> usize {
        self.b_w.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    pub fn severity_dim(&self) -> usize {
        self.e.nrows()
    }
}

impl LiftedPlant {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Deviation system for one mode, or the zero attack channel for `None`.
    pub fn mode_system(&self, mode: Option<&str>) -> Result<ModeSystem> {
        let n = self.state_dim();
        let (b_a, d_a, f_a) = match mode {
            Some(q) => {
                let b = self.b_a.get(q).ok_or_else(|| Error::ModeMissing(q.into()))?;
                (
                    b.clone(),
                    self.d_a[q].clone(),
                    self.f_a[q].clone(),
                )
            }
            None => (
                DMatrix::zeros(n, 0),
                DMatrix::zeros(self.c.nrows(), 0),
                DMatrix::zeros(self.e.nrows(), 0),
            ),
        };
        Ok(ModeSystem {
            a: self.a.clone(),
            b_a,
            c: self.c.clone(),
            d_a,
            b_w: self.b_w.clone(),
            d_w: self.d_w.clone(),
            e: self.e.clone(),
            f_a,
            f_w: self.f_w.clone(),
        })
    }
}

/// Build one lifted input channel: given the per-step input map `b_hat`
/// (`n x m`) and the per-sample feedthrough rows, produce the state block
/// `[A^{T-1} b_hat ... b_hat]` and the block-lower-triangular feedthrough
/// over the sampled offsets.
fn lift_channel(
    a_pows: &[DMatrix<f64>],
    b_hat: &DMatrix<f64>,
    rows: &[(&DMatrix<f64>, &DMatrix<f64>, usize)], // (c_i, d_i, offset)
    frame_period: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_pows[0].nrows();
    let m = b_hat.ncols();
    let t_len = frame_period;
    let mut b = DMatrix::zeros(n, t_len * m);
    for s in 0..t_len {
        let blk = &a_pows[t_len - 1 - s] * b_hat;
        b.view_mut((0, s * m), (n, m)).copy_from(&blk);
    }
    let p: usize = rows.iter().map(|(c, _, _)| c.nrows()).sum();
    let mut d = DMatrix::zeros(p, t_len * m);
    let mut r = 0;
    for (c_i, d_i, t) in rows {
        let p_i = c_i.nrows();
        for s in 0..t_len {
            if s < *t {
                let blk = *c_i * &a_pows[*t - 1 - s] * b_hat;
                d.view_mut((r, s * m), (p_i, m)).copy_from(&blk);
            } else if s == *t {
                d.view_mut((r, s * m), (p_i, m)).copy_from(*d_i);
            }
        }
        r += p_i;
    }
    (b, d)
}

/// Construct the lifted plant over one frame period.
///
/// Output rows are ordered sensor-major, then by sample offset within each
/// sensor; when two sensors share an offset the declaration order decides.
pub fn lift(model: &NominalModel, schedule: &SensorSchedule) -> Result<LiftedPlant> {
    model.validate(false)?;
    schedule.validate(model.sensors.len())?;
    let n = model.state_dim();
    let t_len = schedule.frame_period;

    // powers of a_hat up to T
    let mut a_pows = Vec::with_capacity(t_len + 1);
    a_pows.push(DMatrix::identity(n, n));
    for k in 1..=t_len {
        a_pows.push(&a_pows[k - 1] * &model.a_hat);
    }
    let a = a_pows[t_len].clone();

    // stacked measurement map: rows C_i A^{t} per sample
    let mut c_blocks = Vec::new();
    for (i, offs) in schedule.samples.iter().enumerate() {
        for &t in offs {
            c_blocks.push(&model.sensors[i].c * &a_pows[t]);
        }
    }
    let c = linalg::vcat(&c_blocks);

    // sample rows (c, d, offset) per channel
    let sample_rows = |pick: &dyn Fn(&SensorSpec) -> &DMatrix<f64>| {
        let mut rows: Vec<(&DMatrix<f64>, &DMatrix<f64>, usize)> = Vec::new();
        for (i, offs) in schedule.samples.iter().enumerate() {
            for &t in offs {
                rows.push((&model.sensors[i].c, pick(&model.sensors[i]), t));
            }
        }
        rows
    };

    let u_rows = sample_rows(&|s| &s.d_u);
    let (b_u, d_u) = lift_channel(&a_pows, &model.b_u_hat, &u_rows, t_len);

    let w_rows = sample_rows(&|s| &s.d_w);
    let (b_w, d_w) = lift_channel(&a_pows, &model.b_w, &w_rows, t_len);

    let mut b_a = BTreeMap::new();
    let mut d_a = BTreeMap::new();
    let mut f_a = BTreeMap::new();

    // severity rows: E at every offset with zero feedthrough rows reused per channel
    let p_z = model.e_hat.nrows();
    let mut e_blocks = Vec::with_capacity(t_len);
    for t in 0..t_len {
        e_blocks.push(&model.e_hat * &a_pows[t]);
    }
    let e = linalg::vcat(&e_blocks);
    let zero_fa = DMatrix::zeros(p_z, model.attack_dim()?);
    let zero_fw = DMatrix::zeros(p_z, model.b_w.ncols());
    let sev_rows_a: Vec<(&DMatrix<f64>, &DMatrix<f64>, usize)> =
        (0..t_len).map(|t| (&model.e_hat, &zero_fa, t)).collect();
    let sev_rows_w: Vec<(&DMatrix<f64>, &DMatrix<f64>, usize)> =
        (0..t_len).map(|t| (&model.e_hat, &zero_fw, t)).collect();
    let (_, f_w) = lift_channel(&a_pows, &model.b_w, &sev_rows_w, t_len);

    for (mode, b_a_hat) in &model.b_a {
        let a_rows: Vec<(&DMatrix<f64>, &DMatrix<f64>, usize)> = {
            let mut rows = Vec::new();
            for (i, offs) in schedule.samples.iter().enumerate() {
                for &t in offs {
                    rows.push((&model.sensors[i].c, &model.sensors[i].d_a[mode], t));
                }
            }
            rows
        };
        let (b, d) = lift_channel(&a_pows, b_a_hat, &a_rows, t_len);
        let (_, f) = lift_channel(&a_pows, b_a_hat, &sev_rows_a, t_len);
        b_a.insert(mode.clone(), b);
        d_a.insert(mode.clone(), d);
        f_a.insert(mode.clone(), f);
    }

    Ok(LiftedPlant {
        a,
        b_u,
        c,
        d_u,
        b_a,
        d_a,
        b_w,
        d_w,
        e,
        f_a,
        f_w,
        mode_ids: model.mode_ids(),
        frame_period: t_len,
    })
}

/// A closed-loop attack rule producing the frame-stacked attack block from
/// the frame index and current lifted state.
pub trait AttackPolicy {
    fn attack(&self, frame: usize, x: &DVector<f64>) -> DVector<f64>;
}

/// Frame-indexed input source: zero, a fixed sequence (zero once exhausted),
/// or a closed-loop policy.
pub enum InputSource<'a> {
    Zero,
    Sequence(&'a [DVector<f64>]),
    Policy(&'a dyn AttackPolicy),
}

impl InputSource<'_> {
    fn block(&self, frame: usize, x: &DVector<f64>, width: usize) -> Result<DVector<f64>> {
        let v = match self {
            InputSource::Zero => DVector::zeros(width),
            InputSource::Sequence(seq) => seq
                .get(frame)
                .cloned()
                .unwrap_or_else(|| DVector::zeros(width)),
            InputSource::Policy(p) => p.attack(frame, x),
        };
        if v.len() != width {
            return Err(Error::BadPolicyBlock {
                expected: width,
                got: v.len(),
            });
        }
        Ok(v)
    }
}

/// One simulated trajectory of the deviation system.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    /// State at the start of each frame, length `horizon + 1`.
    pub xs: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
    pub zs: Vec<DVector<f64>>,
    pub attacks: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
}

impl SimulationTrace {
    pub fn horizon(&self) -> usize {
        self.ys.len()
    }

    pub fn max_y_norm(&self) -> f64 {
        self.ys.iter().map(|y| y.norm()).fold(0.0, f64::max)
    }

    pub fn max_z_norm(&self) -> f64 {
        self.zs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Simulate the deviation recursion of one mode for `horizon` frames.
pub fn simulate(
    sys: &ModeSystem,
    x0: &DVector<f64>,
    attack: &InputSource,
    noise: &InputSource,
    horizon: usize,
) -> Result<SimulationTrace> {
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "simulate x0".into(),
            expected: n.to_string(),
            got: x0.len().to_string(),
        });
    }
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut ys = Vec::with_capacity(horizon);
    let mut zs = Vec::with_capacity(horizon);
    let mut attacks = Vec::with_capacity(horizon);
    let mut noises = Vec::with_capacity(horizon);
    let mut x = x0.clone();
    let scale = linalg::spectral_norm(&sys.a).max(1.0);
    for k in 0..horizon {
        let a_k = attack.block(k, &x, sys.attack_dim())?;
        let w_k = noise.block(k, &x, sys.noise_dim())?;
        let y = &sys.c * &x + &sys.d_a * &a_k + &sys.d_w * &w_k;
        let z = &sys.e * &x + &sys.f_a * &a_k + &sys.f_w * &w_k;
        let x_next = &sys.a * &x + &sys.b_a * &a_k + &sys.b_w * &w_k;
        // write-time recursion check against an independent re-evaluation
        let resid = (&sys.a * &x + &sys.b_a * &a_k + &sys.b_w * &w_k - &x_next).norm();
        debug_assert!(resid <= 1e-9 * scale * x.norm().max(1.0));
        xs.push(x.clone());
        ys.push(y);
        zs.push(z);
        attacks.push(a_k);
        noises.push(w_k);
        x = x_next;
    }
    xs.push(x);
    Ok(SimulationTrace {
        xs,
        ys,
        zs,
        attacks,
        noises,
    })
}

/// Per-step simulation of the deviation dynamics, with outputs sampled on
/// the schedule and stacked frame-wise in the same order as the lifted model.
#[derive(Debug, Clone)]
pub struct PerStepTrace {
    /// State at every step, length `frames * T + 1`.
    pub xs: Vec<DVector<f64>>,
    /// Per-step severity `z_t = E_hat x_t`.
    pub zs: Vec<DVector<f64>>,
    /// Frame-stacked sampled outputs, one per frame.
    pub ys: Vec<DVector<f64>>,
}

/// Simulate the per-step deviation system; `attack_steps`/`noise_steps` give
/// one input per step (zero past the end).
pub fn simulate_per_step(
    model: &NominalModel,
    schedule: &SensorSchedule,
    mode: Option<&str>,
    x0: &DVector<f64>,
    attack_steps: &[DVector<f64>],
    noise_steps: &[DVector<f64>],
    frames: usize,
) -> Result<PerStepTrace> {
    let n = model.state_dim();
    let m_a = model.attack_dim()?;
    let m_w = model.b_w.ncols();
    let b_a = match mode {
        Some(q) => model
            .b_a
            .get(q)
            .ok_or_else(|| Error::ModeMissing(q.into()))?
            .clone(),
        None => DMatrix::zeros(n, m_a),
    };
    let t_len = schedule.frame_period;
    let total = frames * t_len;
    let zero_a = DVector::zeros(m_a);
    let zero_w = DVector::zeros(m_w);
    let mut xs = Vec::with_capacity(total + 1);
    let mut zs = Vec::with_capacity(total);
    let mut x = x0.clone();
    xs.push(x.clone());
    for t in 0..total {
        let a_t = attack_steps.get(t).unwrap_or(&zero_a);
        let w_t = noise_steps.get(t).unwrap_or(&zero_w);
        zs.push(&model.e_hat * &x);
        x = &model.a_hat * &x + &b_a * a_t + &model.b_w * w_t;
        xs.push(x.clone());
    }
    // sampled outputs, stacked per frame in lifted row order
    let mut ys = Vec::with_capacity(frames);
    for k in 0..frames {
        let mut parts = Vec::new();
        for (i, offs) in schedule.samples.iter().enumerate() {
            let s = &model.sensors[i];
            for &t in offs {
                let step = k * t_len + t;
                let a_t = attack_steps.get(step).unwrap_or(&zero_a);
                let w_t = noise_steps.get(step).unwrap_or(&zero_w);
                let d_a_i = match mode {
                    Some(q) => s.d_a[q].clone(),
                    None => DMatrix::zeros(s.c.nrows(), m_a),
                };
                parts.push(&s.c * &xs[step] + d_a_i * a_t + &s.d_w * w_t);
            }
        }
        let total_p: usize = parts.iter().map(|p| p.len()).sum();
        let mut y = DVector::zeros(total_p);
        let mut r = 0;
        for p in parts {
            y.rows_mut(r, p.len()).copy_from(&p);
            r += p.len();
        }
        ys.push(y);
    }
    Ok(PerStepTrace { xs, zs, ys })
}

/// Stacked observability map `[C; CA; ...; CA^{steps-1}]`.
pub fn stack_observability(a: &DMatrix<f64>, c: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let mut blocks = Vec::with_capacity(steps);
    let mut row = c.clone();
    for _ in 0..steps {
        blocks.push(row.clone());
        row = &row * a;
    }
    linalg::vcat(&blocks)
}

/// Block-lower-triangular input-propagation (Markov parameter) map over
/// `steps` frames: `D` on the diagonal and `C A^{i-j-1} B` below.
pub fn stack_markov(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    steps: usize,
) -> DMatrix<f64> {
    let p = c.nrows();
    let m = b.ncols();
    let mut g = DMatrix::zeros(p * steps, m * steps);
    // markov[k-1] = C A^{k-1} B for k >= 1
    let mut markov = Vec::with_capacity(steps.saturating_sub(1));
    let mut pow_b = b.clone();
    for _ in 1..steps {
        markov.push(c * &pow_b);
        pow_b = a * pow_b;
    }
    for i in 0..steps {
        for j in 0..=i {
            let blk = if i == j { d.clone() } else { markov[i - j - 1].clone() };
            g.view_mut((p * i, m * j), (p, m)).copy_from(&blk);
        }
    }
    g
}

/// Split a frame-stacked input block into its per-step components.
pub fn unstack_frame_input(block: &DVector<f64>, t_len: usize) -> Vec<DVector<f64>> {
    assert_eq!(block.len() % t_len, 0);
    let m = block.len() / t_len;
    (0..t_len)
        .map(|s| block.rows(s * m, m).into_owned())
        .collect()
}
