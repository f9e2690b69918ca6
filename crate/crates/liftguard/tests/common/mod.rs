//! Shared generators and independent oracles for the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use liftguard::linalg;
use liftguard::model::{self, ModeSystem, NominalModel, SensorSchedule, SensorSpec};
use liftguard::subspace::Subspace;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random square matrix rescaled to the given spectral radius.
pub fn stable_mat(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let mut a = rand_mat(rng, n, n);
    let rho = linalg::spectral_radius(&a);
    if rho > 1e-12 {
        a *= radius / rho;
    }
    a
}

/// A random deviation system with no noise channels. Output and severity
/// maps are sparse enough that nontrivial nulling subspaces are common.
pub fn random_mode_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    m_a: usize,
    p: usize,
    p_z: usize,
) -> ModeSystem {
    ModeSystem {
        a: rand_mat(rng, n, n),
        b_a: rand_mat(rng, n, m_a),
        c: rand_mat(rng, p, n),
        d_a: rand_mat(rng, p, m_a),
        b_w: DMatrix::zeros(n, 0),
        d_w: DMatrix::zeros(p, 0),
        e: rand_mat(rng, p_z, n),
        f_a: rand_mat(rng, p_z, m_a),
        f_w: DMatrix::zeros(p_z, 0),
    }
}

/// A random stable nominal model with one or two sensors and one attack
/// mode named "m", suitable for lifting tests.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> (NominalModel, SensorSchedule) {
    let m_u = rng.gen_range(1..=2);
    let m_a = rng.gen_range(1..=2);
    let m_w = rng.gen_range(1..=2);
    let num_sensors = rng.gen_range(1..=2);
    let t_len = rng.gen_range(1..=4usize);

    let mut sensors = Vec::new();
    let mut samples = Vec::new();
    for _ in 0..num_sensors {
        let p_i = rng.gen_range(1..=2);
        let mut d_a = BTreeMap::new();
        d_a.insert("m".to_string(), rand_mat(rng, p_i, m_a));
        sensors.push(SensorSpec {
            c: rand_mat(rng, p_i, n),
            d_u: rand_mat(rng, p_i, m_u),
            d_a,
            d_w: rand_mat(rng, p_i, m_w),
        });
        // a random nonempty increasing subset of offsets
        let mut offs: Vec<usize> = (0..t_len).filter(|_| rng.gen_bool(0.6)).collect();
        if offs.is_empty() {
            offs.push(rng.gen_range(0..t_len));
        }
        samples.push(offs);
    }
    let mut b_a = BTreeMap::new();
    b_a.insert("m".to_string(), rand_mat(rng, n, m_a));
    let model = NominalModel {
        a_hat: stable_mat(rng, n, 0.8),
        b_u_hat: rand_mat(rng, n, m_u),
        sensors,
        b_a,
        b_w: rand_mat(rng, n, m_w),
        e_hat: rand_mat(rng, 1, n),
    };
    let schedule = SensorSchedule {
        frame_period: t_len,
        samples,
    };
    (model, schedule)
}

/// Independent oracle for the maximal output-nulling subspace: the set of
/// initial states from which some input sequence keeps the output exactly
/// zero over `n` steps (which, by dimension counting, extends indefinitely).
/// Solved as the state-block projection of `ker [O | G]` where `O` stacks
/// `C A^k` and `G` is the block-Toeplitz input-propagation map.
pub fn nulling_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Subspace {
    let n = a.nrows();
    let steps = n + 1;
    let o = model::stack_observability(a, c, steps);
    let g = model::stack_markov(a, b, c, d, steps);
    let stacked = linalg::hcat(&[o, g]);
    let k = linalg::kernel(&stacked, None);
    if k.ncols() == 0 {
        return Subspace::trivial(n);
    }
    Subspace::from_columns(&k.rows(0, n).into_owned(), None)
}

/// Largest principal angle between two subspaces, `pi/2` on dimension
/// mismatch (so equality assertions fail loudly).
pub fn subspace_gap(u: &Subspace, v: &Subspace) -> f64 {
    if u.dim() != v.dim() {
        return std::f64::consts::FRAC_PI_2;
    }
    u.largest_principal_angle(v)
}

/// Least-squares linear fit of `vals[k]` against `k`: `(slope, r_squared)`.
pub fn regress(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean_x = (vals.len() as f64 - 1.0) / 2.0;
    let mean_y: f64 = vals.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (k, &v) in vals.iter().enumerate() {
        let dx = k as f64 - mean_x;
        let dy = v - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}
