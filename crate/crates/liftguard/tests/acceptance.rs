//! Acceptance gate: one test per criterion, each printing a PASS line with
//! its measured evidence once its assertions hold.

mod common;

use std::time::{Duration, Instant};

use liftguard::detect::{self, Condition, Verdict, Witness};
use liftguard::linalg;
use liftguard::model::{simulate, AttackPolicy, InputSource, ModeSystem};
use liftguard::subspace::{self, Subspace};
use liftguard::synth;
use liftguard::uas;
use nalgebra::{Complex, DMatrix, DVector};
use rand::prelude::*;

use common::{nulling_oracle, rand_mat, rand_vec, regress, rng, stable_mat, subspace_gap};

fn assert_runtime(start: Instant, limit: Duration, label: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= limit,
        "{label}: runtime {elapsed:?} exceeds budget {limit:?}"
    );
}

#[test]
fn criterion_1_uas_friend_recovery() {
    let start = Instant::now();
    let sc = uas::scenario();
    let plant = sc.per_step_plant().unwrap();
    let sys = plant.mode_system(Some(uas::MODE_BOTH)).unwrap();
    let geo = detect::geometric_data(&sys).unwrap();

    // the nulling subspace against an independent feasibility oracle
    let oracle = nulling_oracle(&sys.a, &sys.b_a, &sys.c, &sys.d_a);
    let gap = subspace_gap(&geo.v, &oracle);
    assert!(gap < 1e-6, "nulling-subspace gap {gap:.3e}");

    // the friend acts as [-I2 0] on the subspace and has no injection term
    let n = sys.state_dim();
    let mut m_ref = DMatrix::zeros(sys.attack_dim(), n);
    m_ref[(0, 0)] = -1.0;
    m_ref[(1, 1)] = -1.0;
    let m_gap = linalg::spectral_norm(&((&geo.friend.m - &m_ref) * geo.v.basis()));
    assert!(m_gap < 1e-6, "friend feedback gap {m_gap:.3e}");
    assert_eq!(geo.friend.n_mat.ncols(), 0, "injection term must be empty");

    assert_runtime(start, Duration::from_secs(1), "criterion 1");
    println!(
        "ACCEPTANCE 1 (UAS friend recovery): PASS — dim V = {}, subspace gap {gap:.2e}, \
         feedback gap {m_gap:.2e}, N empty",
        geo.v.dim()
    );
}

#[test]
fn criterion_2_uas_vulnerability_verdict() {
    let start = Instant::now();
    let sc = uas::scenario();
    let plant = sc.per_step_plant().unwrap();
    let report = detect::analyze_detectability(&plant, uas::MODE_BOTH).unwrap();
    assert_eq!(report.verdict, Verdict::Vulnerable);
    assert_eq!(report.triggered_condition, Some(Condition::III));
    let w = match report.witness.as_ref().unwrap() {
        Witness::Eigenspace(w) => w,
        other => panic!("expected an eigenvalue witness, got {other:?}"),
    };
    let dist = (w.lambda - Complex::new(1.0, 0.0)).norm();
    assert!(dist < 1e-8, "|lambda - 1| = {dist:.3e}");
    assert_eq!(w.chain.ncols(), 1, "witness must be a plain eigenvector");

    assert_runtime(start, Duration::from_secs(1), "criterion 2");
    println!(
        "ACCEPTANCE 2 (UAS vulnerability verdict): PASS — condition (iii), \
         lambda = {:.12}, chain length 1",
        w.lambda.re
    );
}

#[test]
fn criterion_3_stealthy_attack_trend() {
    let start = Instant::now();
    let v = uas::experiment_vulnerability(None).unwrap();
    assert_eq!(v.trace.ys.len(), 500);
    let max_y = v.trace.max_y_norm();
    assert!(
        max_y <= 2.0 * uas::VULN_STEALTH_BUDGET,
        "max ||y|| = {max_y:.3e} exceeds twice the stealth budget"
    );
    let z_norms: Vec<f64> = v.trace.zs.iter().map(|z| z.norm()).collect();
    let (slope, r2) = regress(&z_norms);
    assert!(slope > 0.0, "severity slope {slope:.3e} not positive");
    assert!(r2 > 0.99, "severity linearity R^2 = {r2:.4}");
    // disengaged attack keeps the deviation at zero
    assert!(v.baseline.max_z_norm() < 1e-12);

    assert_runtime(start, Duration::from_secs(5), "criterion 3");
    println!(
        "ACCEPTANCE 3 (stealthy-attack trend): PASS — max ||y|| = {max_y:.2e}, \
         slope {slope:.2e}, R^2 = {r2:.4}"
    );
}

#[test]
fn criterion_4_lifted_detection() {
    let start = Instant::now();
    let sc = uas::scenario();
    let plant = sc.lifted_plant().unwrap();
    let sys = plant.mode_system(Some(uas::MODE_BOTH)).unwrap();
    let report = detect::analyze_mode(&sys, uas::MODE_BOTH).unwrap();
    assert_eq!(report.verdict, Verdict::Detectable);
    let thresholds = detect::compute_thresholds(&sys, &report, 120).unwrap();

    // 100 seeded noise-only runs: no false alarm
    let x0 = DVector::zeros(sys.state_dim());
    let mut false_alarms = 0;
    for seed in 0..100u64 {
        let noise = uas::noise_sequence(seed, 200, sys.noise_dim(), uas::NOISE_BOUND);
        let trace =
            simulate(&sys, &x0, &InputSource::Zero, &InputSource::Sequence(&noise), 200).unwrap();
        if detect::alarm(&trace, thresholds.epsilon).is_some() {
            false_alarms += 1;
        }
    }
    assert_eq!(false_alarms, 0, "noise-only runs raised alarms");

    // the attack run trips the alarm near the severity crossing
    let d = uas::experiment_detection(0, None).unwrap();
    let alarm = d.alarm_frame.expect("attack must trip the alarm");
    let cross = d.z_cross_frame.expect("attack must cross the delta bound");
    assert!(
        alarm.abs_diff(cross) <= 50,
        "alarm frame {alarm} more than 50 frames from severity crossing {cross}"
    );

    assert_runtime(start, Duration::from_secs(30), "criterion 4");
    println!(
        "ACCEPTANCE 4 (lifted detection): PASS — epsilon = {:.3e}, delta = {:.3e}, \
         0/100 false alarms, alarm frame {alarm}, crossing frame {cross}",
        thresholds.epsilon, thresholds.delta
    );
}

#[test]
fn criterion_5_identification() {
    let start = Instant::now();
    let i = uas::experiment_identification(0, None).unwrap();
    assert!(i.matrix.identifiable, "north/east must be discernible");

    let window = {
        let sc = uas::scenario();
        sc.lifted_plant().unwrap().state_dim() + 2
    };
    for (true_mode, other) in [(uas::MODE_NORTH, uas::MODE_EAST), (uas::MODE_EAST, uas::MODE_NORTH)] {
        let hist = &i.histories[true_mode];
        assert_eq!(hist.final_set, vec![true_mode.to_string()]);
        assert!(!hist.unmodeled_attack);
        let ti = hist.modes.iter().position(|m| m == true_mode).unwrap();
        let oi = hist.modes.iter().position(|m| m == other).unwrap();
        // the true mode's residual never crosses its threshold
        for step in &hist.steps {
            assert!(
                step.active[ti],
                "true mode `{true_mode}` eliminated at window {}",
                step.frame
            );
        }
        // the wrong mode is eliminated within one window of the onset
        let elim = hist
            .steps
            .iter()
            .position(|s| !s.active[oi])
            .expect("wrong mode never eliminated");
        assert!(
            hist.steps[elim].frame <= window,
            "mode `{other}` eliminated only at window {}",
            hist.steps[elim].frame
        );
    }
    // attack-free run keeps the full estimate set
    assert_eq!(i.no_attack_history.final_set.len(), 2);

    assert_runtime(start, Duration::from_secs(10), "criterion 5");
    println!(
        "ACCEPTANCE 5 (identification): PASS — identifiable, Q -> {{north}} and {{east}} \
         within one window, no-attack set unchanged"
    );
}

#[test]
fn criterion_6_nulling_subspace_oracle() {
    let start = Instant::now();
    let mut r = rng(600);
    for i in 0..50 {
        let n = r.gen_range(1..=4usize);
        let m = r.gen_range(1..=2usize);
        let p = r.gen_range(1..=2usize);
        let a = rand_mat(&mut r, n, n);
        let b = rand_mat(&mut r, n, m);
        let c = rand_mat(&mut r, p, n);
        let d = rand_mat(&mut r, p, m);
        let v = subspace::max_output_nulling(&a, &b, &c, &d).unwrap();
        let oracle = nulling_oracle(&a, &b, &c, &d);
        let gap = subspace_gap(&v, &oracle);
        assert!(
            gap < 1e-6,
            "instance {i}: dim {} vs oracle dim {}, gap {gap:.3e}",
            v.dim(),
            oracle.dim()
        );
    }
    assert_runtime(start, Duration::from_secs(30), "criterion 6");
    println!("ACCEPTANCE 6 (nulling-subspace oracle equivalence): PASS — 50/50 instances agree");
}

/// Draw a system whose maximal nulling subspace is nontrivial (retries the
/// generator until one appears; with these dimensions most draws qualify).
fn system_with_nulling(r: &mut rand_chacha::ChaCha8Rng) -> (ModeSystem, Subspace) {
    loop {
        let n = r.gen_range(2..=5usize);
        let m = r.gen_range(1..=3usize);
        let p = r.gen_range(1..=2usize);
        let sys = common::random_mode_system(r, n, m, p, 1);
        let v = subspace::max_output_nulling(&sys.a, &sys.b_a, &sys.c, &sys.d_a).unwrap();
        if !v.is_trivial() {
            return (sys, v);
        }
    }
}

struct NullingPolicy<'a> {
    m: &'a DMatrix<f64>,
    n_mat: &'a DMatrix<f64>,
    free: Vec<DVector<f64>>,
}

impl AttackPolicy for NullingPolicy<'_> {
    fn attack(&self, frame: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut a = self.m * x;
        if self.n_mat.ncols() > 0 {
            a += self.n_mat * &self.free[frame];
        }
        a
    }
}

#[test]
fn criterion_7_invariant_suite() {
    let start = Instant::now();
    let mut r = rng(700);

    // friend parameterization: any two friends differ by an injection-gain
    // term plus a joint-kernel term
    for i in 0..100 {
        let (sys, v) = system_with_nulling(&mut r);
        let f1 = subspace::compute_friend(&v, &sys.a, &sys.b_a, &sys.c, &sys.d_a).unwrap();
        // an independently perturbed friend: injection gain + joint kernel
        let mut m2 = f1.m.clone();
        if f1.n_mat.ncols() > 0 {
            let k = rand_mat(&mut r, f1.n_mat.ncols(), sys.state_dim());
            m2 += &f1.n_mat * k;
        }
        let joint = linalg::kernel(
            &linalg::vcat(&[sys.b_a.clone(), sys.d_a.clone()]),
            None,
        );
        if joint.ncols() > 0 {
            let w = rand_mat(&mut r, joint.ncols(), sys.state_dim());
            m2 += &joint * w;
        }
        let f2 = subspace::Friend {
            m: m2,
            n_mat: f1.n_mat.clone(),
            subspace: v.clone(),
        };
        let (inv, nul, _) = f2.residuals(&sys.a, &sys.b_a, &sys.c, &sys.d_a);
        assert!(inv < 1e-7 && nul < 1e-7, "instance {i}: perturbed friend invalid");

        let diff = (&f1.m - &f2.m) * v.basis();
        let b_diff = &sys.b_a * &diff;
        // containment 1: B (M1 - M2) V inside Im(B N)
        let bn = &sys.b_a * &f1.n_mat;
        let im_bn = Subspace::from_columns(&bn, None);
        let resid1 = linalg::spectral_norm(&(im_bn.complement_projector() * &b_diff));
        assert!(resid1 < 1e-7, "instance {i}: Im(BN) containment residual {resid1:.3e}");
        // containment 2: (M1 - M2) V - N K inside ker B ∩ ker D for some K
        let k_hat = linalg::lstsq(&f1.n_mat, &diff);
        let rem = &diff - &f1.n_mat * k_hat;
        let rb = linalg::spectral_norm(&(&sys.b_a * &rem));
        let rd = linalg::spectral_norm(&(&sys.d_a * &rem));
        assert!(rb < 1e-7 && rd < 1e-7, "instance {i}: kernel residuals {rb:.3e}/{rd:.3e}");
    }

    // nulling-policy soundness: a_k = M x_k + N a~_k keeps y at zero from
    // any start inside the subspace
    for i in 0..100 {
        let (sys, v) = system_with_nulling(&mut r);
        let f = subspace::compute_friend(&v, &sys.a, &sys.b_a, &sys.c, &sys.d_a).unwrap();
        let n = sys.state_dim();
        let x0 = v.basis() * rand_vec(&mut r, v.dim());
        let free: Vec<DVector<f64>> = (0..2 * n)
            .map(|_| rand_vec(&mut r, f.n_mat.ncols()))
            .collect();
        let policy = NullingPolicy {
            m: &f.m,
            n_mat: &f.n_mat,
            free,
        };
        let trace =
            simulate(&sys, &x0, &InputSource::Policy(&policy), &InputSource::Zero, 2 * n).unwrap();
        // relative to the trajectory: unstable closed loops amplify state
        // magnitude, and the zero-output identity is exact only in the
        // corresponding relative sense
        let reach = trace.xs.iter().map(|x| x.norm()).fold(1.0_f64, f64::max);
        let scale = linalg::spectral_norm(&sys.c).max(1.0) * reach;
        let max_y = trace.max_y_norm();
        assert!(max_y < 1e-7 * scale, "instance {i}: nulling policy leaked y {max_y:.3e}");
    }

    // nulling-policy completeness: every zero-output-feasible start found by
    // the horizon oracle lies inside the subspace
    let mut checked = 0;
    for i in 0..100 {
        let (sys, v) = system_with_nulling(&mut r);
        let n = sys.state_dim();
        let o = liftguard::model::stack_observability(&sys.a, &sys.c, n + 1);
        let g = liftguard::model::stack_markov(&sys.a, &sys.b_a, &sys.c, &sys.d_a, n + 1);
        let kernel = linalg::kernel(&linalg::hcat(&[o, g]), None);
        for col in 0..kernel.ncols() {
            let x0 = kernel.column(col).rows(0, n).into_owned();
            if x0.norm() < 1e-6 {
                continue;
            }
            let sin = v.sin_angle_to_vector(&x0);
            assert!(sin < 1e-7, "instance {i}: feasible start escapes V by {sin:.3e}");
            checked += 1;
        }
    }
    assert!(checked >= 100, "completeness check exercised only {checked} starts");

    // eigenvector push-forward: restricted eigenpairs map to closed-loop
    // eigenpairs through the subspace basis
    let mut pairs = 0;
    while pairs < 100 {
        let (sys, _) = system_with_nulling(&mut r);
        let geo = match detect::geometric_data(&sys) {
            Ok(g) => g,
            Err(_) => continue,
        };
        if geo.v_star.is_trivial() {
            continue;
        }
        let a_cl = &sys.a + &sys.b_a * &geo.friend.m;
        let a_cl_c = linalg::to_complex(&a_cl);
        let v_c = linalg::to_complex(geo.v_star.basis());
        let scale = linalg::spectral_norm(&a_cl).max(1.0);
        for eig in subspace::eig_structure(&geo.restricted, None) {
            for col in 0..eig.eigenvectors.ncols() {
                let vec = eig.eigenvectors.column(col).into_owned();
                let lifted = &v_c * &vec;
                let resid = (&a_cl_c * &lifted - &lifted * eig.lambda).norm();
                assert!(resid < 1e-7 * scale, "push-forward residual {resid:.3e}");
                pairs += 1;
            }
        }
    }

    // projection formula: the pseudoinverse identity for the sum projector
    // matches direct orthonormalization, and its dual matches intersection
    for i in 0..200 {
        let n = r.gen_range(2..=6usize);
        let dv = r.gen_range(1..=n);
        let dw = r.gen_range(1..=n);
        let v = Subspace::from_columns(&rand_mat(&mut r, n, dv), None);
        let w = Subspace::from_columns(&rand_mat(&mut r, n, dw), None);
        let pv = v.projector();
        let pw = w.projector();
        let sum = &pv + &pw;
        // projector sums have O(1) spectra on their range; an absolute
        // pseudoinverse cut keeps rounding noise out of the inverse
        let formula = linalg::pinv_tol(&sum, Some(1e-9)) * &sum;
        let direct = v.sum(&w).unwrap().projector();
        let resid = linalg::spectral_norm(&(&formula - &direct));
        assert!(resid < 1e-7, "instance {i}: sum-projector residual {resid:.3e}");

        let perp = v.complement_projector() + w.complement_projector();
        let formula_int =
            DMatrix::identity(n, n) - linalg::pinv_tol(&perp, Some(1e-9)) * &perp;
        let direct_int = v.intersect(&w).unwrap().projector();
        let resid_int = linalg::spectral_norm(&(&formula_int - &direct_int));
        assert!(resid_int < 1e-7, "instance {i}: intersection residual {resid_int:.3e}");
    }

    assert_runtime(start, Duration::from_secs(60), "criterion 7");
    println!(
        "ACCEPTANCE 7 (invariant suite): PASS — friend parameterization 100, policy soundness 100, \
         completeness {checked} starts, push-forward {pairs} eigenpairs, projection formula 200"
    );
}

/// Random orthogonal matrix (QR of a Gaussian draw).
fn random_orthogonal(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = rand_mat(r, n, n).qr();
    qr.q()
}

/// Change of state basis `x -> T x` applied to a deviation system.
fn transform(sys: &ModeSystem, t: &DMatrix<f64>) -> ModeSystem {
    let ti = t.transpose(); // orthogonal
    ModeSystem {
        a: t * &sys.a * &ti,
        b_a: t * &sys.b_a,
        c: &sys.c * &ti,
        d_a: sys.d_a.clone(),
        b_w: t * &sys.b_w,
        d_w: sys.d_w.clone(),
        e: &sys.e * &ti,
        f_a: sys.f_a.clone(),
        f_w: sys.f_w.clone(),
    }
}

/// Verify one vulnerable verdict: synthesize by witness kind, then simulate
/// until the plan reaches the target severity while staying within budget.
fn verify_vulnerable(sys: &ModeSystem, report: &detect::DetectabilityReport) {
    const TARGET: f64 = 10.0;
    const BUDGET: f64 = 1e-3;
    let plan = match report.witness.as_ref().expect("vulnerable verdict must carry a witness") {
        Witness::KernelDirection(dir) => synth::synth_condition_i(sys, dir, TARGET).unwrap(),
        Witness::SeverityResponse(w) => {
            synth::synth_condition_ii(sys, &report.geo.friend, w, TARGET).unwrap()
        }
        Witness::Eigenspace(w) => synth::synth_condition_iii(sys, &report.geo, w, BUDGET).unwrap(),
    };
    // streaming simulation: constant memory, so slow linear-growth plans
    // can run for millions of steps
    let mut x = DVector::zeros(sys.state_dim());
    for k in 0..4_000_000usize {
        let a = plan.attack(k, &x);
        let y = (&sys.c * &x + &sys.d_a * &a).norm();
        let z = (&sys.e * &x + &sys.f_a * &a).norm();
        assert!(
            y <= BUDGET * (1.0 + 1e-9),
            "plan {:?} leaked output {y:.3e} at step {k}",
            plan.kind
        );
        if z >= TARGET {
            return;
        }
        x = &sys.a * &x + &sys.b_a * &a;
    }
    panic!(
        "plan {:?} never reached severity {TARGET} (certificate {:?})",
        plan.kind, plan.certificate.growth
    );
}

#[test]
fn criterion_8_soundness_loop() {
    let start = Instant::now();
    let mut r = rng(800);

    // vulnerable side: randomized planted instances of each condition,
    // hidden behind a random orthogonal change of state basis
    for i in 0..30 {
        let n = r.gen_range(2..=4usize);
        let kind = i % 3;
        let raw = match kind {
            // a joint input-kernel direction that the severity map sees
            0 => {
                let mut sys = common::random_mode_system(&mut r, n, 2, 2, 1);
                sys.b_a.column_mut(1).fill(0.0);
                sys.d_a.column_mut(1).fill(0.0);
                sys.f_a[(0, 1)] = 1.0 + r.gen_range(0.0..1.0);
                sys
            }
            // an output-invisible injection whose state response reaches
            // the severity map
            1 => {
                let mut a = stable_mat(&mut r, n, 0.7);
                a[(1, 0)] = 1.0 + r.gen_range(0.0..1.0);
                let mut b = DMatrix::zeros(n, 1);
                b[(0, 0)] = 1.0;
                let mut e = DMatrix::zeros(1, n);
                e[(0, 1)] = 1.0;
                ModeSystem {
                    a,
                    b_a: b,
                    c: DMatrix::zeros(1, n),
                    d_a: DMatrix::zeros(1, 1),
                    b_w: DMatrix::zeros(n, 0),
                    d_w: DMatrix::zeros(1, 0),
                    e,
                    f_a: DMatrix::zeros(1, 1),
                    f_w: DMatrix::zeros(1, 0),
                }
            }
            // an unstable uncontrollable invariant-zero direction carrying
            // severity; the second input column is the only visible one
            _ => {
                let lambda = 1.0 + r.gen_range(0.05..0.5);
                let mut a = DMatrix::zeros(n, n);
                a[(0, 0)] = lambda;
                for j in 1..n {
                    a[(j, j)] = r.gen_range(-0.5..0.5);
                }
                let b = DMatrix::identity(n, n);
                let mut d = DMatrix::zeros(1, n);
                d[(0, 0)] = 1.0;
                let mut e = DMatrix::zeros(1, n);
                e[(0, 0)] = 1.0;
                ModeSystem {
                    a,
                    b_a: b,
                    c: DMatrix::zeros(1, n),
                    d_a: d,
                    b_w: DMatrix::zeros(n, 0),
                    d_w: DMatrix::zeros(1, 0),
                    e,
                    f_a: DMatrix::zeros(1, n),
                    f_w: DMatrix::zeros(1, 0),
                }
            }
        };
        let t = random_orthogonal(&mut r, n);
        let sys = transform(&raw, &t);
        let report = detect::analyze_mode(&sys, "planted").unwrap();
        assert_eq!(
            report.verdict,
            Verdict::Vulnerable,
            "planted instance {i} (kind {kind}) not judged vulnerable"
        );
        verify_vulnerable(&sys, &report);
    }

    // detectable side: random stable systems survive a randomized
    // stealthy-attack search at the certified thresholds
    let mut policies = 0;
    let mut systems = 0;
    while policies < 1000 {
        let n = r.gen_range(2..=4usize);
        let m = r.gen_range(1..=2usize);
        let p = r.gen_range(1..=2usize);
        let mut sys = common::random_mode_system(&mut r, n, m, p, 1);
        sys.a = stable_mat(&mut r, n, 0.7);
        sys.b_w = rand_mat(&mut r, n, 1);
        sys.d_w = rand_mat(&mut r, p, 1);
        sys.f_w = DMatrix::zeros(1, 1);
        let report = match detect::analyze_mode(&sys, "random") {
            Ok(rep) => rep,
            Err(_) => continue,
        };
        if report.verdict != Verdict::Detectable {
            verify_vulnerable(&sys, &report);
            continue;
        }
        let thresholds = match detect::compute_thresholds(&sys, &report, 80) {
            Ok(t) => t,
            Err(_) => continue,
        };
        systems += 1;
        let x0 = DVector::zeros(n);
        for _ in 0..100 {
            let horizon = 60;
            let raw: Vec<DVector<f64>> = (0..horizon).map(|_| rand_vec(&mut r, m)).collect();
            let probe =
                simulate(&sys, &x0, &InputSource::Sequence(&raw), &InputSource::Zero, horizon)
                    .unwrap();
            let max_y = probe.max_y_norm();
            if max_y < 1e-12 {
                continue;
            }
            // rescale to sit just inside the epsilon-stealth region
            let scale = 0.99 * thresholds.epsilon / max_y;
            let seq: Vec<DVector<f64>> = raw.iter().map(|a| a * scale).collect();
            let trace =
                simulate(&sys, &x0, &InputSource::Sequence(&seq), &InputSource::Zero, horizon)
                    .unwrap();
            let max_z = trace.max_z_norm();
            assert!(
                max_z <= thresholds.delta,
                "stealthy policy reached severity {max_z:.3e} above delta {:.3e}",
                thresholds.delta
            );
            policies += 1;
        }
    }

    assert_runtime(start, Duration::from_secs(300), "criterion 8");
    println!(
        "ACCEPTANCE 8 (soundness loop): PASS — 30 vulnerable instances verified, \
         {policies} stealthy policies over {systems} detectable systems stayed below delta"
    );
}

#[test]
fn criterion_9_lifting_exactness() {
    let start = Instant::now();
    let mut r = rng(900);
    for i in 0..50 {
        let n = r.gen_range(1..=4usize);
        let (model, schedule) = common::random_model(&mut r, n);
        let plant = liftguard::model::lift(&model, &schedule).unwrap();
        let sys = plant.mode_system(Some("m")).unwrap();
        let t_len = schedule.frame_period;
        let frames = 6;
        let m_a = model.attack_dim().unwrap();
        let m_w = model.b_w.ncols();
        let attacks: Vec<DVector<f64>> =
            (0..frames * t_len).map(|_| rand_vec(&mut r, m_a)).collect();
        let noises: Vec<DVector<f64>> =
            (0..frames * t_len).map(|_| rand_vec(&mut r, m_w)).collect();
        let x0 = rand_vec(&mut r, n);

        let per_step =
            liftguard::model::simulate_per_step(&model, &schedule, Some("m"), &x0, &attacks, &noises, frames)
                .unwrap();

        let stack = |steps: &[DVector<f64>], width: usize| -> Vec<DVector<f64>> {
            (0..frames)
                .map(|k| {
                    let mut block = DVector::zeros(t_len * width);
                    for s in 0..t_len {
                        block.rows_mut(s * width, width).copy_from(&steps[k * t_len + s]);
                    }
                    block
                })
                .collect()
        };
        let a_blocks = stack(&attacks, m_a);
        let w_blocks = stack(&noises, m_w);
        let lifted = simulate(
            &sys,
            &x0,
            &InputSource::Sequence(&a_blocks),
            &InputSource::Sequence(&w_blocks),
            frames,
        )
        .unwrap();

        let scale = per_step
            .xs
            .iter()
            .map(|x| x.norm())
            .fold(1.0_f64, f64::max);
        for k in 0..frames {
            let dy = (&lifted.ys[k] - &per_step.ys[k]).norm();
            let dx = (&lifted.xs[k] - &per_step.xs[k * t_len]).norm();
            assert!(
                dy <= 1e-9 * scale && dx <= 1e-9 * scale,
                "instance {i} frame {k}: output gap {dy:.3e}, state gap {dx:.3e}"
            );
        }
    }
    assert_runtime(start, Duration::from_secs(10), "criterion 9");
    println!("ACCEPTANCE 9 (lifting exactness): PASS — 50/50 systems agree at sampled instants");
}
