use matchsim::analysis::{ks_distance, moments};
use matchsim::diffusion::{DoubleEnded, DoubleEndedStepper, LimitStepper};
use matchsim::rng::replicate;
use matchsim::SystemParams;
use rand::Rng;
use rand_distr::StandardNormal;

const INF: f64 = f64::INFINITY;

/// Halving dt with the same Brownian path barely moves the terminal mean.
#[test]
fn dt_refinement_is_stable() {
    let p = SystemParams::new(1.0, vec![0.3, -0.1, -0.2], vec![1.0, 0.5, 1.5], vec![1.0, INF, 2.0], 1).unwrap();
    let (dt, horizon) = (2e-3, 2.0);
    let steps = (horizon / dt) as usize;
    let pairs = replicate(90, 0, 10_000, |_, rng| {
        let mut coarse = LimitStepper::new(&p, &[0.0; 3], dt).unwrap();
        let mut fine = LimitStepper::new(&p, &[0.0; 3], dt / 2.0).unwrap();
        for _ in 0..steps {
            let a: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            fine.step_with(&a);
            fine.step_with(&b);
            let joined: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2f64.sqrt()).collect();
            coarse.step_with(&joined);
        }
        (coarse.q.clone(), fine.q.clone())
    });
    for i in 0..3 {
        let c: Vec<f64> = pairs.iter().map(|p| p.0[i]).collect();
        let f: Vec<f64> = pairs.iter().map(|p| p.1[i]).collect();
        let (mc, _, _) = moments(&c).unwrap();
        let (mf, _, se) = moments(&f).unwrap();
        assert!((mc - mf).abs() < 2.0 * se, "class {i}: {mc} vs {mf} (se {se})");
    }
}

/// The two-class coupled limit, observed through Q1 − Q2, has the law of
/// the double-ended process with σ² = 2λ₀.
#[test]
fn two_class_limit_matches_double_ended_in_law() {
    let p = SystemParams::new(1.0, vec![0.3, -0.3], vec![1.0, 1.0], vec![1.0, 1.0], 1).unwrap();
    let (dt, horizon) = (1e-3, 5.0);
    let steps = (horizon / dt) as usize;
    let coupled = replicate(91, 0, 10_000, |_, rng| {
        let mut st = LimitStepper::new(&p, &[0.0, 0.0], dt).unwrap();
        for _ in 0..steps {
            st.step(rng);
        }
        st.q[0] - st.q[1]
    });
    let model = DoubleEnded::from_params(&p, 2f64.sqrt()).unwrap();
    let direct = replicate(91, 1 << 20, 10_000, |_, rng| {
        let mut st = DoubleEndedStepper::new(model, 0.0, dt).unwrap();
        for _ in 0..steps {
            st.step(rng);
        }
        st.x
    });
    let d = ks_distance(&coupled, &direct).unwrap();
    assert!(d <= 0.02, "KS {d}");
}
