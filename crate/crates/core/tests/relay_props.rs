//! Property tests for Bell-measurement swapping, loss and chains.

use cvrelay::entangler::{output_covariance, EntanglerParams};
use cvrelay::gaussian::{check_physicality, log_negativity, TwoModeGaussianState};
use cvrelay::relay::{
    apply_loss, concatenate_chain, derive_seed, explicit_swap_blocks, sample_bell_outcome, swap,
    BellOutcome, LossLaw, LossParams, OutcomePolicy, SwapChainConfig,
};
use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{draw_with, random_state};

fn random_channel(rng: &mut ChaCha8Rng) -> TwoModeGaussianState {
    let cov = random_state(&draw_with(rng));
    let drift = Vector4::from_fn(|_, _| rng.gen_range(-2.0..2.0));
    TwoModeGaussianState::new(cov, drift).unwrap()
}

#[test]
fn swapped_states_stay_physical() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::INFINITY;
    for _ in 0..1_000_000 {
        let s1 = random_channel(&mut rng);
        let s2 = random_channel(&mut rng);
        let k = BellOutcome::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)).unwrap();
        let out = swap(&s1, &s2, &k).unwrap();
        let p = check_physicality(&out.cov);
        assert!(
            p.physical,
            "non-physical swap output, ν₋ = {}",
            p.min_symplectic_eigenvalue
        );
        worst = worst.min(p.min_symplectic_eigenvalue);
    }
    assert!(worst >= 0.5 - 1e-10);
}

#[test]
fn generic_swap_matches_explicit_blocks_for_identical_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let v = random_state(&draw_with(&mut rng));
        let s = TwoModeGaussianState::centered(v);
        let out = swap(&s, &s, &BellOutcome::default()).unwrap();
        let (v11, v12) = explicit_swap_blocks(&v).unwrap();
        let mut expected = Matrix4::zeros();
        expected.fixed_view_mut::<2, 2>(0, 0).copy_from(&v11);
        expected.fixed_view_mut::<2, 2>(0, 2).copy_from(&v12);
        expected
            .fixed_view_mut::<2, 2>(2, 0)
            .copy_from(&v12.transpose());
        expected.fixed_view_mut::<2, 2>(2, 2).copy_from(&v11);
        let scale = v.matrix().amax().max(1.0);
        let diff = (out.cov.matrix() - expected).amax();
        assert!(diff < 1e-12 * scale, "deviation {diff:.3e}");
    }
}

#[test]
fn sampled_outcomes_have_the_stated_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s1 = random_channel(&mut rng);
    let s2 = random_channel(&mut rng);
    let z = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let c1 = s1.cov.matrix().fixed_view::<2, 2>(2, 2).into_owned();
    let c2 = s2.cov.matrix().fixed_view::<2, 2>(2, 2).into_owned();
    let target = (z * c1 * z + c2) * 0.5;
    let mean = [
        -(s1.drift[2] - s2.drift[2]) / 2.0,
        (s1.drift[3] + s2.drift[3]) / 2.0,
    ];

    let n = 100_000;
    let draws: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let k = sample_bell_outcome(&s1, &s2, derive_seed(42, i)).unwrap();
            [k.x_minus, k.y_plus]
        })
        .collect();
    let avg = |f: &dyn Fn(&[f64; 2]) -> f64| draws.iter().map(f).sum::<f64>() / n as f64;
    let m = [avg(&|k| k[0]), avg(&|k| k[1])];
    for i in 0..2 {
        let sigma = target[(i, i)].sqrt();
        assert!(
            (m[i] - mean[i]).abs() < 5.0 * sigma / (n as f64).sqrt(),
            "mean[{i}] = {}",
            m[i]
        );
    }
    let cov = Matrix2::from_fn(|i, j| avg(&|k| (k[i] - m[i]) * (k[j] - m[j])));
    let scale = (target[(0, 0)] * target[(1, 1)]).sqrt();
    for i in 0..2 {
        for j in 0..2 {
            let rel = (cov[(i, j)] - target[(i, j)]).abs() / scale;
            assert!(
                rel < 0.03,
                "cov[{i}{j}] = {} vs {}",
                cov[(i, j)],
                target[(i, j)]
            );
        }
    }
}

#[test]
fn chain_covariance_does_not_depend_on_outcomes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let source = random_channel(&mut rng);
        let loss = LossParams::new(0.9, 0.2, 10.0, LossLaw::Decibel).unwrap();
        let base = SwapChainConfig::repeated(source, 5)
            .unwrap()
            .with_measured_loss(loss);
        let zero = concatenate_chain(&base).unwrap();
        for seed in [0, 7, 1234] {
            let sampled = concatenate_chain(
                &base
                    .clone()
                    .with_outcome_policy(OutcomePolicy::Sampled { seed }),
            )
            .unwrap();
            let scale = zero.state.cov.matrix().amax().max(1.0);
            assert!((zero.state.cov.matrix() - sampled.state.cov.matrix()).amax() < 1e-10 * scale);
        }
    }
}

#[test]
fn sampled_chains_are_reproducible() {
    let source = TwoModeGaussianState::centered(
        cvrelay::gaussian::CovarianceMatrix4::two_mode_squeezed_vacuum(0.8),
    );
    let cfg = SwapChainConfig::repeated(source, 4)
        .unwrap()
        .with_outcome_policy(OutcomePolicy::Sampled { seed: 9 });
    let a = concatenate_chain(&cfg).unwrap();
    let b = concatenate_chain(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.state.drift.iter().any(|x| *x != 0.0));
}

#[test]
fn entanglement_decreases_with_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let s = TwoModeGaussianState::centered(random_state(&draw_with(&mut rng)));
        let mut last = log_negativity(&s.cov).unwrap();
        for eta0 in [0.99, 0.9, 0.7, 0.5, 0.2, 0.05] {
            let l = LossParams::new(eta0, 0.0, 0.0, LossLaw::Decibel).unwrap();
            let e = log_negativity(&apply_loss(&s, &l, &l).cov).unwrap();
            assert!(
                e <= last + 1e-12,
                "E_N rose from {last} to {e} at η = {eta0}"
            );
            last = e;
        }
    }
}

#[test]
fn loss_laws() {
    let db = LossParams::new(0.9, 0.2, 50.0, LossLaw::Decibel).unwrap();
    assert!((db.eta() - 0.9 * 0.1).abs() < 1e-15);
    let ex = LossParams::new(1.0, 0.01, 100.0, LossLaw::Exponential).unwrap();
    assert!((ex.eta() - (-1.0f64).exp()).abs() < 1e-15);
    assert!(LossParams::new(0.0, 0.0, 0.0, LossLaw::Decibel).is_err());
    assert!(LossParams::new(0.5, -1.0, 0.0, LossLaw::Decibel).is_err());
}

#[test]
fn swapping_entangler_outputs_never_adds_entanglement() {
    let base = EntanglerParams::baseline();
    for k in 0..=10 {
        let mut p = base;
        p.filter_a.center = base.omega_m * (-2.0 + 0.2 * k as f64);
        let v = output_covariance(&p.build().unwrap()).unwrap();
        let s = TwoModeGaussianState::centered(v);
        let e_in = log_negativity(&v).unwrap();
        let e_out = log_negativity(&swap(&s, &s, &BellOutcome::default()).unwrap().cov).unwrap();
        assert!(e_out <= e_in + 1e-12, "Ω_a index {k}: {e_out} > {e_in}");
    }
}
