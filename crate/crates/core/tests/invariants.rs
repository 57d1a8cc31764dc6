//! Property suites for the spec invariants.

use isscert::certificates::{gain_eval, port_certificate, CertificateBundle, IssCertificate};
use isscert::cli::Checkpoint;
use isscert::diffcore::{spectral_norm_exact, HiddenActivation, Mlp, OutputActivation};
use isscert::environments::{sample_goal_batch, EnvConfig, EnvironmentModel, Sharing};
use isscert::evaluation::{rollout, BaselineSpec, NominalController};
use isscert::training::TrainConfig;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn envs() -> Vec<EnvironmentModel> {
    vec![
        EnvConfig::platoon(5).build().unwrap(),
        EnvConfig::drone(2, 2).build().unwrap(),
        EnvConfig::microgrid(5).build().unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn certificate_is_non_negative(seed in any::<u64>(), kind in 0usize..3, xs in prop::collection::vec(-100.0f64..100.0, 8 * 8)) {
        let env = &envs()[kind];
        let cert = IssCertificate::init(env.goal_frame(0), &[12, 12], 1.0, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let d = cert.dim();
        let rows = xs.len() / d;
        let x = Array2::from_shape_vec((rows, d), xs[..rows * d].to_vec()).unwrap();
        for v in cert.eval_batch(x.view()).unwrap() {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn gain_is_strictly_below_identity(k in -30.0f64..30.0, log_a in -12.0f64..6.0) {
        let a = 10f64.powf(log_a);
        let chi = gain_eval(k, a);
        prop_assert!(chi > 0.0 && chi < a);
    }

    #[test]
    fn relu_output_is_non_negative(seed in any::<u64>(), x in prop::collection::vec(-50.0f64..50.0, 4)) {
        let net = Mlp::new(&[4, 10, 10, 3], HiddenActivation::Tanh, OutputActivation::Relu, false, seed).unwrap();
        prop_assert!(net.eval(&x).unwrap().iter().all(|&y| y >= 0.0));
    }

    #[test]
    fn goal_samples_have_zero_distance(seed in any::<u64>(), kind in 0usize..3) {
        let env = &envs()[kind];
        let batch = sample_goal_batch(env, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (i, node) in batch.nodes.iter().enumerate() {
            for row in node.rows() {
                prop_assert_eq!(env.dist_to_goal(i, row.as_slice().unwrap()), 0.0);
            }
        }
    }

    #[test]
    fn spectral_normalization_is_idempotent(seed in any::<u64>()) {
        let mut net = Mlp::new(&[3, 16, 16, 1], HiddenActivation::Tanh, OutputActivation::None, true, seed).unwrap();
        // converged estimates; 20 iterations can stall on near-equal top singular values
        let (once, _) = net.spectral_normalize(200);
        let mut again = once.clone();
        for l in 0..again.layers.len() - 1 {
            again.layers[l].power_u = net.layers[l].power_u.clone();
        }
        let (twice, _) = again.spectral_normalize(200);
        let diff: f64 = once.flatten().iter().zip(twice.flatten()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-3, "{}", diff);
        for l in &once.layers[..once.layers.len() - 1] {
            prop_assert!(spectral_norm_exact(&l.weight) <= 1.0 + 1e-3);
        }
    }

    #[test]
    fn platoon_port_uses_three_role_groups(n in 3usize..150) {
        let src = EnvConfig::platoon(5).build().unwrap();
        let b = CertificateBundle::init(&src, &[8], 1.0, false, &mut ChaCha8Rng::seed_from_u64(n as u64)).unwrap();
        let dst = src.resized(n, Sharing::PerRole).unwrap();
        let p = port_certificate(&b, &src, &dst).unwrap();
        prop_assert_eq!(p.n(), n);
        prop_assert_eq!(p.groups.len(), 3);
        prop_assert_eq!(p.certificate(0), b.certificate(0));
        prop_assert_eq!(p.certificate(n - 1), b.certificate(4));
        for j in 1..n - 1 {
            prop_assert_eq!(p.certificate(j), b.certificate(2));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), kind in 0usize..3) {
        let env = &envs()[kind];
        let b = CertificateBundle::init(env, &[8, 8], 1.0, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let ck = Checkpoint::new(env, b, TrainConfig::for_kind(env.kind), &[]);
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        prop_assert_eq!(back.bundle.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ck.bundle.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rollouts_repeat_exactly(seed in 0u64..1000) {
        let env = EnvConfig::platoon(5).build().unwrap();
        let lqr = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        let a = rollout(&env, &lqr, &env.scenario(seed), None, Some(100)).unwrap();
        let b = rollout(&env, &lqr, &env.scenario(seed), None, Some(100)).unwrap();
        prop_assert_eq!(a, b);
    }
}
