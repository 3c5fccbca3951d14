use divbandit_core::geometry::MixedAction;
use divbandit_core::model::{
    kl_bernoulli, kl_gaussian, kl_to_mean, make_alpha_instance, run_seed, sample_arm, stream_rng,
    ArmDistribution, BanditInstance, ModelError, ModelTag,
};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn bernoulli_kl_is_nonnegative_and_zero_on_diagonal(p in 0.0f64..=1.0, q in 0.001f64..0.999) {
        let kl = kl_bernoulli(p, q);
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_bernoulli(q, q), 0.0);
        if (p - q).abs() > 1e-6 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn bernoulli_kl_is_jointly_convex(
        p1 in 0.01f64..0.99, q1 in 0.01f64..0.99,
        p2 in 0.01f64..0.99, q2 in 0.01f64..0.99,
        w in 0.0f64..=1.0,
    ) {
        let mixed = kl_bernoulli(w * p1 + (1.0 - w) * p2, w * q1 + (1.0 - w) * q2);
        let chord = w * kl_bernoulli(p1, q1) + (1.0 - w) * kl_bernoulli(p2, q2);
        prop_assert!(mixed <= chord + 1e-12);
    }

    #[test]
    fn bernoulli_kl_dominates_pinsker(p in 0.01f64..0.99, q in 0.01f64..0.99) {
        prop_assert!(kl_bernoulli(p, q) >= 2.0 * (p - q).powi(2) - 1e-15);
    }

    #[test]
    fn gaussian_kl_closed_form(a in -5.0f64..5.0, b in -5.0f64..5.0, v in 0.1f64..4.0) {
        let arm = ArmDistribution::gaussian(a, v).unwrap();
        let expected = (a - b) * (a - b) / (2.0 * v);
        prop_assert!((kl_gaussian(a, b, v) - expected).abs() <= 1e-12 * (1.0 + expected));
        prop_assert_eq!(kl_to_mean(&arm, b), kl_gaussian(a, b, v));
    }

    #[test]
    fn run_seeds_are_reproducible(master in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(run_seed(master, i), run_seed(master, i));
        prop_assert_ne!(run_seed(master, i), run_seed(master, i + 1));
    }
}

#[test]
fn kl_on_boundary() {
    assert_eq!(kl_bernoulli(0.0, 0.0), 0.0);
    assert!((kl_bernoulli(0.0, 0.5) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(kl_bernoulli(0.5, 0.0), f64::INFINITY);
    assert_eq!(kl_bernoulli(0.5, 1.0), f64::INFINITY);
}

fn within_clt(hits: u64, n: u64, p: f64) -> bool {
    let freq = hits as f64 / n as f64;
    (freq - p).abs() <= 5.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn bernoulli_sampling_matches_mean() {
    let n = 1_000_000u64;
    let mut rng = stream_rng(11, 0);
    for mean in [0.1, 0.5, 2.0 / 3.0] {
        let arm = ArmDistribution::bernoulli(mean).unwrap();
        let ones = (0..n).filter(|_| arm.sample(&mut rng) == 1.0).count() as u64;
        assert!(within_clt(ones, n, mean), "mean {mean}: {ones} ones");
    }
}

#[test]
fn gaussian_sampling_matches_moments() {
    let n = 1_000_000;
    let mut rng = stream_rng(12, 0);
    let arm = ArmDistribution::gaussian(0.3, 2.0).unwrap();
    let xs: Vec<f64> = (0..n).map(|_| arm.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 0.3).abs() < 5.0 * (2.0 / n as f64).sqrt());
    assert!((var - 2.0).abs() < 0.02);
}

#[test]
fn arm_sampling_matches_mixed_action() {
    let n = 1_000_000u64;
    let p = MixedAction::new(vec![0.1, 0.0, 0.6, 0.3]).unwrap();
    let mut rng = stream_rng(13, 0);
    let mut counts = [0u64; 4];
    for _ in 0..n {
        counts[sample_arm(&p, &mut rng)] += 1;
    }
    assert_eq!(counts[1], 0);
    for a in [0, 2, 3] {
        assert!(
            within_clt(counts[a], n, p.probs()[a]),
            "arm {a}: {counts:?}"
        );
    }
}

#[test]
fn streams_are_deterministic_and_distinct() {
    let draw = |seed, stream| {
        let mut r = stream_rng(seed, stream);
        (0..8).map(|_| r.random::<u64>()).collect::<Vec<_>>()
    };
    assert_eq!(draw(5, 0), draw(5, 0));
    assert_ne!(draw(5, 0), draw(5, 1));
    assert_ne!(draw(5, 0), draw(6, 0));
}

#[test]
fn instance_validation() {
    assert!(matches!(
        BanditInstance::new(vec![]),
        Err(ModelError::NoArms)
    ));
    assert!(ArmDistribution::bernoulli(1.2).is_err());
    assert!(ArmDistribution::gaussian(0.0, 0.0).is_err());
    let mixed = vec![
        ArmDistribution::bernoulli(0.5).unwrap(),
        ArmDistribution::gaussian(0.5, 1.0).unwrap(),
    ];
    assert!(matches!(
        BanditInstance::new(mixed),
        Err(ModelError::MixedFamilies)
    ));
    assert!(matches!(
        make_alpha_instance(0.2),
        Err(ModelError::AlphaOutOfRange(_))
    ));
    let inst = make_alpha_instance(-0.1).unwrap();
    assert_eq!(inst.model(), ModelTag::Bounded01);
    assert_eq!(inst.means(), vec![0.4, 1.0 / 3.0, 0.6]);
    let g = inst.gaussian_analog(1.0).unwrap();
    assert_eq!(g.model(), ModelTag::GaussianKnownVariance);
    assert_eq!(g.means(), inst.means());
}

#[test]
fn arm_serde_uses_kind_tag() {
    let arm: ArmDistribution = serde_json::from_str(r#"{"kind":"point","value":0.25}"#).unwrap();
    assert_eq!(arm, ArmDistribution::point(0.25).unwrap());
    let back = serde_json::to_string(&ArmDistribution::bernoulli(0.5).unwrap()).unwrap();
    assert_eq!(back, r#"{"kind":"bernoulli","mean":0.5}"#);
}
