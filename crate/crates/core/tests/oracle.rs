use proptest::prelude::*;
use tubewalk::{quench_dp, EnvRealization, EnvironmentSpec, PiecewiseLinear, StepLaw, TubeSpec};

fn env_from(steps: &[Vec<(i64, f64)>], q: f64) -> EnvRealization {
    let laws = steps
        .iter()
        .map(|atoms| {
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            StepLaw::atoms(atoms.iter().map(|&(k, w)| (k as f64 / q, w / total)).collect(), 1.0)
        })
        .collect();
    EnvRealization::from_steps(laws, EnvironmentSpec::rademacher()).unwrap()
}

fn atoms() -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::vec((-6i64..=6, 0.05f64..1.0), 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_equals_enumeration(
        q in 1u32..=3,
        steps in prop::collection::vec(atoms(), 1..=10),
        g0 in -2.0f64..-0.2, g1 in -2.0f64..-0.2,
        h0 in 0.2f64..2.0, h1 in 0.2f64..2.0,
        alpha in 0.1f64..0.45,
    ) {
        let n = steps.len();
        let env = env_from(&steps, q as f64);
        let g = PiecewiseLinear::new(vec![(0.0, g0), (1.0, g1)]).unwrap();
        let h = PiecewiseLinear::new(vec![(0.0, h0), (1.0, h1)]).unwrap();
        let tube = TubeSpec::new(g, h, alpha, n).unwrap();
        let dp = quench_dp::survival_dp_lattice(&env, &tube, 0.0).unwrap();
        let bf = quench_dp::survival_brute_force(&env, &tube, 0.0).unwrap();
        prop_assert!((dp.p - bf.p).abs() <= 1e-10, "{} vs {}", dp.p, bf.p);
    }

    #[test]
    fn widening_the_tube_never_lowers_survival(
        steps in prop::collection::vec(atoms(), 1..=40),
        a in 0.3f64..1.5,
        extra in 0.0f64..1.0,
    ) {
        let env = env_from(&steps, 2.0);
        let n = steps.len();
        let narrow = TubeSpec::constant(-a, a, 0.3, n).unwrap();
        let wide = TubeSpec::constant(-a - extra, a + extra, 0.3, n).unwrap();
        let pn = quench_dp::survival_dp_lattice(&env, &narrow, 0.0).unwrap().p;
        let pw = quench_dp::survival_dp_lattice(&env, &wide, 0.0).unwrap().p;
        prop_assert!(pw >= pn - 1e-12);
    }

    #[test]
    fn survival_profile_is_nonincreasing(seed in 0u64..1000, n in 1usize..80) {
        let env = EnvironmentSpec::random_shift(0.5, 2).sample(n, seed).unwrap();
        let tube = TubeSpec::constant(-1.0, 1.0, 0.3, n).unwrap();
        let profile = quench_dp::survival_dp_lattice_profile(&env, &tube, 0.0).unwrap();
        prop_assert!(profile.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
