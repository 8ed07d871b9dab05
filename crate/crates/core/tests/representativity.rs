//! Identities and monotonicity of representativity.

use std::sync::Arc;

use proptest::prelude::*;
use reprsim::equivalence::{bellman_closure, build_appendix_a_policy, trajectory_equivalent, DEFAULT_TOL};
use reprsim::instances::{jitter, random_bot_invariant_instance, random_instance, RandomSpec};
use reprsim::representativity::{
    payoff_discrepancy, representativity, substitute_all, substitute_single, Discrepancy, DiscrepancyKind,
};
use reprsim::seed::rng_for;
use reprsim::{MechanismFamily, PolicyProfile};

fn spec() -> RandomSpec {
    RandomSpec {
        n_mechanisms: 3,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn self_representativity_is_zero(seed in any::<u64>()) {
        let inst = random_instance(&mut rng_for(seed, 0), &spec(), "r".into());
        let qs = bellman_closure(&inst.payoff_family(), &[&inst.pi_star], &inst.family, 1).unwrap();
        let r = representativity(&inst.pi_star, &inst.pi_star, &inst.family, &inst.payoff_family(), &inst.init, &Discrepancy::mean_absolute()).unwrap();
        prop_assert_eq!(r.value, 0.0);
        // Action-dependent tables are rejected unless constant over actions.
        let all_invariant = qs.members().iter().all(|q| q.is_action_invariant(0.0));
        let res = representativity(&inst.pi_star, &inst.pi_star, &inst.family, &qs, &inst.init, &Discrepancy::mean_absolute());
        prop_assert_eq!(res.is_ok(), all_invariant);
    }

    #[test]
    fn larger_families_never_lower_the_value(seed in any::<u64>(), kind in 0usize..3) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &spec(), "r".into());
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, 0.4);
        let d = Discrepancy::new(
            [DiscrepancyKind::MeanAbsolute, DiscrepancyKind::MaxAbsolute, DiscrepancyKind::Euclidean][kind],
            None,
            inst.spaces.n_participants(),
        )
        .unwrap();
        let members: Vec<_> = inst.family.iter().collect();
        let first = MechanismFamily::explicit(&inst.spaces, members[..1].to_vec()).unwrap();
        let small = representativity(&inst.pi_star, &cand, &first, &inst.payoff_family(), &inst.init, &d).unwrap();
        let big = representativity(&inst.pi_star, &cand, &inst.family, &inst.payoff_family(), &inst.init, &d).unwrap();
        prop_assert!(small.value <= big.value);
        if big.value > small.value {
            prop_assert!(big.mechanism > 0);
        }
    }

    #[test]
    fn bounded_by_trajectory_deviation(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &spec(), "r".into());
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, eps);
        let traj = trajectory_equivalent(&inst.pi_star, &cand, &inst.family, &inst.payoff_family(), DEFAULT_TOL).unwrap();
        let d = Discrepancy::new(DiscrepancyKind::MaxAbsolute, None, inst.spaces.n_participants()).unwrap();
        let r = representativity(&inst.pi_star, &cand, &inst.family, &inst.payoff_family(), &inst.init, &d).unwrap();
        prop_assert!(r.value <= traj.max_deviation + 1e-12);
        if traj.equal {
            prop_assert!(r.value <= DEFAULT_TOL);
        }
    }

    #[test]
    fn trajectory_equivalent_counterexample_is_fully_representative(seed in any::<u64>()) {
        let inst = random_bot_invariant_instance(&mut rng_for(seed, 0), &spec(), "b".into());
        let tilde = build_appendix_a_policy(&inst.pi_star, &inst.spaces, 0).unwrap();
        let r = representativity(&inst.pi_star, &tilde, &inst.family, &inst.payoff_family(), &inst.init, &Discrepancy::mean_absolute()).unwrap();
        prop_assert!(r.value <= 1e-9);
    }

    #[test]
    fn fixed_payoff_matches_single_mechanism_value(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &spec(), "r".into());
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, 0.3);
        let d = Discrepancy::mean_absolute();
        let a = payoff_discrepancy(&inst.pi_star, &cand, &inst.mechanism, &inst.init, &inst.payoff, &d).unwrap();
        let b = representativity(&inst.pi_star, &cand, &inst.single_mechanism_family(), &inst.payoff_family(), &inst.init, &d).unwrap();
        prop_assert_eq!(a, b.value);
    }

    #[test]
    fn substituting_own_policies_changes_nothing(seed in any::<u64>()) {
        let inst = random_instance(&mut rng_for(seed, 0), &spec(), "r".into());
        let own: Vec<_> = inst.pi_star.policies().to_vec();
        let all = substitute_all(&inst.spaces, &inst.pi_star, own.clone()).unwrap();
        prop_assert_eq!(&all, &inst.pi_star);
        let one = substitute_single(&inst.spaces, &inst.pi_star, 0, Arc::clone(&own[0])).unwrap();
        prop_assert_eq!(&one, &inst.pi_star);
        let uni = PolicyProfile::uniform(&inst.spaces).unwrap();
        let swapped = substitute_single(&inst.spaces, &inst.pi_star, 0, Arc::clone(uni.policy(0))).unwrap();
        let masked = Discrepancy::new(DiscrepancyKind::MeanAbsolute, Some(vec![0]), inst.spaces.n_participants()).unwrap();
        let r = representativity(&inst.pi_star, &swapped, &inst.family, &inst.payoff_family(), &inst.init, &masked).unwrap();
        prop_assert!(r.value >= 0.0);
    }
}
