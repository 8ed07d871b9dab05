//! Inclusion chain, conditional separation, strictness and witness checks
//! for the three equivalence classes.

use proptest::prelude::*;
use reprsim::equivalence::{
    bellman_closure, conditional_deviation, enumerate_deterministic_mechanisms, indicator_q_family,
    trajectory_equivalent, transition_equivalent, verify_proposition1, Prop1Options, Step, DEFAULT_TOL,
};
use reprsim::instances::{
    jitter, prop1_instance, random_bot_invariant_instance, random_instance, standard_candidates, Instance, RandomSpec,
};
use reprsim::seed::rng_for;
use reprsim::{FiniteSpaces, Mechanism, PolicyProfile, QFunction};

fn joint_prob(spaces: &FiniteSpaces, p: &PolicyProfile, t: usize, x: usize, u: usize) -> f64 {
    spaces
        .decode_joint(u)
        .iter()
        .enumerate()
        .map(|(i, &a)| p.policy(i).row(t, x)[a])
        .product()
}

/// `sum_u pi^t(u | x) Q(x, u)` per participant.
fn state_value(spaces: &FiniteSpaces, p: &PolicyProfile, t: usize, q: &QFunction, x: usize) -> Vec<f64> {
    let mut v = vec![0.0; spaces.n_participants()];
    for u in 0..spaces.n_joint_actions() {
        let w = joint_prob(spaces, p, t, x, u);
        for (a, b) in v.iter_mut().zip(q.get(x, u)) {
            *a += w * b;
        }
    }
    v
}

/// One backup at step `t`, computed densely.
fn backup(spaces: &FiniteSpaces, p: &PolicyProfile, m: &Mechanism, t: usize, q: &QFunction, x: usize, u: usize) -> Vec<f64> {
    let mut v = vec![0.0; spaces.n_participants()];
    for (y, pr) in m.dense_row(t, x, u).into_iter().enumerate() {
        if pr > 0.0 {
            for (a, b) in v.iter_mut().zip(state_value(spaces, p, t + 1, q, y)) {
                *a += pr * b;
            }
        }
    }
    v
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn small_spec() -> RandomSpec {
    RandomSpec {
        max_states: 3,
        max_joint: 4,
        max_horizon: 3,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inclusion_chain_holds(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &RandomSpec::default(), format!("r{seed}"));
        let cands = standard_candidates(&mut rng, &inst);
        let p = prop1_instance(&inst, cands);
        let r = verify_proposition1(&p, &inst.family, &inst.payoff_family(), &Prop1Options::default()).unwrap();
        prop_assert_eq!(r.chain_violations, 0);
        let target = &r.candidates[0].report;
        prop_assert!(target.conditional.equal && target.transition.equal && target.trajectory.equal);
    }

    #[test]
    fn counterexample_is_trajectory_but_not_transition_equivalent(seed in any::<u64>()) {
        let inst = random_bot_invariant_instance(&mut rng_for(seed, 0), &RandomSpec::default(), format!("b{seed}"));
        let p = prop1_instance(&inst, Vec::new());
        let r = verify_proposition1(&p, &inst.family, &inst.payoff_family(), &Prop1Options::default()).unwrap();
        prop_assert!(r.premise.holds());
        let s = r.strictness.expect("premise holds");
        prop_assert!(s.trajectory_equal && s.trajectory_max_deviation <= 1e-9);
        prop_assert!(!s.transition_equal);
        prop_assert!(s.transition_witness_deviation >= 0.1 * s.min_escape_mass);
        prop_assert!(s.value_function_max_gap <= 1e-9);
    }

    #[test]
    fn differing_conditionals_are_separated(seed in any::<u64>(), eps in 1e-6f64..0.3) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &small_spec(), format!("s{seed}"));
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, eps);
        let cond = conditional_deviation(&inst.pi_star, &cand, 0.0).unwrap();
        prop_assume!(cond.max_deviation >= 1e-6);
        let mechs = enumerate_deterministic_mechanisms(&inst.spaces).unwrap();
        let qs = indicator_q_family(&inst.spaces).unwrap();
        let v = transition_equivalent(&inst.pi_star, &cand, &mechs, &qs, DEFAULT_TOL).unwrap();
        prop_assert!(!v.equal);
        prop_assert!(v.max_deviation >= cond.max_deviation - 1e-12);
    }

    #[test]
    fn transition_witness_is_sound(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &RandomSpec::default(), format!("w{seed}"));
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, 0.3);
        let qs = bellman_closure(&inst.payoff_family(), &[&inst.pi_star], &inst.family, 1).unwrap();
        let v = transition_equivalent(&inst.pi_star, &cand, &inst.family, &qs, DEFAULT_TOL).unwrap();
        let s = &inst.spaces;
        // Exhaustive maximum over the family, steps, states and actions.
        let mut best = 0.0f64;
        for m in inst.family.iter() {
            for q in qs.members() {
                for x in 0..s.n_states() {
                    best = best.max(max_gap(&state_value(s, &inst.pi_star, 0, q, x), &state_value(s, &cand, 0, q, x)));
                    for t in 0..s.horizon() - 1 {
                        for u in 0..s.n_joint_actions() {
                            best = best.max(max_gap(
                                &backup(s, &inst.pi_star, &m, t, q, x, u),
                                &backup(s, &cand, &m, t, q, x, u),
                            ));
                        }
                    }
                }
            }
        }
        prop_assert!((v.max_deviation - best).abs() < 1e-12);
        if let Some(w) = v.witness {
            let m = inst.family.get(w.mechanism);
            let q = qs.get(w.q);
            let at = match w.step {
                Step::Initial => max_gap(
                    &state_value(s, &inst.pi_star, 0, q, w.state),
                    &state_value(s, &cand, 0, q, w.state),
                ),
                Step::Bellman(t) => {
                    let u = w.action.unwrap();
                    max_gap(&backup(s, &inst.pi_star, &m, t, q, w.state, u), &backup(s, &cand, &m, t, q, w.state, u))
                }
            };
            prop_assert!((at - w.deviation).abs() < 1e-12);
            prop_assert!((w.deviation - v.max_deviation).abs() < 1e-15);
        } else {
            prop_assert!(v.equal);
        }
    }

    #[test]
    fn trajectory_witness_is_sound(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 0);
        let inst = random_instance(&mut rng, &RandomSpec::default(), format!("v{seed}"));
        let cand = jitter(&mut rng, &inst.spaces, &inst.pi_star, 0.3);
        let v = trajectory_equivalent(&inst.pi_star, &cand, &inst.family, &inst.payoff_family(), DEFAULT_TOL).unwrap();
        let s = &inst.spaces;
        let values = |p: &PolicyProfile, m: &Mechanism| -> Vec<Vec<f64>> {
            // Dense backward recursion from the payoff, then V_0.
            let q_last = QFunction::terminal(&inst.payoff, s.n_joint_actions());
            let mut q = q_last;
            for t in (0..s.horizon() - 1).rev() {
                let mut vals = Vec::new();
                for x in 0..s.n_states() {
                    for u in 0..s.n_joint_actions() {
                        vals.extend(backup(s, p, m, t, &q, x, u));
                    }
                }
                q = QFunction::new(s, vals).unwrap();
            }
            (0..s.n_states()).map(|x| state_value(s, p, 0, &q, x)).collect()
        };
        let mut best = 0.0f64;
        for m in inst.family.iter() {
            let (a, b) = (values(&inst.pi_star, &m), values(&cand, &m));
            for x in 0..s.n_states() {
                best = best.max(max_gap(&a[x], &b[x]));
            }
        }
        prop_assert!((v.max_deviation - best).abs() < 1e-12);
    }
}

#[test]
fn reference_instances_behave_as_described() {
    use reprsim::instances::{g1, g2};
    let g: Instance = g2();
    let p = prop1_instance(&g, Vec::new());
    let r = verify_proposition1(&p, &g.family, &g.payoff_family(), &Prop1Options::default()).unwrap();
    let s = r.strictness.unwrap();
    assert!(s.holds);
    assert!((s.transition_witness_deviation - 0.5).abs() < 1e-15);

    let g = g1();
    let d = conditional_deviation(&g.pi_star, &g.deterministic_profile(0), DEFAULT_TOL).unwrap();
    assert!((d.max_deviation - 0.3).abs() < 1e-15);
}
