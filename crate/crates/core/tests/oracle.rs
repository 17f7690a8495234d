mod common;

use common::{max_binomial_z, DistanceOracle};
use explore_go::envs::{
    gen_cross_context_sets, gen_fourrooms_context_sets, ActionId, ContextSet, CrossEnv, Env, FourRoomsEnv,
    UnderlyingState,
};
use explore_go::oracle::{
    bellman_residual, classify_context, classify_context_bfs, enumerate_reachable_env, sample_random_transition,
    value_iteration, Reachability, DEFAULT_TOL,
};
use explore_go::seed;
use proptest::prelude::*;

fn cross() -> (Env, explore_go::envs::ContextSets) {
    (Env::Cross(CrossEnv), gen_cross_context_sets())
}

#[test]
fn cross_reachable_set_sizes() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    assert_eq!(r.non_terminal().len(), 32);
    assert_eq!(r.len(), 36);
    assert_eq!(r.state_action_count(), 128);

    let one = ContextSet { contexts: sets.train.contexts[..1].to_vec(), ..sets.train.clone() };
    let r1 = enumerate_reachable_env(&env, &one).unwrap();
    assert_eq!(r1.non_terminal().len(), 8);
}

#[test]
fn cross_values_match_shortest_paths() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    let t = value_iteration(&r, 0.9, DEFAULT_TOL).unwrap();
    let d = DistanceOracle::build(&env, &sets.train.contexts);
    assert_eq!(d.states.len(), r.len());
    for (i, s) in r.states().iter().enumerate() {
        assert!((t.v(i) - d.v(s, 0.9)).abs() < 1e-9, "{s:?}");
        if let UnderlyingState::Cross(c) = s {
            let dist = (i32::from(c.pos.0) - 2).abs() + (i32::from(c.pos.1) - 2).abs();
            let expect = match dist {
                0 => 0.0,
                1 => 1.0,
                _ => 0.9,
            };
            assert!((t.v(i) - expect).abs() < 1e-9);
        }
    }
    assert!(bellman_residual(&r, &t) < 1e-9);
}

#[test]
fn greedy_on_q_star_solves_every_train_start() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    let t = value_iteration(&r, 0.9, DEFAULT_TOL).unwrap();
    for c in &sets.train.contexts {
        let mut s = env.start_state(c).unwrap();
        let mut ret = 0.0;
        for _ in 0..env.timeout() {
            let out = env.step(&s, t.greedy(r.index_of(&s).unwrap())).unwrap();
            ret += out.reward;
            s = out.state;
            if out.done {
                break;
            }
        }
        assert_eq!(ret, 1.0);
    }
}

#[test]
fn cross_test_contexts_are_unreachable() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    for c in &sets.unreachable_test.contexts {
        assert_eq!(classify_context(c, &sets.train), Reachability::Unreachable);
        assert_eq!(classify_context_bfs(&env, c, &r).unwrap(), Reachability::Unreachable);
    }
    for c in &sets.train.contexts {
        assert_eq!(classify_context(c, &sets.train), Reachability::Reachable);
    }
}

#[test]
fn random_transitions_are_uniform_over_pairs() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    let nt = r.non_terminal();
    let pairs = nt.len() * env.action_count();
    let mut counts = vec![0u64; pairs];
    let mut rng = seed::stream(11, "oracle-test", 0);
    for _ in 0..100_000 {
        let t = sample_random_transition(&mut rng, &r, &env).unwrap();
        assert!(t.injected);
        assert!(!t.state.is_terminal());
        let pos = nt.iter().position(|&i| r.states()[i] == t.state).expect("sampled state is reachable");
        counts[pos * env.action_count() + t.action.0] += 1;
    }
    let z = max_binomial_z(&counts, &vec![1.0 / pairs as f64; pairs]);
    assert!(z < 3.0, "largest deviation {z:.2} sigma");
}

#[test]
fn two_state_chain_value() {
    use explore_go::envs::DeterministicMdp;
    use explore_go::oracle::enumerate_reachable;

    struct Chain;
    impl DeterministicMdp for Chain {
        type State = u8;
        fn action_count(&self) -> usize {
            1
        }
        fn is_terminal(&self, s: &u8) -> bool {
            *s == 1
        }
        fn transition(&self, _: &u8, _: ActionId) -> explore_go::Result<(u8, f64, bool)> {
            Ok((1, 1.0, true))
        }
    }
    let r = enumerate_reachable(&Chain, [0u8]).unwrap();
    let t = value_iteration(&r, 0.5, DEFAULT_TOL).unwrap();
    assert_eq!(t.v(r.index_of(&0).unwrap()), 1.0);
    assert_eq!(t.v(r.index_of(&1).unwrap()), 0.0);
}

#[test]
fn discount_outside_range_is_rejected() {
    let (env, sets) = cross();
    let r = enumerate_reachable_env(&env, &sets.train).unwrap();
    assert!(value_iteration(&r, 1.0, DEFAULT_TOL).is_err());
    assert!(value_iteration(&r, 0.9, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fourrooms_values_and_classification(master in 0u64..10_000, grid in prop::sample::select(vec![7usize, 9])) {
        let env = Env::FourRooms(FourRoomsEnv::new(grid).unwrap());
        let sets = gen_fourrooms_context_sets(master, 3, 3, grid).unwrap();
        let r = enumerate_reachable_env(&env, &sets.train).unwrap();
        let gamma = 0.99;
        let t = value_iteration(&r, gamma, DEFAULT_TOL).unwrap();
        prop_assert!(bellman_residual(&r, &t) < 1e-9);
        let d = DistanceOracle::build(&env, &sets.train.contexts);
        prop_assert_eq!(d.states.len(), r.len());
        for (i, s) in r.states().iter().enumerate() {
            prop_assert!((t.v(i) - d.v(s, gamma)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&t.v(i)));
        }
        let reach = sets.reachable_test.as_ref().unwrap();
        for c in &reach.contexts {
            prop_assert_eq!(classify_context(c, &sets.train), Reachability::Reachable);
            prop_assert_eq!(classify_context_bfs(&env, c, &r).unwrap(), Reachability::Reachable);
        }
        for c in &sets.unreachable_test.contexts {
            prop_assert_eq!(classify_context(c, &sets.train), Reachability::Unreachable);
            prop_assert_eq!(classify_context_bfs(&env, c, &r).unwrap(), Reachability::Unreachable);
        }
        // Every train start is solvable within the time limit.
        for c in &sets.train.contexts {
            let s = env.start_state(c).unwrap();
            let dist = d.dist[d.index[&s]].unwrap();
            prop_assert!(dist <= env.timeout());
        }
    }
}
