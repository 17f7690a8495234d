use std::collections::HashSet;

use explore_go::envs::{
    gen_cross_context_sets, gen_fourrooms_context_sets, ActionId, Context, ContextSet, CrossContext, CrossEnv, CrossState,
    Env, FourRoomsEnv, Rgb, UnderlyingState,
};
use explore_go::oracle::enumerate_reachable_env;
use proptest::prelude::*;

fn cross_state(x: u8, y: u8, bg: [f64; 3]) -> UnderlyingState {
    UnderlyingState::Cross(CrossState { pos: (x, y), background: Rgb(bg) })
}

const UP: ActionId = ActionId(0);
const DOWN: ActionId = ActionId(1);
const RIGHT: ActionId = ActionId(3);

#[test]
fn cross_moves_teleports_and_walls() {
    let env = Env::Cross(CrossEnv);
    let blue = [0.0, 0.0, 1.0];
    let out = env.step(&cross_state(2, 0, blue), RIGHT).unwrap();
    assert_eq!(out.state, cross_state(4, 2, blue));
    assert_eq!((out.reward, out.done), (0.0, false));

    let out = env.step(&cross_state(2, 1, blue), DOWN).unwrap();
    assert_eq!((out.reward, out.done), (1.0, true));

    let out = env.step(&cross_state(2, 0, blue), UP).unwrap();
    assert_eq!(out.state, cross_state(2, 0, blue));

    assert!(env.step(&cross_state(2, 2, blue), UP).is_err());
    assert_eq!(env.timeout(), 20);
}

#[test]
fn cross_encoding_colours() {
    let env = Env::Cross(CrossEnv);
    let obs = env.encode(&cross_state(2, 0, [0.0, 0.0, 1.0]));
    assert_eq!(obs.shape, [3, 5, 5]);
    for y in 0..5 {
        for x in 0..5 {
            let px: Vec<f32> = (0..3).map(|c| obs.at(c, y, x)).collect();
            let want = match (x, y) {
                (2, 2) => vec![0.0, 0.5, 0.0],
                (2, 0) => vec![0.5, 0.0, 0.0],
                _ => vec![0.0, 0.0, 1.0],
            };
            assert_eq!(px, want, "cell ({x},{y})");
        }
    }
    let white = env.encode(&cross_state(0, 2, [1.0, 1.0, 1.0]));
    assert_eq!(white.at(0, 0, 0), 1.0);
    assert_eq!(white.at(0, 2, 0), 0.5);
}

#[test]
fn cross_context_sets_match_the_layout() {
    let sets = gen_cross_context_sets();
    assert_eq!(sets.train.len(), 4);
    assert_eq!(sets.unreachable_test.len(), 4);
    assert!(sets.reachable_test.is_none());
    for c in &sets.unreachable_test.contexts {
        match c {
            Context::Cross(CrossContext { background, .. }) => assert_eq!(background.0, [1.0, 1.0, 1.0]),
            _ => panic!("non-cross context"),
        }
    }
}

#[test]
fn cross_closure_stays_within_one_colour() {
    let env = Env::Cross(CrossEnv);
    let sets = gen_cross_context_sets();
    for c in &sets.train.contexts {
        let one = ContextSet { contexts: vec![c.clone()], ..sets.train.clone() };
        let r = enumerate_reachable_env(&env, &one).unwrap();
        let Context::Cross(cc) = c else { unreachable!() };
        for s in r.states() {
            let UnderlyingState::Cross(s) = s else { unreachable!() };
            assert_eq!(s.background, cc.background);
        }
        assert_eq!(r.non_terminal().len(), 8);
    }
}

#[test]
fn fourrooms_encoding_is_one_hot() {
    let grid = 9;
    let env = Env::FourRooms(FourRoomsEnv::new(grid).unwrap());
    let sets = gen_fourrooms_context_sets(4, 10, 10, grid).unwrap();
    for c in sets.train.contexts.iter().chain(&sets.unreachable_test.contexts) {
        let s = env.start_state(c).unwrap();
        let obs = env.encode(&s);
        assert_eq!(obs.shape, [6, grid, grid]);
        let plane = |ch: usize| (0..grid * grid).map(|i| obs.data[ch * grid * grid + i]).sum::<f32>();
        assert_eq!(plane(1), 1.0);
        assert_eq!((2..6).map(plane).sum::<f32>(), 1.0);
        assert!(obs.data.iter().all(|&v| v == 0.0 || v == 1.0));
        let Context::FourRooms(fc) = c else { unreachable!() };
        for (x, y) in FourRoomsEnv::new(grid).unwrap().doorway_cells(fc.doorways) {
            assert_eq!(obs.at(0, y, x), 0.0);
        }
    }
}

#[test]
fn fourrooms_context_sets_respect_the_generation_contract() {
    let grid = 19;
    let sets = gen_fourrooms_context_sets(7, 200, 200, grid).unwrap();
    let reach = sets.reachable_test.as_ref().unwrap();
    assert_eq!((sets.train.len(), reach.len(), sets.unreachable_test.len()), (200, 200, 200));
    let train_layouts: HashSet<_> = sets
        .train
        .contexts
        .iter()
        .map(|c| match c {
            Context::FourRooms(f) => f.layout(),
            _ => unreachable!(),
        })
        .collect();
    let train_doors: HashSet<_> = train_layouts.iter().map(|l| l.0).collect();
    for c in &reach.contexts {
        let Context::FourRooms(f) = c else { unreachable!() };
        assert!(train_layouts.contains(&f.layout()));
    }
    let mut seen = HashSet::new();
    for c in &sets.unreachable_test.contexts {
        let Context::FourRooms(f) = c else { unreachable!() };
        assert!(!train_doors.contains(&f.doorways));
        assert!(seen.insert(f.doorways), "unreachable doorway tuples are pairwise distinct");
    }
    assert_eq!(gen_fourrooms_context_sets(7, 200, 200, grid).unwrap(), sets);
    assert!(gen_fourrooms_context_sets(7, 60, 30, 7).is_err());
}

#[test]
fn context_sets_round_trip_through_json() {
    let sets = gen_fourrooms_context_sets(1, 4, 4, 9).unwrap();
    let text = sets.train.to_json().unwrap();
    assert_eq!(ContextSet::from_json(&text).unwrap(), sets.train);
    let cross = gen_cross_context_sets();
    assert_eq!(ContextSet::from_json(&cross.train.to_json().unwrap()).unwrap(), cross.train);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fourrooms_rotation_is_invertible_and_encoding_injective(master in 0u64..5000, walk in prop::collection::vec(0usize..3, 0..60)) {
        let grid = 9;
        let env = Env::FourRooms(FourRoomsEnv::new(grid).unwrap());
        let sets = gen_fourrooms_context_sets(master, 2, 2, grid).unwrap();
        let mut s = env.start_state(&sets.train.contexts[0]).unwrap();
        let mut seen: Vec<(UnderlyingState, Vec<f32>)> = Vec::new();
        for a in walk {
            if s.is_terminal() {
                break;
            }
            let l = env.step(&s, ActionId(0)).unwrap().state;
            prop_assert_eq!(env.step(&l, ActionId(1)).unwrap().state, s);
            let obs = env.encode(&s).data;
            for (t, o) in &seen {
                prop_assert_eq!(t == &s, o == &obs);
            }
            seen.push((s, obs));
            let out = env.step(&s, ActionId(a)).unwrap();
            prop_assert_eq!(out.reward, if out.done { 1.0 } else { 0.0 });
            s = out.state;
        }
    }
}
