//! Fully observable Four Rooms with a three-action turn/forward interface.
//!
//! The `G x G` grid has an outer wall plus one vertical and one horizontal
//! wall line through the centre index `m = (G-1)/2`. The centre splits the
//! inner walls into four segments of `(G-3)/2` cells, each with one doorway:
//!
//! | index | segment            | doorway cell         |
//! |-------|--------------------|----------------------|
//! | 0     | north (x = m)      | `(m, 1 + d0)`        |
//! | 1     | east  (y = m)      | `(m + 1 + d1, m)`    |
//! | 2     | south (x = m)      | `(m, m + 1 + d2)`    |
//! | 3     | west  (y = m)      | `(1 + d3, m)`        |
//!
//! Headings follow Minigrid: 0 = east, 1 = south, 2 = west, 3 = north.
//! Action 0 turns left, 1 turns right, 2 moves forward.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ActionId, Context, ContextKind, ContextSet, ContextSets};
use crate::error::{config, contract, Result};
use crate::seed;

pub(super) fn fourrooms_timeout() -> usize {
    100
}

pub const OBS_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::South, Heading::West, Heading::North];

    fn from_index(i: u8) -> Self {
        Self::ALL[usize::from(i % 4)]
    }

    pub fn left(self) -> Self {
        Self::from_index(self as u8 + 3)
    }

    pub fn right(self) -> Self {
        Self::from_index(self as u8 + 1)
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
            Heading::North => (0, -1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourRoomsContext {
    pub doorways: [usize; 4],
    pub goal: (usize, usize),
    pub agent_pos: (usize, usize),
    pub agent_dir: Heading,
}

impl FourRoomsContext {
    pub fn start_state(&self) -> FourRoomsState {
        FourRoomsState {
            agent_pos: (self.agent_pos.0 as u8, self.agent_pos.1 as u8),
            agent_dir: self.agent_dir,
            doorways: self.doorways.map(|d| d as u8),
            goal: (self.goal.0 as u8, self.goal.1 as u8),
        }
    }

    /// The `(doorways, goal)` pair that decides reachability.
    pub fn layout(&self) -> ([usize; 4], (usize, usize)) {
        (self.doorways, self.goal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FourRoomsState {
    pub agent_pos: (u8, u8),
    pub agent_dir: Heading,
    pub doorways: [u8; 4],
    pub goal: (u8, u8),
}

impl FourRoomsState {
    pub fn is_terminal(&self) -> bool {
        self.agent_pos == self.goal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourRoomsEnv {
    grid: usize,
}

impl FourRoomsEnv {
    pub const ACTION_COUNT: usize = 3;
    pub const DEFAULT_GRID: usize = 19;

    /// `grid` must be odd and at least 5.
    pub fn new(grid: usize) -> Result<Self> {
        if grid < 5 || grid % 2 == 0 || grid > 255 {
            return Err(config(format!("env.grid_size: {grid} must be odd and in [5, 255]")));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn mid(&self) -> usize {
        (self.grid - 1) / 2
    }

    /// Candidate doorway cells per wall segment.
    pub fn segment_len(&self) -> usize {
        (self.grid - 3) / 2
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        [OBS_CHANNELS, self.grid, self.grid]
    }

    pub fn doorway_cells(&self, doorways: [usize; 4]) -> [(usize, usize); 4] {
        let m = self.mid();
        [
            (m, 1 + doorways[0]),
            (m + 1 + doorways[1], m),
            (m, m + 1 + doorways[2]),
            (1 + doorways[3], m),
        ]
    }

    pub fn is_wall(&self, doorways: [usize; 4], x: usize, y: usize) -> bool {
        let g = self.grid;
        if x == 0 || y == 0 || x == g - 1 || y == g - 1 {
            return true;
        }
        let m = self.mid();
        (x == m || y == m) && !self.doorway_cells(doorways).contains(&(x, y))
    }

    /// Non-wall cells in row-major order.
    pub fn open_cells(&self, doorways: [usize; 4]) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for y in 0..self.grid {
            for x in 0..self.grid {
                if !self.is_wall(doorways, x, y) {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    pub fn validate_context(&self, c: &FourRoomsContext) -> Result<()> {
        let seg = self.segment_len();
        if c.doorways.iter().any(|&d| d >= seg) {
            return Err(contract(format!("doorway offsets {:?} out of [0, {seg})", c.doorways)));
        }
        for (name, (x, y)) in [("goal", c.goal), ("agent_pos", c.agent_pos)] {
            if x >= self.grid || y >= self.grid || self.is_wall(c.doorways, x, y) {
                return Err(contract(format!("{name} ({x},{y}) is not an open cell")));
            }
        }
        if c.goal == c.agent_pos {
            return Err(contract("agent_pos coincides with goal"));
        }
        Ok(())
    }

    pub fn step(&self, s: &FourRoomsState, a: ActionId) -> Result<(FourRoomsState, f64, bool)> {
        if s.is_terminal() {
            return Err(contract("step called on a terminal four-rooms state"));
        }
        let mut next = *s;
        match a.0 {
            0 => next.agent_dir = s.agent_dir.left(),
            1 => next.agent_dir = s.agent_dir.right(),
            2 => {
                let (dx, dy) = s.agent_dir.delta();
                let x = i32::from(s.agent_pos.0) + dx;
                let y = i32::from(s.agent_pos.1) + dy;
                let doorways = s.doorways.map(usize::from);
                if x >= 0 && y >= 0 && !self.is_wall(doorways, x as usize, y as usize) {
                    next.agent_pos = (x as u8, y as u8);
                }
            }
            _ => return Err(contract("four-rooms action out of range")),
        }
        let done = next.is_terminal();
        Ok((next, if done { 1.0 } else { 0.0 }, done))
    }

    /// Channel 0 walls, 1 goal, 2..6 agent position in the channel of its heading.
    pub(super) fn encode_into(&self, s: &FourRoomsState, out: &mut [f32]) {
        let g = self.grid;
        assert_eq!(out.len(), OBS_CHANNELS * g * g, "four-rooms observation buffer length");
        out.fill(0.0);
        let doorways = s.doorways.map(usize::from);
        for y in 0..g {
            for x in 0..g {
                if self.is_wall(doorways, x, y) {
                    out[y * g + x] = 1.0;
                }
            }
        }
        let (gx, gy) = (usize::from(s.goal.0), usize::from(s.goal.1));
        out[(g + gy) * g + gx] = 1.0;
        let (ax, ay) = (usize::from(s.agent_pos.0), usize::from(s.agent_pos.1));
        let ch = 2 + s.agent_dir as usize;
        out[(ch * g + ay) * g + ax] = 1.0;
    }

    fn sample_pose(
        &self,
        rng: &mut seed::Rng,
        cells: &[(usize, usize)],
        goal: (usize, usize),
    ) -> ((usize, usize), Heading) {
        loop {
            let pos = cells[rng.random_range(0..cells.len())];
            if pos != goal {
                return (pos, Heading::ALL[rng.random_range(0..4)]);
            }
        }
    }

    fn sample_doorways(&self, rng: &mut seed::Rng) -> [usize; 4] {
        let seg = self.segment_len();
        [0; 4].map(|_| rng.random_range(0..seg))
    }

    fn sample_context(&self, rng: &mut seed::Rng, doorways: [usize; 4]) -> FourRoomsContext {
        let cells = self.open_cells(doorways);
        let goal = cells[rng.random_range(0..cells.len())];
        let (agent_pos, agent_dir) = self.sample_pose(rng, &cells, goal);
        FourRoomsContext { doorways, goal, agent_pos, agent_dir }
    }
}

/// Train, reachable-test and unreachable-test sets, deterministic in
/// `master_seed`.
///
/// Reachable-test contexts copy each train context's doorways and goal with a
/// fresh agent pose. Unreachable-test doorway tuples are pairwise distinct and
/// never used by any train context.
pub fn gen_fourrooms_context_sets(
    master_seed: u64,
    n_train: usize,
    n_test: usize,
    grid: usize,
) -> Result<ContextSets> {
    let env = FourRoomsEnv::new(grid)?;
    let tuples = env.segment_len().pow(4);
    if tuples < n_train + n_test {
        return Err(config(format!(
            "contexts: grid {grid} admits only {tuples} doorway tuples, need {} (n_train + n_test)",
            n_train + n_test
        )));
    }
    let mut rng = seed::stream(master_seed, "contexts", 0);

    let mut train = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let doorways = env.sample_doorways(&mut rng);
        train.push(env.sample_context(&mut rng, doorways));
    }

    let reachable = train
        .iter()
        .map(|c| {
            let cells = env.open_cells(c.doorways);
            let (agent_pos, agent_dir) = env.sample_pose(&mut rng, &cells, c.goal);
            FourRoomsContext { agent_pos, agent_dir, ..c.clone() }
        })
        .collect::<Vec<_>>();

    let mut used: HashSet<[usize; 4]> = train.iter().map(|c| c.doorways).collect();
    let mut unreachable = Vec::with_capacity(n_test);
    while unreachable.len() < n_test {
        let doorways = env.sample_doorways(&mut rng);
        if used.insert(doorways) {
            unreachable.push(env.sample_context(&mut rng, doorways));
        }
    }

    let wrap = |kind, v: Vec<FourRoomsContext>| ContextSet {
        kind,
        master_seed,
        contexts: v.into_iter().map(Context::FourRooms).collect(),
    };
    Ok(ContextSets {
        train: wrap(ContextKind::Train, train),
        reachable_test: Some(wrap(ContextKind::ReachableTest, reachable)),
        unreachable_test: wrap(ContextKind::UnreachableTest, unreachable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env9() -> FourRoomsEnv {
        FourRoomsEnv::new(9).unwrap()
    }

    fn state(pos: (u8, u8), dir: Heading, goal: (u8, u8)) -> FourRoomsState {
        FourRoomsState { agent_pos: pos, agent_dir: dir, doorways: [0, 1, 2, 0], goal }
    }

    #[test]
    fn forward_into_goal_succeeds() {
        let s = state((1, 1), Heading::East, (2, 1));
        let (n, r, d) = env9().step(&s, ActionId(2)).unwrap();
        assert_eq!(n.agent_pos, (2, 1));
        assert_eq!((r, d), (1.0, true));
    }

    #[test]
    fn forward_into_wall_stays() {
        let s = state((1, 1), Heading::North, (3, 3));
        let (n, r, d) = env9().step(&s, ActionId(2)).unwrap();
        assert_eq!(n, s);
        assert_eq!((r, d), (0.0, false));
    }

    #[test]
    fn turns_are_inverse() {
        for dir in Heading::ALL {
            let s = state((2, 2), dir, (3, 3));
            let (a, _, _) = env9().step(&s, ActionId(0)).unwrap();
            let (b, _, _) = env9().step(&a, ActionId(1)).unwrap();
            assert_eq!(b, s);
        }
    }

    #[test]
    fn doorway_passes_through_wall_line() {
        // north doorway offset 0 at (4, 1); walking east from (3, 1) enters it.
        let s = state((3, 1), Heading::East, (7, 7));
        let (n, _, _) = env9().step(&s, ActionId(2)).unwrap();
        assert_eq!(n.agent_pos, (4, 1));
        let (n, _, _) = env9().step(&n, ActionId(2)).unwrap();
        assert_eq!(n.agent_pos, (5, 1));
    }

    #[test]
    fn layout_counts_for_grid_nine() {
        let e = env9();
        assert_eq!(e.segment_len(), 3);
        // 4 rooms of 3x3 plus 4 doorway cells.
        assert_eq!(e.open_cells([0, 0, 0, 0]).len(), 40);
        assert_eq!(FourRoomsEnv::new(19).unwrap().segment_len(), 8);
    }

    #[test]
    fn encoding_one_hots() {
        let e = env9();
        let s = state((2, 3), Heading::South, (6, 6));
        let mut out = vec![0.0; 6 * 81];
        e.encode_into(&s, &mut out);
        let goal: f32 = out[81..162].iter().sum();
        let agent: f32 = out[162..].iter().sum();
        assert_eq!((goal, agent), (1.0, 1.0));
        assert_eq!(out[(3 * 9 + 3) * 9 + 2], 1.0);
        for (x, y) in e.doorway_cells([0, 1, 2, 0]) {
            assert_eq!(out[y * 9 + x], 0.0);
        }
    }

    #[test]
    fn timeout_is_one_hundred() {
        assert_eq!(fourrooms_timeout(), 100);
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let a = gen_fourrooms_context_sets(3, 20, 20, 9).unwrap();
        let b = gen_fourrooms_context_sets(3, 20, 20, 9).unwrap();
        assert_eq!(a, b);
        let e = env9();
        let reach = a.reachable_test.as_ref().unwrap();
        assert_eq!((a.train.len(), reach.len(), a.unreachable_test.len()), (20, 20, 20));
        for (t, r) in a.train.contexts.iter().zip(&reach.contexts) {
            let (Context::FourRooms(t), Context::FourRooms(r)) = (t, r) else { panic!() };
            assert_eq!(t.layout(), r.layout());
            e.validate_context(r).unwrap();
        }
        let train_doors: HashSet<_> = a
            .train
            .contexts
            .iter()
            .map(|c| match c {
                Context::FourRooms(c) => c.doorways,
                _ => unreachable!(),
            })
            .collect();
        let mut seen = HashSet::new();
        for c in &a.unreachable_test.contexts {
            let Context::FourRooms(c) = c else { panic!() };
            e.validate_context(c).unwrap();
            assert!(!train_doors.contains(&c.doorways));
            assert!(seen.insert(c.doorways));
        }
    }

    #[test]
    fn full_scale_generation() {
        let s = gen_fourrooms_context_sets(0, 200, 200, 19).unwrap();
        assert_eq!(s.train.len(), 200);
        assert_eq!(s.reachable_test.unwrap().len(), 200);
        assert_eq!(s.unreachable_test.len(), 200);
    }

    #[test]
    fn too_few_doorway_tuples_is_a_config_error() {
        // grid 7: segment length 2, 16 tuples.
        assert!(gen_fourrooms_context_sets(0, 10, 10, 7).is_err());
        assert!(gen_fourrooms_context_sets(0, 8, 8, 7).is_ok());
    }
}
