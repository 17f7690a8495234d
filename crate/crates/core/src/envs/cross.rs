//! The Illustrative Cross: a plus-shaped corridor on a 5x5 grid whose arm
//! endpoints are linked by extra transitions. Reaching the centre pays 1.
//!
//! Coordinates are `(x, y)` with the origin top-left. Endpoints:
//! N = (2,0), S = (2,4), W = (0,2), E = (4,2).

use serde::{Deserialize, Serialize};

use super::{ActionId, Context, ContextKind, ContextSet, ContextSets, Rgb};
use crate::error::{contract, Result};

const GRID: usize = 5;
const CENTRE: (u8, u8) = (2, 2);
const GOAL_COLOUR: [f32; 3] = [0.0, 0.5, 0.0];
const AGENT_COLOUR: [f32; 3] = [0.5, 0.0, 0.0];

pub(super) fn cross_timeout() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    North,
    South,
    West,
    East,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::North, Arm::South, Arm::West, Arm::East];

    pub fn endpoint(self) -> (u8, u8) {
        match self {
            Arm::North => (2, 0),
            Arm::South => (2, 4),
            Arm::West => (0, 2),
            Arm::East => (4, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl CrossAction {
    pub fn from_id(a: ActionId) -> Option<Self> {
        match a.0 {
            0 => Some(CrossAction::Up),
            1 => Some(CrossAction::Down),
            2 => Some(CrossAction::Left),
            3 => Some(CrossAction::Right),
            _ => None,
        }
    }

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    fn delta(self) -> (i32, i32) {
        match self {
            CrossAction::Up => (0, -1),
            CrossAction::Down => (0, 1),
            CrossAction::Left => (-1, 0),
            CrossAction::Right => (1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossContext {
    pub background: Rgb,
    pub start_arm: Arm,
}

impl CrossContext {
    pub fn start_state(&self) -> CrossState {
        CrossState { pos: self.start_arm.endpoint(), background: self.background }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrossState {
    pub pos: (u8, u8),
    pub background: Rgb,
}

impl CrossState {
    pub fn is_terminal(&self) -> bool {
        self.pos == CENTRE
    }
}

pub fn on_cross(x: i32, y: i32) -> bool {
    (x == 2 && (0..5).contains(&y)) || (y == 2 && (0..5).contains(&x))
}

/// Stateless environment definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CrossEnv;

impl CrossEnv {
    pub const ACTION_COUNT: usize = 4;
    pub const OBS_SHAPE: [usize; 3] = [3, GRID, GRID];

    pub fn step(&self, s: &CrossState, a: ActionId) -> Result<(CrossState, f64, bool)> {
        if s.is_terminal() {
            return Err(contract("step called on a terminal cross state"));
        }
        let (x, y) = (i32::from(s.pos.0), i32::from(s.pos.1));
        if !on_cross(x, y) {
            return Err(contract(format!("position ({x},{y}) is not on the cross")));
        }
        let action = CrossAction::from_id(a).ok_or_else(|| contract("cross action out of range"))?;
        let (dx, dy) = action.delta();
        let pos = if on_cross(x + dx, y + dy) {
            ((x + dx) as u8, (y + dy) as u8)
        } else {
            teleport(s.pos, action).unwrap_or(s.pos)
        };
        let next = CrossState { pos, background: s.background };
        let done = next.is_terminal();
        Ok((next, if done { 1.0 } else { 0.0 }, done))
    }
}

/// Extra links between adjacent arm endpoints, taken by the lateral actions.
fn teleport(pos: (u8, u8), a: CrossAction) -> Option<(u8, u8)> {
    use CrossAction::*;
    let arm = match pos {
        (2, 0) => Arm::North,
        (2, 4) => Arm::South,
        (0, 2) => Arm::West,
        (4, 2) => Arm::East,
        _ => return None,
    };
    let to = match (arm, a) {
        (Arm::North | Arm::South, Right) => Arm::East,
        (Arm::North | Arm::South, Left) => Arm::West,
        (Arm::East | Arm::West, Up) => Arm::North,
        (Arm::East | Arm::West, Down) => Arm::South,
        _ => return None,
    };
    Some(to.endpoint())
}

pub(super) fn encode_into(s: &CrossState, out: &mut [f32]) {
    assert_eq!(out.len(), 3 * GRID * GRID, "cross observation buffer length");
    let paint = |out: &mut [f32], (x, y): (u8, u8), colour: [f32; 3]| {
        for (c, v) in colour.iter().enumerate() {
            out[(c * GRID + y as usize) * GRID + x as usize] = *v;
        }
    };
    for c in 0..3 {
        let v = s.background.0[c] as f32;
        out[c * GRID * GRID..(c + 1) * GRID * GRID].fill(v);
    }
    paint(out, CENTRE, GOAL_COLOUR);
    paint(out, s.pos, AGENT_COLOUR);
}

pub const TRAIN_BACKGROUNDS: [[f64; 3]; 4] =
    [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0]];
const TRAIN_ARMS: [Arm; 4] = [Arm::North, Arm::East, Arm::South, Arm::West];
pub const TEST_BACKGROUND: [f64; 3] = [1.0, 1.0, 1.0];

/// Four coloured training contexts and four white-background test contexts.
pub fn gen_cross_context_sets() -> ContextSets {
    let train = TRAIN_BACKGROUNDS
        .iter()
        .zip(TRAIN_ARMS)
        .map(|(bg, arm)| Context::Cross(CrossContext { background: Rgb(*bg), start_arm: arm }))
        .collect();
    let test = TRAIN_ARMS
        .iter()
        .map(|&arm| Context::Cross(CrossContext { background: Rgb(TEST_BACKGROUND), start_arm: arm }))
        .collect();
    ContextSets {
        train: ContextSet { kind: ContextKind::Train, master_seed: 0, contexts: train },
        reachable_test: None,
        unreachable_test: ContextSet {
            kind: ContextKind::UnreachableTest,
            master_seed: 0,
            contexts: test,
        },
    }
}
