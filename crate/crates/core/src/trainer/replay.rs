//! Collision replay curriculum.
//!
//! When a robot crashes into an obstacle or another robot, the world state
//! from [`REWIND_TICKS`] earlier is stored. New episodes start from a stored
//! state with probability `replay_rate`; entries replayed more often than the
//! threshold are dropped as too hard for the current policy.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::WorldState;

/// 1.5 s at the 100 Hz control rate.
pub const REWIND_TICKS: u32 = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub state_bytes: Vec<u8>,
    pub replay_count: u32,
    pub source_episode: u64,
}

/// FIFO store of replayable world snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    entries: VecDeque<ReplayEntry>,
    capacity: usize,
}

/// What the scheduler decided for the next episode.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeStart {
    Fresh,
    Replay(ReplayEntry),
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }

    pub fn push(&mut self, entry: ReplayEntry) {
        if self.capacity == 0 {
            return;
        }
        while self.entries.len() >= self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    /// With probability `replay_rate` (and a nonempty buffer) pick an entry
    /// uniformly, bump its replay count and return a copy.
    pub fn maybe_replay<R: Rng + ?Sized>(&mut self, rng: &mut R, replay_rate: f64) -> EpisodeStart {
        let roll: f64 = rng.gen();
        if self.entries.is_empty() || roll >= replay_rate {
            return EpisodeStart::Fresh;
        }
        let i = rng.gen_range(0..self.entries.len());
        let entry = &mut self.entries[i];
        entry.replay_count += 1;
        EpisodeStart::Replay(entry.clone())
    }

    /// Store the state `REWIND_TICKS` before `collision_tick` (or the oldest
    /// one still in the trace).
    pub fn record_collision(&mut self, trace: &EpisodeTrace, collision_tick: u32, source_episode: u64) {
        if let Some(state) = trace.rewound(collision_tick) {
            self.push(ReplayEntry {
                state_bytes: state.snapshot(),
                replay_count: 0,
                source_episode,
            });
        }
    }

    /// Drop every entry whose replay count exceeds `threshold`.
    pub fn evict_hard(&mut self, threshold: u32) {
        self.entries.retain(|e| e.replay_count <= threshold);
    }
}

/// Ring of the most recent world states of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    states: VecDeque<WorldState>,
    depth: usize,
}

impl EpisodeTrace {
    pub fn new() -> Self {
        EpisodeTrace {
            states: VecDeque::new(),
            depth: REWIND_TICKS as usize + 1,
        }
    }

    pub fn clear(&mut self) {
        self.states.clear();
    }

    /// Append the current state, recycling the oldest slot once full.
    pub fn push(&mut self, world: &WorldState) {
        if self.states.len() == self.depth {
            let mut slot = self.states.pop_front().unwrap();
            slot.clone_from(world);
            self.states.push_back(slot);
        } else {
            self.states.push_back(world.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State at `max(collision_tick - REWIND_TICKS, 0)`, clamped to the oldest retained tick.
    pub fn rewound(&self, collision_tick: u32) -> Option<&WorldState> {
        let target = collision_tick.saturating_sub(REWIND_TICKS);
        self.states
            .iter()
            .find(|s| s.tick >= target)
            .or_else(|| self.states.back())
    }
}

impl Default for EpisodeTrace {
    fn default() -> Self {
        EpisodeTrace::new()
    }
}
