use std::collections::VecDeque;

use parking_lot::Mutex;

use crate::algorithms::Window;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Default)]
struct Ring {
    windows: VecDeque<Window>,
    transitions: usize,
    pushed: u64,
}

/// FIFO ring of complete windows, bounded by its total number of transitions.
///
/// Appends and samples lock the whole ring, so a sampled window is always one
/// that was pushed whole.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: Mutex<Ring>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay_capacity", "must be positive"));
        }
        Ok(Self {
            capacity,
            ring: Mutex::new(Ring::default()),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a window, evicting the oldest ones until it fits.
    pub fn push(&self, window: Window) -> Result<()> {
        if window.len() > self.capacity {
            return Err(Error::invalid("window longer than the replay capacity"));
        }
        let mut ring = self.ring.lock();
        while ring.transitions + window.len() > self.capacity {
            let old = ring.windows.pop_front().expect("non-empty while over capacity");
            ring.transitions -= old.len();
        }
        ring.transitions += window.len();
        ring.pushed += 1;
        ring.windows.push_back(window);
        Ok(())
    }

    pub fn transitions(&self) -> usize {
        self.ring.lock().transitions
    }

    pub fn windows(&self) -> usize {
        self.ring.lock().windows.len()
    }

    /// Windows ever pushed, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.ring.lock().pushed
    }

    /// `n` windows drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Window>> {
        let ring = self.ring.lock();
        if ring.windows.is_empty() {
            return Err(Error::Contract("sampling from an empty replay buffer".into()));
        }
        Ok((0..n)
            .map(|_| ring.windows[rng.below(ring.windows.len())].clone())
            .collect())
    }
}
