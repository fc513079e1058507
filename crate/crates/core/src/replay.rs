//! Fixed-capacity transition memory with combined experience replay.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::encode::Observation;
use crate::mdp::Action;
use crate::nnet::TransitionBatch;

/// One step of experience as handed to [`ReplayMemory::push`]. When a
/// transition's `obs` is the same `Arc` as the previous transition's
/// `next_obs`, the memory stores that observation once.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Arc<Observation>,
    pub terminal: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("replay memory is empty")]
    Empty,
}

/// Borrowed view of a stored observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateRef<'a> {
    pub map: &'a [f32],
    pub time: f32,
}

/// Borrowed view of a stored transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRef<'a> {
    pub obs: StateRef<'a>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: StateRef<'a>,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    obs: u64,
    next: u64,
    action: Action,
    reward: f64,
    terminal: bool,
}

/// Observations in fixed-size pages, addressed by increasing ids. Pages
/// below the oldest live id are recycled rather than freed, so the store
/// does not scatter many small long-lived allocations across the heap.
#[derive(Debug, Default)]
struct StatePages {
    /// Floats per state: the map followed by the time scalar.
    slot: usize,
    per_page: usize,
    pages: VecDeque<Box<[f32]>>,
    spare: Vec<Box<[f32]>>,
    first: u64,
    next: u64,
}

const PAGE_FLOATS: usize = 1 << 18;

impl StatePages {
    fn push(&mut self, obs: &Observation) -> u64 {
        if self.slot == 0 {
            self.slot = obs.map.len() + 1;
            self.per_page = (PAGE_FLOATS / self.slot).max(1);
        }
        assert_eq!(obs.map.len() + 1, self.slot, "observation shape differs from earlier transitions");
        let live = (self.next - self.first) as usize;
        if live == self.pages.len() * self.per_page {
            let page = self.spare.pop().unwrap_or_else(|| vec![0.0; self.slot * self.per_page].into_boxed_slice());
            self.pages.push_back(page);
        }
        let id = self.next;
        let (page, offset) = self.locate(id);
        let dst = &mut self.pages[page][offset..offset + self.slot];
        dst[..obs.map.len()].copy_from_slice(&obs.map);
        dst[obs.map.len()] = obs.time;
        self.next += 1;
        id
    }

    fn locate(&self, id: u64) -> (usize, usize) {
        let rel = (id - self.first) as usize;
        (rel / self.per_page, (rel % self.per_page) * self.slot)
    }

    fn get(&self, id: u64) -> StateRef<'_> {
        let (page, offset) = self.locate(id);
        let s = &self.pages[page][offset..offset + self.slot];
        StateRef { map: &s[..self.slot - 1], time: s[self.slot - 1] }
    }

    /// Recycles pages whose states all have ids below `id`.
    fn release_before(&mut self, id: u64) {
        while self.first + self.per_page as u64 <= id {
            let page = self.pages.pop_front().expect("live states are paged");
            self.spare.push(page);
            self.first += self.per_page as u64;
        }
    }
}

#[derive(Debug)]
pub struct ReplayMemory {
    capacity: usize,
    entries: VecDeque<Entry>,
    states: StatePages,
    /// Last stored `next_obs`, so the following transition can share it.
    last_next: Option<(Arc<Observation>, u64)>,
    pushed: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            states: StatePages::default(),
            last_next: None,
            pushed: 0,
        }
    }

    /// Appends `t`, evicting the oldest entry when full. `t` becomes the latest.
    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
            if let Some(front) = self.entries.front() {
                self.states.release_before(front.obs);
            }
        }
        let obs = match &self.last_next {
            Some((prev, id)) if Arc::ptr_eq(prev, &t.obs) => *id,
            _ => self.states.push(&t.obs),
        };
        let next = self.states.push(&t.next_obs);
        if self.entries.is_empty() {
            self.states.release_before(obs);
        }
        self.entries.push_back(Entry { obs, next, action: t.action, reward: t.reward, terminal: t.terminal });
        self.last_next = Some((t.next_obs, next));
        self.pushed += 1;
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

    /// Total number of pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Transition at buffer position `i`, oldest first.
    pub fn get(&self, i: usize) -> TransitionRef<'_> {
        let e = &self.entries[i];
        TransitionRef {
            obs: self.states.get(e.obs),
            action: e.action,
            reward: e.reward,
            next_obs: self.states.get(e.next),
            terminal: e.terminal,
        }
    }

    pub fn latest(&self) -> Option<TransitionRef<'_>> {
        (!self.is_empty()).then(|| self.get(self.len() - 1))
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = TransitionRef<'_>> {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Buffer positions of a combined-replay minibatch: the latest transition
    /// first, then `m - 1` uniform draws with replacement over the whole buffer.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>, ReplayError> {
        if self.entries.is_empty() {
            return Err(ReplayError::Empty);
        }
        let len = self.entries.len();
        let mut idx = Vec::with_capacity(m);
        if m > 0 {
            idx.push(len - 1);
        }
        idx.extend((1..m).map(|_| rng.random_range(0..len)));
        Ok(idx)
    }

    pub fn sample_combined<R: Rng + ?Sized>(
        &self,
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<TransitionRef<'_>>, ReplayError> {
        Ok(self.sample_indices(m, rng)?.into_iter().map(|i| self.get(i)).collect())
    }

    /// Samples a combined minibatch and lays it out for the network.
    pub fn sample_batch<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<TransitionBatch<f32>, ReplayError> {
        Ok(collate(&self.sample_combined(m, rng)?))
    }
}

pub fn collate(items: &[TransitionRef<'_>]) -> TransitionBatch<f32> {
    let n = items.len();
    let len = items.first().map_or(0, |t| t.obs.map.len());
    let mut b = TransitionBatch {
        n,
        maps: Vec::with_capacity(n * len),
        times: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        next_maps: Vec::with_capacity(n * len),
        next_times: Vec::with_capacity(n),
        terminal: Vec::with_capacity(n),
    };
    for t in items {
        b.maps.extend_from_slice(t.obs.map);
        b.times.push(t.obs.time);
        b.actions.push(t.action.index());
        b.rewards.push(t.reward);
        b.next_maps.extend_from_slice(t.next_obs.map);
        b.next_times.push(t.next_obs.time);
        b.terminal.push(t.terminal);
    }
    b
}
