//! Deterministic discrete-event core: integer clock, a FIFO-per-tick
//! event queue, seeded message delays, and cancellable timers.
//!
//! Determinism contract: with equal seeds and equal call sequences, the
//! engine pops identical `(time, payload)` sequences. Ties at one tick
//! resolve in schedule order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeSet};

/// Message timing: synchronous delivers over an edge of weight `w` in
/// exactly `w` ticks; partial synchrony samples uniformly from `[w, Δw]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DelayModel {
    Synchronous,
    Partial { delta: u64 },
}

impl DelayModel {
    /// Delay stretch factor; 1 under synchrony.
    pub fn delta(&self) -> u64 {
        match self {
            DelayModel::Synchronous => 1,
            DelayModel::Partial { delta } => *delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimerId(u64);

#[derive(Debug)]
struct HeapItem<M> {
    time: u64,
    seq: u64,
    timer: Option<TimerId>,
    payload: M,
}

impl<M> PartialEq for HeapItem<M> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<M> Eq for HeapItem<M> {}

impl<M> PartialOrd for HeapItem<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for HeapItem<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug)]
pub struct EngineCore<M> {
    now: u64,
    seq: u64,
    next_timer: u64,
    heap: BinaryHeap<HeapItem<M>>,
    cancelled: BTreeSet<TimerId>,
    rng: ChaCha8Rng,
    delay: DelayModel,
}

impl<M> EngineCore<M> {
    pub fn new(seed: u64, delay: DelayModel) -> EngineCore<M> {
        if let DelayModel::Partial { delta } = delay {
            assert!(delta >= 1, "delay stretch must be at least 1");
        }
        EngineCore {
            now: 0,
            seq: 0,
            next_timer: 0,
            heap: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            delay,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    /// Samples the delivery delay for a message crossing distance `w`.
    /// Zero distance means a local hop on the same tick.
    pub fn sample_delay(&mut self, w: u64) -> u64 {
        if w == 0 {
            return 0;
        }
        match self.delay {
            DelayModel::Synchronous => w,
            DelayModel::Partial { delta } => self.rng.random_range(w..=delta * w),
        }
    }

    pub fn schedule_at(&mut self, time: u64, payload: M) {
        debug_assert!(time >= self.now, "scheduling into the past");
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(HeapItem {
            time,
            seq,
            timer: None,
            payload,
        });
    }

    /// Delivers `payload` after the sampled delay for distance `w`.
    pub fn send(&mut self, w: u64, payload: M) {
        let d = self.sample_delay(w);
        self.schedule_at(self.now + d, payload);
    }

    /// Same-tick local step, ordered after everything already queued for
    /// this tick.
    pub fn local(&mut self, payload: M) {
        self.schedule_at(self.now, payload);
    }

    pub fn arm_timer(&mut self, after: u64, payload: M) -> TimerId {
        let id = TimerId(self.next_timer);
        self.next_timer += 1;
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(HeapItem {
            time: self.now + after,
            seq,
            timer: Some(id),
            payload,
        });
        id
    }

    pub fn cancel_timer(&mut self, id: TimerId) {
        self.cancelled.insert(id);
    }

    /// Next event in time order, advancing the clock. Cancelled timers are
    /// dropped silently.
    pub fn pop(&mut self) -> Option<(u64, M)> {
        while let Some(item) = self.heap.pop() {
            if let Some(tid) = item.timer {
                if self.cancelled.remove(&tid) {
                    continue;
                }
            }
            debug_assert!(item.time >= self.now);
            self.now = item.time;
            return Some((item.time, item.payload));
        }
        None
    }
}

/// Confirm-message fault injector: drops the nth confirm send of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub drop_nth_confirm: Option<u64>,
}

impl FaultPlan {
    pub fn none() -> FaultPlan {
        FaultPlan::default()
    }
}

#[derive(Debug, Default)]
pub struct FaultState {
    plan: FaultPlan,
    confirms_sent: u64,
}

impl FaultState {
    pub fn new(plan: FaultPlan) -> FaultState {
        FaultState {
            plan,
            confirms_sent: 0,
        }
    }

    /// Counts a confirm send; true when this one must be dropped.
    pub fn drop_confirm(&mut self) -> bool {
        self.confirms_sent += 1;
        self.plan.drop_nth_confirm == Some(self.confirms_sent)
    }
}
