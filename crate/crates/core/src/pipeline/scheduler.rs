use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::types::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    DroppedOldest(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerCounters {
    pub received: u64,
    pub processed: u64,
    pub dropped: u64,
}

/// Bounded queue of frames waiting for the pipeline. When full, the oldest
/// waiting frame is discarded so the newest is always accepted.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    capacity: usize,
    queue: VecDeque<Frame>,
    counters: SchedulerCounters,
    last_emitted: Option<u64>,
}

impl SchedulerState {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            queue: VecDeque::with_capacity(capacity),
            counters: SchedulerCounters::default(),
            last_emitted: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn queued(&self) -> usize {
        self.queue.len()
    }
    pub fn counters(&self) -> SchedulerCounters {
        self.counters
    }
    pub fn last_emitted(&self) -> Option<u64> {
        self.last_emitted
    }

    pub fn submit(&mut self, frame: Frame) -> SubmitOutcome {
        self.counters.received += 1;
        let outcome = if self.queue.len() >= self.capacity {
            let old = self.queue.pop_front().expect("capacity is at least 1");
            self.counters.dropped += 1;
            SubmitOutcome::DroppedOldest(old.frame_id())
        } else {
            SubmitOutcome::Accepted
        };
        self.queue.push_back(frame);
        outcome
    }

    /// Hands the oldest waiting frame to the pipeline. It counts as
    /// processed from here on, whether or not its stages succeed.
    pub fn take(&mut self) -> Option<Frame> {
        let f = self.queue.pop_front()?;
        self.counters.processed += 1;
        Some(f)
    }

    pub fn mark_emitted(&mut self, frame_id: u64) {
        self.last_emitted = Some(frame_id);
    }
}

/// [`SchedulerState`] shared between one producer and one consumer thread.
#[derive(Debug)]
pub struct SharedScheduler {
    state: Mutex<(SchedulerState, bool)>,
    ready: Condvar,
}

impl SharedScheduler {
    pub fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new((SchedulerState::new(capacity), false)),
            ready: Condvar::new(),
        }
    }

    pub fn submit(&self, frame: Frame) -> SubmitOutcome {
        let mut g = self.state.lock().expect("scheduler lock");
        let out = g.0.submit(frame);
        self.ready.notify_one();
        out
    }

    /// Blocks until a frame is available, the queue is closed and drained,
    /// or `timeout` passes. Closed-and-empty returns `Err(())`.
    pub fn take_timeout(&self, timeout: Duration) -> Result<Option<Frame>, ()> {
        let g = self.state.lock().expect("scheduler lock");
        let (mut g, _) = self
            .ready
            .wait_timeout_while(g, timeout, |(s, closed)| s.queued() == 0 && !*closed)
            .expect("scheduler lock");
        match g.0.take() {
            Some(f) => Ok(Some(f)),
            None if g.1 => Err(()),
            None => Ok(None),
        }
    }

    /// No more submissions; the consumer drains what is queued.
    pub fn close(&self) {
        self.state.lock().expect("scheduler lock").1 = true;
        self.ready.notify_all();
    }

    pub fn set_capacity(&self, capacity: usize) {
        let mut g = self.state.lock().expect("scheduler lock");
        g.0.capacity = capacity.max(1);
    }

    pub fn mark_emitted(&self, frame_id: u64) {
        self.state.lock().expect("scheduler lock").0.mark_emitted(frame_id);
    }

    pub fn snapshot(&self) -> (SchedulerCounters, usize) {
        let g = self.state.lock().expect("scheduler lock");
        (g.0.counters(), g.0.queued())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PinholeIntrinsics, Pose6D};
    use proptest::prelude::*;

    fn frame(id: u64) -> Frame {
        let intr = PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        Frame::new(id, id, 1, 1, vec![0; 3], None, intr, Pose6D::identity()).unwrap()
    }

    #[test]
    fn single_submit_accepted() {
        let mut s = SchedulerState::new(2);
        assert_eq!(s.submit(frame(0)), SubmitOutcome::Accepted);
    }

    #[test]
    fn capacity_one_drops_oldest() {
        let mut s = SchedulerState::new(1);
        s.submit(frame(1));
        assert_eq!(s.submit(frame(2)), SubmitOutcome::DroppedOldest(1));
        assert_eq!(s.take().unwrap().frame_id(), 2);
        assert!(s.take().is_none());
    }

    #[test]
    fn shared_drains_after_close() {
        let s = SharedScheduler::new(4);
        s.submit(frame(0));
        s.close();
        assert_eq!(s.take_timeout(Duration::from_millis(1)).unwrap().unwrap().frame_id(), 0);
        assert!(s.take_timeout(Duration::from_millis(1)).is_err());
    }

    proptest! {
        #[test]
        fn counters_balance(cap in 1usize..5, ops in prop::collection::vec(any::<bool>(), 0..200)) {
            let mut s = SchedulerState::new(cap);
            let mut next_id = 0u64;
            let mut taken = Vec::new();
            let mut dropped = Vec::new();
            for submit in ops {
                if submit {
                    if let SubmitOutcome::DroppedOldest(id) = s.submit(frame(next_id)) {
                        dropped.push(id);
                    }
                    next_id += 1;
                } else if let Some(f) = s.take() {
                    taken.push(f.frame_id());
                }
                let c = s.counters();
                prop_assert_eq!(c.received, c.processed + c.dropped + s.queued() as u64);
                prop_assert!(s.queued() <= cap);
            }
            prop_assert!(taken.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(taken.iter().all(|id| !dropped.contains(id)));
        }
    }
}
