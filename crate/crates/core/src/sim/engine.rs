use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::NodeId;
use crate::error::{Error, Result};

/// A scheduled occurrence. `(fire_time, seq)` orders all pending events.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub fire_time: f64,
    pub seq: u64,
    pub target: Option<NodeId>,
    pub payload: P,
}

struct Pending<P>(Event<P>);

impl<P> PartialEq for Pending<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Pending<P> {}

impl<P> PartialOrd for Pending<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Pending<P> {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .total_cmp(&self.0.fire_time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Single-threaded event queue with a virtual clock in seconds.
pub struct Engine<P> {
    clock: f64,
    next_seq: u64,
    queue: BinaryHeap<Pending<P>>,
    dispatched: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Self {
            clock: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            dispatched: 0,
        }
    }

    #[inline]
    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events dispatched since construction.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Enqueues an event at absolute time `at`, returning its sequence number.
    pub fn schedule(&mut self, at: f64, target: Option<NodeId>, payload: P) -> Result<u64> {
        if !(at >= self.clock) {
            return Err(Error::ScheduleInPast { at, now: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Pending(Event {
            fire_time: at,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Enqueues an event `delay` seconds from now.
    pub fn schedule_in(&mut self, delay: f64, target: Option<NodeId>, payload: P) -> Result<u64> {
        let at = self.clock + delay;
        self.schedule(at, target, payload)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|p| p.0.fire_time)
    }

    /// Pops the next event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_due(&mut self, t_end: f64) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(p) if p.0.fire_time <= t_end => {
                let ev = self.queue.pop().expect("peeked").0;
                self.clock = ev.fire_time;
                self.dispatched += 1;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Dispatches every event with `fire_time <= t_end` in `(fire_time, seq)`
    /// order, then sets the clock to `t_end`. Returns the number dispatched.
    pub fn run_until<F>(&mut self, t_end: f64, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, Event<P>),
    {
        debug_assert!(t_end >= self.clock, "run_until into the past");
        let mut count = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
            count += 1;
        }
        if t_end > self.clock {
            self.clock = t_end;
        }
        count
    }
}
