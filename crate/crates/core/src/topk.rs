//! Space Saving heavy-hitter sketch over per-flow byte counts.

use crate::types::{FlowId, SimTime};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counter {
    pub flow: FlowId,
    /// Upper bound on the flow's true byte count.
    pub count: u64,
    /// Bytes inherited from an evicted counter; `count - error` is a lower bound.
    pub error: u64,
}

/// Tracks at most `capacity` flows in O(K) space.
#[derive(Clone, Debug)]
pub struct SpaceSaving {
    capacity: usize,
    counters: Vec<Counter>,
}

impl SpaceSaving {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "space saving needs at least one counter");
        SpaceSaving {
            capacity,
            counters: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn counters(&self) -> &[Counter] {
        &self.counters
    }

    pub fn get(&self, flow: FlowId) -> Option<&Counter> {
        self.counters.iter().find(|c| c.flow == flow)
    }

    pub fn record(&mut self, flow: FlowId, bytes: u64) {
        if let Some(c) = self.counters.iter_mut().find(|c| c.flow == flow) {
            c.count += bytes;
            return;
        }
        if self.counters.len() < self.capacity {
            self.counters.push(Counter {
                flow,
                count: bytes,
                error: 0,
            });
            return;
        }
        // Evict the smallest counter; ties go to the lowest flow id.
        let victim = self
            .counters
            .iter_mut()
            .min_by_key(|c| (c.count, c.flow))
            .expect("capacity > 0");
        let inherited = victim.count;
        *victim = Counter {
            flow,
            count: inherited + bytes,
            error: inherited,
        };
    }

    /// Average rate of every tracked flow over `interval`, largest first.
    pub fn top_rates(&self, interval: SimTime) -> Vec<(FlowId, f64)> {
        assert!(interval > SimTime::ZERO);
        let secs = interval.as_secs_f64();
        let mut sorted: Vec<&Counter> = self.counters.iter().collect();
        sorted.sort_by(|a, b| b.count.cmp(&a.count).then(a.flow.cmp(&b.flow)));
        sorted
            .into_iter()
            .map(|c| (c.flow, c.count as f64 * 8.0 / secs))
            .collect()
    }

    pub fn reset(&mut self) {
        self.counters.clear();
    }
}
