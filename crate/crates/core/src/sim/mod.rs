//! Discrete-event engine: virtual clock, ordered event queue and seeded
//! random streams.

mod engine;
mod rng;

pub use engine::{Engine, Event};
pub use rng::{RngStream, StreamId};

use std::fmt;

/// Node identifier. Id 0 is reserved for the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_sink(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
