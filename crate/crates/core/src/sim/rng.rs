use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Purpose label of a random stream. Each label maps to an independent
/// ChaCha stream under the same seed, so draws in one subsystem never shift
/// the sequence seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Placement,
    /// Per-node waypoint draws, so trajectories do not depend on protocol
    /// activity.
    Mobility(u32),
    Backoff,
    Election,
    Traffic,
    Beacon,
    Routing,
}

impl StreamId {
    fn code(self) -> u64 {
        match self {
            StreamId::Placement => 1,
            StreamId::Backoff => 2,
            StreamId::Election => 3,
            StreamId::Traffic => 4,
            StreamId::Beacon => 5,
            StreamId::Routing => 6,
            StreamId::Mobility(n) => (1 << 32) | n as u64,
        }
    }
}

/// Reproducible random sequence keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.code());
        Self {
            seed,
            stream,
            rng,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Number of values drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform real in `[lo, hi)`; exactly `lo` when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        self.draws += 1;
        let u: f64 = self.rng.gen();
        if lo == hi {
            return Ok(lo);
        }
        let v = lo + (hi - lo) * u;
        Ok(if v >= hi { hi.next_down().max(lo) } else { v })
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.draws += 1;
        self.rng.gen_range(0..n)
    }
}
