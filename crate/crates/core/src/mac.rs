//! Unslotted CSMA/CA medium access in the 802.15.4 style: binary
//! exponential backoff, clear-channel assessment, acknowledged unicast with
//! bounded retries, and a bounded FIFO transmit queue.
//!
//! This module holds the per-node state machine pieces; the network model
//! drives them from engine events.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::sim::{NodeId, RngStream};

/// 250 kb/s O-QPSK PHY.
pub const BIT_RATE_BPS: f64 = 250_000.0;
/// 20 symbols of 16 µs.
pub const UNIT_BACKOFF_S: f64 = 320e-6;
/// 12 symbols RX/TX turnaround.
pub const TURNAROUND_S: f64 = 192e-6;
/// 54 symbols, measured from the end of the data airing.
pub const ACK_WAIT_S: f64 = 864e-6;
/// Preamble, SFD and PHY header.
pub const DEFAULT_PHY_OVERHEAD_BITS: u32 = 48;

pub const DATA_BYTES: u32 = 256;
pub const ACK_BYTES: u32 = 5;
pub const BEACON_BYTES: u32 = 24;
pub const RREQ_BYTES: u32 = 24;
pub const RREP_BYTES: u32 = 20;
pub const ADV_CH_BYTES: u32 = 16;
pub const JOIN_BYTES: u32 = 12;
pub const MAX_CONTROL_BYTES: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Data,
    Ack,
    Beacon,
    Rreq,
    Rrep,
    AdvCh,
    Join,
    Schedule,
}

impl FrameKind {
    pub fn is_broadcast_kind(self) -> bool {
        matches!(
            self,
            FrameKind::Beacon | FrameKind::Rreq | FrameKind::AdvCh | FrameKind::Schedule
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
            FrameKind::Beacon => "BEACON",
            FrameKind::Rreq => "RREQ",
            FrameKind::Rrep => "RREP",
            FrameKind::AdvCh => "ADV_CH",
            FrameKind::Join => "JOIN",
            FrameKind::Schedule => "SCHEDULE",
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Broadcast,
    Unicast(NodeId),
}

impl Dest {
    pub fn is_broadcast(self) -> bool {
        matches!(self, Dest::Broadcast)
    }

    pub fn node(self) -> Option<NodeId> {
        match self {
            Dest::Broadcast => None,
            Dest::Unicast(n) => Some(n),
        }
    }
}

/// Over-the-air unit. `P` is the upper-layer payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<P> {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    /// Bytes, excluding PHY overhead.
    pub size: u32,
    pub created_at: f64,
    pub mac_seq: u32,
    pub payload: P,
}

impl<P> Frame<P> {
    pub fn needs_ack(&self) -> bool {
        self.kind != FrameKind::Ack && !self.dst.is_broadcast()
    }

    /// Size in DATA-packet equivalents, for energy charging.
    pub fn weight(&self) -> f64 {
        self.size as f64 / DATA_BYTES as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacConfig {
    pub min_be: u8,
    pub max_be: u8,
    pub max_csma_backoffs: u8,
    pub max_retries: u8,
    pub queue_len: usize,
    pub phy_overhead_bits: u32,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            min_be: 3,
            max_be: 5,
            max_csma_backoffs: 4,
            max_retries: 3,
            queue_len: 100,
            phy_overhead_bits: DEFAULT_PHY_OVERHEAD_BITS,
        }
    }
}

impl MacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_be > self.max_be {
            return Err(Error::Parameter("mac.min_be must not exceed mac.max_be".into()));
        }
        if self.max_be > 20 {
            return Err(Error::Parameter("mac.max_be too large".into()));
        }
        if self.queue_len == 0 {
            return Err(Error::Parameter("mac.queue_len must be positive".into()));
        }
        Ok(())
    }
}

/// Time on air for a frame of `size` bytes.
pub fn airtime(size: u32, cfg: &MacConfig) -> Result<f64> {
    if size == 0 {
        return Err(Error::Precondition("airtime requires size > 0"));
    }
    Ok((size as f64 * 8.0 + cfg.phy_overhead_bits as f64) / BIT_RATE_BPS)
}

/// Random backoff of `r` unit periods, `r` uniform in `[0, 2^be − 1]`.
pub fn backoff_delay(be: u8, cfg: &MacConfig, rng: &mut RngStream) -> Result<f64> {
    if be < cfg.min_be || be > cfg.max_be {
        return Err(Error::Precondition("backoff exponent outside [min_be, max_be]"));
    }
    let slots = 1u64 << be;
    let r = rng.below(slots);
    Ok(r as f64 * UNIT_BACKOFF_S)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxOutcome {
    Sent,
    ChannelAccessFailure,
    RetryExhausted,
}

/// Backoff bookkeeping for the frame at the head of the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsmaState {
    pub be: u8,
    pub nb: u8,
    pub retries: u8,
}

impl CsmaState {
    pub fn new(cfg: &MacConfig) -> Self {
        Self {
            be: cfg.min_be,
            nb: 0,
            retries: 0,
        }
    }

    /// Restart backoff for a fresh attempt, keeping the retry count.
    pub fn restart(&mut self, cfg: &MacConfig) {
        self.be = cfg.min_be;
        self.nb = 0;
    }

    /// Busy CCA. Returns `false` once the backoff budget is exhausted.
    pub fn on_busy(&mut self, cfg: &MacConfig) -> bool {
        self.nb += 1;
        self.be = (self.be + 1).min(cfg.max_be);
        self.nb <= cfg.max_csma_backoffs
    }

    /// Missing acknowledgment. Returns `false` once retries are exhausted,
    /// otherwise resets backoff for the retransmission.
    pub fn on_ack_timeout(&mut self, cfg: &MacConfig) -> bool {
        if self.retries >= cfg.max_retries {
            return false;
        }
        self.retries += 1;
        self.restart(cfg);
        true
    }
}

/// Bounded FIFO; the frame in service stays at the head until its fate is
/// decided.
#[derive(Debug, Clone)]
pub struct TxQueue<P> {
    frames: VecDeque<Frame<P>>,
    capacity: usize,
    drops: u64,
    high_water: usize,
}

impl<P> TxQueue<P> {
    pub fn new(capacity: usize) -> Self {
        Self {
            frames: VecDeque::new(),
            capacity,
            drops: 0,
            high_water: 0,
        }
    }

    /// Appends unless full; a rejected frame is handed back and counted.
    pub fn enqueue(&mut self, frame: Frame<P>) -> std::result::Result<(), Frame<P>> {
        if self.frames.len() >= self.capacity {
            self.drops += 1;
            return Err(frame);
        }
        self.frames.push_back(frame);
        self.high_water = self.high_water.max(self.frames.len());
        assert!(self.frames.len() <= self.capacity);
        Ok(())
    }

    pub fn head(&self) -> Option<&Frame<P>> {
        self.frames.front()
    }

    pub fn pop_head(&mut self) -> Option<Frame<P>> {
        self.frames.pop_front()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &Frame<P>> {
        self.frames.iter()
    }

    /// Removes queued frames (never the head, which may be on air) matching
    /// `pred`, preserving order of the rest.
    pub fn extract_behind_head(&mut self, mut pred: impl FnMut(&Frame<P>) -> bool) -> Vec<Frame<P>> {
        let mut kept = VecDeque::with_capacity(self.frames.len());
        let mut taken = Vec::new();
        for (i, f) in self.frames.drain(..).enumerate() {
            if i > 0 && pred(&f) {
                taken.push(f);
            } else {
                kept.push_back(f);
            }
        }
        self.frames = kept;
        taken
    }

    pub fn drain_all(&mut self) -> Vec<Frame<P>> {
        self.frames.drain(..).collect()
    }
}
