//! Event trace. One record per dispatched event plus the model-level
//! happenings it caused, in causal order.

use std::fmt;
use std::io::{self, Write};

use crate::mac::{Dest, FrameKind, TxOutcome};
use crate::metrics::Fate;
use crate::sim::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Dispatch(&'static str),
    TxStart {
        kind: FrameKind,
        dst: Dest,
        seq: u32,
        size: u32,
    },
    TxOutcome {
        kind: FrameKind,
        seq: u32,
        outcome: TxOutcome,
    },
    CcaBusy,
    Generate {
        pkt: u64,
    },
    Forward {
        pkt: u64,
        to: NodeId,
    },
    Deliver {
        pkt: u64,
        delay: f64,
    },
    Drop {
        pkt: u64,
        fate: Fate,
    },
    LinkBreak {
        hop: NodeId,
    },
    Death,
    RreqOriginate {
        dest: NodeId,
        rreq_id: u32,
        attempt: u32,
    },
    DiscoveryFailed {
        dest: NodeId,
    },
    RouteSelected {
        dest: NodeId,
        next_hop: NodeId,
        hops: u32,
    },
    Advertise {
        round: u32,
    },
    StepDown {
        round: u32,
    },
    Joined {
        round: u32,
        ch: NodeId,
    },
    ScheduleSent {
        round: u32,
        members: Vec<NodeId>,
    },
    Unclustered {
        round: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub node: Option<NodeId>,
    pub kind: TraceKind,
}

fn dest(d: Dest) -> String {
    match d {
        Dest::Broadcast => "bcast".to_string(),
        Dest::Unicast(n) => n.to_string(),
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceKind::Dispatch(label) => write!(f, "event {label}"),
            TraceKind::TxStart { kind, dst, seq, size } => {
                write!(f, "tx_start {kind} dst={} seq={seq} size={size}", dest(*dst))
            }
            TraceKind::TxOutcome { kind, seq, outcome } => write!(f, "tx_done {kind} seq={seq} outcome={outcome:?}"),
            TraceKind::CcaBusy => f.write_str("cca_busy"),
            TraceKind::Generate { pkt } => write!(f, "generate pkt={pkt}"),
            TraceKind::Forward { pkt, to } => write!(f, "forward pkt={pkt} to={to}"),
            TraceKind::Deliver { pkt, delay } => write!(f, "deliver pkt={pkt} delay={delay:.9}"),
            TraceKind::Drop { pkt, fate } => write!(f, "drop pkt={pkt} fate={fate:?}"),
            TraceKind::LinkBreak { hop } => write!(f, "link_break hop={hop}"),
            TraceKind::Death => f.write_str("death"),
            TraceKind::RreqOriginate { dest, rreq_id, attempt } => {
                write!(f, "rreq dest={dest} id={rreq_id} attempt={attempt}")
            }
            TraceKind::DiscoveryFailed { dest } => write!(f, "discovery_failed dest={dest}"),
            TraceKind::RouteSelected { dest, next_hop, hops } => {
                write!(f, "route dest={dest} next={next_hop} hops={hops}")
            }
            TraceKind::Advertise { round } => write!(f, "adv_ch round={round}"),
            TraceKind::StepDown { round } => write!(f, "step_down round={round}"),
            TraceKind::Joined { round, ch } => write!(f, "join round={round} ch={ch}"),
            TraceKind::ScheduleSent { round, members } => {
                let list: Vec<String> = members.iter().map(|m| m.to_string()).collect();
                write!(f, "schedule round={round} members=[{}]", list.join(","))
            }
            TraceKind::Unclustered { round } => write!(f, "unclustered round={round}"),
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(n) => write!(f, "{:.9} {n} {}", self.t, self.kind),
            None => write!(f, "{:.9} - {}", self.t, self.kind),
        }
    }
}

/// One line per record.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        writeln!(out, "{r}")?;
    }
    out.flush()
}
