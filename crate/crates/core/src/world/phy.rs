//! Shared channel and per-node CSMA/CA service.
//!
//! Positions are frozen when an airing starts. A reception succeeds only if
//! no other signal at or above the receiver's carrier-sense threshold
//! overlaps it and the receiver does not transmit meanwhile.

use super::{Ev, MacPhase, Pdu, World, P};
use crate::energy::Direction;
use crate::error::Result;
use crate::mac::{
    airtime, backoff_delay, CsmaState, Dest, Frame, FrameKind, TxOutcome, ACK_BYTES, ACK_WAIT_S, TURNAROUND_S,
};
use crate::radio::received_power;
use crate::sim::NodeId;
use crate::world::TraceKind;

#[derive(Debug, Clone)]
pub(crate) struct Airing {
    pub frame: Frame<Pdu>,
    pub pos: P,
    pub energy: f64,
    pub sensed_by: Vec<NodeId>,
    pub receivers: Vec<NodeId>,
    pub is_ack: bool,
}

impl World {
    /// Queues `frame` at `id`; a full queue hands it back.
    pub(crate) fn mac_enqueue(&mut self, id: NodeId, frame: Frame<Pdu>) -> std::result::Result<(), Frame<Pdu>> {
        self.touch(id);
        if !self.nodes[id.index()].alive() {
            return Err(frame);
        }
        self.nodes[id.index()].queue.enqueue(frame)?;
        self.mac_kick(id);
        Ok(())
    }

    fn mac_kick(&mut self, id: NodeId) {
        let n = &mut self.nodes[id.index()];
        if n.alive() && n.phase == MacPhase::Idle && !n.queue.is_empty() {
            n.csma = CsmaState::new(&self.mac);
            self.mac_backoff(id);
        }
    }

    fn mac_backoff(&mut self, id: NodeId) {
        let be = self.nodes[id.index()].csma.be;
        let delay = backoff_delay(be, &self.mac, &mut self.rng_backoff).expect("be kept within bounds");
        let n = &mut self.nodes[id.index()];
        n.phase = MacPhase::Backoff;
        n.mac_gen += 1;
        let gen = n.mac_gen;
        self.schedule_in(delay, Some(id), Ev::MacAttempt { node: id, gen });
    }

    fn channel_busy(&self, id: NodeId) -> bool {
        let n = &self.nodes[id.index()];
        let now = self.now();
        n.signals > 0 || n.transmitting.is_some() || self.jams.iter().any(|&(a, b)| a <= now && now < b)
    }

    pub(crate) fn on_mac_attempt(&mut self, id: NodeId, gen: u64) -> Result<()> {
        let n = &self.nodes[id.index()];
        if n.mac_gen != gen || n.phase != MacPhase::Backoff || !n.alive() {
            return Ok(());
        }
        if self.channel_busy(id) {
            self.log(Some(id), TraceKind::CcaBusy);
            let cfg = self.mac;
            if self.nodes[id.index()].csma.on_busy(&cfg) {
                self.mac_backoff(id);
            } else {
                self.mac_complete(id, TxOutcome::ChannelAccessFailure);
            }
            return Ok(());
        }
        let frame = self.nodes[id.index()]
            .queue
            .head()
            .expect("queue non-empty in backoff")
            .clone();
        if self.start_airing(id, frame, false)? {
            self.nodes[id.index()].phase = MacPhase::Airing;
        }
        Ok(())
    }

    pub(crate) fn on_ack_timeout(&mut self, id: NodeId, gen: u64) -> Result<()> {
        let n = &mut self.nodes[id.index()];
        if n.mac_gen != gen || n.phase != MacPhase::WaitAck {
            return Ok(());
        }
        let cfg = self.mac;
        if n.csma.on_ack_timeout(&cfg) {
            self.mac_backoff(id);
        } else {
            self.mac_complete(id, TxOutcome::RetryExhausted);
        }
        Ok(())
    }

    /// Retires the head frame with `outcome` and serves the next one.
    fn mac_complete(&mut self, id: NodeId, outcome: TxOutcome) {
        let n = &mut self.nodes[id.index()];
        let frame = n.queue.pop_head().expect("head in service");
        n.phase = MacPhase::Idle;
        n.mac_gen += 1;
        self.log(
            Some(id),
            TraceKind::TxOutcome {
                kind: frame.kind,
                seq: frame.mac_seq,
                outcome,
            },
        );
        self.on_mac_done(id, frame, outcome);
        self.mac_kick(id);
    }

    /// Puts `frame` on the air from `src`. Returns false if `src` could not
    /// pay for it.
    fn start_airing(&mut self, src: NodeId, frame: Frame<Pdu>, is_ack: bool) -> Result<bool> {
        let pos = self.nodes[src.index()].pos;
        let distance = match frame.dst {
            Dest::Unicast(d) => pos.distance(&self.nodes[d.index()].pos).max(1e-3),
            Dest::Broadcast => self.sc.range_m,
        };
        if !self.charge(src, Direction::Tx, frame.weight(), Some(distance)) {
            return Ok(false);
        }
        let now = self.now();
        let duration = airtime(frame.size, &self.mac)?;
        let aid = self.next_airing;
        self.next_airing += 1;
        self.counters.airings += 1;
        match frame.kind {
            FrameKind::Beacon => self.counters.beacons_sent += 1,
            FrameKind::Rreq => self.counters.rreq_sent += 1,
            _ => {}
        }
        self.log(
            Some(src),
            TraceKind::TxStart {
                kind: frame.kind,
                dst: frame.dst,
                seq: frame.mac_seq,
                size: frame.size,
            },
        );
        // Half duplex: whatever the sender was receiving is lost.
        let s = &mut self.nodes[src.index()];
        s.transmitting = Some(aid);
        for r in s.rx.iter_mut() {
            r.1 = true;
        }
        let energy = s.ledger.remaining();
        let mut sensed_by = Vec::new();
        let mut receivers = Vec::new();
        let mut collided = false;
        for n in self.nodes.iter_mut() {
            if n.id == src || !n.alive() {
                continue;
            }
            let d = pos.distance(&n.pos);
            let power = if d > 0.0 {
                received_power(&self.radio, d)?
            } else {
                f64::INFINITY
            };
            if power < self.radio.cs_thresh {
                continue;
            }
            let busy_before = n.signals > 0 || n.transmitting.is_some();
            for r in n.rx.iter_mut() {
                if !r.1 {
                    r.1 = true;
                    collided = true;
                }
            }
            n.signals += 1;
            sensed_by.push(n.id);
            if power >= self.radio.rx_thresh && n.rx_enabled {
                if busy_before {
                    collided = true;
                } else {
                    n.rx.push((aid, false));
                    receivers.push(n.id);
                }
            }
        }
        if collided {
            self.counters.collisions += 1;
        }
        self.airings.insert(
            aid,
            Airing {
                frame,
                pos,
                energy,
                sensed_by,
                receivers,
                is_ack,
            },
        );
        self.schedule(now + duration, Some(src), Ev::TxEnd { airing: aid });
        Ok(true)
    }

    pub(crate) fn on_tx_end(&mut self, aid: u64) {
        let a = self.airings.remove(&aid).expect("airing registered");
        let src = a.frame.src;
        {
            let s = &mut self.nodes[src.index()];
            if s.transmitting == Some(aid) {
                s.transmitting = None;
            }
        }
        for &id in &a.sensed_by {
            let n = &mut self.nodes[id.index()];
            n.signals = n.signals.saturating_sub(1);
        }
        if !a.is_ack && self.nodes[src.index()].phase == MacPhase::Airing {
            if a.frame.needs_ack() {
                let n = &mut self.nodes[src.index()];
                n.phase = MacPhase::WaitAck;
                n.mac_gen += 1;
                let gen = n.mac_gen;
                self.schedule_in(ACK_WAIT_S, Some(src), Ev::AckTimeout { node: src, gen });
            } else {
                self.mac_complete(src, TxOutcome::Sent);
            }
        }
        for &id in &a.receivers {
            let n = &mut self.nodes[id.index()];
            let Some(i) = n.rx.iter().position(|r| r.0 == aid) else {
                continue;
            };
            let (_, corrupted) = n.rx.swap_remove(i);
            if !corrupted && n.alive() {
                self.receive(id, &a);
            }
        }
    }

    fn receive(&mut self, id: NodeId, a: &Airing) {
        self.touch(id);
        let now = self.now();
        let frame = &a.frame;
        let src = frame.src;
        self.nodes[id.index()].neighbors.update(src, a.pos, a.energy, now);
        if let Dest::Unicast(d) = frame.dst {
            if d != id {
                return;
            }
        }
        if !self.charge(id, Direction::Rx, frame.weight(), None) {
            return;
        }
        if let Pdu::Ack { seq } = frame.payload {
            let n = &self.nodes[id.index()];
            let matches = n.phase == MacPhase::WaitAck
                && n.queue
                    .head()
                    .is_some_and(|h| h.mac_seq == seq && h.dst == Dest::Unicast(src));
            if matches {
                self.mac_complete(id, TxOutcome::Sent);
            }
            return;
        }
        if frame.needs_ack() {
            self.nodes[id.index()].pending_acks += 1;
            self.schedule_in(
                TURNAROUND_S,
                Some(id),
                Ev::AckSend {
                    node: id,
                    to: src,
                    seq: frame.mac_seq,
                },
            );
            let last = self.nodes[id.index()].last_rx_seq.insert(src, frame.mac_seq);
            if last == Some(frame.mac_seq) {
                return;
            }
        }
        self.on_frame(id, src, a.pos, frame.payload.clone());
    }

    pub(crate) fn on_ack_send(&mut self, id: NodeId, to: NodeId, seq: u32) {
        let n = &mut self.nodes[id.index()];
        n.pending_acks = n.pending_acks.saturating_sub(1);
        if !n.alive() || n.transmitting.is_some() {
            return;
        }
        let frame = Frame {
            kind: FrameKind::Ack,
            src: id,
            dst: Dest::Unicast(to),
            size: ACK_BYTES,
            created_at: self.now(),
            mac_seq: seq,
            payload: Pdu::Ack { seq },
        };
        self.start_airing(id, frame, true).expect("valid ACK size");
    }
}
