//! Data plane and on-demand route discovery.
//!
//! A packet's fate is decided only by the node currently holding it. Each
//! packet records the nodes it traversed; no node appears twice.

use super::{Assignment, DataPkt, Discovery, Ev, Pdu, Rrep, Rreq, World, P};
use crate::clustering::select_relay_ch;
use crate::mac::{Dest, Frame, FrameKind, TxOutcome, DATA_BYTES, RREP_BYTES, RREQ_BYTES};
use crate::metrics::{Fate, PacketRecord};
use crate::routing::{select_route, RouteEntry};
use crate::scenario::RoutingMode;
use crate::sim::NodeId;
use crate::world::TraceKind;

impl World {
    pub(crate) fn on_generate(&mut self, src: NodeId) {
        let now = self.now();
        let id = self.packets.len() as u64;
        self.packets.push(PacketRecord {
            id,
            src,
            generated_at: now,
            delivered_at: None,
            path: vec![src],
            size: DATA_BYTES,
            fate: Fate::InFlight,
        });
        self.log(Some(src), TraceKind::Generate { pkt: id });
        if !self.nodes[src.index()].alive() {
            self.set_fate(src, id, Fate::DropDead);
            return;
        }
        let pkt = DataPkt {
            id,
            path: vec![src],
            via_aodv: false,
        };
        self.route_onward(src, pkt, false);
    }

    fn in_sink_range(&self, pos: P) -> bool {
        pos.distance(&self.sink_pos) <= self.sc.range_m
    }

    /// Next head on the chain toward the sink, if any.
    pub(crate) fn relay_candidate(&self, id: NodeId, avoid: &[NodeId]) -> Option<NodeId> {
        let n = &self.nodes[id.index()];
        let now = self.now();
        let pos = n.pos;
        let own = pos.distance(&self.sink_pos);
        let latest = n.heads_heard.values().copied().max()?;
        let cands: Vec<(NodeId, P)> = n
            .heads_heard
            .iter()
            .filter(|&(h, &r)| r == latest && *h != id && !avoid.contains(h))
            .filter_map(|(h, _)| n.neighbors.live(*h, now).map(|e| (*h, e.pos)))
            .filter(|(_, p)| p.distance(&pos) <= self.sc.range_m && p.distance(&self.sink_pos) < own)
            .collect();
        if cands.is_empty() {
            return None;
        }
        select_relay_ch(&cands, &[self.sink_pos]).ok()
    }

    /// Moves a packet held by `id` one step toward the sink. `flushing`
    /// marks packets released from a discovery buffer; they are never
    /// buffered again.
    pub(crate) fn route_onward(&mut self, id: NodeId, mut pkt: DataPkt, flushing: bool) {
        if !self.nodes[id.index()].alive() {
            self.set_fate(id, pkt.id, Fate::DropDead);
            return;
        }
        let pos = self.nodes[id.index()].pos;
        if self.in_sink_range(pos) {
            self.counters.direct_forwards += 1;
            self.send_data(id, pkt, NodeId::SINK);
            return;
        }
        let mode = self.sc.mode;
        if mode != RoutingMode::AodvOnly {
            let origin = pkt.path.len() == 1;
            match self.nodes[id.index()].assignment.clone() {
                Assignment::Member { ch, .. } if origin => {
                    if self.nodes[id.index()].neighbors.live(ch, self.now()).is_some() {
                        self.enqueue_slot(id, pkt);
                        return;
                    }
                }
                Assignment::Head { .. } if !pkt.via_aodv => {
                    if let Some(next) = self.relay_candidate(id, &pkt.path) {
                        self.counters.relay_forwards += 1;
                        self.send_data(id, pkt, next);
                        return;
                    }
                }
                _ => {}
            }
            if mode == RoutingMode::ClusterOnly {
                self.set_fate(id, pkt.id, Fate::DropBuffer);
                return;
            }
        }
        pkt.via_aodv = true;
        self.aodv_forward(id, pkt, flushing);
    }

    fn aodv_forward(&mut self, id: NodeId, pkt: DataPkt, flushing: bool) {
        let now = self.now();
        let dest = NodeId::SINK;
        if let Some(r) = self.nodes[id.index()].routes.lookup(dest, now).copied() {
            let next = r.next_hop;
            let known = next.is_sink() || self.nodes[id.index()].neighbors.live(next, now).is_some();
            // A next hop already on the path means the route is stale.
            if known && !pkt.path.contains(&next) {
                let until = now + self.sc.active_timeout_s;
                self.nodes[id.index()].routes.refresh(dest, until, now);
                self.counters.aodv_forwards += 1;
                self.send_data(id, pkt, next);
                return;
            }
            self.nodes[id.index()].routes.remove(dest);
        }
        if flushing {
            self.set_fate(id, pkt.id, Fate::DropBuffer);
            return;
        }
        self.buffer_for_discovery(id, dest, pkt);
    }

    fn enqueue_slot(&mut self, id: NodeId, pkt: DataPkt) {
        let cap = self.sc.queue_len;
        let n = &mut self.nodes[id.index()];
        if n.slot_queue.len() >= cap {
            self.set_fate(id, pkt.id, Fate::DropQueue);
            return;
        }
        n.slot_queue.push_back(pkt);
        self.arm_slot(id);
    }

    /// Releases every packet waiting for the member's slot.
    pub(crate) fn release_slot(&mut self, id: NodeId) {
        let pkts: Vec<DataPkt> = self.nodes[id.index()].slot_queue.drain(..).collect();
        let ch = match self.nodes[id.index()].assignment {
            Assignment::Member { ch, .. } => Some(ch),
            _ => None,
        };
        for pkt in pkts {
            match ch {
                Some(ch) if self.nodes[id.index()].neighbors.live(ch, self.now()).is_some() => {
                    self.counters.slot_forwards += 1;
                    self.send_data(id, pkt, ch)
                }
                _ => self.reroute(id, pkt),
            }
        }
    }

    /// Sends a packet on without the member shortcut.
    fn reroute(&mut self, id: NodeId, pkt: DataPkt) {
        let pos = self.nodes[id.index()].pos;
        if self.in_sink_range(pos) {
            self.send_data(id, pkt, NodeId::SINK);
        } else if self.sc.mode == RoutingMode::ClusterOnly {
            self.set_fate(id, pkt.id, Fate::DropBuffer);
        } else {
            let mut pkt = pkt;
            pkt.via_aodv = true;
            self.aodv_forward(id, pkt, false);
        }
    }

    fn send_data(&mut self, id: NodeId, pkt: DataPkt, to: NodeId) {
        if !to.is_sink() && self.nodes[id.index()].neighbors.live(to, self.now()).is_none() {
            self.counters.forward_without_neighbor += 1;
        }
        self.log(Some(id), TraceKind::Forward { pkt: pkt.id, to });
        let pid = pkt.id;
        let frame = self.make_frame(id, Dest::Unicast(to), FrameKind::Data, DATA_BYTES, Pdu::Data(pkt));
        if self.mac_enqueue(id, frame).is_err() {
            let fate = if self.nodes[id.index()].alive() {
                Fate::DropQueue
            } else {
                Fate::DropDead
            };
            self.set_fate(id, pid, fate);
        }
    }

    // ---- frame dispatch ----

    pub(crate) fn on_frame(&mut self, id: NodeId, from: NodeId, from_pos: P, pdu: Pdu) {
        match pdu {
            Pdu::Beacon | Pdu::Ack { .. } | Pdu::Probe => {}
            Pdu::Data(mut pkt) => {
                // Retransmission of a copy that already moved on.
                if !self.holds(from, pkt.id) {
                    return;
                }
                if id.is_sink() {
                    self.set_fate(id, pkt.id, Fate::Delivered);
                    self.packets[pkt.id as usize].path = pkt.path;
                    return;
                }
                if pkt.path.contains(&id) {
                    self.set_fate(id, pkt.id, Fate::DropBuffer);
                    return;
                }
                pkt.path.push(id);
                self.packets[pkt.id as usize].path = pkt.path.clone();
                self.route_onward(id, pkt, false);
            }
            Pdu::Rreq(r) => self.on_rreq(id, from, r),
            Pdu::Rrep(r) => self.on_rrep(id, from, r),
            Pdu::AdvCh(a) => self.on_adv(id, from, from_pos, a),
            Pdu::Join { round } => self.on_join(id, from, round),
            Pdu::Schedule(s) => self.on_schedule(id, from, s),
        }
    }

    /// Upper-layer reaction to a finished MAC service.
    pub(crate) fn on_mac_done(&mut self, id: NodeId, frame: Frame<Pdu>, outcome: TxOutcome) {
        let failed_hop = match (outcome, frame.dst) {
            (TxOutcome::RetryExhausted, Dest::Unicast(to)) => Some(to),
            _ => None,
        };
        match frame.payload {
            Pdu::Data(pkt) if self.holds(id, pkt.id) => match outcome {
                TxOutcome::Sent => {}
                TxOutcome::ChannelAccessFailure => self.set_fate(id, pkt.id, Fate::DropCsma),
                TxOutcome::RetryExhausted => self.set_fate(id, pkt.id, Fate::DropRetry),
            },
            _ => {}
        }
        if let Some(hop) = failed_hop {
            self.link_break(id, hop);
        }
    }

    /// Forgets `hop` and repairs whatever depended on it.
    pub(crate) fn link_break(&mut self, id: NodeId, hop: NodeId) {
        self.log(Some(id), TraceKind::LinkBreak { hop });
        let n = &mut self.nodes[id.index()];
        n.routes.invalidate_via(hop);
        n.neighbors.remove(hop);
        n.heads_heard.remove(&hop);
        let lost_head = matches!(n.assignment, Assignment::Member { ch, .. } if ch == hop);
        if lost_head {
            n.assignment = Assignment::None;
            n.slot_gen += 1;
        }
        let stranded: Vec<DataPkt> = n
            .queue
            .extract_behind_head(|f| f.dst == Dest::Unicast(hop) && f.kind == FrameKind::Data)
            .into_iter()
            .filter_map(|f| match f.payload {
                Pdu::Data(p) => Some(p),
                _ => None,
            })
            .collect();
        let mut waiting: Vec<DataPkt> = Vec::new();
        if lost_head {
            waiting.extend(self.nodes[id.index()].slot_queue.drain(..));
        }
        for pkt in stranded.into_iter().chain(waiting) {
            self.reroute(id, pkt);
        }
    }

    // ---- route discovery ----

    fn buffer_for_discovery(&mut self, id: NodeId, dest: NodeId, pkt: DataPkt) {
        let cap = self.sc.buffer_pkts;
        let active = self.nodes[id.index()].discovery.contains_key(&dest);
        if !active {
            self.nodes[id.index()].discovery.insert(
                dest,
                Discovery {
                    rreq_id: 0,
                    attempt: 0,
                    buffer: Vec::new(),
                    candidates: Vec::new(),
                    window_open: false,
                },
            );
        }
        let d = self.nodes[id.index()].discovery.get_mut(&dest).expect("just inserted");
        if d.buffer.len() >= cap {
            self.set_fate(id, pkt.id, Fate::DropBuffer);
        } else {
            d.buffer.push(pkt);
        }
        if !active {
            self.send_rreq_wave(id, dest);
        }
    }

    /// Discovery without pending data.
    pub(crate) fn originate_rreq(&mut self, id: NodeId, dest: NodeId) {
        let now = self.now();
        let n = &mut self.nodes[id.index()];
        if !n.alive() || n.routes.lookup(dest, now).is_some() || n.discovery.contains_key(&dest) {
            return;
        }
        n.discovery.insert(
            dest,
            Discovery {
                rreq_id: 0,
                attempt: 0,
                buffer: Vec::new(),
                candidates: Vec::new(),
                window_open: false,
            },
        );
        self.send_rreq_wave(id, dest);
    }

    fn send_rreq_wave(&mut self, id: NodeId, dest: NodeId) {
        let n = &mut self.nodes[id.index()];
        n.seq += 1;
        let rreq_id = n.next_rreq_id;
        n.next_rreq_id += 1;
        n.rreq_cache.first_sighting(id, rreq_id);
        let attempt = {
            let d = n.discovery.get_mut(&dest).expect("discovery active");
            d.rreq_id = rreq_id;
            d.candidates.clear();
            d.window_open = false;
            d.attempt
        };
        let rreq = Rreq {
            origin: id,
            rreq_id,
            dest,
            hop_count: 0,
            bottleneck: n.ledger.remaining(),
            origin_seq: n.seq,
            // Only routes fresher than any this node has held may answer.
            dest_seq_known: n.known_dest_seq.get(&dest).copied().unwrap_or(0) + 1,
        };
        self.counters.rreq_originated += 1;
        self.log(Some(id), TraceKind::RreqOriginate { dest, rreq_id, attempt });
        self.send_control(id, Dest::Broadcast, FrameKind::Rreq, RREQ_BYTES, Pdu::Rreq(rreq));
        let timeout = self.sc.rreq_timeout_ms * 1e-3 * 2f64.powi(attempt as i32);
        self.schedule_in(
            timeout,
            Some(id),
            Ev::RreqTimeout {
                node: id,
                dest,
                rreq_id,
            },
        );
    }

    pub(crate) fn on_rreq_timeout(&mut self, id: NodeId, dest: NodeId, rreq_id: u32) {
        let retries = self.sc.rreq_retries;
        let n = &mut self.nodes[id.index()];
        let Some(d) = n.discovery.get_mut(&dest) else {
            return;
        };
        if d.rreq_id != rreq_id || !d.candidates.is_empty() {
            return;
        }
        if d.attempt < retries {
            d.attempt += 1;
            self.send_rreq_wave(id, dest);
            return;
        }
        let d = self.nodes[id.index()].discovery.remove(&dest).expect("present");
        self.log(Some(id), TraceKind::DiscoveryFailed { dest });
        for pkt in d.buffer {
            self.set_fate(id, pkt.id, Fate::DropBuffer);
        }
    }

    fn on_rreq(&mut self, id: NodeId, from: NodeId, r: Rreq) {
        let now = self.now();
        let active = self.sc.active_timeout_s;
        let n = &mut self.nodes[id.index()];
        // The destination answers every copy so the origin can choose among
        // paths; each neighbor airs a request once, so one reply per
        // previous hop. Everyone else handles a request once.
        let first = n.rreq_cache.first_sighting(r.origin, r.rreq_id);
        if r.origin == id || (!first && r.dest != id) {
            return;
        }
        let own = if n.is_sink { f64::INFINITY } else { n.ledger.remaining() };
        let bottleneck = r.bottleneck.min(own);
        let hop_count = r.hop_count + 1;
        n.routes.offer(
            RouteEntry {
                dest: r.origin,
                next_hop: from,
                hop_count,
                bottleneck_energy: bottleneck,
                dest_seq: r.origin_seq,
                expires_at: now + active,
            },
            now,
        );
        if r.dest == id {
            n.seq += 1;
            let rrep = Rrep {
                origin: r.origin,
                dest: id,
                hop_count: 0,
                bottleneck,
                dest_seq: n.seq,
            };
            self.send_control(id, Dest::Unicast(from), FrameKind::Rrep, RREP_BYTES, Pdu::Rrep(rrep));
            return;
        }
        if let Some(route) = n.routes.lookup(r.dest, now).copied() {
            if route.dest_seq >= r.dest_seq_known && route.next_hop != from {
                let rrep = Rrep {
                    origin: r.origin,
                    dest: r.dest,
                    hop_count: route.hop_count,
                    bottleneck: bottleneck.min(route.bottleneck_energy),
                    dest_seq: route.dest_seq,
                };
                self.send_control(id, Dest::Unicast(from), FrameKind::Rrep, RREP_BYTES, Pdu::Rrep(rrep));
                return;
            }
        }
        if n.is_sink {
            return;
        }
        n.pending_rreq_fwd += 1;
        let jitter = self.rng_routing.uniform(0.0, 0.010).expect("valid interval");
        let fwd = Rreq {
            hop_count,
            bottleneck,
            ..r
        };
        self.schedule_in(jitter, Some(id), Ev::RreqForward { node: id, rreq: fwd });
    }

    pub(crate) fn on_rreq_forward(&mut self, id: NodeId, rreq: Rreq) {
        let n = &mut self.nodes[id.index()];
        if n.pending_rreq_fwd == 0 || !n.alive() {
            return;
        }
        n.pending_rreq_fwd -= 1;
        self.send_control(id, Dest::Broadcast, FrameKind::Rreq, RREQ_BYTES, Pdu::Rreq(rreq));
    }

    fn on_rrep(&mut self, id: NodeId, from: NodeId, r: Rrep) {
        let now = self.now();
        let active = self.sc.active_timeout_s;
        let window = self.sc.rrep_window_ms * 1e-3;
        let entry = RouteEntry {
            dest: r.dest,
            next_hop: from,
            hop_count: r.hop_count + 1,
            bottleneck_energy: r.bottleneck,
            dest_seq: r.dest_seq,
            expires_at: now + active,
        };
        let n = &mut self.nodes[id.index()];
        let known = n.known_dest_seq.entry(r.dest).or_insert(0);
        *known = (*known).max(r.dest_seq);
        if r.origin == id {
            let Some(d) = n.discovery.get_mut(&r.dest) else {
                n.routes.offer(entry, now);
                return;
            };
            d.candidates.push(entry);
            if !d.window_open {
                d.window_open = true;
                let rreq_id = d.rreq_id;
                self.schedule_in(
                    window,
                    Some(id),
                    Ev::RrepWindow {
                        node: id,
                        dest: r.dest,
                        rreq_id,
                    },
                );
            }
            return;
        }
        n.routes.offer(entry, now);
        let Some(back) = n.routes.lookup(r.origin, now).copied() else {
            return;
        };
        let fwd = Rrep {
            hop_count: r.hop_count + 1,
            ..r
        };
        self.send_control(
            id,
            Dest::Unicast(back.next_hop),
            FrameKind::Rrep,
            RREP_BYTES,
            Pdu::Rrep(fwd),
        );
    }

    pub(crate) fn on_rrep_window(&mut self, id: NodeId, dest: NodeId, rreq_id: u32) {
        let n = &mut self.nodes[id.index()];
        match n.discovery.get(&dest) {
            Some(d) if d.rreq_id == rreq_id && !d.candidates.is_empty() => {}
            _ => return,
        }
        let d = n.discovery.remove(&dest).expect("checked");
        let best = select_route(&d.candidates).expect("non-empty");
        n.routes.install(best);
        self.log(
            Some(id),
            TraceKind::RouteSelected {
                dest,
                next_hop: best.next_hop,
                hops: best.hop_count,
            },
        );
        for pkt in d.buffer {
            self.aodv_forward(id, pkt, true);
        }
    }
}
