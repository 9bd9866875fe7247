//! Round-based cluster-head election, cluster formation and member slots.
//!
//! At most one head per grid cell survives a round: an advertiser steps
//! down on hearing a same-cell advertisement that outranks its own.

use std::collections::BTreeMap;

use super::{Adv, Assignment, Ev, Pdu, Sched, World, P};
use crate::clustering::{
    build_schedule, frame_length, outranks, overlying_radius, waiting_time, CellId, ClusterPlan, RelayHop,
};
use crate::error::Result;
use crate::mac::{Dest, FrameKind, ADV_CH_BYTES, JOIN_BYTES, MAX_CONTROL_BYTES};
use crate::sim::NodeId;
use crate::world::TraceKind;

/// Delay between closing the election and the heads' SCHEDULE broadcast.
const SCHEDULE_DELAY_S: f64 = 0.3;
/// Spread of JOIN transmissions after the election closes.
const JOIN_JITTER_S: f64 = 0.05;
/// Lead time between a SCHEDULE and the first frame it describes.
const FRAME_LEAD_S: f64 = 0.05;
/// Spread of SCHEDULE broadcasts so neighboring heads do not collide.
const SCHEDULE_JITTER_S: f64 = 0.1;
/// Margin after the last SCHEDULE broadcast before roles are audited.
const CHECK_DELAY_S: f64 = 0.3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) enum Status {
    #[default]
    Idle,
    Waiting,
    Suppressed,
    Head,
    SteppedDown,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ElectionState {
    pub round: u32,
    pub status: Status,
    /// Residual energy frozen at round start; the value advertised.
    pub energy: f64,
    pub radius: f64,
    pub cell: Option<CellId>,
    /// Best same-cell advertiser heard this round.
    pub best: Option<(f64, NodeId)>,
    pub joined: Option<NodeId>,
    /// JOIN senders in arrival order.
    pub joins: Vec<NodeId>,
    /// Slot generation for which a SlotStart is pending.
    pub armed_gen: Option<u64>,
    log_idx: usize,
}

/// Per-node outcome of one election round.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectionRecord {
    pub round: u32,
    pub node: NodeId,
    pub energy: f64,
    pub vr: f64,
    pub waiting_s: f64,
    pub radius_m: f64,
    pub cell: Option<CellId>,
    pub advertised: bool,
    pub head: bool,
}

impl World {
    pub(crate) fn on_round_start(&mut self, r: u32) -> Result<()> {
        let now = self.now();
        self.round = r;
        self.counters.ch_rounds += 1;
        let sensors: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !n.is_sink && n.alive())
            .map(|n| n.id)
            .collect();
        let dists: Vec<f64> = sensors
            .iter()
            .map(|&id| self.nodes[id.index()].pos.distance(&self.sink_pos))
            .collect();
        let d_max = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d_min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let e_max = self
            .nodes
            .iter()
            .filter(|n| !n.is_sink)
            .map(|n| n.ledger.e0)
            .fold(0.0, f64::max);
        let sc = self.sc.clone();
        for (&id, &d) in sensors.iter().zip(&dists) {
            self.touch(id);
            let energy = self.nodes[id.index()].ledger.remaining().clamp(0.0, e_max);
            let vr = match sc.pin_vr {
                Some(v) => v,
                None => self.rng_election.uniform(sc.vr_lo, sc.vr_hi)?,
            };
            let w = waiting_time(energy, e_max, sc.t2_s, vr)?;
            let radius = overlying_radius(d, d_max, d_min, sc.alpha, sc.r_max_m)?;
            let pos = self.nodes[id.index()].pos;
            let cell = self.grid.cell_of(pos);
            self.election_log.push(ElectionRecord {
                round: r,
                node: id,
                energy,
                vr,
                waiting_s: w,
                radius_m: radius,
                cell,
                advertised: false,
                head: false,
            });
            let n = &mut self.nodes[id.index()];
            let armed_gen = n.election.armed_gen;
            n.election = ElectionState {
                round: r,
                status: Status::Waiting,
                energy,
                radius,
                cell,
                best: None,
                joined: None,
                joins: Vec::new(),
                armed_gen,
                log_idx: self.election_log.len() - 1,
            };
            self.schedule(now + w, Some(id), Ev::ElectionTimer { node: id, round: r });
        }
        let vr_top = sc.pin_vr.map_or(sc.vr_hi, |p| p.max(sc.vr_hi));
        self.schedule(now + sc.t2_s * vr_top + 0.1, None, Ev::ElectionClose(r));
        let next = now + sc.t1_s;
        if next < sc.sim_time_s {
            self.schedule(next, None, Ev::RoundStart(r + 1));
        }
        Ok(())
    }

    pub(crate) fn on_election_timer(&mut self, id: NodeId, round: u32) {
        let n = &mut self.nodes[id.index()];
        let alive = n.alive();
        let st = &mut n.election;
        if st.round != round || st.status != Status::Waiting || !alive {
            return;
        }
        if st.best.is_some_and(|b| outranks(b, (st.energy, id))) {
            st.status = Status::SteppedDown;
            self.log(Some(id), TraceKind::StepDown { round });
            return;
        }
        st.status = Status::Head;
        let adv = Adv {
            round,
            energy: st.energy,
            radius: st.radius,
            cell: st.cell,
        };
        let idx = st.log_idx;
        self.election_log[idx].advertised = true;
        self.log(Some(id), TraceKind::Advertise { round });
        self.send_control(id, Dest::Broadcast, FrameKind::AdvCh, ADV_CH_BYTES, Pdu::AdvCh(adv));
    }

    pub(crate) fn on_adv(&mut self, id: NodeId, from: NodeId, from_pos: P, a: Adv) {
        let n = &mut self.nodes[id.index()];
        if n.is_sink {
            return;
        }
        let pos = n.pos;
        let st = &mut n.election;
        if st.round != a.round || st.cell.is_none() || st.cell != a.cell {
            return;
        }
        let rank = (a.energy, from);
        if st.best.is_none_or(|b| outranks(rank, b)) {
            st.best = Some(rank);
        }
        match st.status {
            Status::Waiting if pos.distance(&from_pos) <= a.radius => st.status = Status::Suppressed,
            Status::Head if outranks(rank, (st.energy, id)) => {
                st.status = Status::SteppedDown;
                self.log(Some(id), TraceKind::StepDown { round: a.round });
            }
            _ => {}
        }
    }

    pub(crate) fn on_election_close(&mut self, r: u32) -> Result<()> {
        let now = self.now();
        let ids: Vec<NodeId> = self.sensor_ids().collect();
        for id in ids {
            let n = &mut self.nodes[id.index()];
            if !n.alive() || n.election.round != r {
                continue;
            }
            if n.election.status == Status::Head {
                let jitter = self.rng_election.uniform(0.0, SCHEDULE_JITTER_S)?;
                self.schedule(
                    now + SCHEDULE_DELAY_S + jitter,
                    Some(id),
                    Ev::SendSchedule { node: id, round: r },
                );
                continue;
            }
            if let Some((_, ch)) = n.election.best {
                n.election.joined = Some(ch);
                let jitter = self.rng_election.uniform(0.0, JOIN_JITTER_S)?;
                self.schedule(now + jitter, Some(id), Ev::JoinSend { node: id, round: r });
            }
        }
        self.schedule(
            now + SCHEDULE_DELAY_S + SCHEDULE_JITTER_S + CHECK_DELAY_S,
            None,
            Ev::ScheduleCheck(r),
        );
        Ok(())
    }

    pub(crate) fn on_join_send(&mut self, id: NodeId, round: u32) {
        let n = &self.nodes[id.index()];
        if !n.alive() || n.election.round != round {
            return;
        }
        let Some(ch) = n.election.joined else {
            return;
        };
        self.log(Some(id), TraceKind::Joined { round, ch });
        self.send_control(id, Dest::Unicast(ch), FrameKind::Join, JOIN_BYTES, Pdu::Join { round });
    }

    pub(crate) fn on_join(&mut self, id: NodeId, from: NodeId, round: u32) {
        let st = &mut self.nodes[id.index()].election;
        if st.round == round && st.status == Status::Head && !st.joins.contains(&from) {
            st.joins.push(from);
        }
    }

    pub(crate) fn on_send_schedule(&mut self, id: NodeId, round: u32) {
        let now = self.now();
        let slot_len = self.sc.slot_ms * 1e-3;
        let n = &mut self.nodes[id.index()];
        if !n.alive() || n.election.round != round || n.election.status != Status::Head {
            return;
        }
        let members = n.election.joins.clone();
        let sched = Sched {
            round,
            members: members.clone(),
            frame_start: now + FRAME_LEAD_S,
            slot_len,
            frame_len: frame_length(members.len(), slot_len),
        };
        if matches!(n.assignment, Assignment::Member { .. }) {
            n.slot_gen += 1;
        }
        n.assignment = Assignment::Head {
            round,
            members: members.clone(),
        };
        let idx = n.election.log_idx;
        self.election_log[idx].head = true;
        let size = (12 + 2 * members.len() as u32).min(MAX_CONTROL_BYTES);
        self.log(Some(id), TraceKind::ScheduleSent { round, members });
        self.send_control(id, Dest::Broadcast, FrameKind::Schedule, size, Pdu::Schedule(sched));
        // Packets queued for a former head's slot now go out as this head's own.
        let waiting: Vec<_> = self.nodes[id.index()].slot_queue.drain(..).collect();
        for pkt in waiting {
            self.route_onward(id, pkt, false);
        }
    }

    pub(crate) fn on_schedule(&mut self, id: NodeId, from: NodeId, s: Sched) {
        let n = &mut self.nodes[id.index()];
        if n.is_sink {
            return;
        }
        n.heads_heard.insert(from, s.round);
        if n.election.round != s.round || n.election.joined != Some(from) {
            return;
        }
        let Some(i) = s.members.iter().position(|&m| m == id) else {
            return;
        };
        n.assignment = Assignment::Member {
            round: s.round,
            ch: from,
            offset: i as f64 * s.slot_len,
            slot_len: s.slot_len,
            frame_start: s.frame_start,
            frame_len: s.frame_len,
        };
        n.slot_gen += 1;
        if !n.slot_queue.is_empty() {
            self.arm_slot(id);
        }
    }

    /// Demotes every sensor without a role from round `r`.
    pub(crate) fn on_schedule_check(&mut self, r: u32) {
        let ids: Vec<NodeId> = self.sensor_ids().collect();
        for id in ids {
            let n = &mut self.nodes[id.index()];
            if !n.alive() {
                continue;
            }
            let current = match n.assignment {
                Assignment::Head { round, .. } | Assignment::Member { round, .. } => round == r,
                Assignment::None => false,
            };
            if current {
                continue;
            }
            self.touch(id);
            let n = &mut self.nodes[id.index()];
            n.assignment = Assignment::None;
            n.slot_gen += 1;
            self.counters.unclustered += 1;
            self.log(Some(id), TraceKind::Unclustered { round: r });
            let waiting: Vec<_> = self.nodes[id.index()].slot_queue.drain(..).collect();
            for pkt in waiting {
                self.route_onward(id, pkt, false);
            }
        }
    }

    /// Schedules the member's next slot unless one is already pending.
    pub(crate) fn arm_slot(&mut self, id: NodeId) {
        let now = self.now();
        let n = &mut self.nodes[id.index()];
        let Assignment::Member {
            offset,
            frame_start,
            frame_len,
            ..
        } = n.assignment
        else {
            return;
        };
        if n.election.armed_gen == Some(n.slot_gen) {
            return;
        }
        let first = frame_start + offset;
        let k = if now > first {
            ((now - first) / frame_len).ceil()
        } else {
            0.0
        };
        let at = (first + k * frame_len).max(now);
        let gen = n.slot_gen;
        n.election.armed_gen = Some(gen);
        self.schedule(at, Some(id), Ev::SlotStart { node: id, gen });
    }

    pub(crate) fn on_slot_start(&mut self, id: NodeId, gen: u64) {
        let n = &mut self.nodes[id.index()];
        if n.election.armed_gen == Some(gen) {
            n.election.armed_gen = None;
        }
        if n.slot_gen != gen || !n.alive() {
            return;
        }
        self.release_slot(id);
    }

    /// Clustering state as the data plane currently sees it.
    pub fn cluster_plan(&self) -> ClusterPlan {
        let mut plan = ClusterPlan::default();
        let mut heads: Vec<NodeId> = Vec::new();
        for n in self.nodes.iter().filter(|n| !n.is_sink && n.alive()) {
            match &n.assignment {
                Assignment::Head { members, .. } => {
                    heads.push(n.id);
                    if let Some(c) = n.election.cell {
                        plan.ch_of_cell.insert(c, n.id);
                    }
                    let slot_len = self.sc.slot_ms * 1e-3;
                    plan.schedule.insert(n.id, build_schedule(members, slot_len));
                }
                Assignment::Member { ch, .. } => {
                    plan.members.insert(n.id, *ch);
                }
                Assignment::None => plan.unclustered.push(n.id),
            }
        }
        for h in heads {
            let hop = if self.nodes[h.index()].pos.distance(&self.sink_pos) <= self.sc.range_m {
                RelayHop::Sink
            } else {
                match self.relay_candidate(h, &[]) {
                    Some(next) => RelayHop::Head(next),
                    None => RelayHop::Unavailable,
                }
            };
            plan.relay_next.insert(h, hop);
        }
        plan
    }

    /// Current head of each sensor's cluster, heads mapping to themselves.
    pub fn cluster_heads(&self) -> BTreeMap<NodeId, NodeId> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.assignment {
                Assignment::Head { .. } => Some((n.id, n.id)),
                Assignment::Member { ch, .. } => Some((n.id, *ch)),
                Assignment::None => None,
            })
            .collect()
    }
}
