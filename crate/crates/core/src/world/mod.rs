//! Packet-level network model: sensors, sink, channel, MAC, clustering and
//! routing wired together on one [`Engine`].
//!
//! Everything runs in `f64`. A run is a pure function of the scenario (seed
//! included) plus any test hooks applied before the first `run_until`.

mod cluster;
mod net;
mod phy;
mod trace;

use std::collections::{BTreeMap, VecDeque};

use crate::clustering::{grid_partition, CellId, Grid};
use crate::energy::{Direction, EnergyLedger, EnergyParams, PowerState};
use crate::error::{Error, Result};
use crate::mac::{CsmaState, Dest, Frame, FrameKind, MacConfig, TxQueue};
use crate::metrics::{
    energy_report, generate_cbr, CbrConfig, DropCounts, Fate, MetricsRow, MetricsTable, PacketRecord,
};
use crate::mobility::{random_position, MepHistory, MepSample, Position, WaypointParams, WaypointState};
use crate::radio::RadioParams;
use crate::routing::{NeighborEntry, NeighborTable, RouteEntry, RouteTable, RreqCache};
use crate::scenario::{BeaconMode, RoutingMode, Scenario};
use crate::sim::{Engine, NodeId, RngStream, StreamId};

pub use cluster::ElectionRecord;
pub use trace::{write_trace, TraceKind, TraceRecord};

type P = Position<f64>;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DataPkt {
    pub id: u64,
    pub path: Vec<NodeId>,
    pub via_aodv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Rreq {
    pub origin: NodeId,
    pub rreq_id: u32,
    pub dest: NodeId,
    pub hop_count: u32,
    pub bottleneck: f64,
    pub origin_seq: u32,
    pub dest_seq_known: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Rrep {
    pub origin: NodeId,
    pub dest: NodeId,
    pub hop_count: u32,
    pub bottleneck: f64,
    pub dest_seq: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Adv {
    pub round: u32,
    pub energy: f64,
    pub radius: f64,
    pub cell: Option<CellId>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sched {
    pub round: u32,
    pub members: Vec<NodeId>,
    pub frame_start: f64,
    pub slot_len: f64,
    pub frame_len: f64,
}

/// Upper-layer content of a frame.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Pdu {
    Beacon,
    Data(DataPkt),
    Ack {
        seq: u32,
    },
    Rreq(Rreq),
    Rrep(Rrep),
    AdvCh(Adv),
    Join {
        round: u32,
    },
    Schedule(Sched),
    /// Test frame with no upper-layer meaning.
    Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Ev {
    MobilityTick,
    MepCheck,
    InitialBeacon(NodeId),
    PeriodicBeacon(NodeId),
    Generate(NodeId),
    Sample,
    Inject { src: NodeId, dst: Dest, kind: FrameKind },
    Discover { origin: NodeId, dest: NodeId },
    MacAttempt { node: NodeId, gen: u64 },
    TxEnd { airing: u64 },
    AckTimeout { node: NodeId, gen: u64 },
    AckSend { node: NodeId, to: NodeId, seq: u32 },
    RoundStart(u32),
    ElectionTimer { node: NodeId, round: u32 },
    ElectionClose(u32),
    JoinSend { node: NodeId, round: u32 },
    SendSchedule { node: NodeId, round: u32 },
    ScheduleCheck(u32),
    SlotStart { node: NodeId, gen: u64 },
    RreqForward { node: NodeId, rreq: Rreq },
    RreqTimeout { node: NodeId, dest: NodeId, rreq_id: u32 },
    RrepWindow { node: NodeId, dest: NodeId, rreq_id: u32 },
}

impl Ev {
    fn label(&self) -> &'static str {
        match self {
            Ev::MobilityTick => "mobility_tick",
            Ev::MepCheck => "mep_check",
            Ev::InitialBeacon(_) => "initial_beacon",
            Ev::PeriodicBeacon(_) => "periodic_beacon",
            Ev::Generate(_) => "generate",
            Ev::Sample => "sample",
            Ev::Inject { .. } => "inject",
            Ev::Discover { .. } => "discover",
            Ev::MacAttempt { .. } => "mac_attempt",
            Ev::TxEnd { .. } => "tx_end",
            Ev::AckTimeout { .. } => "ack_timeout",
            Ev::AckSend { .. } => "ack_send",
            Ev::RoundStart(_) => "round_start",
            Ev::ElectionTimer { .. } => "election_timer",
            Ev::ElectionClose(_) => "election_close",
            Ev::JoinSend { .. } => "join_send",
            Ev::SendSchedule { .. } => "send_schedule",
            Ev::ScheduleCheck(_) => "schedule_check",
            Ev::SlotStart { .. } => "slot_start",
            Ev::RreqForward { .. } => "rreq_forward",
            Ev::RreqTimeout { .. } => "rreq_timeout",
            Ev::RrepWindow { .. } => "rrep_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MacPhase {
    Idle,
    Backoff,
    Airing,
    WaitAck,
}

/// Cluster role currently in force for the data plane.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Assignment {
    None,
    Head {
        round: u32,
        members: Vec<NodeId>,
    },
    Member {
        round: u32,
        ch: NodeId,
        offset: f64,
        slot_len: f64,
        frame_start: f64,
        frame_len: f64,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Discovery {
    pub rreq_id: u32,
    pub attempt: u32,
    pub buffer: Vec<DataPkt>,
    pub candidates: Vec<RouteEntry<f64>>,
    pub window_open: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub id: NodeId,
    pub is_sink: bool,
    pub pos: P,
    pub waypoint: WaypointState<f64>,
    pub mobility_rng: RngStream,
    pub mep: MepHistory<f64>,

    pub ledger: EnergyLedger<f64>,
    pub last_accrual: f64,
    pub has_work: bool,
    pub last_work_end: f64,

    pub signals: u32,
    pub rx: Vec<(u64, bool)>,
    pub transmitting: Option<u64>,
    pub rx_enabled: bool,

    pub queue: TxQueue<Pdu>,
    pub csma: CsmaState,
    pub phase: MacPhase,
    pub mac_gen: u64,
    pub next_mac_seq: u32,
    pub last_rx_seq: BTreeMap<NodeId, u32>,
    pub pending_acks: u32,

    pub neighbors: NeighborTable<f64>,
    pub routes: RouteTable<f64>,
    pub rreq_cache: RreqCache,
    pub seq: u32,
    pub next_rreq_id: u32,
    pub known_dest_seq: BTreeMap<NodeId, u32>,
    pub discovery: BTreeMap<NodeId, Discovery>,
    pub pending_rreq_fwd: u32,

    pub election: cluster::ElectionState,
    pub assignment: Assignment,
    pub heads_heard: BTreeMap<NodeId, u32>,
    pub slot_queue: VecDeque<DataPkt>,
    pub slot_gen: u64,
}

impl Node {
    pub fn alive(&self) -> bool {
        !self.ledger.is_dead()
    }

    fn busy(&self) -> bool {
        !self.queue.is_empty()
            || self.phase != MacPhase::Idle
            || self.pending_acks > 0
            || !self.slot_queue.is_empty()
            || !self.discovery.is_empty()
            || self.pending_rreq_fwd > 0
    }

    /// Splits `[last_accrual, now]` into idle and sleep time: idle while
    /// work is pending and for `sleep_after` seconds after it ends.
    fn accrue(&mut self, now: f64, sleep_after: f64) -> bool {
        let from = self.last_accrual;
        if self.is_sink || now <= from {
            return false;
        }
        self.last_accrual = now;
        if !self.alive() {
            return false;
        }
        let (idle, sleep) = if self.has_work {
            (now - from, 0.0)
        } else {
            let until = (self.last_work_end + sleep_after).clamp(from, now);
            (until - from, now - until)
        };
        let idle_ok = idle.min(self.ledger.affordable_time(PowerState::Idle));
        self.ledger
            .accrue_state(PowerState::Idle, idle_ok)
            .expect("non-negative");
        if idle_ok < idle {
            return true;
        }
        let sleep_ok = sleep.min(self.ledger.affordable_time(PowerState::Sleep));
        self.ledger
            .accrue_state(PowerState::Sleep, sleep_ok)
            .expect("non-negative");
        sleep_ok < sleep
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub beacons_sent: u64,
    pub rreq_sent: u64,
    pub rreq_originated: u64,
    pub ch_rounds: u64,
    pub unclustered: u64,
    pub airings: u64,
    pub collisions: u64,
    /// DATA forwarded to a next hop missing from the forwarder's neighbor
    /// table; the routing layer keeps this at zero.
    pub forward_without_neighbor: u64,
    pub dead_nodes: u64,
    /// DATA hand-offs by route: straight to the sink, member to head,
    /// head to relay head, and along an on-demand route.
    pub direct_forwards: u64,
    pub slot_forwards: u64,
    pub relay_forwards: u64,
    pub aodv_forwards: u64,
}

/// Finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsTable,
    pub counters: Counters,
    pub trace: Vec<TraceRecord>,
}

pub struct World {
    sc: Scenario,
    radio: RadioParams<f64>,
    mac: MacConfig,
    energy: EnergyParams<f64>,
    waypoint: WaypointParams<f64>,
    grid: Grid<f64>,
    sink_pos: P,
    engine: Engine<Ev>,
    nodes: Vec<Node>,
    airings: BTreeMap<u64, phy::Airing>,
    next_airing: u64,
    rng_backoff: RngStream,
    rng_election: RngStream,
    rng_traffic: RngStream,
    rng_beacon: RngStream,
    rng_routing: RngStream,
    packets: Vec<PacketRecord>,
    counters: Counters,
    round: u32,
    election_log: Vec<ElectionRecord>,
    jams: Vec<(f64, f64)>,
    trace: Option<Vec<TraceRecord>>,
    dirty: Vec<NodeId>,
    samples: Vec<(f64, f64)>,
    delivered_bits: f64,
    started: bool,
    traffic_enabled: bool,
}

impl World {
    /// Deploys the sink at its fixed position and `sc.nodes` sensors
    /// uniformly in the region.
    pub fn new(sc: &Scenario) -> Result<Self> {
        sc.validate().map_err(|(k, m)| Error::Parameter(format!("{k}: {m}")))?;
        let radio = RadioParams::calibrated(
            sc.pt_mw * 1e-3,
            1.0,
            1.0,
            sc.ht_m,
            sc.hr_m,
            1.0,
            sc.wavelength_m,
            sc.range_m,
            sc.cs_range_m,
        )?;
        let mac = MacConfig {
            min_be: sc.min_be,
            max_be: sc.max_be,
            max_csma_backoffs: sc.max_csma_backoffs,
            max_retries: sc.max_retries,
            queue_len: sc.queue_len,
            phy_overhead_bits: sc.phy_overhead_bits,
        };
        mac.validate()?;
        let energy = EnergyParams {
            e0: sc.e0_j,
            e_txn: sc.e_txn_mj * 1e-3,
            e_rxn: sc.e_rxn_mj * 1e-3,
            p_idle: sc.p_idle_mw * 1e-3,
            p_sleep: sc.p_sleep_uw * 1e-6,
        };
        let waypoint = WaypointParams {
            v_min: sc.v_min,
            v_max: sc.v_max,
            region: sc.region_m,
        };
        let grid = grid_partition(sc.region_m, sc.range_m)?;
        let seed = sc.seed;
        let sink_pos = Position::new(sc.sink_x, sc.sink_y);
        let mut placement = RngStream::new(seed, StreamId::Placement);
        let mut nodes = Vec::with_capacity(sc.nodes as usize + 1);
        for i in 0..=sc.nodes {
            let id = NodeId(i);
            let is_sink = id.is_sink();
            let pos = if is_sink {
                sink_pos
            } else {
                random_position(sc.region_m, &mut placement)
            };
            let mut mobility_rng = RngStream::new(seed, StreamId::Mobility(i));
            let waypoint_state = if is_sink {
                WaypointState {
                    destination: pos,
                    speed: 0.0,
                    pause_until: 0.0,
                }
            } else {
                WaypointState::draw(&waypoint, &mut mobility_rng)
            };
            let mut ledger_params = energy;
            if is_sink {
                ledger_params.e0 = f64::INFINITY;
            }
            nodes.push(Node {
                id,
                is_sink,
                pos,
                waypoint: waypoint_state,
                mobility_rng,
                mep: MepHistory::new(sc.mep_window, MepSample::unit(pos, 0.0)),
                ledger: EnergyLedger::new(&ledger_params),
                last_accrual: 0.0,
                has_work: false,
                last_work_end: f64::NEG_INFINITY,
                signals: 0,
                rx: Vec::new(),
                transmitting: None,
                rx_enabled: true,
                queue: TxQueue::new(sc.queue_len),
                csma: CsmaState::new(&mac),
                phase: MacPhase::Idle,
                mac_gen: 0,
                next_mac_seq: 0,
                last_rx_seq: BTreeMap::new(),
                pending_acks: 0,
                neighbors: NeighborTable::new(sc.neighbor_ttl_s),
                routes: RouteTable::new(),
                rreq_cache: RreqCache::new(),
                seq: 0,
                next_rreq_id: 0,
                known_dest_seq: BTreeMap::new(),
                discovery: BTreeMap::new(),
                pending_rreq_fwd: 0,
                election: cluster::ElectionState::default(),
                assignment: Assignment::None,
                heads_heard: BTreeMap::new(),
                slot_queue: VecDeque::new(),
                slot_gen: 0,
            });
        }
        Ok(Self {
            sc: sc.clone(),
            radio,
            mac,
            energy,
            waypoint,
            grid,
            sink_pos,
            engine: Engine::new(),
            nodes,
            airings: BTreeMap::new(),
            next_airing: 0,
            rng_backoff: RngStream::new(seed, StreamId::Backoff),
            rng_election: RngStream::new(seed, StreamId::Election),
            rng_traffic: RngStream::new(seed, StreamId::Traffic),
            rng_beacon: RngStream::new(seed, StreamId::Beacon),
            rng_routing: RngStream::new(seed, StreamId::Routing),
            packets: Vec::new(),
            counters: Counters::default(),
            round: 0,
            election_log: Vec::new(),
            jams: Vec::new(),
            trace: None,
            dirty: Vec::new(),
            samples: Vec::new(),
            delivered_bits: 0.0,
            started: false,
            traffic_enabled: true,
        })
    }

    // ---- test and scripting hooks; effective only before the first run ----

    fn sensor_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        if self.started {
            return Err(Error::Precondition("layout hooks must be applied before running"));
        }
        match self.nodes.get_mut(id.index()) {
            Some(n) if !n.is_sink => Ok(n),
            _ => Err(Error::Parameter(format!("no sensor {id}"))),
        }
    }

    /// Places a sensor and makes it static.
    pub fn place_static(&mut self, id: NodeId, pos: P) -> Result<()> {
        let n = self.sensor_mut(id)?;
        n.pos = pos;
        n.waypoint = WaypointState {
            destination: pos,
            speed: 0.0,
            pause_until: 0.0,
        };
        let window = n.mep.window();
        n.mep = MepHistory::new(window, MepSample::unit(pos, 0.0));
        Ok(())
    }

    /// Places a sensor moving in a straight line toward `destination`.
    pub fn place_moving(&mut self, id: NodeId, pos: P, destination: P, speed: f64) -> Result<()> {
        self.place_static(id, pos)?;
        let n = self.sensor_mut(id)?;
        n.waypoint = WaypointState {
            destination,
            speed,
            pause_until: 0.0,
        };
        Ok(())
    }

    pub fn set_initial_energy(&mut self, id: NodeId, e0: f64) -> Result<()> {
        if !(e0 > 0.0) {
            return Err(Error::Parameter("initial energy must be positive".into()));
        }
        let mut p = self.energy;
        p.e0 = e0;
        self.sensor_mut(id)?.ledger = EnergyLedger::new(&p);
        Ok(())
    }

    /// A disabled receiver hears nothing, so unicasts to it are never
    /// acknowledged.
    pub fn set_receiver_enabled(&mut self, id: NodeId, enabled: bool) -> Result<()> {
        self.sensor_mut(id)?.rx_enabled = enabled;
        Ok(())
    }

    /// Channel appears busy to every node during `[start, end)`.
    pub fn jam(&mut self, start: f64, end: f64) {
        self.jams.push((start, end));
    }

    /// Suppresses CBR traffic for this world.
    pub fn disable_traffic(&mut self) {
        self.traffic_enabled = false;
    }

    /// Hands a frame of `kind` to `src`'s MAC at `at`.
    pub fn inject_frame(&mut self, at: f64, src: NodeId, dst: Dest, kind: FrameKind) -> Result<()> {
        self.engine
            .schedule(at, Some(src), Ev::Inject { src, dst, kind })
            .map(|_| ())
    }

    /// Starts a route discovery from `origin` toward `dest` at `at`.
    pub fn discover(&mut self, at: f64, origin: NodeId, dest: NodeId) -> Result<()> {
        self.engine
            .schedule(at, Some(origin), Ev::Discover { origin, dest })
            .map(|_| ())
    }

    pub fn enable_trace(&mut self) {
        if self.trace.is_none() {
            self.trace = Some(Vec::new());
        }
    }

    // ---- inspection ----

    pub fn now(&self) -> f64 {
        self.engine.now()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn radio(&self) -> &RadioParams<f64> {
        &self.radio
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| !n.is_sink).map(|n| n.id)
    }

    pub fn position(&self, id: NodeId) -> P {
        self.nodes[id.index()].pos
    }

    pub fn ledger(&self, id: NodeId) -> &EnergyLedger<f64> {
        &self.nodes[id.index()].ledger
    }

    pub fn neighbor(&self, of: NodeId, id: NodeId) -> Option<NeighborEntry<f64>> {
        self.nodes[of.index()].neighbors.live(id, self.now()).copied()
    }

    pub fn neighbor_count(&self, of: NodeId) -> usize {
        self.nodes[of.index()].neighbors.live_entries(self.now()).count()
    }

    pub fn route(&self, of: NodeId, dest: NodeId) -> Option<RouteEntry<f64>> {
        self.nodes[of.index()].routes.lookup(dest, self.now()).copied()
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn election_log(&self) -> &[ElectionRecord] {
        &self.election_log
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn queue_high_water(&self) -> usize {
        self.nodes.iter().map(|n| n.queue.high_water()).max().unwrap_or(0)
    }

    pub fn packets(&self) -> &[PacketRecord] {
        &self.packets
    }

    // ---- running ----

    fn schedule(&mut self, at: f64, target: Option<NodeId>, ev: Ev) {
        self.engine
            .schedule(at, target, ev)
            .expect("model events are never scheduled in the past");
    }

    fn schedule_in(&mut self, delay: f64, target: Option<NodeId>, ev: Ev) {
        let at = self.now() + delay;
        self.schedule(at, target, ev);
    }

    fn start(&mut self) -> Result<()> {
        self.started = true;
        let sc = self.sc.clone();
        if self.nodes.len() > 1 {
            self.schedule(sc.mobility_step_s, None, Ev::MobilityTick);
            self.schedule(sc.mep_check_interval_s, None, Ev::MepCheck);
        }
        let sensors: Vec<NodeId> = self.sensor_ids().collect();
        for &id in &sensors {
            let at = self.rng_beacon.uniform(0.0, 1.0)?;
            self.schedule(at, Some(id), Ev::InitialBeacon(id));
        }
        if sc.mode != RoutingMode::AodvOnly {
            self.schedule(sc.cluster_start_s, None, Ev::RoundStart(1));
        }
        let sources = sc.source_count();
        if self.traffic_enabled && sources > 0 {
            let cfg = CbrConfig {
                packet_bytes: crate::mac::DATA_BYTES,
                offered_load_bps: sc.offered_load_kbps * 1000.0 / sources as f64,
                sources: sensors.iter().copied().take(sources as usize).collect(),
                start_t: sc.traffic_start_s,
                stop_t: sc.traffic_stop(),
            };
            for (t, src) in generate_cbr(&cfg, &mut self.rng_traffic)? {
                self.schedule(t, Some(src), Ev::Generate(src));
            }
        }
        let mut k = 1u32;
        loop {
            let t = k as f64 * sc.sample_period_s;
            if t > sc.sim_time_s + 1e-9 {
                break;
            }
            self.schedule(t.min(sc.sim_time_s), None, Ev::Sample);
            k += 1;
        }
        Ok(())
    }

    /// Advances virtual time to `t` (capped at the scenario horizon).
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        if !self.started {
            self.start()?;
        }
        let t = t.min(self.sc.sim_time_s);
        while let Some(ev) = self.engine.pop_due(t) {
            if let Some(tr) = self.trace.as_mut() {
                tr.push(TraceRecord {
                    t: ev.fire_time,
                    node: ev.target,
                    kind: TraceKind::Dispatch(ev.payload.label()),
                });
            }
            self.dispatch(ev.target, ev.payload)?;
            self.settle();
        }
        self.engine.run_until(t, |_, _| {});
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput> {
        let end = self.sc.sim_time_s;
        self.run_until(end)?;
        Ok(self.finish())
    }

    fn dispatch(&mut self, target: Option<NodeId>, ev: Ev) -> Result<()> {
        if let Some(id) = target {
            self.touch(id);
        }
        match ev {
            Ev::MobilityTick => self.on_mobility_tick()?,
            Ev::MepCheck => self.on_mep_check()?,
            Ev::InitialBeacon(id) => {
                self.send_beacon(id);
                if self.sc.beaconing == BeaconMode::Periodic {
                    self.schedule_in(self.sc.beacon_period_s, Some(id), Ev::PeriodicBeacon(id));
                }
            }
            Ev::PeriodicBeacon(id) => {
                self.send_beacon(id);
                self.schedule_in(self.sc.beacon_period_s, Some(id), Ev::PeriodicBeacon(id));
            }
            Ev::Generate(src) => self.on_generate(src),
            Ev::Sample => {
                let t = self.now();
                if t > 0.0 {
                    self.samples.push((t, self.delivered_bits / t / 1000.0));
                }
            }
            Ev::Inject { src, dst, kind } => self.on_inject(src, dst, kind),
            Ev::Discover { origin, dest } => self.originate_rreq(origin, dest),
            Ev::MacAttempt { node, gen } => self.on_mac_attempt(node, gen)?,
            Ev::TxEnd { airing } => self.on_tx_end(airing),
            Ev::AckTimeout { node, gen } => self.on_ack_timeout(node, gen)?,
            Ev::AckSend { node, to, seq } => self.on_ack_send(node, to, seq),
            Ev::RoundStart(r) => self.on_round_start(r)?,
            Ev::ElectionTimer { node, round } => self.on_election_timer(node, round),
            Ev::ElectionClose(r) => self.on_election_close(r)?,
            Ev::JoinSend { node, round } => self.on_join_send(node, round),
            Ev::SendSchedule { node, round } => self.on_send_schedule(node, round),
            Ev::ScheduleCheck(r) => self.on_schedule_check(r),
            Ev::SlotStart { node, gen } => self.on_slot_start(node, gen),
            Ev::RreqForward { node, rreq } => self.on_rreq_forward(node, rreq),
            Ev::RreqTimeout { node, dest, rreq_id } => self.on_rreq_timeout(node, dest, rreq_id),
            Ev::RrepWindow { node, dest, rreq_id } => self.on_rrep_window(node, dest, rreq_id),
        }
        Ok(())
    }

    // ---- energy ----

    /// Brings `id`'s idle/sleep accrual up to now and marks it for
    /// re-evaluation once the current event is handled.
    fn touch(&mut self, id: NodeId) {
        let now = self.now();
        let sleep_after = self.sc.sleep_after_ms * 1e-3;
        let exhausted = self.nodes[id.index()].accrue(now, sleep_after);
        if exhausted {
            self.die(id);
        }
        if !self.dirty.contains(&id) {
            self.dirty.push(id);
        }
    }

    fn settle(&mut self) {
        let now = self.now();
        while let Some(id) = self.dirty.pop() {
            let n = &mut self.nodes[id.index()];
            let busy = n.alive() && n.busy();
            if n.has_work && !busy {
                n.last_work_end = now;
            }
            n.has_work = busy;
        }
    }

    /// Charges a frame; a node that cannot afford it dies instead.
    fn charge(&mut self, id: NodeId, dir: Direction, weight: f64, distance: Option<f64>) -> bool {
        self.touch(id);
        let n = &mut self.nodes[id.index()];
        if n.is_sink {
            return true;
        }
        if !n.alive() {
            n.ledger
                .charge_packet(dir, weight, distance)
                .expect("dead charge is a no-op");
            return false;
        }
        if n.ledger.packet_cost(dir, weight) > n.ledger.remaining() {
            self.die(id);
            return false;
        }
        n.ledger.charge_packet(dir, weight, distance).expect("valid charge")
    }

    fn die(&mut self, id: NodeId) {
        let n = &mut self.nodes[id.index()];
        if n.is_sink || !n.alive() {
            return;
        }
        n.ledger.mark_dead();
        self.counters.dead_nodes += 1;
        n.phase = MacPhase::Idle;
        n.mac_gen += 1;
        n.slot_gen += 1;
        n.pending_rreq_fwd = 0;
        n.pending_acks = 0;
        let mut held: Vec<u64> = Vec::new();
        for f in n.queue.drain_all() {
            if let Pdu::Data(p) = f.payload {
                held.push(p.id);
            }
        }
        held.extend(n.slot_queue.drain(..).map(|p| p.id));
        for (_, d) in std::mem::take(&mut n.discovery) {
            held.extend(d.buffer.into_iter().map(|p| p.id));
        }
        self.log(Some(id), TraceKind::Death);
        for pid in held {
            if self.holds(id, pid) {
                self.set_fate(id, pid, Fate::DropDead);
            }
        }
    }

    /// Whether `id` has custody of `pkt`: the packet is undecided and `id`
    /// is the last node that accepted it. A sender whose ACK was lost keeps
    /// a stale copy that must not decide the packet's fate.
    pub(crate) fn holds(&self, id: NodeId, pkt: u64) -> bool {
        let rec = &self.packets[pkt as usize];
        rec.fate == Fate::InFlight && rec.path.last() == Some(&id)
    }

    fn set_fate(&mut self, holder: NodeId, pkt: u64, fate: Fate) {
        let now = self.now();
        let rec = &mut self.packets[pkt as usize];
        debug_assert_eq!(rec.fate, Fate::InFlight, "fate decided twice");
        rec.fate = fate;
        if fate == Fate::Delivered {
            rec.delivered_at = Some(now);
            self.delivered_bits += rec.size as f64 * 8.0;
            let delay = now - rec.generated_at;
            self.log(Some(holder), TraceKind::Deliver { pkt, delay });
        } else {
            self.log(Some(holder), TraceKind::Drop { pkt, fate });
        }
    }

    fn log(&mut self, node: Option<NodeId>, kind: TraceKind) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceRecord {
                t: self.engine.now(),
                node,
                kind,
            });
        }
    }

    // ---- mobility and beaconing ----

    fn on_mobility_tick(&mut self) -> Result<()> {
        let dt = self.sc.mobility_step_s;
        for n in self.nodes.iter_mut().filter(|n| !n.is_sink) {
            crate::mobility::step_waypoint(&mut n.pos, &mut n.waypoint, &self.waypoint, dt, &mut n.mobility_rng)?;
        }
        self.schedule_in(dt, None, Ev::MobilityTick);
        Ok(())
    }

    fn on_mep_check(&mut self) -> Result<()> {
        let now = self.now();
        let threshold = self.sc.mep_threshold_m;
        let adaptive = self.sc.beaconing == BeaconMode::Adaptive;
        let ids: Vec<NodeId> = self.sensor_ids().collect();
        for id in ids {
            let n = &mut self.nodes[id.index()];
            let expired = n.neighbors.purge(now);
            let alive = n.alive();
            let trigger = adaptive && alive && n.mep.observe(MepSample::unit(n.pos, now), threshold)?;
            if !expired.is_empty() {
                self.touch(id);
                for hop in expired {
                    self.link_break(id, hop);
                }
            }
            if trigger {
                self.touch(id);
                self.send_beacon(id);
            }
        }
        self.schedule_in(self.sc.mep_check_interval_s, None, Ev::MepCheck);
        Ok(())
    }

    fn send_beacon(&mut self, id: NodeId) {
        if !self.nodes[id.index()].alive() {
            return;
        }
        self.send_control(
            id,
            Dest::Broadcast,
            FrameKind::Beacon,
            crate::mac::BEACON_BYTES,
            Pdu::Beacon,
        );
    }

    fn on_inject(&mut self, src: NodeId, dst: Dest, kind: FrameKind) {
        let size = if kind == FrameKind::Data {
            crate::mac::DATA_BYTES
        } else {
            crate::mac::MAX_CONTROL_BYTES
        };
        self.send_control(src, dst, kind, size, Pdu::Probe);
    }

    /// Builds a frame with the next MAC sequence number and queues it.
    fn make_frame(&mut self, src: NodeId, dst: Dest, kind: FrameKind, size: u32, payload: Pdu) -> Frame<Pdu> {
        let now = self.now();
        let n = &mut self.nodes[src.index()];
        let seq = n.next_mac_seq;
        n.next_mac_seq = n.next_mac_seq.wrapping_add(1);
        Frame {
            kind,
            src,
            dst,
            size,
            created_at: now,
            mac_seq: seq,
            payload,
        }
    }

    /// Queues a non-DATA frame; a full queue silently drops it.
    fn send_control(&mut self, src: NodeId, dst: Dest, kind: FrameKind, size: u32, payload: Pdu) -> bool {
        let frame = self.make_frame(src, dst, kind, size, payload);
        self.mac_enqueue(src, frame).is_ok()
    }

    // ---- results ----

    fn finish(mut self) -> RunOutput {
        let ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        for id in ids {
            self.touch(id);
        }
        self.settle();
        // Packets still held at the horizon.
        let mut buffered: Vec<(NodeId, u64)> = Vec::new();
        for n in &self.nodes {
            for d in n.discovery.values() {
                buffered.extend(d.buffer.iter().map(|p| (n.id, p.id)));
            }
        }
        for (holder, pid) in buffered {
            self.set_fate(holder, pid, Fate::DropBuffer);
        }
        let pending: Vec<u64> = self
            .packets
            .iter()
            .filter(|p| p.fate == Fate::InFlight)
            .map(|p| p.id)
            .collect();
        for pid in pending {
            let holder = self.packets[pid as usize].path.last().copied().unwrap_or(NodeId::SINK);
            self.set_fate(holder, pid, Fate::DropQueue);
        }
        let mut drops = DropCounts::default();
        let mut delivered = 0u64;
        for p in &self.packets {
            if p.fate == Fate::Delivered {
                delivered += 1;
            }
            drops.count(p.fate);
        }
        let sensors: Vec<&Node> = self.nodes.iter().filter(|n| !n.is_sink).collect();
        let report = energy_report(sensors.iter().map(|n| n.ledger.consumed()).collect());
        let horizon = self.sc.sim_time_s;
        let row = MetricsRow {
            scenario: self.sc.name.clone(),
            seed: self.sc.seed,
            nodes: self.sc.nodes,
            offered_load_bits: self.sc.offered_load_bits(),
            generated: self.packets.len() as u64,
            delivered,
            drops,
            mean_delay_s: crate::metrics::mean_delay(&self.packets),
            throughput_kbps: self.delivered_bits / horizon / 1000.0,
            total_energy_j: report.total_j,
            mean_energy_j: report.mean_j,
            beacons_sent: self.counters.beacons_sent,
            rreq_sent: self.counters.rreq_sent,
            ch_rounds: self.counters.ch_rounds,
        };
        let metrics = MetricsTable {
            row,
            delivered_bits: self.delivered_bits,
            per_node_energy_j: report.per_node_j,
            per_node_remaining_j: sensors.iter().map(|n| n.ledger.remaining()).collect(),
            per_node_e0_j: sensors.iter().map(|n| n.ledger.e0).collect(),
            per_node_distance_normalized_j: sensors
                .iter()
                .map(|n| n.ledger.remaining_distance_normalized())
                .collect(),
            throughput_samples: std::mem::take(&mut self.samples),
            unclustered: self.counters.unclustered,
            dead_nodes: sensors.iter().filter(|n| !n.alive()).count() as u64,
            max_queue_len: self.queue_high_water(),
            packets: std::mem::take(&mut self.packets),
        };
        RunOutput {
            metrics,
            counters: self.counters,
            trace: self.trace.take().unwrap_or_default(),
        }
    }

    pub fn finish_now(self) -> RunOutput {
        self.finish()
    }
}
