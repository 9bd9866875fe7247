//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Run with `cargo test -p wsnsim --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use wsnsim::clustering::{
    ch_neighbor_distance, grid_partition, overlying_radius, select_relay_ch, waiting_time, CellId,
};
use wsnsim::energy::{Direction, EnergyLedger, EnergyParams, PowerState};
use wsnsim::mac::{Dest, FrameKind, TxOutcome};
use wsnsim::metrics::{fmt_sig9, write_csv, CSV_HEADER};
use wsnsim::mobility::{deviation, mep_mean_x, mep_mean_y, MepSample, Position};
use wsnsim::radio::{crossover_distance, friis_power, received_power, two_ray_power};
use wsnsim::runner::{expand, run_all, run_scenario, spearman, summarize};
use wsnsim::world::{write_trace, TraceKind};
use wsnsim::{NodeId, RunOutput, Scenario, World};

type P = Position<f64>;

// Pinned tolerances.
const EQ_REL_TOL: f64 = 1e-9;
const EQ_TIME_LIMIT: Duration = Duration::from_secs(1);
const GRID_TIME_LIMIT: Duration = Duration::from_secs(5);
const CONTINUITY_TOL: f64 = 1e-6;
const RANGE_M: f64 = 35.0;
const RANGE_TOL_M: f64 = 0.01;
const SPEARMAN_BOUND: f64 = 0.8;
const RUN_WALL_LIMIT: Duration = Duration::from_secs(30);
/// Points past the throughput peak may sag this far below it.
const PLATEAU_TOL: f64 = 0.05;
const STABILITY_TOL: f64 = 0.25;
const TREND_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Outcome = Result<String, String>;

fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn close(name: &str, got: f64, want: f64) -> Result<(), String> {
    let e = rel_err(got, want);
    if e < EQ_REL_TOL {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, oracle {want}, rel err {e:e}"))
    }
}

fn sensor(i: u32) -> NodeId {
    NodeId(i)
}

fn scenario(pairs: &[(&str, &str)]) -> Scenario {
    let mut sc = Scenario::default();
    for (k, v) in pairs {
        sc.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
    }
    sc.validate().unwrap_or_else(|(k, m)| panic!("{k}: {m}"));
    sc
}

// ---- AC1: closed-form equations vs independently written oracles ----

fn ac1_equations() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xac1);
    const N: usize = 1000;

    for _ in 0..N {
        // Time-weighted mean position.
        let k = rng.gen_range(1..=20);
        let samples: Vec<MepSample<f64>> = (0..k)
            .map(|j| MepSample {
                x: rng.gen_range(0.0..250.0),
                y: rng.gen_range(0.0..250.0),
                t: rng.gen_range(0.1..2.0),
                at: j as f64,
            })
            .collect();
        let (mut sx, mut sy) = (0.0, 0.0);
        for s in &samples {
            sx += s.x * s.t;
            sy += s.y * s.t;
        }
        let (ox, oy) = (sx / k as f64, sy / k as f64);
        let gx = mep_mean_x(&samples).map_err(|e| e.to_string())?;
        let gy = mep_mean_y(&samples).map_err(|e| e.to_string())?;
        close("mean x", gx, ox)?;
        close("mean y", gy, oy)?;

        // Deviation between the current and the predicted position.
        let cur = Position::new(rng.gen_range(0.0..250.0), rng.gen_range(0.0..250.0));
        let dx = cur.x - ox;
        let dy = cur.y - oy;
        close("deviation", deviation(cur, (ox, oy)), (dx * dx + dy * dy).sqrt())?;
    }

    for _ in 0..N {
        // Consumed and residual energy.
        let params = EnergyParams {
            e0: rng.gen_range(1.0..200.0),
            e_txn: rng.gen_range(1e-4..1e-2),
            e_rxn: rng.gen_range(1e-4..1e-2),
            p_idle: rng.gen_range(1e-4..1e-2),
            p_sleep: rng.gen_range(1e-7..1e-5),
        };
        let mut ledger = EnergyLedger::new(&params);
        let (mut n_tx, mut n_rx, mut t_i, mut t_s) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..rng.gen_range(1..40) {
            match rng.gen_range(0..4) {
                0 => {
                    let w = rng.gen_range(0.01..1.0);
                    ledger
                        .charge_packet(Direction::Tx, w, Some(rng.gen_range(1.0..35.0)))
                        .unwrap();
                    n_tx += w;
                }
                1 => {
                    let w = rng.gen_range(0.01..1.0);
                    ledger.charge_packet(Direction::Rx, w, None).unwrap();
                    n_rx += w;
                }
                2 => {
                    let dt = rng.gen_range(0.0..5.0);
                    ledger.accrue_state(PowerState::Idle, dt).unwrap();
                    t_i += dt;
                }
                _ => {
                    let dt = rng.gen_range(0.0..5.0);
                    ledger.accrue_state(PowerState::Sleep, dt).unwrap();
                    t_s += dt;
                }
            }
        }
        let consumed = params.e_rxn * n_rx + params.e_txn * n_tx + params.p_idle * t_i + params.p_sleep * t_s;
        close("consumed", ledger.consumed(), consumed)?;
        close("residual", ledger.remaining(), params.e0 - consumed)?;
    }

    for _ in 0..N {
        // Election waiting time.
        let e_max: f64 = rng.gen_range(1.0..200.0);
        let e_i = rng.gen_range(0.0..e_max);
        let t2 = rng.gen_range(0.1..5.0);
        let vr = rng.gen_range(0.9..1.0);
        let want = (e_max - e_i) / e_max * t2 * vr;
        let got = waiting_time(e_i, e_max, t2, vr).map_err(|e| e.to_string())?;
        close("waiting time", got, want)?;

        // Overlying radius.
        let d_min = rng.gen_range(0.0..100.0);
        let d_max = d_min + rng.gen_range(1.0..200.0);
        let d_i = rng.gen_range(d_min..=d_max);
        let alpha = rng.gen_range(0.0..=1.0);
        let r_max = rng.gen_range(10.0..100.0);
        let frac = (d_max - d_i) / (d_max - d_min);
        let want = r_max - alpha * frac * r_max;
        let got = overlying_radius(d_i, d_max, d_min, alpha, r_max).map_err(|e| e.to_string())?;
        close("overlying radius", got, want)?;
    }

    for _ in 0..N {
        // Head-to-neighbor distance sum and relay argmin.
        let pts: Vec<P> = (0..rng.gen_range(1..12))
            .map(|_| Position::new(rng.gen_range(0.0..250.0), rng.gen_range(0.0..250.0)))
            .collect();
        let ch = Position::new(rng.gen_range(0.0..250.0), rng.gen_range(0.0..250.0));
        let want: f64 = pts
            .iter()
            .map(|p| ((p.x - ch.x).powi(2) + (p.y - ch.y).powi(2)).sqrt())
            .sum();
        close("neighbor distance", ch_neighbor_distance(ch, &pts).unwrap(), want)?;

        let cands: Vec<(NodeId, P)> = (1..=rng.gen_range(1..8u32))
            .map(|i| {
                (
                    sensor(i),
                    Position::new(rng.gen_range(0.0..250.0), rng.gen_range(0.0..250.0)),
                )
            })
            .collect();
        let got = select_relay_ch(&cands, &pts).unwrap();
        let want = brute_relay(&cands, &pts);
        if got != want {
            return Err(format!("relay choice: got {got}, brute force {want}"));
        }
    }

    let took = start.elapsed();
    if took >= EQ_TIME_LIMIT {
        return Err(format!("took {took:?}, limit {EQ_TIME_LIMIT:?}"));
    }
    Ok(format!("{N} inputs per equation, rel tol {EQ_REL_TOL:e}, {took:.2?}"))
}

/// Exhaustive argmin; the lowest id wins ties.
fn brute_relay(cands: &[(NodeId, P)], refs: &[P]) -> NodeId {
    let score = |c: &P| -> f64 { refs.iter().map(|r| (c.x - r.x).hypot(c.y - r.y)).sum() };
    let mut sorted = cands.to_vec();
    sorted.sort_by_key(|c| c.0);
    let best = sorted.iter().map(|c| score(&c.1)).fold(f64::INFINITY, f64::min);
    sorted.iter().find(|c| score(&c.1) == best).unwrap().0
}

// ---- AC2: energy conservation on every trend run (checked in AC8) ----

fn energy_conservation(outs: &[&RunOutput]) -> Outcome {
    let header: Vec<&str> = CSV_HEADER.split(',').collect();
    let col = header.iter().position(|h| *h == "total_energy_j").unwrap();
    for o in outs {
        let m = &o.metrics;
        for i in 0..m.per_node_energy_j.len() {
            if m.per_node_remaining_j[i] + m.per_node_energy_j[i] != m.per_node_e0_j[i] {
                return Err(format!(
                    "seed {} node {i}: {} + {} != {}",
                    m.row.seed, m.per_node_remaining_j[i], m.per_node_energy_j[i], m.per_node_e0_j[i]
                ));
            }
        }
        let sum = m.per_node_energy_j.iter().fold(0.0, |a, b| a + b);
        if sum.to_bits() != m.row.total_energy_j.to_bits() {
            return Err(format!(
                "seed {}: sum {sum} != total {}",
                m.row.seed, m.row.total_energy_j
            ));
        }
        let mut csv = Vec::new();
        write_csv(std::slice::from_ref(&m.row), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let field = text.lines().nth(1).unwrap().split(',').nth(col).unwrap().to_string();
        if field != fmt_sig9(sum) {
            return Err(format!("seed {}: CSV field {field} != {}", m.row.seed, fmt_sig9(sum)));
        }
    }
    Ok(format!("{} runs, per node and CSV total exact", outs.len()))
}

// ---- AC3: election picks the max-energy node of an isolated clique ----

/// Builds a clique of `k` static nodes inside one grid cell away from the
/// sink, runs the first election round and returns (head ids, energies, log).
fn clique_trial(rng: &mut ChaCha8Rng, k: u32, pin: Option<f64>) -> (Vec<NodeId>, Vec<f64>, Vec<f64>) {
    let pin_s = pin.map_or("none".to_string(), |v| v.to_string());
    let sc = scenario(&[
        ("nodes", &k.to_string()),
        ("seed", &rng.gen::<u32>().to_string()),
        ("mobility.v_min", "0"),
        ("mobility.v_max", "0"),
        ("cluster.pin_vr", &pin_s),
        ("sim_time_s", "5"),
    ]);
    let mut w = World::new(&sc).unwrap();
    w.disable_traffic();
    // A 10 m disk centered in cell (1, 1): everyone hears everyone, no one
    // reaches the sink.
    let side = w.grid().side;
    let c = Position::new(1.5 * side, 1.5 * side);
    let mut energies = Vec::new();
    let mut pool: Vec<f64> = (0..k).map(|i| 50.0 + 5.0 * i as f64).collect();
    for i in 1..=k {
        let r = rng.gen_range(0.0..5.0);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        w.place_static(sensor(i), Position::new(c.x + r * a.cos(), c.y + r * a.sin()))
            .unwrap();
        let e0 = pool.swap_remove(rng.gen_range(0..pool.len())) + rng.gen_range(0.0..1.0);
        w.set_initial_energy(sensor(i), e0).unwrap();
        energies.push(e0);
    }
    w.run_until(4.5).unwrap();
    let log: Vec<_> = w.election_log().iter().filter(|r| r.round == 1).collect();
    let heads = log.iter().filter(|r| r.head).map(|r| r.node).collect();
    let mut waits = vec![f64::NAN; k as usize];
    for r in &log {
        waits[r.node.index() - 1] = r.waiting_s;
    }
    (heads, energies, waits)
}

fn ac3_election() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac3);
    const TRIALS: usize = 500;
    let mut separated = 0;
    for pass in 0..2 {
        let pin = if pass == 0 { Some(1.0) } else { None };
        for t in 0..TRIALS {
            let k = rng.gen_range(3..=10);
            let (heads, energies, waits) = clique_trial(&mut rng, k, pin);
            let top = (0..energies.len())
                .max_by(|&a, &b| energies[a].total_cmp(&energies[b]))
                .unwrap();
            let want = sensor(top as u32 + 1);
            if pass == 1 {
                let w_top = waits[top];
                let others = (0..waits.len())
                    .filter(|&i| i != top)
                    .map(|i| waits[i])
                    .fold(f64::INFINITY, f64::min);
                // The max-energy node has the shortest timer whenever the
                // energy gap outweighs the V_r spread; record how often.
                if w_top < others {
                    separated += 1;
                }
            }
            if heads != vec![want] {
                let label = if pin.is_some() { "pinned" } else { "random" };
                return Err(format!(
                    "{label} V_r trial {t} (k={k}): heads {heads:?}, expected {want}"
                ));
            }
        }
    }
    Ok(format!("{TRIALS} pinned + {TRIALS} random-V_r trials, max-energy head in all; shortest timer in {separated}/{TRIALS} random trials"))
}

// ---- AC4: grid cells and relay choice vs brute force ----

fn ac4_grid() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xac4);
    const CONFIGS: usize = 1000;
    for cfg in 0..CONFIGS {
        let region = rng.gen_range(50.0..500.0);
        let r_tx = rng.gen_range(10.0..100.0);
        let grid = grid_partition(region, r_tx).unwrap();
        let side = r_tx / std::f64::consts::SQRT_2;
        let n = (region / side).ceil() as u32;
        let n_nodes = rng.gen_range(1..=25u32);
        let nodes: Vec<(NodeId, P)> = (1..=n_nodes)
            .map(|i| {
                // A third of the coordinates sit exactly on a cell edge or the
                // far region edge.
                let mut coord = || match rng.gen_range(0..6) {
                    0 => (rng.gen_range(0..=n) as f64 * side).min(region),
                    1 => region,
                    _ => rng.gen_range(0.0..region),
                };
                (sensor(i), Position::new(coord(), coord()))
            })
            .collect();
        for &(id, p) in &nodes {
            let got = grid.cell_of(p);
            let want = brute_cell(p, region, side, n);
            if got != want {
                return Err(format!(
                    "config {cfg}: {id} at ({}, {}) got {got:?}, brute force {want:?}",
                    p.x, p.y
                ));
            }
        }
        // Relay choice among the nodes, evaluated against a random
        // reference set that sometimes duplicates candidate positions.
        let refs: Vec<P> = (0..rng.gen_range(1..6))
            .map(|_| {
                if rng.gen_bool(0.2) {
                    nodes[rng.gen_range(0..nodes.len())].1
                } else {
                    Position::new(rng.gen_range(0.0..region), rng.gen_range(0.0..region))
                }
            })
            .collect();
        let mut cands = nodes.clone();
        if cands.len() > 1 && rng.gen_bool(0.2) {
            let p = cands[0].1;
            cands[1].1 = p;
        }
        let got = select_relay_ch(&cands, &refs).unwrap();
        let want = brute_relay(&cands, &refs);
        if got != want {
            return Err(format!("config {cfg}: relay {got}, brute force {want}"));
        }
    }
    let took = start.elapsed();
    if took >= GRID_TIME_LIMIT {
        return Err(format!("took {took:?}, limit {GRID_TIME_LIMIT:?}"));
    }
    Ok(format!("{CONFIGS} configurations, {took:.2?}"))
}

/// Scans every cell for the half-open box containing `p`; the last row and
/// column also own the far edge.
fn brute_cell(p: P, region: f64, side: f64, n: u32) -> Option<CellId> {
    if !(0.0..=region).contains(&p.x) || !(0.0..=region).contains(&p.y) {
        return None;
    }
    let owns = |i: u32, v: f64| {
        let lo = i as f64 * side;
        let hi = (i + 1) as f64 * side;
        (lo <= v && v < hi) || (i == n - 1 && v >= lo)
    };
    for row in 0..n {
        for col in 0..n {
            if owns(col, p.x) && owns(row, p.y) {
                return Some(CellId { col, row });
            }
        }
    }
    None
}

// ---- AC5: propagation continuity and calibrated range ----

fn ac5_radio() -> Outcome {
    let w = World::new(&Scenario::default()).map_err(|e| e.to_string())?;
    let p = *w.radio();
    let dc = crossover_distance(&p);
    let f = friis_power(&p, dc);
    let t = two_ray_power(&p, dc);
    let gap = (f - t).abs() / f;
    if gap >= CONTINUITY_TOL {
        return Err(format!("crossover {dc} m: Friis {f:e}, two-ray {t:e}, rel gap {gap:e}"));
    }
    // Bisection on the combined power law for the threshold distance.
    let (mut lo, mut hi) = (0.1, 10_000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if received_power(&p, mid).unwrap() >= p.rx_thresh {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let solved = 0.5 * (lo + hi);
    let reported = p.reception_range();
    for (name, r) in [("bisection", solved), ("reported", reported)] {
        if (r - RANGE_M).abs() > RANGE_TOL_M {
            return Err(format!("{name} range {r} m, want {RANGE_M} ± {RANGE_TOL_M}"));
        }
    }
    Ok(format!("rel gap at d_c={dc:.2} m is {gap:.1e}; range {solved:.4} m"))
}

// ---- AC6: MAC conformance ----

fn two_node_world() -> World {
    let sc = scenario(&[
        ("nodes", "2"),
        ("mobility.v_min", "0"),
        ("mobility.v_max", "0"),
        ("sim_time_s", "30"),
    ]);
    let mut w = World::new(&sc).unwrap();
    w.disable_traffic();
    w.enable_trace();
    w.place_static(sensor(1), Position::new(20.0, 20.0)).unwrap();
    w.place_static(sensor(2), Position::new(30.0, 20.0)).unwrap();
    w
}

/// Outcome of the first DATA frame `src` finishes at or after `from`, and
/// the CCA-busy and DATA-airing counts for `src` up to then.
fn data_outcome(w: &World, src: NodeId, from: f64) -> Option<(TxOutcome, usize, usize)> {
    let mut busy = 0;
    let mut airings = 0;
    for r in w.trace().iter().filter(|r| r.node == Some(src) && r.t >= from) {
        match &r.kind {
            TraceKind::CcaBusy => busy += 1,
            TraceKind::TxStart {
                kind: FrameKind::Data, ..
            } => airings += 1,
            TraceKind::TxOutcome {
                kind: FrameKind::Data,
                outcome,
                ..
            } => return Some((*outcome, busy, airings)),
            _ => {}
        }
    }
    None
}

fn ac6_mac() -> Outcome {
    const AT: f64 = 10.0;

    let mut w = two_node_world();
    w.jam(AT - 1.0, AT + 5.0);
    w.inject_frame(AT, sensor(1), Dest::Unicast(sensor(2)), FrameKind::Data)
        .unwrap();
    w.run_until(AT + 5.0).unwrap();
    match data_outcome(&w, sensor(1), AT) {
        Some((TxOutcome::ChannelAccessFailure, 5, 0)) => {}
        other => {
            return Err(format!(
                "busy channel: {other:?}, want (ChannelAccessFailure, 5 CCA, 0 airings)"
            ))
        }
    }

    let mut w = two_node_world();
    w.set_receiver_enabled(sensor(2), false).unwrap();
    w.inject_frame(AT, sensor(1), Dest::Unicast(sensor(2)), FrameKind::Data)
        .unwrap();
    w.run_until(AT + 5.0).unwrap();
    match data_outcome(&w, sensor(1), AT) {
        Some((TxOutcome::RetryExhausted, _, 4)) => {}
        other => return Err(format!("deaf receiver: {other:?}, want (RetryExhausted, _, 4 airings)")),
    }

    // Scripted fill: 150 frames offered at once to a jammed node.
    let mut w = two_node_world();
    w.jam(AT - 1.0, AT + 5.0);
    for _ in 0..150 {
        w.inject_frame(AT, sensor(1), Dest::Unicast(sensor(2)), FrameKind::Data)
            .unwrap();
    }
    w.run_until(AT + 0.001).unwrap();
    let filled = w.queue_high_water();
    if filled != 100 {
        return Err(format!(
            "scripted fill reached {filled} frames, want the 100-frame bound"
        ));
    }

    // Overload: the queue bound is asserted inside every enqueue, so a
    // completed run is itself the check; the high-water mark is reported.
    let sc = scenario(&[("traffic.offered_load_kbps", "2000"), ("sim_time_s", "30")]);
    let out = run_scenario(&sc, false).map_err(|e| e.to_string())?;
    let hw = out.metrics.max_queue_len;
    if hw > 100 {
        return Err(format!("queue high water {hw} > 100"));
    }
    Ok(format!("5 CCA then access failure; 4 airings then retry exhaustion; queue capped at {filled} when flooded, high water {hw} under 2000 kbps"))
}

// ---- AC7: adaptive vs periodic beaconing on a static network ----

fn ac7_beaconing() -> Outcome {
    let base = [
        ("nodes", "50"),
        ("mobility.v_min", "0"),
        ("mobility.v_max", "0"),
        ("seed", "7"),
    ];
    let mut w = World::new(&scenario(&base)).unwrap();
    w.enable_trace();
    let adaptive = w.run().map_err(|e| e.to_string())?;
    let beacon_times: Vec<f64> = adaptive
        .trace
        .iter()
        .filter(|r| {
            matches!(
                r.kind,
                TraceKind::TxStart {
                    kind: FrameKind::Beacon,
                    ..
                }
            )
        })
        .map(|r| r.t)
        .collect();
    let late = beacon_times.iter().filter(|&&t| t >= 1.0).count();
    let n_adaptive = adaptive.metrics.row.beacons_sent;
    if n_adaptive != 50 || late != 0 {
        return Err(format!("adaptive: {n_adaptive} beacons, {late} after the first second"));
    }
    let mut periodic_cfg = base.to_vec();
    periodic_cfg.push(("beaconing.mode", "periodic"));
    let periodic = run_scenario(&scenario(&periodic_cfg), false).map_err(|e| e.to_string())?;
    let n_periodic = periodic.metrics.row.beacons_sent;
    let (ea, ep) = (adaptive.metrics.row.total_energy_j, periodic.metrics.row.total_energy_j);
    if n_periodic < 10 * n_adaptive || ep <= ea {
        return Err(format!(
            "periodic: {n_periodic} beacons, {ep} J vs adaptive {n_adaptive}, {ea} J"
        ));
    }
    Ok(format!(
        "adaptive {n_adaptive} beacons / {ea:.4} J; periodic {n_periodic} / {ep:.4} J"
    ))
}

// ---- AC8: directional trends ----

struct Sweep {
    values: Vec<f64>,
    outs: Vec<Vec<RunOutput>>,
    slowest: Duration,
}

fn sweep(axis: &str, values: &[&str]) -> Result<Sweep, String> {
    let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let scs = expand(&Scenario::default(), Some((axis, &vals)), &TREND_SEEDS).map_err(|e| e.to_string())?;
    let timed: Vec<(Result<RunOutput, String>, Duration)> = {
        use rayon::prelude::*;
        scs.par_iter()
            .map(|s| {
                let t = Instant::now();
                let r = run_scenario(s, false).map_err(|e| e.to_string());
                (r, t.elapsed())
            })
            .collect()
    };
    let slowest = timed.iter().map(|t| t.1).max().unwrap_or_default();
    let mut outs = Vec::new();
    let mut it = timed.into_iter();
    for _ in values {
        let mut point = Vec::new();
        for _ in TREND_SEEDS {
            point.push(it.next().unwrap().0?);
        }
        outs.push(point);
    }
    Ok(Sweep {
        values: values.iter().map(|v| v.parse().unwrap()).collect(),
        outs,
        slowest,
    })
}

impl Sweep {
    fn summaries(&self) -> Vec<wsnsim::runner::PointSummary> {
        self.outs
            .iter()
            .zip(&self.values)
            .map(|(o, v)| summarize(&v.to_string(), &o.iter().map(|r| &r.metrics.row).collect::<Vec<_>>()))
            .collect()
    }

    fn all(&self) -> Vec<&RunOutput> {
        self.outs.iter().flatten().collect()
    }
}

fn fmt_series(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

struct Trends {
    load: Sweep,
    nodes: Sweep,
}

fn trend_runs() -> Result<Trends, String> {
    Ok(Trends {
        load: sweep("offered_load", &["10", "20", "40", "80"])?,
        nodes: sweep("nodes", &["20", "40", "60", "80", "100"])?,
    })
}

fn energy_vs_load(t: &Trends) -> Outcome {
    let e: Vec<f64> = t.load.summaries().iter().map(|s| s.mean_total_energy_j).collect();
    if e.windows(2).all(|w| w[1] > w[0]) {
        Ok(format!("mean total energy {}", fmt_series(&e)))
    } else {
        Err(format!("mean total energy not strictly increasing: {}", fmt_series(&e)))
    }
}

fn spearman_check(label: &str, xs: &[f64], ys: &[f64], negative: bool) -> Outcome {
    let rho = spearman(xs, ys).ok_or_else(|| format!("{label}: constant series {}", fmt_series(ys)))?;
    let ok = if negative {
        rho <= -SPEARMAN_BOUND
    } else {
        rho >= SPEARMAN_BOUND
    };
    let msg = format!("{label} {} (rho {rho:+.2})", fmt_series(ys));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn delays(s: &Sweep) -> Result<Vec<f64>, String> {
    s.summaries()
        .iter()
        .map(|p| p.mean_delay_s.ok_or_else(|| format!("no deliveries at {}", p.value)))
        .collect()
}

fn per_node_energy_vs_nodes(t: &Trends) -> Outcome {
    let e: Vec<f64> = t.nodes.summaries().iter().map(|s| s.mean_energy_per_node_j).collect();
    spearman_check("per-node energy", &t.nodes.values, &e, true)
}

fn delay_vs_load(t: &Trends) -> Outcome {
    spearman_check("mean delay", &t.load.values, &delays(&t.load)?, false)
}

fn delay_vs_nodes(t: &Trends) -> Outcome {
    spearman_check("mean delay", &t.nodes.values, &delays(&t.nodes)?, true)
}

fn throughput_vs_load(t: &Trends) -> Outcome {
    let th: Vec<f64> = t.load.summaries().iter().map(|s| s.mean_throughput_kbps).collect();
    let peak = (0..th.len()).max_by(|&a, &b| th[a].total_cmp(&th[b])).unwrap();
    let rising = th[..=peak].windows(2).all(|w| w[1] >= w[0]);
    let plateau = th[peak..].iter().all(|&x| x >= (1.0 - PLATEAU_TOL) * th[peak]);
    let msg = format!("throughput {} kbps, peak at point {}", fmt_series(&th), peak + 1);
    if rising && plateau {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn throughput_stability(t: &Trends) -> Outcome {
    // The default scenario is the 20 kbps point of the load sweep.
    let idx = t.load.values.iter().position(|&v| v == 20.0).unwrap();
    let mut worst: f64 = 0.0;
    for o in &t.load.outs[idx] {
        let s: Vec<f64> = o.metrics.throughput_samples.iter().map(|x| x.1).collect();
        if s.len() < 4 {
            return Err(format!("seed {}: only {} samples", o.metrics.row.seed, s.len()));
        }
        let overall = s.iter().sum::<f64>() / s.len() as f64;
        let half = &s[s.len() / 2..];
        let late = half.iter().sum::<f64>() / half.len() as f64;
        let dev = (late - overall).abs() / overall;
        worst = worst.max(dev);
        if dev > STABILITY_TOL {
            return Err(format!(
                "seed {}: last-half mean {late:.3} vs overall {overall:.3}",
                o.metrics.row.seed
            ));
        }
    }
    Ok(format!("worst last-half deviation {:.1}%", worst * 100.0))
}

// ---- AC9: determinism ----

fn digest(outs: &[RunOutput]) -> Vec<String> {
    outs.iter()
        .map(|o| {
            let mut h = Sha256::new();
            let mut buf = Vec::new();
            write_csv(std::slice::from_ref(&o.metrics.row), &mut buf).unwrap();
            write_trace(&o.trace, &mut buf).unwrap();
            h.update(&buf);
            format!("{:x}", h.finalize())
        })
        .collect()
}

fn ac9_determinism() -> Outcome {
    let base = scenario(&[("sim_time_s", "40")]);
    let vals = vec!["30".to_string(), "50".to_string()];
    let scs = expand(&base, Some(("nodes", &vals)), &[3, 4]).map_err(|e| e.to_string())?;
    let collect = |parallel| -> Result<Vec<RunOutput>, String> {
        run_all(&scs, parallel, true)
            .into_iter()
            .map(|r| r.map_err(|e| e.to_string()))
            .collect()
    };
    let a = digest(&collect(false)?);
    let b = digest(&collect(false)?);
    let c = digest(&collect(true)?);
    if a != b {
        return Err("sequential repeats differ".into());
    }
    if a != c {
        return Err("parallel sweep differs from sequential".into());
    }
    Ok(format!(
        "{} runs, CSV + event log hashes identical across 3 executions",
        a.len()
    ))
}

// ---- driver ----

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, r: Outcome| match &r {
        Ok(m) => println!("[PASS] {id} {name}: {m}"),
        Err(m) => {
            failed += 1;
            println!("[FAIL] {id} {name}: {m}")
        }
    };

    report("AC1", "equation oracles", guarded(ac1_equations));

    let trends = match guarded(trend_runs) {
        Ok(t) => {
            let mut all = t.load.all();
            all.extend(t.nodes.all());
            report("AC2", "energy conservation", guarded(|| energy_conservation(&all)));
            Some(t)
        }
        Err(e) => {
            report("AC2", "energy conservation", Err(e.clone()));
            report("AC8", "trend reproduction", Err(e));
            None
        }
    };

    report("AC3", "cluster-head election", guarded(ac3_election));
    report("AC4", "grid and relay brute force", guarded(ac4_grid));
    report("AC5", "radio continuity and range", guarded(ac5_radio));
    report("AC6", "MAC conformance", guarded(ac6_mac));
    report("AC7", "adaptive beaconing", guarded(ac7_beaconing));

    if let Some(t) = &trends {
        let slowest = t.load.slowest.max(t.nodes.slowest);
        let wall: Outcome = if slowest < RUN_WALL_LIMIT {
            Ok(format!("slowest run {slowest:.2?}"))
        } else {
            Err(format!("slowest run {slowest:.2?}, limit {RUN_WALL_LIMIT:?}"))
        };
        report("AC8", "run wall time", wall);
        report("AC8", "total energy vs load", guarded(|| energy_vs_load(t)));
        report(
            "AC8",
            "per-node energy vs nodes",
            guarded(|| per_node_energy_vs_nodes(t)),
        );
        report("AC8", "delay vs load", guarded(|| delay_vs_load(t)));
        report("AC8", "delay vs nodes", guarded(|| delay_vs_nodes(t)));
        report("AC8", "throughput vs load", guarded(|| throughput_vs_load(t)));
        report("AC8", "throughput stability", guarded(|| throughput_stability(t)));
    }

    report("AC9", "determinism", guarded(ac9_determinism));

    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} failing");
        ExitCode::FAILURE
    }
}
