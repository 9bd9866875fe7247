//! CBR traffic generation, packet bookkeeping and the per-run metric table.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{NodeId, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct CbrConfig {
    pub packet_bytes: u32,
    /// Per-source rate, bits per second.
    pub offered_load_bps: f64,
    pub sources: Vec<NodeId>,
    pub start_t: f64,
    pub stop_t: f64,
}

impl CbrConfig {
    pub fn interval(&self) -> f64 {
        self.packet_bytes as f64 * 8.0 / self.offered_load_bps
    }

    pub fn validate(&self) -> Result<()> {
        if self.packet_bytes == 0 || !(self.offered_load_bps > 0.0) {
            return Err(Error::Parameter("CBR needs positive packet size and rate".into()));
        }
        if !(self.stop_t >= self.start_t) {
            return Err(Error::Parameter("CBR stop time precedes start time".into()));
        }
        Ok(())
    }
}

/// Emission instants for every source, ordered by time then source id.
/// Each source starts at a uniformly jittered offset within one interval
/// and emits while the instant is strictly before `stop_t`.
pub fn generate_cbr(config: &CbrConfig, rng: &mut RngStream) -> Result<Vec<(f64, NodeId)>> {
    config.validate()?;
    let interval = config.interval();
    let mut out = Vec::new();
    for &src in &config.sources {
        let offset = rng.uniform(0.0, interval)?;
        let mut k = 0u64;
        loop {
            let t = config.start_t + offset + k as f64 * interval;
            if t >= config.stop_t {
                break;
            }
            out.push((t, src));
            k += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fate {
    InFlight,
    Delivered,
    DropQueue,
    DropCsma,
    DropRetry,
    DropBuffer,
    DropDead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub id: u64,
    pub src: NodeId,
    pub generated_at: f64,
    pub delivered_at: Option<f64>,
    /// Nodes traversed, source first; the sink is not listed.
    pub path: Vec<NodeId>,
    pub size: u32,
    pub fate: Fate,
}

impl PacketRecord {
    pub fn hops(&self) -> usize {
        self.path.len()
    }
}

/// Mean end-to-end delay over delivered packets; `None` when nothing was
/// delivered.
pub fn mean_delay(records: &[PacketRecord]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for r in records {
        if let Some(d) = r.delivered_at {
            sum += d - r.generated_at;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Delivered payload bits per second over `horizon`, in kbps.
pub fn throughput_kbps(records: &[PacketRecord], horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition("throughput horizon must be positive"));
    }
    let bits: f64 = records
        .iter()
        .filter(|r| r.delivered_at.is_some())
        .map(|r| r.size as f64 * 8.0)
        .sum();
    Ok(bits / horizon / 1000.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total_j: f64,
    pub mean_j: f64,
    pub per_node_j: Vec<f64>,
}

/// Totals are accumulated left to right over `per_node_consumed`.
pub fn energy_report(per_node_consumed: Vec<f64>) -> EnergyReport {
    let total_j = per_node_consumed.iter().fold(0.0, |acc, e| acc + e);
    let mean_j = if per_node_consumed.is_empty() {
        0.0
    } else {
        total_j / per_node_consumed.len() as f64
    };
    EnergyReport {
        total_j,
        mean_j,
        per_node_j: per_node_consumed,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub queue: u64,
    pub csma: u64,
    pub retry: u64,
    pub buffer: u64,
    pub dead: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.queue + self.csma + self.retry + self.buffer + self.dead
    }

    pub fn count(&mut self, fate: Fate) {
        match fate {
            Fate::DropQueue => self.queue += 1,
            Fate::DropCsma => self.csma += 1,
            Fate::DropRetry => self.retry += 1,
            Fate::DropBuffer => self.buffer += 1,
            Fate::DropDead => self.dead += 1,
            Fate::InFlight | Fate::Delivered => {}
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub seed: u64,
    pub nodes: u32,
    pub offered_load_bits: f64,
    pub generated: u64,
    pub delivered: u64,
    pub drops: DropCounts,
    pub mean_delay_s: Option<f64>,
    pub throughput_kbps: f64,
    pub total_energy_j: f64,
    pub mean_energy_j: f64,
    pub beacons_sent: u64,
    pub rreq_sent: u64,
    pub ch_rounds: u64,
}

/// Per-run results: the CSV row plus detail that does not fit in it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub row: MetricsRow,
    pub delivered_bits: f64,
    pub per_node_energy_j: Vec<f64>,
    pub per_node_remaining_j: Vec<f64>,
    pub per_node_e0_j: Vec<f64>,
    pub per_node_distance_normalized_j: Vec<f64>,
    /// `(t, cumulative delivered kbps)` every sample period.
    pub throughput_samples: Vec<(f64, f64)>,
    pub unclustered: u64,
    pub dead_nodes: u64,
    pub max_queue_len: usize,
    pub packets: Vec<PacketRecord>,
}

pub const CSV_HEADER: &str = "scenario,seed,nodes,offered_load_bits,generated,delivered,drop_queue,drop_csma,drop_retry,drop_buffer,drop_dead,mean_delay_s,throughput_kbps,total_energy_j,mean_energy_j,beacons_sent,rreq_sent,ch_rounds";

/// Nine significant digits, `%g` style: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros removed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_fraction(&format!("{x:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_line(row: &MetricsRow) -> String {
    let mut s = String::new();
    let d = &row.drops;
    let _ = write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        csv_field(&row.scenario),
        row.seed,
        row.nodes,
        fmt_sig9(row.offered_load_bits),
        row.generated,
        row.delivered,
        d.queue,
        d.csma,
        d.retry,
        d.buffer,
        d.dead,
        row.mean_delay_s.map(fmt_sig9).unwrap_or_else(|| "NA".into()),
        fmt_sig9(row.throughput_kbps),
        fmt_sig9(row.total_energy_j),
        fmt_sig9(row.mean_energy_j),
        row.beacons_sent,
        row.rreq_sent,
        row.ch_rounds,
    );
    s
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", csv_line(r))?;
    }
    w.flush()
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(io_err)
}
