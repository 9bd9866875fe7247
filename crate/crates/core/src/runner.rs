//! Single runs, replications and parameter sweeps.
//!
//! Sweep rows come back in (value, seed) order whether or not the runs
//! execute in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::scenario::Scenario;
use crate::world::{RunOutput, World};

pub fn run_scenario(sc: &Scenario, trace: bool) -> Result<RunOutput> {
    let mut w = World::new(sc)?;
    if trace {
        w.enable_trace();
    }
    w.run()
}

/// Canonical scenario key behind a sweep axis name.
pub fn axis_key(axis: &str) -> &str {
    match axis {
        "offered_load" | "load" => "traffic.offered_load_kbps",
        other => other,
    }
}

/// One scenario per (value, seed), values outermost.
pub fn expand(base: &Scenario, axis: Option<(&str, &[String])>, seeds: &[u64]) -> Result<Vec<Scenario>> {
    if seeds.is_empty() {
        return Err(Error::Parameter("no seeds given".into()));
    }
    let values: Vec<Option<&String>> = match axis {
        Some((_, [])) => return Err(Error::Parameter("sweep needs at least one value".into())),
        Some((_, vs)) => vs.iter().map(Some).collect(),
        None => vec![None],
    };
    let mut out = Vec::with_capacity(values.len() * seeds.len());
    for v in values {
        let mut sc = base.clone();
        if let (Some((key, _)), Some(v)) = (axis, v) {
            let key = axis_key(key);
            sc.set(key, v).map_err(|m| Error::Parameter(format!("{key}: {m}")))?;
            sc.validate().map_err(|(k, m)| Error::Parameter(format!("{k}: {m}")))?;
        }
        for &seed in seeds {
            let mut s = sc.clone();
            s.seed = seed;
            out.push(s);
        }
    }
    Ok(out)
}

/// Runs every scenario; output order matches input order.
pub fn run_all(scenarios: &[Scenario], parallel: bool, trace: bool) -> Vec<Result<RunOutput>> {
    if parallel {
        scenarios.par_iter().map(|s| run_scenario(s, trace)).collect()
    } else {
        scenarios.iter().map(|s| run_scenario(s, trace)).collect()
    }
}

/// Per-value means of the main measurands.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub value: String,
    pub runs: usize,
    pub mean_total_energy_j: f64,
    pub mean_energy_per_node_j: f64,
    /// Mean over runs that delivered anything.
    pub mean_delay_s: Option<f64>,
    pub mean_throughput_kbps: f64,
    pub delivered_ratio: f64,
}

pub fn summarize(value: &str, rows: &[&MetricsRow]) -> PointSummary {
    let n = rows.len().max(1) as f64;
    let delays: Vec<f64> = rows.iter().filter_map(|r| r.mean_delay_s).collect();
    let generated: u64 = rows.iter().map(|r| r.generated).sum();
    let delivered: u64 = rows.iter().map(|r| r.delivered).sum();
    PointSummary {
        value: value.to_string(),
        runs: rows.len(),
        mean_total_energy_j: rows.iter().map(|r| r.total_energy_j).sum::<f64>() / n,
        mean_energy_per_node_j: rows.iter().map(|r| r.mean_energy_j).sum::<f64>() / n,
        mean_delay_s: if delays.is_empty() {
            None
        } else {
            Some(delays.iter().sum::<f64>() / delays.len() as f64)
        },
        mean_throughput_kbps: rows.iter().map(|r| r.throughput_kbps).sum::<f64>() / n,
        delivered_ratio: if generated == 0 {
            0.0
        } else {
            delivered as f64 / generated as f64
        },
    }
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; None when either side is constant or the
/// lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
