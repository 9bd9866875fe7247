//! Scenario description and its line-oriented `key = value` file format.
//!
//! `#` starts a comment, blank lines are ignored, unknown keys are
//! rejected and missing keys keep their defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingMode {
    /// Members deliver to their head in slot, heads relay along the head
    /// chain, on-demand discovery covers the gaps.
    Hybrid,
    /// On-demand discovery only; no clustering.
    AodvOnly,
    /// Head chain only; packets without a chain are dropped.
    ClusterOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconMode {
    Adaptive,
    Periodic,
}

impl FromStr for RoutingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "aodv_only" => Ok(Self::AodvOnly),
            "cluster_only" => Ok(Self::ClusterOnly),
            _ => Err(format!("expected hybrid | aodv_only | cluster_only, got `{s}`")),
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hybrid => "hybrid",
            Self::AodvOnly => "aodv_only",
            Self::ClusterOnly => "cluster_only",
        })
    }
}

impl FromStr for BeaconMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "periodic" => Ok(Self::Periodic),
            _ => Err(format!("expected adaptive | periodic, got `{s}`")),
        }
    }
}

impl fmt::Display for BeaconMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adaptive => "adaptive",
            Self::Periodic => "periodic",
        })
    }
}

/// Full run configuration. Units are in the key names.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub replications: u32,
    pub nodes: u32,
    pub region_m: f64,
    pub sink_x: f64,
    pub sink_y: f64,
    pub sim_time_s: f64,
    pub mode: RoutingMode,

    pub v_min: f64,
    pub v_max: f64,
    pub mobility_step_s: f64,
    pub mep_threshold_m: f64,
    pub mep_check_interval_s: f64,
    pub mep_window: usize,
    pub beaconing: BeaconMode,
    pub beacon_period_s: f64,

    pub pt_mw: f64,
    pub ht_m: f64,
    pub hr_m: f64,
    pub range_m: f64,
    pub cs_range_m: f64,
    pub wavelength_m: f64,

    pub min_be: u8,
    pub max_be: u8,
    pub max_csma_backoffs: u8,
    pub max_retries: u8,
    pub queue_len: usize,
    pub phy_overhead_bits: u32,

    pub e0_j: f64,
    pub e_txn_mj: f64,
    pub e_rxn_mj: f64,
    pub p_idle_mw: f64,
    pub p_sleep_uw: f64,
    pub sleep_after_ms: f64,

    pub cluster_start_s: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    pub alpha: f64,
    pub r_max_m: f64,
    pub vr_lo: f64,
    pub vr_hi: f64,
    pub pin_vr: Option<f64>,
    pub slot_ms: f64,

    pub neighbor_ttl_s: f64,
    pub rreq_retries: u32,
    pub rreq_timeout_ms: f64,
    pub rrep_window_ms: f64,
    pub buffer_pkts: usize,
    pub active_timeout_s: f64,

    pub offered_load_kbps: f64,
    /// Number of reporting sensors (the lowest ids); `None` means all.
    pub sources: Option<u32>,
    pub traffic_start_s: f64,
    /// `None` runs traffic to the end of the simulation.
    pub traffic_stop_s: Option<f64>,
    pub sample_period_s: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            replications: 5,
            nodes: 50,
            region_m: 250.0,
            sink_x: 125.0,
            sink_y: 125.0,
            sim_time_s: 100.0,
            mode: RoutingMode::Hybrid,

            v_min: 0.0,
            v_max: 5.0,
            mobility_step_s: 0.1,
            mep_threshold_m: 5.0,
            mep_check_interval_s: 1.0,
            mep_window: 10,
            beaconing: BeaconMode::Adaptive,
            beacon_period_s: 1.0,

            pt_mw: 31.32,
            ht_m: 0.5,
            hr_m: 0.5,
            range_m: 35.0,
            cs_range_m: 70.0,
            wavelength_m: 0.125,

            min_be: 3,
            max_be: 5,
            max_csma_backoffs: 4,
            max_retries: 3,
            queue_len: 100,
            phy_overhead_bits: 48,

            e0_j: 100.0,
            e_txn_mj: 0.3,
            e_rxn_mj: 0.2,
            p_idle_mw: 1.0,
            p_sleep_uw: 1.0,
            sleep_after_ms: 500.0,

            cluster_start_s: 1.0,
            t1_s: 20.0,
            t2_s: 2.0,
            alpha: 0.5,
            r_max_m: 35.0,
            vr_lo: 0.9,
            vr_hi: 1.0,
            pin_vr: None,
            slot_ms: 20.0,

            neighbor_ttl_s: 60.0,
            rreq_retries: 2,
            rreq_timeout_ms: 2800.0,
            rrep_window_ms: 50.0,
            buffer_pkts: 64,
            active_timeout_s: 10.0,

            offered_load_kbps: 20.0,
            sources: None,
            traffic_start_s: 5.0,
            traffic_stop_s: None,
            sample_period_s: 5.0,
        }
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
}

fn parse_real(v: &str) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not a finite number"))
    }
}

fn parse_opt(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse_real(v).map(Some)
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

impl Scenario {
    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("name", self.name.clone()),
            ("seed", self.seed.to_string()),
            ("replications", self.replications.to_string()),
            ("nodes", self.nodes.to_string()),
            ("region_m", self.region_m.to_string()),
            ("sink.x", self.sink_x.to_string()),
            ("sink.y", self.sink_y.to_string()),
            ("sim_time_s", self.sim_time_s.to_string()),
            ("mode", self.mode.to_string()),
            ("mobility.v_min", self.v_min.to_string()),
            ("mobility.v_max", self.v_max.to_string()),
            ("mobility.step_s", self.mobility_step_s.to_string()),
            ("mep.threshold_m", self.mep_threshold_m.to_string()),
            ("mep.check_interval_s", self.mep_check_interval_s.to_string()),
            ("mep.window", self.mep_window.to_string()),
            ("beaconing.mode", self.beaconing.to_string()),
            ("beaconing.period_s", self.beacon_period_s.to_string()),
            ("radio.pt_mw", self.pt_mw.to_string()),
            ("radio.ht_m", self.ht_m.to_string()),
            ("radio.hr_m", self.hr_m.to_string()),
            ("radio.range_m", self.range_m.to_string()),
            ("radio.cs_range_m", self.cs_range_m.to_string()),
            ("radio.wavelength_m", self.wavelength_m.to_string()),
            ("mac.min_be", self.min_be.to_string()),
            ("mac.max_be", self.max_be.to_string()),
            ("mac.max_csma_backoffs", self.max_csma_backoffs.to_string()),
            ("mac.max_retries", self.max_retries.to_string()),
            ("mac.queue_len", self.queue_len.to_string()),
            ("mac.phy_overhead_bits", self.phy_overhead_bits.to_string()),
            ("energy.e0_j", self.e0_j.to_string()),
            ("energy.e_txn_mj", self.e_txn_mj.to_string()),
            ("energy.e_rxn_mj", self.e_rxn_mj.to_string()),
            ("energy.p_idle_mw", self.p_idle_mw.to_string()),
            ("energy.p_sleep_uw", self.p_sleep_uw.to_string()),
            ("energy.sleep_after_ms", self.sleep_after_ms.to_string()),
            ("cluster.start_s", self.cluster_start_s.to_string()),
            ("cluster.t1_s", self.t1_s.to_string()),
            ("cluster.t2_s", self.t2_s.to_string()),
            ("cluster.alpha", self.alpha.to_string()),
            ("cluster.r_max_m", self.r_max_m.to_string()),
            ("cluster.vr_lo", self.vr_lo.to_string()),
            ("cluster.vr_hi", self.vr_hi.to_string()),
            ("cluster.pin_vr", opt_str(self.pin_vr)),
            ("cluster.slot_ms", self.slot_ms.to_string()),
            ("route.neighbor_ttl_s", self.neighbor_ttl_s.to_string()),
            ("route.rreq_retries", self.rreq_retries.to_string()),
            ("route.rreq_timeout_ms", self.rreq_timeout_ms.to_string()),
            ("route.rrep_window_ms", self.rrep_window_ms.to_string()),
            ("route.buffer_pkts", self.buffer_pkts.to_string()),
            ("route.active_timeout_s", self.active_timeout_s.to_string()),
            ("traffic.offered_load_kbps", self.offered_load_kbps.to_string()),
            (
                "traffic.sources",
                self.sources.map_or("all".to_string(), |n| n.to_string()),
            ),
            ("traffic.start_s", self.traffic_start_s.to_string()),
            ("traffic.stop_s", opt_str(self.traffic_stop_s)),
            ("metrics.sample_s", self.sample_period_s.to_string()),
        ]
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "name" => self.name = v.to_string(),
            "seed" => self.seed = parse(v)?,
            "replications" => self.replications = parse(v)?,
            "nodes" => self.nodes = parse(v)?,
            "region_m" => self.region_m = parse_real(v)?,
            "sink.x" => self.sink_x = parse_real(v)?,
            "sink.y" => self.sink_y = parse_real(v)?,
            "sim_time_s" => self.sim_time_s = parse_real(v)?,
            "mode" => self.mode = v.parse()?,
            "mobility.v_min" => self.v_min = parse_real(v)?,
            "mobility.v_max" => self.v_max = parse_real(v)?,
            "mobility.step_s" => self.mobility_step_s = parse_real(v)?,
            "mep.threshold_m" => self.mep_threshold_m = parse_real(v)?,
            "mep.check_interval_s" => self.mep_check_interval_s = parse_real(v)?,
            "mep.window" => self.mep_window = parse(v)?,
            "beaconing.mode" => self.beaconing = v.parse()?,
            "beaconing.period_s" => self.beacon_period_s = parse_real(v)?,
            "radio.pt_mw" => self.pt_mw = parse_real(v)?,
            "radio.ht_m" => self.ht_m = parse_real(v)?,
            "radio.hr_m" => self.hr_m = parse_real(v)?,
            "radio.range_m" => self.range_m = parse_real(v)?,
            "radio.cs_range_m" => self.cs_range_m = parse_real(v)?,
            "radio.wavelength_m" => self.wavelength_m = parse_real(v)?,
            "mac.min_be" => self.min_be = parse(v)?,
            "mac.max_be" => self.max_be = parse(v)?,
            "mac.max_csma_backoffs" => self.max_csma_backoffs = parse(v)?,
            "mac.max_retries" => self.max_retries = parse(v)?,
            "mac.queue_len" => self.queue_len = parse(v)?,
            "mac.phy_overhead_bits" => self.phy_overhead_bits = parse(v)?,
            "energy.e0_j" => self.e0_j = parse_real(v)?,
            "energy.e_txn_mj" => self.e_txn_mj = parse_real(v)?,
            "energy.e_rxn_mj" => self.e_rxn_mj = parse_real(v)?,
            "energy.p_idle_mw" => self.p_idle_mw = parse_real(v)?,
            "energy.p_sleep_uw" => self.p_sleep_uw = parse_real(v)?,
            "energy.sleep_after_ms" => self.sleep_after_ms = parse_real(v)?,
            "cluster.start_s" => self.cluster_start_s = parse_real(v)?,
            "cluster.t1_s" => self.t1_s = parse_real(v)?,
            "cluster.t2_s" => self.t2_s = parse_real(v)?,
            "cluster.alpha" => self.alpha = parse_real(v)?,
            "cluster.r_max_m" => self.r_max_m = parse_real(v)?,
            "cluster.vr_lo" => self.vr_lo = parse_real(v)?,
            "cluster.vr_hi" => self.vr_hi = parse_real(v)?,
            "cluster.pin_vr" => self.pin_vr = parse_opt(v)?,
            "cluster.slot_ms" => self.slot_ms = parse_real(v)?,
            "route.neighbor_ttl_s" => self.neighbor_ttl_s = parse_real(v)?,
            "route.rreq_retries" => self.rreq_retries = parse(v)?,
            "route.rreq_timeout_ms" => self.rreq_timeout_ms = parse_real(v)?,
            "route.rrep_window_ms" => self.rrep_window_ms = parse_real(v)?,
            "route.buffer_pkts" => self.buffer_pkts = parse(v)?,
            "route.active_timeout_s" => self.active_timeout_s = parse_real(v)?,
            "traffic.offered_load_kbps" => self.offered_load_kbps = parse_real(v)?,
            "traffic.sources" => {
                self.sources = match v.trim() {
                    "all" => None,
                    n => Some(parse(n)?),
                }
            }
            "traffic.start_s" => self.traffic_start_s = parse_real(v)?,
            "traffic.stop_s" => self.traffic_stop_s = parse_opt(v)?,
            "metrics.sample_s" => self.sample_period_s = parse_real(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks cross-field invariants; the error names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        fn check(ok: bool, key: &'static str, msg: &str) -> Result<(), (&'static str, String)> {
            if ok {
                Ok(())
            } else {
                Err((key, msg.to_string()))
            }
        }
        check(self.nodes >= 1, "nodes", "must be at least 1")?;
        check(self.region_m > 0.0, "region_m", "must be positive")?;
        check(
            (0.0..=self.region_m).contains(&self.sink_x),
            "sink.x",
            "outside the region",
        )?;
        check(
            (0.0..=self.region_m).contains(&self.sink_y),
            "sink.y",
            "outside the region",
        )?;
        check(self.sim_time_s > 0.0, "sim_time_s", "must be positive")?;
        check(self.v_min >= 0.0, "mobility.v_min", "must be >= 0")?;
        check(self.v_max >= self.v_min, "mobility.v_max", "must be >= mobility.v_min")?;
        check(self.mobility_step_s > 0.0, "mobility.step_s", "must be positive")?;
        check(self.mep_threshold_m >= 0.0, "mep.threshold_m", "must be >= 0")?;
        check(
            self.mep_check_interval_s > 0.0,
            "mep.check_interval_s",
            "must be positive",
        )?;
        check(self.mep_window >= 1, "mep.window", "must be at least 1")?;
        check(self.beacon_period_s > 0.0, "beaconing.period_s", "must be positive")?;
        check(self.pt_mw > 0.0, "radio.pt_mw", "must be positive")?;
        check(self.ht_m > 0.0, "radio.ht_m", "must be positive")?;
        check(self.hr_m > 0.0, "radio.hr_m", "must be positive")?;
        check(self.range_m > 0.0, "radio.range_m", "must be positive")?;
        check(
            self.cs_range_m >= self.range_m,
            "radio.cs_range_m",
            "must be >= radio.range_m",
        )?;
        check(self.wavelength_m > 0.0, "radio.wavelength_m", "must be positive")?;
        check(self.min_be <= self.max_be, "mac.min_be", "must not exceed mac.max_be")?;
        check(self.max_be <= 20, "mac.max_be", "must be <= 20")?;
        check(self.queue_len >= 1, "mac.queue_len", "must be at least 1")?;
        check(self.e0_j > 0.0, "energy.e0_j", "must be positive")?;
        check(self.e_txn_mj >= 0.0, "energy.e_txn_mj", "must be >= 0")?;
        check(self.e_rxn_mj >= 0.0, "energy.e_rxn_mj", "must be >= 0")?;
        check(self.p_idle_mw >= 0.0, "energy.p_idle_mw", "must be >= 0")?;
        check(self.p_sleep_uw >= 0.0, "energy.p_sleep_uw", "must be >= 0")?;
        check(self.sleep_after_ms >= 0.0, "energy.sleep_after_ms", "must be >= 0")?;
        check(self.cluster_start_s >= 0.0, "cluster.start_s", "must be >= 0")?;
        check(self.t1_s > 0.0, "cluster.t1_s", "must be positive")?;
        check(self.t2_s >= 0.0, "cluster.t2_s", "must be >= 0")?;
        check((0.0..=1.0).contains(&self.alpha), "cluster.alpha", "must be in [0, 1]")?;
        check(self.r_max_m > 0.0, "cluster.r_max_m", "must be positive")?;
        check(self.vr_lo >= 0.0, "cluster.vr_lo", "must be >= 0")?;
        check(self.vr_hi >= self.vr_lo, "cluster.vr_hi", "must be >= cluster.vr_lo")?;
        check(self.pin_vr.is_none_or(|v| v >= 0.0), "cluster.pin_vr", "must be >= 0")?;
        let setup = self.t2_s * self.vr_hi.max(self.pin_vr.unwrap_or(0.0)) + 0.6;
        check(
            self.t1_s > setup,
            "cluster.t1_s",
            "round period too short for the election window",
        )?;
        check(self.slot_ms > 0.0, "cluster.slot_ms", "must be positive")?;
        check(self.neighbor_ttl_s > 0.0, "route.neighbor_ttl_s", "must be positive")?;
        check(self.rreq_timeout_ms > 0.0, "route.rreq_timeout_ms", "must be positive")?;
        check(self.rrep_window_ms >= 0.0, "route.rrep_window_ms", "must be >= 0")?;
        check(
            self.rrep_window_ms < self.rreq_timeout_ms,
            "route.rrep_window_ms",
            "must be shorter than route.rreq_timeout_ms",
        )?;
        check(
            self.active_timeout_s > 0.0,
            "route.active_timeout_s",
            "must be positive",
        )?;
        check(
            self.offered_load_kbps > 0.0,
            "traffic.offered_load_kbps",
            "must be positive",
        )?;
        check(
            self.sources.is_none_or(|n| n <= self.nodes),
            "traffic.sources",
            "must not exceed nodes",
        )?;
        check(self.traffic_start_s >= 0.0, "traffic.start_s", "must be >= 0")?;
        check(
            self.traffic_stop_s.is_none_or(|s| s >= self.traffic_start_s),
            "traffic.stop_s",
            "must be >= traffic.start_s",
        )?;
        check(self.sample_period_s > 0.0, "metrics.sample_s", "must be positive")?;
        Ok(())
    }

    pub fn source_count(&self) -> u32 {
        self.sources.unwrap_or(self.nodes).min(self.nodes)
    }

    pub fn traffic_stop(&self) -> f64 {
        self.traffic_stop_s.unwrap_or(self.sim_time_s).min(self.sim_time_s)
    }

    /// Aggregate application bits offered over the run.
    pub fn offered_load_bits(&self) -> f64 {
        if self.source_count() == 0 {
            return 0.0;
        }
        self.offered_load_kbps * 1000.0 * (self.traffic_stop() - self.traffic_start_s).max(0.0)
    }

    /// Keys whose value differs from the default.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let base = Scenario::default().entries();
        self.entries()
            .into_iter()
            .zip(base)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a)
            .collect()
    }

    /// Renders every key in the file format accepted by [`parse_scenario`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}

/// Parses scenario text on top of the defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::default();
    let mut lines: BTreeMap<&'static str, usize> = BTreeMap::new();
    let keys: Vec<&'static str> = sc.entries().into_iter().map(|(k, _)| k).collect();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line_no, content, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        sc.set(key, value).map_err(|m| ConfigError::new(line_no, key, m))?;
        if let Some(k) = keys.iter().find(|k| **k == key) {
            if lines.insert(k, line_no).is_some() {
                return Err(ConfigError::new(line_no, key, "duplicate key"));
            }
        }
    }
    sc.validate()
        .map_err(|(key, m)| ConfigError::new(lines.get(key).copied().unwrap_or(0), key, m))?;
    Ok(sc)
}
