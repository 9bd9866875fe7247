use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wsnsim::metrics::{write_csv, MetricsRow};
use wsnsim::runner::{axis_key, expand, run_all, summarize};
use wsnsim::world::{write_trace, RunOutput};
use wsnsim::{parse_scenario, BeaconMode, RoutingMode, Scenario};

/// Mobile sensor network simulator.
#[derive(Debug, Parser)]
#[command(name = "wsnsim", version)]
struct Cli {
    /// Scenario file (`key = value` lines, `#` comments).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Single seed; overrides the scenario's seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range, e.g. `1..5`.
    #[arg(long, value_name = "N..M")]
    seeds: Option<String>,
    /// Sweep one scenario key, e.g. `nodes=20,40,60` or `offered_load=10,20`.
    #[arg(long, value_name = "AXIS=V1,V2,...")]
    sweep: Option<String>,
    #[arg(long, value_name = "hybrid|aodv_only|cluster_only")]
    mode: Option<String>,
    #[arg(long, value_name = "adaptive|periodic")]
    beaconing: Option<String>,
    /// Write the event log of every run to FILE.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write the CSV to FILE instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run sweep points one after another.
    #[arg(long)]
    sequential: bool,
    /// Print every scenario key with its default and exit.
    #[arg(long)]
    print_defaults: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("--seeds: expected N..M, got `{s}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo: u64 = a.trim().parse().map_err(|_| format!("--seeds: bad start `{a}`"))?;
    let hi: u64 = b.trim().parse().map_err(|_| format!("--seeds: bad end `{b}`"))?;
    if hi < lo {
        return Err(format!("--seeds: empty range `{s}`"));
    }
    Ok((lo..=hi).collect())
}

fn parse_sweep(s: &str) -> Result<(String, Vec<String>), String> {
    let (axis, vals) = s
        .split_once('=')
        .ok_or_else(|| format!("--sweep: expected AXIS=v1,v2,..., got `{s}`"))?;
    let values: Vec<String> = vals
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err("--sweep: no values".into());
    }
    Ok((axis.trim().to_string(), values))
}

fn load_base(cli: &Cli) -> Result<Scenario, Failure> {
    let mut sc = match &cli.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            parse_scenario(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => Scenario::default(),
    };
    if let Some(m) = &cli.mode {
        sc.mode = m
            .parse::<RoutingMode>()
            .map_err(|e| Failure::Config(format!("--mode: {e}")))?;
    }
    if let Some(b) = &cli.beaconing {
        sc.beaconing = b
            .parse::<BeaconMode>()
            .map_err(|e| Failure::Config(format!("--beaconing: {e}")))?;
    }
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if cli.print_defaults {
        print!("{}", Scenario::default().to_text());
        return Ok(());
    }
    let base = load_base(cli)?;
    let sweep = cli
        .sweep
        .as_deref()
        .map(parse_sweep)
        .transpose()
        .map_err(Failure::Config)?;
    let seeds = match (&cli.seeds, &sweep) {
        (Some(s), _) => parse_seeds(s).map_err(Failure::Config)?,
        (None, Some(_)) if cli.seed.is_none() => (0..base.replications as u64).map(|i| base.seed + i).collect(),
        _ => vec![base.seed],
    };
    let axis = sweep.as_ref().map(|(a, v)| (a.as_str(), v.as_slice()));
    let scenarios = expand(&base, axis, &seeds).map_err(|e| Failure::Config(e.to_string()))?;

    let mut meta = io::stderr().lock();
    for (k, v) in base.overrides() {
        let _ = writeln!(meta, "# override {k} = {v}");
    }
    if let Some((a, vs)) = &sweep {
        let _ = writeln!(meta, "# sweep {} = {}", axis_key(a), vs.join(","));
    }
    let seed_list: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(meta, "# seeds {}", seed_list.join(","));

    let results = run_all(&scenarios, !cli.sequential, cli.trace.is_some());
    let mut outputs: Vec<RunOutput> = Vec::with_capacity(results.len());
    for (sc, r) in scenarios.iter().zip(results) {
        outputs.push(r.map_err(|e| Failure::Runtime(format!("run seed {}: {e}", sc.seed)))?);
    }
    let rows: Vec<MetricsRow> = outputs.iter().map(|o| o.metrics.row.clone()).collect();

    match &cli.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            write_csv(&rows, BufWriter::new(f)).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        }
        None => write_csv(&rows, io::stdout().lock()).map_err(|e| Failure::Runtime(format!("stdout: {e}")))?,
    }

    if let Some(path) = &cli.trace {
        let f = fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        let io_err = |e: io::Error| Failure::Runtime(format!("{}: {e}", path.display()));
        for (sc, o) in scenarios.iter().zip(&outputs) {
            writeln!(w, "# run scenario={} nodes={} seed={}", sc.name, sc.nodes, sc.seed).map_err(io_err)?;
            write_trace(&o.trace, &mut w).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }

    if let Some((a, values)) = &sweep {
        let _ = writeln!(
            meta,
            "# summary {}: value runs mean_total_energy_j mean_energy_per_node_j mean_delay_s mean_throughput_kbps delivered_ratio",
            axis_key(a)
        );
        for (i, v) in values.iter().enumerate() {
            let point: Vec<&MetricsRow> = rows[i * seeds.len()..(i + 1) * seeds.len()].iter().collect();
            let s = summarize(v, &point);
            let delay = s.mean_delay_s.map_or("NA".to_string(), |d| format!("{d:.6}"));
            let _ = writeln!(
                meta,
                "# {} {} {:.6} {:.6} {} {:.6} {:.4}",
                s.value,
                s.runs,
                s.mean_total_energy_j,
                s.mean_energy_per_node_j,
                delay,
                s.mean_throughput_kbps,
                s.delivered_ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
