//! `igcl` command-line driver.
//!
//! Every subcommand prints one JSON status line on stdout when it succeeds.
//! On failure it prints `{"error":{"kind":..,"message":..}}` on stderr and
//! exits with 2 (bad invocation) or 1 (anything else).

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::{
    export_report, export_sweep, load_report, load_sweep, prepare, run_regime_with, run_sweep, station_name,
    ExperimentConfig, ExperimentReport, Regime, RegimeSpec, SweepReport, REPORT_FILE,
};
use crate::infograph::write_edge_list;
use crate::siggen::{load_dataset, save_dataset, synth_dataset, Dataset};
use crate::train::Method;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "igcl", version, about = "Information-graph contrastive learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML); the bundled reference benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the experiment seed (`synth`: the generator seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct Selector {
    /// all, all_sc, one_station or one_station_sc.
    #[arg(long)]
    pub regime: Option<String>,
    /// Station index (0-based) or name such as ILL02.
    #[arg(long)]
    pub station: Option<String>,
    /// xe, ig_link or ig_anchor.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into --out.
    Synth(Common),
    /// Build the training-partition information graph and export it with stats.
    Graph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selector,
    },
    /// Run one regime/method cell.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selector,
    },
    /// Run every regime/method cell.
    Sweep(Common),
    /// Summarise the report.json found in --out.
    Report(Common),
}

fn load_config(common: &Common, seed_is_synth: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::reference_benchmark(),
    };
    if let Some(s) = common.seed {
        if seed_is_synth {
            cfg.synth.seed = s;
        } else {
            cfg.seed = s;
        }
    }
    Ok(cfg)
}

fn dataset_for(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data_dir {
        Some(dir) => load_dataset(dir),
        None => Ok(Dataset {
            config: cfg.synth.clone(),
            streams: synth_dataset(&cfg.synth)?,
        }),
    }
}

fn parse_station(s: &str, n_stations: usize) -> Result<usize> {
    let idx = match s.strip_prefix("ILL") {
        Some(num) => num
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_sub(1))
            .ok_or_else(|| Error::Argument(format!("bad station name {s:?}")))?,
        None => s
            .parse::<usize>()
            .map_err(|_| Error::Argument(format!("bad station {s:?}: expected an index or ILLnn")))?,
    };
    if idx >= n_stations {
        return Err(Error::Argument(format!("station {s} out of range for {n_stations} stations")));
    }
    Ok(idx)
}

fn spec_from(select: &Selector, cfg: &ExperimentConfig, default_regime: Regime) -> Result<RegimeSpec> {
    let regime = select.regime.as_deref().map_or(Ok(default_regime), str::parse)?;
    let method = select.method.as_deref().map_or(Ok(Method::IgAnchor), str::parse)?;
    let station = select
        .station
        .as_deref()
        .map(|s| parse_station(s, cfg.synth.n_stations))
        .transpose()?;
    let spec = RegimeSpec { regime, station, method, repeats: cfg.repeats };
    spec.validate(cfg.synth.n_stations)?;
    Ok(spec)
}

fn cmd_synth(common: &Common) -> Result<serde_json::Value> {
    let cfg = load_config(common, true)?;
    let ds = Dataset {
        config: cfg.synth.clone(),
        streams: synth_dataset(&cfg.synth)?,
    };
    save_dataset(&common.out, &ds)?;
    Ok(json!({"streams": ds.streams.len(), "events": ds.events().len()}))
}

fn cmd_graph(common: &Common, select: &Selector) -> Result<serde_json::Value> {
    let cfg = load_config(common, false)?;
    let spec = spec_from(select, &cfg, Regime::AllSc)?;
    let prepared = prepare(&cfg, &dataset_for(&cfg)?)?;
    let stations = spec.rows(prepared.n_stations).remove(0);
    let g = prepared.graph(spec.regime.system_context(), &stations)?;
    fs::create_dir_all(&common.out)?;
    let file = fs::File::create(common.out.join("graph.edges"))?;
    write_edge_list(&g, BufWriter::new(file))?;
    let stats = json!({
        "regime": spec.regime.as_str(),
        "labeled_stations": stations.iter().map(|&s| station_name(s)).collect::<Vec<_>>(),
        "nodes": g.nodes().len(),
        "segments": prepared.graph_segments.len(),
        "context_edges": g.context_edge_count(),
        "annotation_edges": g.annotation_edge_count(),
    });
    fs::write(common.out.join("graph.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    Ok(stats)
}

fn cmd_train(common: &Common, select: &Selector) -> Result<serde_json::Value> {
    let cfg = load_config(common, false)?;
    let spec = spec_from(select, &cfg, Regime::OneStationSc)?;
    let prepared = prepare(&cfg, &dataset_for(&cfg)?)?;
    let runs = common.out.join("runs");
    let report = run_regime_with(&cfg, &prepared, &spec, |ctx| {
        let dir = runs.join(format!("{}_r{}", station_tag(&ctx.stations, ctx.spec.regime), ctx.repeat));
        fs::create_dir_all(&dir)?;
        let mut plan = ctx.plan.clone();
        plan.out_dir = Some(dir);
        ctx.train_with_plan(&plan)
    })?;
    export_report(&report, &common.out)?;
    Ok(json!({"regime": spec.regime.as_str(), "method": spec.method.as_str(), "mean": report.mean, "std": report.std}))
}

fn station_tag(stations: &[usize], regime: Regime) -> String {
    if regime.one_station() {
        station_name(stations[0])
    } else {
        "all".into()
    }
}

fn cmd_sweep(common: &Common) -> Result<serde_json::Value> {
    let cfg = load_config(common, false)?;
    let prepared = prepare(&cfg, &dataset_for(&cfg)?)?;
    let sweep = run_sweep(&cfg, &prepared)?;
    export_sweep(&sweep, &common.out)?;
    Ok(json!({"cells": sweep.cells.len(), "test_hash": sweep.meta.test_hash}))
}

fn summary_rows(cells: &[ExperimentReport]) -> Vec<[String; 5]> {
    cells
        .iter()
        .map(|c| {
            [
                c.regime.as_str().to_string(),
                c.method.as_str().to_string(),
                c.mean.to_string(),
                c.std.to_string(),
                c.cross_station_mean.map_or(String::new(), |v| v.to_string()),
            ]
        })
        .collect()
}

fn cmd_report(common: &Common) -> Result<serde_json::Value> {
    let dir: &Path = &common.out;
    let cells = match load_sweep(dir) {
        Ok(SweepReport { cells, .. }) => cells,
        Err(_) => vec![load_report(dir).map_err(|e| e.context(format!("no readable {REPORT_FILE} in {}", dir.display())))?],
    };
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["regime", "method", "mean", "std", "cross_station_mean"])?;
    for row in summary_rows(&cells) {
        w.write_record(&row)?;
    }
    w.flush()?;
    for c in &cells {
        eprintln!(
            "{:<16} {:<10} {:6.2} ± {:5.2}",
            c.regime.as_str(),
            c.method.as_str(),
            c.mean,
            c.std
        );
    }
    Ok(json!({"cells": cells.len()}))
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Graph { common, select } => cmd_graph(common, select),
        Command::Train { common, select } => cmd_train(common, select),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Report(c) => cmd_report(c),
    }
}

/// The machine-readable failure line.
pub fn error_line(kind: &str, message: &str) -> String {
    json!({"error": {"kind": kind, "message": message}}).to_string()
}

/// Parse `args`, run, and return the process exit code.
pub fn run_from_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", error_line("usage", msg.lines().next().unwrap_or("invalid arguments")));
            return 2;
        }
    };
    match dispatch(&cli) {
        Ok(v) => {
            println!("{}", json!({"status": "ok", "result": v}));
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            if matches!(e.kind(), "argument" | "usage") {
                2
            } else {
                1
            }
        }
    }
}
