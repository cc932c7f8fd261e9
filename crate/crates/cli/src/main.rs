use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use layerpar::io::{apply_measured_costs, network_to_json, parse_device_graph, parse_network, StrategyDoc};
use layerpar::oracle::{brute_force_plan, DEFAULT_BUDGET};
use layerpar::planner::DEFAULT_K_BOUND;
use layerpar::report::{compare_json, compare_table, strategy_report, SearchSummary, StrategyReport};
use layerpar::{
    baseline_strategy, build_cost_tables, builtin_model, plan_with_tables, Baseline, ComputationGraph, CostTablesF64,
    DeviceGraph, Error, Model, PlanOptions, Strategy,
};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "layerpar", version, about = "Layer-wise parallelization planner for CNN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find an optimal strategy by node and edge elimination.
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        output: Output,
        /// Largest final graph solved by enumeration.
        #[arg(long, default_value_t = DEFAULT_K_BOUND)]
        k_bound: usize,
    },
    /// Find an optimal strategy by exhaustive search.
    Brute {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        output: Output,
        /// Largest strategy space searched.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Cost a strategy file.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        /// Strategy JSON as written by `plan` or `brute`.
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also report raw cross-device bytes.
        #[arg(long)]
        bytes: bool,
    },
    /// Compare the data, model and owt baselines with the optimum.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        bytes: bool,
        #[arg(long, default_value_t = DEFAULT_K_BOUND)]
        k_bound: usize,
    },
    /// Write a builtin model as network JSON.
    EmitModel {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Inputs {
    /// Builtin model: lenet5, alexnet, vgg16, inception_chain[:K].
    #[arg(long, conflicts_with = "network", required_unless_present = "network")]
    model: Option<String>,
    /// Network JSON file.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Number of devices in the default cluster.
    #[arg(long, conflicts_with = "device_file", required_unless_present = "device_file")]
    devices: Option<usize>,
    /// Device graph JSON file.
    #[arg(long)]
    device_file: Option<PathBuf>,
    /// Batch size for builtin models.
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Measured costs overriding the analytic tables.
    #[arg(long)]
    costs: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    /// Write the strategy JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the strategy JSON, with the report embedded, instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    bytes: bool,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

struct Loaded {
    graph: ComputationGraph,
    devices: DeviceGraph,
    tables: CostTablesF64,
}

impl Inputs {
    fn load(&self) -> Result<Loaded, Error> {
        let graph = match (&self.model, &self.network) {
            (Some(name), _) => builtin_model(name.parse::<Model>()?, self.batch)?,
            (None, Some(path)) => parse_network(&read(path)?)?,
            (None, None) => unreachable!("clap requires one input"),
        };
        let devices = match (&self.devices, &self.device_file) {
            (Some(n), _) => DeviceGraph::default_cluster(*n)?,
            (None, Some(path)) => parse_device_graph(&read(path)?)?,
            (None, None) => unreachable!("clap requires one device source"),
        };
        let mut tables = build_cost_tables::<f64>(&graph, &devices)?;
        if let Some(path) = &self.costs {
            apply_measured_costs(&graph, &mut tables, &read(path)?)?;
        }
        Ok(Loaded { graph, devices, tables })
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Writes `--out` and prints either the JSON document or the text report.
fn emit(
    loaded: &Loaded,
    strategy: &Strategy,
    summary: SearchSummary,
    output: &Output,
    label: &str,
) -> Result<(), Error> {
    let Loaded { graph, devices, tables } = loaded;
    let report = strategy_report(label, graph, tables, strategy, output.bytes.then_some(devices))?;
    let configs = strategy.configs(tables).expect("analytic tables carry catalogs");
    let doc = StrategyDoc::new(
        graph,
        &configs,
        report.total,
        summary.node_eliminations + summary.edge_eliminations,
        summary.final_graph_nodes,
    );
    if let Some(path) = &output.out {
        write(path, &pretty(&doc.to_json()))?;
    }
    if output.json {
        let mut v = doc.to_json();
        v["search"] = summary.to_json();
        v["report"] = report.to_json();
        print!("{}", pretty(&v));
    } else {
        print!("{}{}", summary.render(), report.render());
        println!("cost: {} s", report.total);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Plan { inputs, output, k_bound } => {
            let loaded = inputs.load()?;
            let start = Instant::now();
            let outcome = plan_with_tables(&loaded.graph, &loaded.tables, PlanOptions { k_bound })?;
            eprintln!("planning time: {:.6} s", start.elapsed().as_secs_f64());
            emit(&loaded, &outcome.strategy, SearchSummary::from(&outcome), &output, "optimal")
        }
        Command::Brute { inputs, output, budget } => {
            let loaded = inputs.load()?;
            let start = Instant::now();
            let found = brute_force_plan(&loaded.graph, &loaded.tables, budget)?;
            eprintln!("search time: {:.6} s ({} strategies)", start.elapsed().as_secs_f64(), found.visited);
            let summary = SearchSummary {
                final_graph_nodes: loaded.graph.node_count(),
                node_eliminations: 0,
                edge_eliminations: 0,
            };
            emit(&loaded, &found.strategy, summary, &output, "brute-force")
        }
        Command::Eval { inputs, strategy, json, bytes } => {
            let loaded = inputs.load()?;
            let doc = StrategyDoc::parse(&read(&strategy)?)?;
            let s = doc.to_strategy(&loaded.graph, &loaded.tables)?;
            let report =
                strategy_report("evaluated", &loaded.graph, &loaded.tables, &s, bytes.then_some(&loaded.devices))?;
            if json {
                print!("{}", pretty(&report.to_json()));
            } else {
                print!("{}", report.render());
                println!("cost: {} s", report.total);
            }
            Ok(())
        }
        Command::Compare { inputs, json, bytes, k_bound } => {
            let loaded = inputs.load()?;
            let Loaded { graph, devices, tables } = &loaded;
            let with_bytes = bytes.then_some(devices);
            let mut rows: Vec<StrategyReport> = Vec::new();
            for b in Baseline::ALL {
                let s = baseline_strategy(b, graph, tables, devices.len())?;
                rows.push(strategy_report(b.name(), graph, tables, &s, with_bytes)?);
            }
            let start = Instant::now();
            let outcome = plan_with_tables(graph, tables, PlanOptions { k_bound })?;
            eprintln!("planning time: {:.6} s", start.elapsed().as_secs_f64());
            rows.push(strategy_report("optimal", graph, tables, &outcome.strategy, with_bytes)?);
            if json {
                print!("{}", pretty(&compare_json(&rows)));
            } else {
                print!("{}", compare_table(&rows));
            }
            Ok(())
        }
        Command::EmitModel { model, batch, out } => {
            let graph = builtin_model(model.parse::<Model>()?, batch)?;
            let text = pretty(&network_to_json(&graph));
            match out {
                Some(path) => write(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_limit() { 3 } else { 2 })
        }
    }
}
