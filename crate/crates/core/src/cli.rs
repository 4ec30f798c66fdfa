//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! failures while running. Output files written before a failure are
//! removed.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{
    apply_override, merge_values, preset_value, read_config_file, ExperimentConfig,
};
use crate::datasets::generate;
use crate::error::{Error, Result};
use crate::harness::{
    build_network, calibrate_budget, run_experiment, sweep_network_size, write_metrics,
    write_sweep, MetricsTrace,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const DEFAULT_SIZES: [usize; 4] = [2, 4, 8, 16];

#[derive(Debug, Parser)]
#[command(
    name = "kafnet",
    version,
    about = "Diffusion kernel LMS experiments over simulated networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo learning curves for every configured algorithm.
    Run(Common),
    /// MSE floor and final dictionary size against network size.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated network sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Dataset utilities.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
    /// Set the budget to the steady-state dictionary size of qdklms and
    /// write the calibrated config.
    CalibrateBudget(Common),
}

#[derive(Debug, Subcommand)]
enum DatasetsCommand {
    /// Write the configured stream as CSV.
    Gen(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Shipped preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// JSON config file, layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides stream.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved config to stderr.
    #[arg(long)]
    verbose: bool,
    /// Write the topology and combination matrices to network.json.
    #[arg(long)]
    dump_network: bool,
    /// Include full dictionary entries in dictionaries.json.
    #[arg(long)]
    dump_dictionaries: bool,
    /// Config overrides of the form dotted.key=value.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Run,
    Sweep { sizes: Vec<usize> },
    DatasetsGen,
    CalibrateBudget,
}

/// A parsed command line with its fully resolved configuration.
#[derive(Clone, Debug)]
pub struct CliInvocation {
    pub action: Action,
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub verbose: bool,
    pub dump_network: bool,
    pub dump_dictionaries: bool,
}

/// Parse failures. `Display` carries clap's own help/version output.
#[derive(Debug)]
pub enum ParseOutcome {
    Display(String),
    Invalid(String),
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut tree = match &common.preset {
        Some(name) => preset_value(name)?,
        None => Value::Object(Default::default()),
    };
    match &common.config {
        Some(path) => merge_values(&mut tree, read_config_file(path)?),
        None if common.preset.is_none() => {
            return Err(Error::invalid(
                "config",
                "either --preset or --config is required",
            ));
        }
        None => {}
    }
    // sidecars nest the config; unwrap before overrides address keys
    if let Value::Object(map) = &mut tree {
        if !map.contains_key("stream") {
            if let Some(inner) = map.remove("config") {
                tree = inner;
            }
        }
    }
    for o in &common.overrides {
        apply_override(&mut tree, o)?;
    }
    if let Some(seed) = common.seed {
        apply_override(&mut tree, &format!("stream.seed={seed}"))?;
    }
    let config = ExperimentConfig::from_json(tree).map_err(|e| match e {
        Error::Json(j) => Error::invalid("config", j.to_string()),
        other => other,
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_and_validate<I, T>(argv: I) -> std::result::Result<CliInvocation, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                ParseOutcome::Display(e.to_string())
            }
            _ => ParseOutcome::Invalid(
                e.to_string()
                    .lines()
                    .next()
                    .unwrap_or("invalid arguments")
                    .to_string(),
            ),
        }
    })?;
    let (action, common) = match cli.command {
        Command::Run(c) => (Action::Run, c),
        Command::Sweep { common, sizes } => (
            Action::Sweep {
                sizes: sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec()),
            },
            common,
        ),
        Command::Datasets {
            command: DatasetsCommand::Gen(c),
        } => (Action::DatasetsGen, c),
        Command::CalibrateBudget(c) => (Action::CalibrateBudget, c),
    };
    if let Action::Sweep { sizes } = &action {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(ParseOutcome::Invalid(
                "error: invalid value for `--sizes`: sizes must be >= 1".into(),
            ));
        }
    }
    let config =
        resolve_config(&common).map_err(|e| ParseOutcome::Invalid(format!("error: {e}")))?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if common.verbose {
        if let Ok(text) = serde_json::to_string_pretty(&config) {
            eprintln!("{text}");
        }
    }
    Ok(CliInvocation {
        action,
        config,
        out,
        verbose: common.verbose,
        dump_network: common.dump_network,
        dump_dictionaries: common.dump_dictionaries,
    })
}

/// Tracks files written so far so a failure can remove them.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn add(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    fn json(&mut self, path: PathBuf, value: &Value) -> Result<()> {
        self.written.push(path.clone());
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn dictionaries_json(trace: &MetricsTrace, full: bool) -> Result<Value> {
    let mut out = serde_json::Map::new();
    for (algorithm, dicts) in &trace.first_run_dictionaries {
        let nodes = dicts
            .iter()
            .enumerate()
            .map(|(q, d)| {
                let mut node = json!({ "node": q, "entry_count": d.len() });
                if full {
                    node["dictionary"] = serde_json::to_value(d)?;
                }
                Ok(node)
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(algorithm.to_string(), Value::Array(nodes));
    }
    Ok(Value::Object(out))
}

fn run_action(inv: &CliInvocation, outputs: &mut Outputs) -> Result<()> {
    let out = &inv.out;
    fs::create_dir_all(out)?;
    if inv.dump_network {
        let (topology, matrices) = build_network(&inv.config)?;
        outputs.json(
            out.join("network.json"),
            &json!({ "topology": topology, "matrices": matrices }),
        )?;
    }
    match &inv.action {
        Action::Run => {
            let trace = run_experiment(&inv.config)?;
            outputs.add(write_metrics(
                &trace,
                &inv.config,
                &out.join("metrics.csv"),
            )?);
            outputs.json(
                out.join("dictionaries.json"),
                &dictionaries_json(&trace, inv.dump_dictionaries)?,
            )?;
            for t in &trace.traces {
                println!(
                    "{:<9} mse_floor={:.6} mean_final_dict={:.2} max_dict={}",
                    t.algorithm,
                    t.mse_floor,
                    t.mean_final_dict_size(),
                    t.max_dict_size
                );
            }
        }
        Action::Sweep { sizes } => {
            let points = sweep_network_size(&inv.config, sizes)?;
            outputs.add(write_sweep(&points, &inv.config, &out.join("sweep.csv"))?);
            for p in &points {
                println!(
                    "{:<9} nodes={:<3} mse_floor={:.6} avg_final_dict={:.2}",
                    p.algorithm, p.node_count, p.mse_floor, p.avg_final_dict_size
                );
            }
        }
        Action::DatasetsGen => {
            let stream = generate(&inv.config.stream)?;
            let path = out.join("samples.csv");
            outputs.add([path.clone()]);
            let file = std::io::BufWriter::new(fs::File::create(&path)?);
            stream.write_csv(file)?;
            println!("{}", path.display());
        }
        Action::CalibrateBudget => {
            let budget = calibrate_budget(&inv.config)?;
            let mut calibrated = inv.config.clone();
            calibrated.hyper.budget = Some(budget);
            let name = if calibrated.name.is_empty() {
                "calibrated"
            } else {
                &calibrated.name
            };
            let path = out.join(format!("{name}.json"));
            outputs.json(path.clone(), &serde_json::to_value(&calibrated)?)?;
            println!("budget={budget} {}", path.display());
        }
    }
    Ok(())
}

/// Runs a validated invocation and returns the process exit code.
pub fn execute(inv: &CliInvocation) -> i32 {
    let mut outputs = Outputs {
        written: Vec::new(),
    };
    match run_action(inv, &mut outputs) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            outputs.cleanup();
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_and_validate(argv) {
        Ok(inv) => execute(&inv),
        Err(ParseOutcome::Display(text)) => {
            print!("{text}");
            EXIT_OK
        }
        Err(ParseOutcome::Invalid(msg)) => {
            eprintln!("{msg}");
            EXIT_VALIDATION
        }
    }
}
