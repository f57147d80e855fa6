//! `bmc`: simulate trees, estimate BAR parameters from lineage files, run
//! experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 degenerate
//! computation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmc::error::BmcError;
use bmc::harness::{run_with_workers, write_outputs, ExperimentConfig, ModelSpec};
use bmc::inference::{asymmetry_test, EstimatorReport};
use bmc::seed::ReplicationSeed;
use bmc::simulate::{simulate_tree, TreePopulation};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "bmc", version, about = "Bifurcating Markov chains: simulation, estimation, experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one tree and write a `node,value` CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Depth r of the tree, |T_r| = 2^(r+1) - 1 nodes.
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Estimate BAR parameters from a complete tree and run the asymmetry test.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// `node,value` CSV holding a complete tree.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Estimation depth r; the file must cover T_(r+1). Defaults to the
        /// file depth minus one.
        #[arg(long)]
        depth: Option<u32>,
        /// Level of the asymmetry test.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Run an experiment block.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        workers: Option<usize>,
    },
}

enum Failure {
    Config(String),
    Data(String),
    Degenerate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Degenerate(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Degenerate(m) => m,
        }
    }
}

impl From<BmcError> for Failure {
    fn from(e: BmcError) -> Self {
        let msg = e.to_string();
        match e {
            BmcError::IncompleteTree { .. }
            | BmcError::InvalidNode(_)
            | BmcError::InsufficientDepth { .. }
            | BmcError::LengthMismatch(_) => Failure::Data(msg),
            BmcError::DegenerateDesign(_)
            | BmcError::ZeroVariance(_)
            | BmcError::DegenerateVariance(_)
            | BmcError::StateSpaceExplosion(_) => Failure::Degenerate(msg),
            _ => Failure::Config(msg),
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn echo<T: Serialize>(config: &T) {
    eprintln!(
        "effective config: {}",
        serde_json::to_string(config).expect("config serializes")
    );
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: Option<ModelSpec>,
    depth: Option<u32>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn simulate(common: Common, seed: Option<u64>, depth: Option<u32>) -> Result<(), Failure> {
    let mut config: SimulateConfig = match &common.config {
        Some(path) => read_config(path)?,
        None => SimulateConfig {
            model: None,
            depth: None,
            seed: 0,
            name: None,
            out: None,
        },
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if depth.is_some() {
        config.depth = depth;
    }
    if common.out.is_some() {
        config.out = common.out;
    }
    echo(&config);
    let model = config
        .model
        .as_ref()
        .ok_or_else(|| Failure::Config("simulate needs a model block".into()))?
        .build()?;
    let depth = config.depth.ok_or_else(|| Failure::Config("simulate needs a depth".into()))?;
    let pop = simulate_tree(&model, depth, ReplicationSeed::new(config.seed, "simulate", 0))?;
    let dir = config.out.unwrap_or_else(|| PathBuf::from("."));
    let path = dir.join(format!("{}.csv", config.name.as_deref().unwrap_or("tree")));
    write(&path, &pop.to_csv())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    input: Option<PathBuf>,
    #[serde(default)]
    depth: Option<u32>,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn default_level() -> f64 {
    0.05
}

fn estimate(common: Common, input: Option<PathBuf>, depth: Option<u32>, level: Option<f64>) -> Result<(), Failure> {
    let mut config: EstimateConfig = match &common.config {
        Some(path) => read_config(path)?,
        None => EstimateConfig {
            input: None,
            depth: None,
            level: default_level(),
            out: None,
        },
    };
    if input.is_some() {
        config.input = input;
    }
    if depth.is_some() {
        config.depth = depth;
    }
    if let Some(l) = level {
        config.level = l;
    }
    if common.out.is_some() {
        config.out = common.out;
    }
    echo(&config);
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Failure::Config(format!("level {} not in (0, 1)", config.level)));
    }
    let path = config.input.as_ref().ok_or_else(|| Failure::Config("estimate needs --input".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let pop = match TreePopulation::from_csv(&text) {
        Ok(p) => p,
        Err(e @ BmcError::Parse(_)) => return Err(Failure::Data(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let r = match config.depth {
        Some(r) => r,
        None => pop
            .depth()
            .checked_sub(1)
            .ok_or_else(|| Failure::Data("the file holds only the root; estimation needs T_(r+1), r >= 0".into()))?,
    };
    let report = EstimatorReport::from_population(&pop, r)?;
    let decision = report.chi1.map(|c| asymmetry_test(c, config.level)).transpose()?;
    let verdict = match decision {
        Some(d) if d.reject => "reject",
        Some(_) => "fail to reject",
        None => "undefined",
    };
    let out = json!({
        "report": report,
        "chi_square": report.chi1,
        "decision": decision,
        "verdict": verdict,
    });
    let text = serde_json::to_string_pretty(&out).expect("report serializes") + "\n";
    print!("{text}");
    if let Some(dir) = &config.out {
        write(&dir.join("estimate.json"), &text)?;
    }
    if report.degenerate {
        return Err(Failure::Degenerate(format!("degenerate design: B_r = {:e}", report.b_r)));
    }
    Ok(())
}

fn experiment(common: Common, seed: Option<u64>, workers: Option<usize>) -> Result<(), Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("experiment needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if common.out.is_some() {
        config.out = common.out;
    }
    echo(&config);
    let output = run_with_workers(&config, workers)?;
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (csv, summary) = write_outputs(&dir, &output).map_err(|e| Failure::Config(e.to_string()))?;
    println!("{}", csv.display());
    println!("{}", summary.display());
    if let Some(v) = output.summary.get("verdicts") {
        println!("verdicts: {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, seed, depth } => simulate(common, seed, depth),
        Command::Estimate {
            common,
            input,
            depth,
            level,
        } => estimate(common, input, depth, level),
        Command::Experiment { common, seed, workers } => experiment(common, seed, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
