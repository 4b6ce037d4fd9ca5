use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{Map, Value};

use mecache::bnb::{BranchRule, NodeOrder};
use mecache::harness::{run_single, run_sweep, write_csv, SweepSpec, SweepVar, DEFAULT_BNB_CAP, DEFAULT_SEED_COUNT};
use mecache::scenario::{load_scenario, save_scenario, scenario_to_json, GenConfigDoc};
use mecache::schemes::SchemeConfig;
use mecache::{generate, Error, GenConfig, Result, SchemeId};

#[derive(Parser, Debug)]
#[command(name = "mecache", version, about = "Energy-optimal task caching and offloading for multiuser MEC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random scenario and write it as JSON.
    Gen {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        gen: GenFlags,
        /// Output file; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve one scenario with one scheme.
    Solve {
        /// Scenario JSON; generated from the flags when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        gen: GenFlags,
        #[arg(long, default_value = "bnb")]
        scheme: SchemeId,
        #[command(flatten)]
        solver: SolverFlags,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep one generator field over several seeds and write CSV.
    Sweep {
        /// First seed; seeds run from here upward.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SEED_COUNT)]
        seeds: u64,
        #[command(flatten)]
        gen: GenFlags,
        /// dmax (Kbits), sigma2 (W) or l (tasks).
        #[arg(long, default_value = "dmax")]
        var: SweepVar,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated scheme names; all six when omitted.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<SchemeId>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        threads: Option<usize>,
        /// Fill the runtime column (makes the output run-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file against the model invariants.
    Validate { path: PathBuf },
}

#[derive(Args, Debug, Default)]
struct GenFlags {
    /// JSON file whose keys override the command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    wds: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    caching_slots: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    slot_len: Option<f64>,
    #[arg(long)]
    w_mec: Option<f64>,
    #[arg(long)]
    w_wd: Option<f64>,
    #[arg(long)]
    noise_power: Option<f64>,
    #[arg(long)]
    bandwidth_mhz: Option<f64>,
    #[arg(long)]
    caching_bandwidth_mhz: Option<f64>,
    #[arg(long)]
    zipf_shape: Option<f64>,
    #[arg(long)]
    size_min_kbits: Option<f64>,
    #[arg(long)]
    size_max_kbits: Option<f64>,
    #[arg(long)]
    capacity_kbits: Option<f64>,
}

#[derive(Args, Debug)]
struct SolverFlags {
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    max_nodes: usize,
    #[arg(long, default_value_t = DEFAULT_BNB_CAP)]
    bnb_cap: usize,
    /// Branch on the lowest free index instead of the most fractional one.
    #[arg(long)]
    lowest_index: bool,
    #[arg(long)]
    depth_first: bool,
    /// Shuffle equally popular, equally sized tasks with this seed.
    #[arg(long)]
    tie_seed: Option<u64>,
}

impl SolverFlags {
    fn scheme_config(&self) -> SchemeConfig {
        let mut cfg = SchemeConfig { popularity_tie_seed: self.tie_seed, ..SchemeConfig::default() };
        cfg.bnb.epsilon = self.epsilon;
        cfg.bnb.max_nodes = self.max_nodes;
        if self.lowest_index {
            cfg.bnb.branch_rule = BranchRule::LowestIndex;
        }
        if self.depth_first {
            cfg.bnb.node_order = NodeOrder::DepthFirst;
        }
        cfg
    }
}

/// Config-file keys that belong to the sweep rather than the generator.
const SWEEP_KEYS: [&str; 6] = ["var", "values", "seeds", "schemes", "epsilon", "threads"];

fn read_config(path: &Path) -> Result<Map<String, Value>> {
    match serde_json::from_str(&fs::read_to_string(path).map_err(|e| with_path(path, e.into()))?)? {
        Value::Object(map) => Ok(map),
        _ => Err(Error::Parse(format!("{}: config must be a JSON object", path.display()))),
    }
}

fn load_file_config(flags: &GenFlags) -> Result<Map<String, Value>> {
    Ok(flags.config.as_deref().map(read_config).transpose()?.unwrap_or_default())
}

/// Generator config from defaults, then flags, then the config file.
fn gen_config(flags: &GenFlags, seed: u64, file: &Map<String, Value>) -> Result<GenConfig> {
    let mut doc = GenConfigDoc { seed, ..GenConfigDoc::default() };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = flags.$flag {
                doc.$field = v;
            }
        )*};
    }
    set!(wds => num_wds, tasks => num_tasks, caching_slots => caching_slots, slots => slots,
        slot_len => slot_len, w_mec => w_mec, w_wd => w_wd, noise_power => noise_power,
        bandwidth_mhz => bandwidth_mhz, caching_bandwidth_mhz => caching_bandwidth_mhz,
        zipf_shape => zipf_shape, size_min_kbits => size_min_kbits, size_max_kbits => size_max_kbits,
        capacity_kbits => capacity_kbits);
    let Value::Object(mut merged) = serde_json::to_value(&doc)? else {
        unreachable!("a struct serializes to an object");
    };
    for (k, v) in file.iter().filter(|(k, _)| !SWEEP_KEYS.contains(&k.as_str())) {
        merged.insert(k.clone(), v.clone());
    }
    let cfg = GenConfig::from(serde_json::from_value::<GenConfigDoc>(Value::Object(merged))?);
    cfg.validate()?;
    Ok(cfg)
}

fn override_from<T: serde::de::DeserializeOwned>(file: &Map<String, Value>, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = file.get(key) {
        *slot = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("config key `{key}`: {e}")))?;
    }
    Ok(())
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { seed, gen, out } => {
            let file = load_file_config(&gen)?;
            let s = generate(&gen_config(&gen, seed, &file)?)?;
            match out {
                Some(path) => {
                    save_scenario(&s, &path).map_err(|e| with_path(&path, e))?;
                    info!("wrote {}", path.display());
                }
                None => println!("{}", scenario_to_json(&s)?),
            }
        }
        Command::Solve { scenario, seed, gen, scheme, solver, report } => {
            let s = match (scenario, seed) {
                (Some(path), _) => load_scenario(&path).map_err(|e| with_path(&path, e))?,
                (None, Some(seed)) => generate(&gen_config(&gen, seed, &load_file_config(&gen)?)?)?,
                (None, None) => return Err(Error::Parse("solve needs --scenario or --seed".into())),
            };
            let (r, text) = run_single(&s, scheme, &solver.scheme_config(), solver.bnb_cap)?;
            print!("{text}");
            if let Some(path) = report {
                fs::write(&path, serde_json::to_string_pretty(&r)?).map_err(|e| with_path(&path, e.into()))?;
            }
        }
        Command::Sweep { seed, seeds, gen, var, values, schemes, solver, threads, timing, out } => {
            let file = load_file_config(&gen)?;
            let base = gen_config(&gen, seed, &file)?;
            let mut spec = SweepSpec::new(base, var, values, (seed..seed.saturating_add(seeds)).collect());
            if !schemes.is_empty() {
                spec.schemes = schemes;
            }
            spec.scheme_cfg = solver.scheme_config();
            spec.bnb_cap = solver.bnb_cap;
            spec.threads = threads;
            spec.record_runtime = timing;
            override_from(&file, "var", &mut spec.var)?;
            override_from(&file, "values", &mut spec.values)?;
            override_from(&file, "seeds", &mut spec.seeds)?;
            override_from(&file, "schemes", &mut spec.schemes)?;
            override_from(&file, "epsilon", &mut spec.scheme_cfg.bnb.epsilon)?;
            override_from(&file, "threads", &mut spec.threads)?;
            let rows = run_sweep(&spec)?;
            match out {
                Some(path) => {
                    let f = fs::File::create(&path).map_err(|e| with_path(&path, e.into()))?;
                    write_csv(&rows, f)?;
                    info!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => write_csv(&rows, io::stdout().lock())?,
            }
        }
        Command::Validate { path } => {
            load_scenario(&path).map_err(|e| with_path(&path, e))?;
            println!("{}: ok", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
