use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{ConfigError, Settings};
use lieforge::LieError;

#[derive(Parser)]
#[command(name = "lieforge", version, about = "Word approximation and relation search on small matrix Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// su2, so3, sl2r, sl3r or aff1.
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    pair_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Net cache directory; LIEFORGE_CACHE takes precedence.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("group", self.group.clone()),
            ("pair_seed", self.pair_seed.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("cache_dir", self.cache_dir.as_ref().map(|p| p.display().to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ]
    }
}

const COMMON_KEYS: &[&str] = &["group", "pair_seed", "seed", "out", "cache_dir", "threads"];

#[derive(Args, Clone)]
struct NetArgs {
    #[arg(long)]
    max_len: Option<usize>,
    /// Radius of the ball at the identity covered by the net.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    target_delta: Option<f64>,
}

impl NetArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("max_len", self.max_len.map(|v| v.to_string())),
            ("radius", self.radius.map(|v| v.to_string())),
            ("target_delta", self.target_delta.map(|v| v.to_string())),
        ]
    }
}

const NET_KEYS: &[&str] = &["max_len", "radius", "target_delta"];

#[derive(Args, Clone)]
struct EngineArgs {
    /// weak or strong.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    /// Measurement samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Targets used to certify each refinement level.
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    cal_samples: Option<usize>,
}

impl EngineArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("mode", self.mode.clone()),
            ("levels", self.levels.map(|v| v.to_string())),
            ("samples", self.samples.map(|v| v.to_string())),
            ("targets", self.targets.map(|v| v.to_string())),
            ("cal_samples", self.cal_samples.map(|v| v.to_string())),
        ]
    }
}

const ENGINE_KEYS: &[&str] = &["mode", "levels", "samples", "targets", "cal_samples"];

#[derive(Subcommand)]
enum Command {
    /// Build (or load) a base word net and list its entries.
    Net {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Approximate sample targets at every refinement level.
    Approx {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Error per level on fresh targets and the rate fit.
    Rate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Factor random near-identity elements into group commutators.
    FactorCommutator {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        /// Distance of the targets from the identity.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Relation certificates for pairs near a seeded pair, one per level.
    FindRelation {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Iterate the commutator map of a proximal element.
    Dynamics {
        #[command(flatten)]
        common: Common,
        /// `diag:L`, `rot:THETA` or `exp:C1,C2,...`.
        #[arg(long)]
        g: Option<String>,
        #[arg(long)]
        h_seed: Option<u64>,
        /// Distance bound for the random start h.
        #[arg(long)]
        h_radius: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Closed-form relations in the affine group of the line.
    Affine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        s0: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Measure the commutator solver constants.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        group_samples: Option<usize>,
    },
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| x.to_string())
}

pub enum CliError {
    Config(ConfigError),
    Lie { phase: &'static str, err: LieError },
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Exit status for each error class.
pub fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Config(_) => 2,
        CliError::Io(_) => 15,
        CliError::Lie { err, .. } => match err {
            LieError::Usage(_) => 2,
            LieError::InvalidElement { .. } => 3,
            LieError::Chart { .. } => 4,
            LieError::Regime(_) => 5,
            LieError::Search(_) => 6,
            LieError::Correction { .. } => 7,
            LieError::Solver { .. } => 8,
            LieError::Size(_) => 9,
            LieError::Decomposition(_) => 10,
            LieError::Stagnation(_) => 11,
            LieError::ReduciblePair { .. } => 12,
            LieError::Basin(_) => 13,
            LieError::Cache(_) => 14,
            LieError::Io(_) => 15,
        },
    }
}

type Flag = (&'static str, Option<String>);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, keys, flags): (&str, Common, Vec<&str>, Vec<Flag>) = match &cli.command {
        Command::Net { common, net } => ("net", common.clone(), NET_KEYS.to_vec(), net.flags()),
        Command::Approx { common, net, engine } => {
            ("approx", common.clone(), [NET_KEYS, ENGINE_KEYS].concat(), [net.flags(), engine.flags()].concat())
        }
        Command::Rate { common, net, engine } => {
            ("rate", common.clone(), [NET_KEYS, ENGINE_KEYS].concat(), [net.flags(), engine.flags()].concat())
        }
        Command::FindRelation { common, net, engine } => {
            ("find-relation", common.clone(), [NET_KEYS, ENGINE_KEYS].concat(), [net.flags(), engine.flags()].concat())
        }
        Command::FactorCommutator { common, mode, delta, samples } => (
            "factor-commutator",
            common.clone(),
            vec!["mode", "delta", "samples"],
            vec![("mode", mode.clone()), ("delta", opt(delta)), ("samples", opt(samples))],
        ),
        Command::Dynamics { common, g, h_seed, h_radius, kmax } => (
            "dynamics",
            common.clone(),
            vec!["g", "h_seed", "h_radius", "kmax"],
            vec![("g", g.clone()), ("h_seed", opt(h_seed)), ("h_radius", opt(h_radius)), ("kmax", opt(kmax))],
        ),
        Command::Affine { common, s0, kmax } => {
            ("affine", common.clone(), vec!["s0", "kmax"], vec![("s0", opt(s0)), ("kmax", opt(kmax))])
        }
        Command::Calibrate { common, mode, samples, group_samples } => (
            "calibrate",
            common.clone(),
            vec!["mode", "samples", "group_samples"],
            vec![("mode", mode.clone()), ("samples", opt(samples)), ("group_samples", opt(group_samples))],
        ),
    };
    let allowed: Vec<&str> = [COMMON_KEYS.to_vec(), keys].concat();
    let result = Settings::load(common.config.as_deref(), &allowed, [common.flags(), flags].concat())
        .map_err(CliError::from)
        .and_then(|s| commands::run(name, &s));
    match result {
        Ok(manifest_path) => {
            eprintln!("wrote {}", manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Config(c) => eprintln!("error: config: {c}"),
                CliError::Lie { phase, err } => eprintln!("error: {phase}: {err}"),
                CliError::Io(io) => eprintln!("error: io: {io}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
