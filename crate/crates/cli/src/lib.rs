//! Command-line front end: argument parsing, run configuration and the
//! stage commands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use collab_retarget::Error;
use serde::Serialize;

pub use config::RunConfig;

/// Failure of one command invocation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// Process exit code: 2 configuration, 3 input or I/O, 4 numerical
    /// failure, 5 every candidate rejected.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                Error::Config { .. } => 2,
                Error::NonFiniteLoss { .. } | Error::IsoOutOfRange { .. } | Error::IncompatibleLattice(_) => 4,
                Error::AllCandidatesRejected => 5,
                _ => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config_error",
            CliError::Io(_) => "io_error",
            CliError::Core(e) => e.kind(),
        }
    }

    /// Machine-readable error record written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<&'a str>,
        }
        let path = match self {
            CliError::Config { path, .. } => Some(path.as_str()),
            CliError::Core(Error::Config { path, .. }) => Some(path.as_str()),
            _ => None,
        };
        let record = Record { error: self.kind(), exit_code: self.exit_code(), message: self.to_string(), path };
        serde_json::to_string(&record).expect("error record serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "collab-retarget", version, about = "Retarget two-person object manipulation motions onto new object shapes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Signed distance fields.
    #[command(subcommand)]
    Sdf(SdfCommand),
    /// Morph sequence between two meshes; optionally transfer a candidate pool.
    Morph {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Pool whose candidates are transferred to the target surface.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Contact candidates.
    #[command(subcommand)]
    Contacts(ContactsCommand),
    /// Single retargeting stages.
    #[command(subcommand)]
    Retarget(RetargetCommand),
    /// Ranking discriminator.
    #[command(subcommand)]
    Disc(DiscCommand),
    /// Beam-search selection for one source motion.
    Select {
        #[arg(long)]
        source_mesh: PathBuf,
        #[arg(long)]
        target_mesh: PathBuf,
        #[arg(long)]
        motion: PathBuf,
        /// Retargeted object track of `motion`.
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Full retargeting of every source motion onto every target mesh.
    Pipeline {
        #[arg(long)]
        source_mesh: PathBuf,
        #[arg(long = "target", required = true)]
        targets: Vec<PathBuf>,
        #[arg(long = "motion", required = true)]
        motions: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Error metrics of a predicted motion against a reference.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Object mesh shared by both motions.
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Kinematic retargeting of both agents onto a humanoid chain.
    Humanoid {
        #[arg(long)]
        motion: PathBuf,
        /// Chain description (default: built-in 19-DoF biped).
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Joint pair map (default: built-in map for the built-in chain).
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Scripted two-person scene around a box, for testing and demos.
    ToyScene {
        #[arg(long, value_enum, default_value_t = ToyKindArg::Carry)]
        kind: ToyKindArg,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        /// Box half extents in metres, `x,y,z`.
        #[arg(long, value_delimiter = ',', default_values_t = [0.35, 0.2, 0.15])]
        half: Vec<f64>,
        /// Box tessellation cell size in metres.
        #[arg(long, default_value_t = 0.02)]
        cell: f64,
        /// Output file stem.
        #[arg(long)]
        name: Option<String>,
        /// Object id recorded in the motion (default: the file stem).
        #[arg(long)]
        object_id: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SdfCommand {
    /// Grid SDF of a watertight OBJ mesh.
    Build {
        #[arg(long)]
        mesh: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ContactsCommand {
    /// Deduplicated contact candidate pool of the given motions.
    Extract {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long = "motion", required = true)]
        motions: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RetargetCommand {
    /// Object stage: fit the source object trajectory to a new mesh.
    Object {
        #[arg(long)]
        motion: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Human stage: fit both agents to a target track and contact constraint.
    Human {
        #[arg(long)]
        motion: PathBuf,
        /// Source object mesh, used for the per-frame contact masks.
        #[arg(long)]
        source_mesh: PathBuf,
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        constraint: PathBuf,
        /// Object id of the output motion (default: track file stem).
        #[arg(long)]
        object_id: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DiscCommand {
    /// Ranking pairs from noised copies of the given motions.
    GenPairs {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long = "motion", required = true)]
        motions: Vec<PathBuf>,
    },
    /// Trains a ranking model on a pairs file.
    Train {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Mean plausibility score of each motion.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "motion", required = true)]
        motions: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyKindArg {
    Carry,
    Handover,
}

/// Loads the configuration, applies the global overrides, sizes the thread
/// pool and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if cli.global.jobs == Some(0) {
        return Err(CliError::Config { path: "--jobs".into(), message: "must be positive".into() });
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cli.global.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.global.out.display())))?;
    pool.install(|| commands::dispatch(&cli.command, &cfg, &cli.global.out))
}
