use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "activeeval", version, about = "Cost-aware active testing of multi-task robot policies")]
pub struct Cli {
    /// JSON campaign config overlaid on the defaults; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Campaign seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Offline replay of strategies against a spec with ground truth.
    Replay(ReplayArgs),
    /// Fill raw embeddings, fit PCA and write task embeddings for a manifest.
    Embed(EmbedArgs),
    /// Aggregate metrics CSVs over seeds on a common cost grid.
    Report(ReportArgs),
    /// Interactive campaign in the terminal.
    Live(LiveArgs),
    /// Run the HTTP campaign server.
    Serve(ServeArgs),
    /// Write a synthetic benchmark spec.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Dataset spec (JSON) with ground truth.
    #[arg(long)]
    pub spec: PathBuf,

    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "random_task,cost_eig")]
    pub strategies: Vec<String>,

    /// Comma-separated seeds; defaults to --seed or the config seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Stop after this many query steps.
    #[arg(long, group = "budget")]
    pub steps: Option<u64>,

    /// Stop once the dataset holds this many trials (warm start included).
    #[arg(long, group = "budget")]
    pub trials: Option<usize>,

    /// Stop once the ledger total reaches this amount.
    #[arg(long, group = "budget")]
    pub cost: Option<f64>,

    /// Task representation: random, language, verb or optimal.
    #[arg(long)]
    pub representation: Option<String>,

    #[arg(long, env = "EMBEDDING_ENDPOINT")]
    pub embedding_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Manifest: a JSON array of tasks.
    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub representation: Option<String>,

    #[arg(long, env = "EMBEDDING_ENDPOINT")]
    pub embedding_endpoint: Option<String>,

    /// Cache for fetched raw embeddings.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics CSVs or directories containing them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LiveArgs {
    /// Run an in-process campaign on this spec (or create one on --server).
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Base URL of a campaign server.
    #[arg(long)]
    pub server: Option<String>,

    /// Existing campaign on --server.
    #[arg(long, requires = "server")]
    pub campaign: Option<String>,

    #[arg(long)]
    pub strategy: Option<String>,

    #[arg(long)]
    pub representation: Option<String>,

    #[arg(long, env = "EMBEDDING_ENDPOINT")]
    pub embedding_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,

    /// Event logs and snapshots.
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,

    #[arg(long, env = "EMBEDDING_ENDPOINT")]
    pub embedding_endpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostStyleArg {
    Hamster,
    Openvla,
    Metaworld,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub policies: usize,

    #[arg(long, default_value_t = 20)]
    pub tasks: usize,

    #[arg(long, default_value_t = 4)]
    pub clusters: usize,

    #[arg(long)]
    pub binary: bool,

    #[arg(long, value_enum, default_value = "metaworld")]
    pub costs: CostStyleArg,

    #[arg(long, default_value_t = 64)]
    pub raw_dim: usize,

    /// Output file name inside --out-dir.
    #[arg(long, default_value = "synthetic.json")]
    pub name: String,
}
