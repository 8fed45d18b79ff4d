use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use moe_trace::{cmd_analyze, cmd_run, cmd_serve_mock, AnalyzeOptions, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "moe-trace",
    about = "Tree-search branching generation against an MoE endpoint, with routed-expert trace capture and compile-equivalence routing-locality analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the deterministic mock /generate endpoint.
    ServeMock {
        /// Mock config JSON; omit to use a built-in preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in preset when no config file is given: c-demo | scripted.
        #[arg(long, default_value = "c-demo")]
        preset: String,
        #[arg(long, default_value = "127.0.0.1:30000")]
        addr: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expand a generation tree against an endpoint and persist the store.
    Run {
        /// Run config JSON; omit for defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        p_target: Option<f64>,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        timeout: Option<u64>,
        #[arg(long)]
        max_concurrent: Option<usize>,
        /// Endpoint URL override (also: MOE_TRACE_ENDPOINT).
        #[arg(long)]
        endpoint: Option<String>,
        /// Endpoint-profile JSON remapping wire field names.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Analyze a finalized store into tables, figures, and report.json.
    Analyze {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pair-sampling seed (default: the run seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Compiler command template, {in} and {out} substituted.
        #[arg(long)]
        compiler: Option<String>,
        /// Skip compile-equivalence grouping; sibling analysis only.
        #[arg(long)]
        skip_compile: bool,
        /// Cap on sampled between-group node pairs.
        #[arg(long, default_value_t = 20_000)]
        pair_cap: usize,
    },
}

async fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ServeMock { config, preset, addr, seed } => {
            let cfg = match config {
                Some(path) => mock_moe::MockConfig::load(&path)
                    .map_err(|e| CliError::Config(e.to_string()))?,
                None => match preset.as_str() {
                    "c-demo" => {
                        mock_moe::c_demo_config(seed.unwrap_or(0), mock_moe::crossing_lambda(40))
                    }
                    "scripted" => mock_moe::scripted_three_way_root(seed.unwrap_or(0)),
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown preset `{other}` (expected c-demo or scripted)"
                        )))
                    }
                },
            };
            let addr: SocketAddr = addr
                .parse()
                .map_err(|e| CliError::Config(format!("bad --addr {addr}: {e}")))?;
            cmd_serve_mock(cfg, addr).await
        }
        Command::Run { config, out, seed, p_target, timeout, max_concurrent, endpoint, profile } => {
            let opts = RunOptions {
                seed,
                p_target,
                timeout_secs: timeout,
                max_concurrent,
                endpoint,
                profile,
            };
            cmd_run(config.as_deref(), &out, &opts).await.map(|_| ())
        }
        Command::Analyze { store, out, seed, compiler, skip_compile, pair_cap } => {
            let opts = AnalyzeOptions { seed, compiler, skip_compile, pair_cap };
            cmd_analyze(&store, &out, &opts).map(|_| ())
        }
    }
}

#[tokio::main]
async fn main() {
    let level = std::env::var("MOE_TRACE_LOG")
        .ok()
        .and_then(|s| s.parse::<tracing::Level>().ok())
        .unwrap_or(tracing::Level::INFO);
    tracing_subscriber::fmt().with_max_level(level).with_target(false).init();
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli).await {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
