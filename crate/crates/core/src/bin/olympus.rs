// SPDX-License-Identifier: Apache-2.0

//! Operator command line: run the service, seed fixtures, issue tokens,
//! export and import catalogues.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use olympus::assets::AssetPolicy;
use olympus::model::Role;
use olympus::persistence::{read_bundle, write_bundle, ImportMode};
use olympus::storage::DirStorage;
use olympus::{server, Config, Error, Olympus, Result};

#[derive(Parser)]
#[command(name = "olympus", version, about = "Evidence-backed IoT product profiles")]
struct Cli {
    /// Directory holding state, users and assets.
    #[arg(long, env = "DATA_DIR", default_value = "./data", global = true)]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        /// Largest accepted asset upload, in MiB.
        #[arg(long, env = "MAX_ASSET_MB", default_value_t = 50)]
        max_asset_mb: u64,
    },
    /// Replace all state with a fixture bundle (directory or catalogue.json).
    Seed { path: PathBuf },
    /// Create or update a user and print a new bearer token.
    Token {
        display_name: String,
        /// Comma-separated roles: crowd_worker, admin, student.
        #[arg(default_value = "")]
        roles: String,
    },
    /// Write the catalogue to stdout, or a bundle directory with --out.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a bundle (directory or catalogue.json).
    Import {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::FailOnConflict)]
        mode: Mode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Replace,
    FailOnConflict,
}

impl From<Mode> for ImportMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Replace => ImportMode::Replace,
            Mode::FailOnConflict => ImportMode::FailOnConflict,
        }
    }
}

fn open(data_dir: &std::path::Path, config: Config) -> Result<Olympus> {
    let storage = DirStorage::open(data_dir)?;
    Olympus::open(Box::new(storage), config)
}

fn parse_roles(raw: &str) -> Result<Vec<Role>> {
    raw.split(',')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| r.parse::<Role>())
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { port, max_asset_mb } => {
            let config = Config {
                assets: AssetPolicy::with_max_mb(max_asset_mb),
                ..Config::default()
            };
            let svc = Arc::new(open(&cli.data_dir, config)?);
            let listener = server::bind(port)?;
            let runtime = tokio::runtime::Runtime::new()?;
            tracing::info!(port, data_dir = %cli.data_dir.display(), "serving");
            println!("listening on http://0.0.0.0:{port}");
            runtime.block_on(server::serve(svc, listener, async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
        }
        Command::Seed { path } => {
            let (doc, assets) = read_bundle(&path)?;
            let svc = open(&cli.data_dir, Config::default())?;
            let summary = svc.import_catalogue(doc, ImportMode::Replace, &assets)?;
            println!("templates: {}, masters: {}", summary.templates, summary.masters);
        }
        Command::Token { display_name, roles } => {
            let roles = parse_roles(&roles)?;
            if roles.is_empty() {
                return Err(Error::EmptyRoles);
            }
            let svc = open(&cli.data_dir, Config::default())?;
            let (_, token) = svc.issue_token(&display_name, &roles)?;
            println!("{token}");
        }
        Command::Export { out } => {
            let svc = open(&cli.data_dir, Config::default())?;
            match out {
                Some(dir) => {
                    let (doc, assets) = svc.export_bundle()?;
                    write_bundle(&dir, &doc, &assets)?;
                    println!("wrote {}", dir.display());
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&svc.export_catalogue().to_json_bytes())?;
                }
            }
        }
        Command::Import { path, mode } => {
            let (doc, assets) = read_bundle(&path)?;
            let svc = open(&cli.data_dir, Config::default())?;
            let summary = svc.import_catalogue(doc, mode.into(), &assets)?;
            println!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {} ({})", err, err.code());
            ExitCode::FAILURE
        }
    }
}
