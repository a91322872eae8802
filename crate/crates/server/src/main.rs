use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use langrid_core::adapters::{self, AdapterKind, AdapterSpec};
use langrid_core::encoders::{EncoderKind, EncoderSpec};
use langrid_core::env::EnvironmentRef;
use langrid_core::gateway::{embedding_backend, Gateway, GatewayConfig, Transcript};
use langrid_core::instructions::{Decision, SessionItem};
use langrid_core::observations::{collect, CollectMode};
use langrid_core::runner::{
    import_published, run_pipeline, write_results, AutoAccept, Confirmer, ExperimentConfig, PipelineOutput,
    RunContext, Summary,
};
use langrid_server::{router, AppState, ServerOptions, DEFAULT_BIND};

#[derive(Parser)]
#[command(name = "langrid", version, about = "Language-grounded RL experiment workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = DEFAULT_BIND)]
        bind: String,
        #[arg(long)]
        results_dir: Option<PathBuf>,
        #[arg(long)]
        stores_dir: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Collect an observation store and save it.
    CollectObservations {
        /// `name/sub_config`, e.g. `maze/umaze`.
        #[arg(long)]
        env: String,
        #[arg(long, value_enum, default_value_t = Adapter::Rule)]
        adapter: Adapter,
        #[arg(long, value_enum, default_value_t = Encoder::Bow)]
        encoder: Encoder,
        #[arg(long, default_value_t = 384)]
        dim: usize,
        /// Random-exploration episodes; enumerates every state when absent.
        #[arg(long)]
        explore: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Run an experiment config (a TOML file or `published:<name>`).
    Run {
        #[arg(long)]
        config: String,
        /// Accept every proposed sub-goal without asking.
        #[arg(long)]
        auto_confirm: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Re-run a recorded transcript offline.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Adapter {
    Numeric,
    Rule,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoder {
    Bow,
    Hash,
    RemoteEmbed,
}

type Error = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Serve {
            bind,
            results_dir,
            stores_dir,
            cache_dir,
        } => serve(&bind, results_dir, stores_dir, cache_dir),
        Command::CollectObservations {
            env,
            adapter,
            encoder,
            dim,
            explore,
            seed,
            out,
            cache_dir,
        } => collect_observations(&env, adapter, encoder, dim, explore, seed, &out, cache_dir),
        Command::Run {
            config,
            auto_confirm,
            out,
            cache_dir,
        } => run(&config, auto_confirm, out, cache_dir),
        Command::Replay { transcript, out } => replay(&transcript, out),
    }
}

fn embeddings() -> Option<Arc<dyn langrid_core::gateway::EmbeddingBackend>> {
    let base = std::env::var("LANGRID_EMBED_BASE").ok()?;
    Some(embedding_backend(&GatewayConfig {
        base_url: base,
        ..GatewayConfig::default()
    }))
}

fn gateway() -> Result<Option<Arc<Gateway>>, Error> {
    Ok(Gateway::from_env()?.map(Arc::new))
}

fn serve(
    bind: &str,
    results_dir: Option<PathBuf>,
    stores_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
) -> Result<(), Error> {
    let state = AppState::new(ServerOptions {
        gateway: gateway()?,
        embeddings: embeddings(),
        cache_dir,
        results_dir,
        stores_dir,
    });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
fn collect_observations(
    env: &str,
    adapter: Adapter,
    encoder: Encoder,
    dim: usize,
    explore: Option<u32>,
    seed: u64,
    out: &Path,
    cache_dir: Option<PathBuf>,
) -> Result<(), Error> {
    let (name, sub) = env
        .split_once('/')
        .ok_or_else(|| format!("--env wants name/sub_config, got {env:?}"))?;
    let spec = EnvironmentRef::new(name, sub).resolve()?;
    let kind = match adapter {
        Adapter::Numeric => AdapterKind::Numeric,
        Adapter::Rule => AdapterKind::Rule,
        Adapter::Llm => AdapterKind::Llm,
    };
    let adapter = adapters::build(&AdapterSpec::new(kind), spec.clone(), gateway()?, cache_dir.as_deref())?;
    let encoder = match encoder {
        Encoder::Bow => EncoderSpec {
            id: EncoderKind::Bow,
            dim: 0,
            vocab: None,
            model: None,
        },
        Encoder::Hash => EncoderSpec::hash(dim),
        Encoder::RemoteEmbed => EncoderSpec {
            id: EncoderKind::RemoteEmbed,
            dim,
            vocab: None,
            model: Some(std::env::var("LANGRID_EMBED_MODEL").unwrap_or_else(|_| "all-MiniLM-L6-v2".into())),
        },
    };
    let mode = match explore {
        Some(episodes) => CollectMode::Explore { episodes },
        None => CollectMode::Enumerate,
    };
    let store = collect(&spec, adapter.as_ref(), &encoder, embeddings(), mode, seed)?;
    store.save(out)?;
    println!("{} records ({} dims) written to {}", store.len(), store.dim(), out.display());
    Ok(())
}

fn load_config(arg: &str) -> Result<ExperimentConfig, Error> {
    Ok(match arg.strip_prefix("published:") {
        Some(name) => import_published(name)?,
        None => ExperimentConfig::load(Path::new(arg))?,
    })
}

/// Asks on the terminal about each proposed sub-goal.
struct Terminal;

impl Confirmer for Terminal {
    fn decide(&mut self, item: &SessionItem) -> Decision {
        let mut out = std::io::stdout();
        let _ = writeln!(out, "\n#{} {}", item.instruction.order, item.instruction.text);
        let _ = writeln!(out, "   status: {:?}, rounds used: {}", item.status, item.rounds.len());
        for c in &item.candidates {
            let _ = writeln!(out, "   {:>8}  score {:.3}", c.state_id, c.score);
        }
        let states: Vec<&str> = item.states.iter().map(|s| s.id.as_str()).collect();
        let _ = writeln!(out, "   proposed sub-goal: {}", states.join(" "));
        loop {
            let _ = write!(out, "[a]ccept, [r]eject, [e]dit <text>: ");
            let _ = out.flush();
            let mut line = String::new();
            if std::io::stdin().lock().read_line(&mut line).unwrap_or(0) == 0 {
                eprintln!("\nstdin closed before every instruction was confirmed; use --auto-confirm");
                std::process::exit(2);
            }
            let line = line.trim();
            match line.split_once(' ').unwrap_or((line, "")) {
                ("a" | "accept", _) => return Decision::Accept,
                ("r" | "reject", _) => return Decision::Reject,
                ("e" | "edit", text) if !text.trim().is_empty() => return Decision::Edit(text.trim().into()),
                _ => {}
            }
        }
    }
}

fn print_summary(summary: &Summary) {
    println!("{:<28} {:>10} {:>10} {:>8}", "arm", "train", "test", "goal");
    for arm in &summary.arms {
        println!(
            "{:<28} {:>10.4} {:>10.4} {:>8.3}",
            arm.name, arm.train.mean, arm.test.mean, arm.test.goal_rate
        );
    }
}

/// SHA-256 over every result file, in path order.
fn results_digest(dir: &Path) -> Result<String, Error> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(dir)?.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn finish(out: &PipelineOutput, dir: &Path) -> Result<(), Error> {
    let (summary, _) = write_results(dir, &out.run)?;
    if let Some(session) = &out.session {
        session.save(&dir.join("session.json"))?;
    }
    print_summary(&summary);
    println!("results in {} (digest {})", dir.display(), results_digest(dir)?);
    Ok(())
}

fn run(config: &str, auto_confirm: bool, out: Option<PathBuf>, cache_dir: Option<PathBuf>) -> Result<(), Error> {
    let config = load_config(config)?;
    let ctx = RunContext {
        gateway: gateway()?,
        embeddings: embeddings(),
        cache_dir,
        ..RunContext::default()
    };
    let output = if auto_confirm {
        run_pipeline(&config, &ctx, &mut AutoAccept)?
    } else {
        run_pipeline(&config, &ctx, &mut Terminal)?
    };
    // a recorded transcript gets the config needed to replay it
    if std::env::var("LANGRID_LLM_MODE").is_ok_and(|m| m.eq_ignore_ascii_case("record")) {
        if let Ok(path) = std::env::var("LANGRID_TRANSCRIPT") {
            let path = PathBuf::from(path);
            let mut t = if path.exists() { Transcript::load(&path)? } else { Transcript::default() };
            t.config = Some(output.replay_config.to_toml());
            t.save(&path)?;
            println!("transcript saved to {}", path.display());
        }
    }
    let dir = out.unwrap_or_else(|| PathBuf::from("results").join(&config.name));
    finish(&output, &dir)
}

fn replay(transcript: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let t = Transcript::load(transcript)?;
    let text = t
        .config
        .clone()
        .ok_or("the transcript carries no experiment config")?;
    let config = ExperimentConfig::from_toml(&text)?;
    println!("transcript digest {}", t.digest());
    let ctx = RunContext {
        gateway: Some(Arc::new(Gateway::replay(t, true))),
        ..RunContext::default()
    };
    let output = run_pipeline(&config, &ctx, &mut AutoAccept)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("results").join(format!("{}_replay", config.name)));
    finish(&output, &dir)
}
