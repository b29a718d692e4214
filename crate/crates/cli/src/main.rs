use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rationale_core::agent::{evaluate_greedy, rollout, train_agent, AgentConfig, QTable};
use rationale_core::checkpoint::{load_checkpoint, load_checkpoint_for};
use rationale_core::corpus::{load_jsonl, save_jsonl, synth_corpus};
use rationale_core::env::{render_ascii, Action, EnvConfig, Position};
use rationale_core::eval::{compare_configs, evaluate, export_stimuli};
use rationale_core::serialize::{Snapshot, ViewConfig};
use rationale_core::seq2seq::{DecodeMode, Hyperparams};
use rationale_core::trainer::{train, TrainConfig};
use rationale_cli::service::{router, Service};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "rationale", version, about = "Frogger rationale generation pipeline")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Board configuration JSON; the built-in board when omitted.
    #[arg(long, global = true)]
    env: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Focused,
    Complete,
}

#[derive(Subcommand)]
enum Command {
    /// Train the tabular Q-learning agent.
    AgentTrain {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<u64>,
        /// Per-episode CSV (episode, return, success).
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        eval_episodes: u64,
    },
    /// Play one greedy episode with a trained Q-table.
    Rollout {
        #[arg(long)]
        q: PathBuf,
    },
    /// Write a template-labelled corpus from random play.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a rationale generator.
    Train {
        #[arg(long, value_enum)]
        view: View,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
        /// Hyperparameter JSON; individual flags below override it.
        #[arg(long)]
        hyper: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        embed: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Generate a rationale for one state.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        /// JSON object with `grid`, `frog`, `lives` and `action` (a corpus record works).
        #[arg(long)]
        state: PathBuf,
        /// Overrides the state's action.
        #[arg(long)]
        action: Option<Action>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score one or both generator configurations on a test corpus.
    Eval {
        #[arg(long)]
        focused: Option<PathBuf>,
        #[arg(long)]
        complete: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Pool for the random baseline; defaults to the test corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Export perception-study stimuli.
    Stimuli {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        actions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Serve the collection API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for per-session JSONL journals.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct StateInput {
    grid: String,
    frog: [usize; 2],
    lives: u32,
    action: Option<Action>,
}

fn mode(beam: Option<usize>) -> DecodeMode {
    beam.map_or(DecodeMode::Greedy, DecodeMode::Beam)
}

fn load_env(path: Option<&Path>, seed: u64) -> Result<EnvConfig> {
    let env = match path {
        Some(p) => EnvConfig::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => EnvConfig::default(),
    };
    env.validate()?;
    Ok(env.with_seed(seed))
}

/// A single JSON object, or the first line of a JSONL file.
fn read_state(path: &Path) -> Result<StateInput> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .or_else(|_| serde_json::from_str(text.lines().find(|l| !l.trim().is_empty()).unwrap_or("")))
        .with_context(|| format!("parsing state in {}", path.display()))
}

fn run(cli: Cli) -> Result<Value> {
    let seed = cli.seed;
    let env = load_env(cli.env.as_deref(), seed)?;
    Ok(match cli.command {
        Command::AgentTrain { out, episodes, stats, eval_episodes } => {
            let mut cfg = AgentConfig { seed, ..AgentConfig::default() };
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            let (q, train_stats) = train_agent(&env, &cfg)?;
            q.save(&out)?;
            if let Some(p) = &stats {
                std::fs::write(p, train_stats.to_csv())?;
            }
            json!({
                "episodes": cfg.episodes,
                "states": q.len(),
                "greedy_success": evaluate_greedy(&q, &env, eval_episodes)?,
                "q_max_abs": q.max_abs(),
                "q_bound": cfg.q_bound(),
                "out": out,
            })
        }
        Command::Rollout { q } => {
            let q = QTable::load(&q)?;
            let t = rollout(&q, &env, seed)?;
            let steps: Vec<Value> = t
                .steps
                .iter()
                .map(|(s, a)| json!({ "tick": s.tick, "frog": [s.frog.col, s.frog.row], "lives": s.lives, "action": a, "board": render_ascii(s) }))
                .collect();
            json!({ "seed": seed, "status": t.final_state.status, "steps": steps, "final_board": render_ascii(&t.final_state) })
        }
        Command::Synth { n, out } => {
            let records = synth_corpus(&env, n, seed)?;
            save_jsonl(&records, &out)?;
            json!({ "records": records.len(), "out": out, "seed": seed })
        }
        Command::Train { view, corpus, val, out, hyper, hidden, embed, epochs, lr, batch, min_freq, loss_csv } => {
            let mut h: Hyperparams = match hyper {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => Hyperparams::default(),
            };
            h.seed = seed;
            h.hidden_size = hidden.unwrap_or(h.hidden_size);
            h.embed_size = embed.unwrap_or(h.embed_size);
            h.epochs = epochs.unwrap_or(h.epochs);
            h.learning_rate = lr.unwrap_or(h.learning_rate);
            h.batch_size = batch.unwrap_or(h.batch_size);
            let train_set = load_jsonl(&corpus)?;
            let val_set = match val {
                Some(p) => load_jsonl(&p)?,
                None => Vec::new(),
            };
            let cfg = TrainConfig {
                view: match view {
                    View::Focused => ViewConfig::focused(),
                    View::Complete => ViewConfig::complete(),
                },
                hyper: h,
                min_freq,
                checkpoint: Some(out),
                ..TrainConfig::default()
            };
            let (_, run) = train(&train_set, &val_set, env.dims(), &cfg)?;
            if let Some(p) = &loss_csv {
                std::fs::write(p, run.loss_csv())?;
            }
            serde_json::to_value(run)?
        }
        Command::Generate { ckpt, state, action, beam } => {
            let gen = load_checkpoint(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            let input = read_state(&state)?;
            let Some(action) = action.or(input.action) else {
                bail!("the state has no action and --action was not given");
            };
            let snap = Snapshot::from_grid(
                &input.grid,
                gen.dims.width,
                gen.dims.height,
                Position::new(input.frog[0], input.frog[1]),
                input.lives,
                &gen.alphabet,
            )?;
            let text = gen.rationale(&snap, action, mode(beam))?;
            json!({ "action": action, "rationale": text })
        }
        Command::Eval { focused, complete, test, corpus, beam } => {
            let test_set = load_jsonl(&test)?;
            let pool = match corpus {
                Some(p) => load_jsonl(&p)?,
                None => test_set.clone(),
            };
            match (focused, complete) {
                (Some(f), Some(c)) => {
                    let f = load_checkpoint(&f)?;
                    let c = load_checkpoint_for(&c, &f.vocab.hash())?;
                    let (a, b) = compare_configs(&f, &c, &test_set, &pool, mode(beam), seed)?;
                    json!({ "focused": a, "complete": b })
                }
                (Some(p), None) | (None, Some(p)) => {
                    let g = load_checkpoint(&p)?;
                    serde_json::to_value(evaluate(&g, &test_set, &pool, mode(beam), seed)?)?
                }
                (None, None) => bail!("give --focused and/or --complete"),
            }
        }
        Command::Stimuli { ckpt, actions, corpus, beam } => {
            let gen = load_checkpoint(&ckpt)?;
            let set = export_stimuli(&load_jsonl(&actions)?, &gen, &load_jsonl(&corpus)?, mode(beam), seed)?;
            serde_json::to_value(set)?
        }
        Command::Serve { port, host, journal } => {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                let addr = listener.local_addr()?;
                println!("{}", json!({ "listening": addr.to_string() }));
                axum::serve(listener, router(Service::new(env, journal))).await?;
                anyhow::Ok(())
            })?;
            json!({ "stopped": true })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON values serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
