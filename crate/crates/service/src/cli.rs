//! `imagine` command line: the offline pipeline, evaluation, and the chat
//! service.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use imagine_backend::{Backend, BackendKind};
use imagine_core::corpus::{corpus_hash, read_corpus, write_corpus};
use imagine_core::mdp::build_dataset;
use imagine_core::{Dialogue, TaskDescription, Tokenizer, Utterance, Vocab};
use imagine_engine::corpus::request_seed;
use imagine_engine::critique::{critique_request, fallback, report_from_completion};
use imagine_engine::persona::PERSONAS_FILE;
use imagine_engine::{generate_corpus, read_personas, synthesize_personas, write_personas, Persona};
use imagine_learners::policy::{write_bc_log, write_rl_log};
use imagine_learners::{
    filter_successful, train_bc, train_rl, BaseModel, ContextMlp, MlpSpec, PolicyArtifact, PolicyKind, TrainConfig,
};
use imagine_sim::ablation::world_vocab;
use imagine_sim::{evaluate, DialogueAgent, HumanDriver, MockWorld, PolicyAgent};

use crate::api;
use crate::config::{parse_key_values, PipelineConfig};
use crate::error::ServiceError;
use crate::registry::Registry;
use crate::service::{ChatService, EMPTY_REPLY};
use crate::sessions::SessionStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HumanChoice {
    Scripted,
    Llm,
}

#[derive(Debug, Parser)]
#[command(name = "imagine", version, about = "Imagination-engine pipeline, evaluation and chat service")]
pub struct Cli {
    /// Config file, JSON or `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,
    /// Seeds generation, training and evaluation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set train.tau=0.7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct TaskArg {
    /// Task bundle directory.
    #[arg(long)]
    pub task: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskArg,
    /// Corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize personas from the task's reasoning prompt.
    Personas {
        #[command(flatten)]
        task: TaskArg,
        /// Write here instead of caching in the bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled dialogue corpus.
    Imagine {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        success_ratio: Option<f64>,
        #[arg(long)]
        critique_rounds: Option<usize>,
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Corpus JSONL; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Revise an existing corpus with critique passes.
    Critique {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long)]
        personas: Option<PathBuf>,
    },
    /// Tokenize a corpus into the transition dataset.
    Postprocess {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for vocab.json and dataset.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavior cloning on the whole corpus.
    TrainBc(TrainArgs),
    /// Behavior cloning on successful dialogues only.
    TrainFbc(TrainArgs),
    /// Offline RL value heads over a behavior-cloned base.
    TrainRl {
        #[command(flatten)]
        train: TrainArgs,
        /// Existing BC checkpoint to start from; trained first when absent.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Evaluate a checkpoint against simulated humans.
    EvalSim {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum, default_value = "scripted")]
        human: HumanChoice,
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// One row per episode.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Host registered policies over HTTP.
    Serve {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Chat with a checkpoint in the terminal.
    Chat {
        #[command(flatten)]
        task: TaskArg,
        #[arg(long)]
        policy: PathBuf,
    },
}

type CliResult<T> = Result<T, ServiceError>;

fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                merge(d.entry(k).or_insert(Value::Null), v);
            }
        }
        (d, s) => *d = s,
    }
}

fn pipeline_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if !cli.overrides.is_empty() {
        let mut value = serde_json::to_value(&cfg)?;
        merge(&mut value, parse_key_values(&cli.overrides.join("\n"))?);
        cfg = serde_json::from_value(value).map_err(|e| ServiceError::Config(e.to_string()))?;
    }
    if let Some(seed) = cli.seed {
        cfg.generate.seed = seed;
        cfg.train.seed = seed;
        cfg.bc.seed = seed;
        cfg.eval.seed = seed;
    }
    match cli.backend {
        Some(BackendChoice::Mock) => cfg.backend.kind = BackendKind::Mock,
        Some(BackendChoice::Http) => cfg.backend.kind = BackendKind::Http,
        None => {}
    }
    Ok(cfg)
}

fn load_task(arg: &TaskArg) -> CliResult<TaskDescription> {
    Ok(TaskDescription::load_bundle(&arg.task)?)
}

/// The mock backend plays every LLM role from the task's catalog, with the
/// bundle's canned reasoning output when it has one.
fn make_backend(cfg: &PipelineConfig, task: &TaskDescription, dir: &Path) -> CliResult<Backend> {
    match cfg.backend.kind {
        BackendKind::Mock => {
            let canned = fs::read_to_string(dir.join("mock").join("reasoning.txt")).ok();
            let world = MockWorld::new(task.clone(), canned);
            Ok(Backend::mock(cfg.backend.clone(), world.backend())?)
        }
        BackendKind::Http => Ok(Backend::http(cfg.backend.clone())?),
    }
}

fn personas_for(
    explicit: Option<&Path>,
    dir: &Path,
    task: &TaskDescription,
    backend: &Backend,
    seed: u64,
) -> CliResult<Vec<Persona>> {
    if let Some(p) = explicit {
        return Ok(read_personas(p)?);
    }
    let cached = dir.join(PERSONAS_FILE);
    if cached.exists() {
        return Ok(read_personas(cached)?);
    }
    Ok(synthesize_personas(task, backend, seed)?)
}

fn write_jsonl_or_stdout(out: Option<&Path>, dialogues: &[Dialogue]) -> CliResult<()> {
    match out {
        Some(p) => write_corpus(p, dialogues)?,
        None => io::stdout().write_all(imagine_core::corpus::to_jsonl(dialogues).as_bytes())?,
    }
    Ok(())
}

fn print_json(label: &str, value: &impl serde::Serialize) -> CliResult<()> {
    println!("{label}: {}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn mlp(vocab: &Vocab, hidden: usize, seed: u64) -> ContextMlp {
    let mut spec = MlpSpec::new(vocab.tokens().len(), vocab.specials());
    spec.hidden_dim = hidden;
    ContextMlp::new(spec, seed)
}

fn train_behavior(
    kind: PolicyKind,
    task: &TaskDescription,
    corpus: &[Dialogue],
    cfg: &TrainConfig,
    hidden: usize,
) -> CliResult<(PolicyArtifact, Vec<imagine_learners::BcLogRow>)> {
    let vocab = world_vocab(task, corpus);
    let data: Vec<Dialogue> = match kind {
        PolicyKind::Fbc => filter_successful(corpus),
        _ => corpus.to_vec(),
    };
    if data.is_empty() {
        return Err(ServiceError::BadRequest("no dialogues to train on".into()));
    }
    let (model, log) = train_bc(&data, &vocab, mlp(&vocab, hidden, cfg.seed), cfg)?;
    let art = PolicyArtifact::new(kind, BaseModel::Mlp(model), None, 0.0, vocab, &task.task_id, cfg, &corpus_hash(&data))?;
    Ok((art, log))
}

fn apply_train_args(cfg: &mut TrainConfig, args: &TrainArgs) {
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
}

fn run_command(cli: &Cli) -> CliResult<()> {
    let cfg = pipeline_config(cli)?;
    match &cli.command {
        Command::Personas { task: t, out } => {
            let task = load_task(t)?;
            let backend = make_backend(&cfg, &task, &t.task)?;
            let personas = synthesize_personas(&task, &backend, cfg.generate.seed)?;
            let path = out.clone().unwrap_or_else(|| t.task.join(PERSONAS_FILE));
            write_personas(&path, &personas)?;
            for p in &personas {
                println!("{}\t{}", p.persona_id, p.description);
            }
            eprintln!("wrote {} personas to {}", personas.len(), path.display());
        }
        Command::Imagine {
            task: t,
            n,
            success_ratio,
            critique_rounds,
            personas,
            out,
        } => {
            let task = load_task(t)?;
            let backend = make_backend(&cfg, &task, &t.task)?;
            let mut gen = cfg.generate.clone();
            gen.n = n.unwrap_or(gen.n);
            gen.success_ratio = success_ratio.unwrap_or(gen.success_ratio);
            gen.critique_rounds = critique_rounds.unwrap_or(gen.critique_rounds);
            let personas = personas_for(personas.as_deref(), &t.task, &task, &backend, gen.seed)?;
            let report = generate_corpus(&task, &personas, &gen, &backend)?;
            write_jsonl_or_stdout(out.as_deref(), &report.dialogues)?;
            let successes = report.dialogues.iter().filter(|d| d.reward == 1).count();
            eprintln!(
                "imagined {} dialogues ({successes} successful, {} failed specs, {} revised by critique)",
                report.dialogues.len(),
                report.failed.len(),
                report.critique_changed
            );
        }
        Command::Critique {
            task: t,
            input,
            out,
            rounds,
            personas,
        } => {
            let task = load_task(t)?;
            let backend = make_backend(&cfg, &task, &t.task)?;
            let personas = personas_for(personas.as_deref(), &t.task, &task, &backend, cfg.generate.seed)?;
            let mut dialogues = read_corpus(input)?;
            let (mut changed, mut fallbacks) = (0, 0);
            for round in 0..*rounds {
                let reqs = dialogues
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let seed = request_seed(cfg.generate.seed, i, 3, round);
                        critique_request(&task, &personas, d, &cfg.generate.sampling, seed)
                    })
                    .collect::<imagine_engine::Result<Vec<_>>>()?;
                let results = backend.complete_batch(&reqs);
                for (d, res) in dialogues.iter_mut().zip(results) {
                    let report = match res {
                        Ok(r) => report_from_completion(&task, d, &r.text),
                        Err(e) => fallback(&task, d, e.to_string()),
                    };
                    changed += usize::from(report.changed);
                    fallbacks += usize::from(report.fallback_reason.is_some());
                    *d = report.revised;
                }
            }
            write_jsonl_or_stdout(out.as_deref(), &dialogues)?;
            eprintln!("critiqued {} dialogues: {changed} revised, {fallbacks} kept after unusable revisions", dialogues.len());
        }
        Command::Postprocess { task: t, input, out } => {
            let task = load_task(t)?;
            let corpus = read_corpus(input)?;
            let vocab = world_vocab(&task, &corpus);
            let ds = build_dataset(&corpus, &vocab)?;
            fs::create_dir_all(out)?;
            fs::write(out.join("vocab.json"), serde_json::to_vec_pretty(&vocab)?)?;
            fs::write(out.join("dataset.json"), serde_json::to_vec(&ds)?)?;
            println!(
                "{} dialogues, {} transitions, {} tokens in vocabulary {}",
                corpus.len(),
                ds.len(),
                vocab.tokens().len(),
                vocab.vocab_id()
            );
        }
        Command::TrainBc(args) | Command::TrainFbc(args) => {
            let kind = if matches!(cli.command, Command::TrainBc(_)) { PolicyKind::Bc } else { PolicyKind::Fbc };
            let mut bc = cfg.bc.clone();
            apply_train_args(&mut bc, args);
            print_json("config", &bc)?;
            if args.dry_run {
                return Ok(());
            }
            let task = load_task(&args.task)?;
            let corpus = read_corpus(&args.corpus)?;
            let (art, log) = train_behavior(kind, &task, &corpus, &bc, args.hidden_dim.unwrap_or(cfg.hidden_dim))?;
            art.save(&args.out)?;
            write_bc_log(args.out.join("train_log.csv"), &log)?;
            eprintln!("saved {kind} policy to {}", args.out.display());
        }
        Command::TrainRl { train: args, base, beta } => {
            let mut rl = cfg.train.clone();
            apply_train_args(&mut rl, args);
            let beta = beta.unwrap_or(cfg.beta);
            print_json("config", &rl)?;
            println!("beta: {beta}");
            if args.dry_run {
                return Ok(());
            }
            let task = load_task(&args.task)?;
            let corpus = read_corpus(&args.corpus)?;
            let behavior = match base {
                Some(dir) => PolicyArtifact::load(dir)?,
                None => {
                    let mut bc = cfg.bc.clone();
                    apply_train_args(&mut bc, args);
                    let hidden = args.hidden_dim.unwrap_or(cfg.hidden_dim);
                    train_behavior(PolicyKind::Bc, &task, &corpus, &bc, hidden)?.0
                }
            };
            let vocab = behavior.vocab.clone();
            let ds = build_dataset(&corpus, &vocab)?;
            let out = train_rl(&ds, behavior.base.clone(), &vocab.vocab_id(), &rl)?;
            let log = out.log.clone();
            let art = PolicyArtifact::from_rl(out, behavior.base, beta, vocab, &task.task_id, &rl, &corpus_hash(&corpus))?;
            art.save(&args.out)?;
            write_rl_log(args.out.join("train_log.csv"), &log)?;
            eprintln!("saved rl policy to {}", args.out.display());
        }
        Command::EvalSim {
            task: t,
            policy,
            episodes,
            human,
            personas,
            out,
            csv,
        } => {
            let task = load_task(t)?;
            let art = PolicyArtifact::load(policy)?;
            let mut eval = cfg.eval.clone();
            eval.episodes = episodes.unwrap_or(eval.episodes);
            let backend = make_backend(&cfg, &task, &t.task)?;
            let personas = personas_for(personas.as_deref(), &t.task, &task, &backend, cfg.generate.seed)?;
            let driver = match human {
                HumanChoice::Scripted => HumanDriver::Scripted,
                HumanChoice::Llm => HumanDriver::Llm(&backend),
            };
            let agent = PolicyAgent::new(&art, &eval);
            let report = evaluate(&agent, &art.kind.to_string(), &task, &personas, &eval, &driver)?;
            if let Some(p) = out {
                report.write_json(p)?;
            }
            if let Some(p) = csv {
                report.write_csv(p)?;
            }
            print_json("metrics", &report.metrics)?;
        }
        Command::Serve {
            registry,
            port,
            data_dir,
            static_dir,
        } => {
            let mut serve = cfg.serve.clone();
            serve.registry = registry.clone().or(serve.registry);
            serve.port = port.unwrap_or(serve.port);
            serve.data_dir = data_dir.clone().unwrap_or(serve.data_dir);
            serve.static_dir = static_dir.clone().or(serve.static_dir);
            let path = serve
                .registry
                .clone()
                .ok_or_else(|| ServiceError::Config("serve needs --registry or serve.registry".into()))?;
            let reg = Registry::load(path)?;
            let store = SessionStore::open(&serve.data_dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", serve.port)).await?;
                eprintln!("serving on http://{}", listener.local_addr()?);
                let dir = serve.static_dir.clone();
                api::serve(Arc::new(ChatService::new(reg, store, serve)), listener, dir).await
            })?;
        }
        Command::Chat { task: t, policy } => {
            let task = load_task(t)?;
            let art = PolicyArtifact::load(policy)?;
            let eval = imagine_sim::EvalConfig {
                temperature: cfg.serve.temperature,
                max_reply_tokens: cfg.serve.max_reply_tokens,
                ..cfg.eval.clone()
            };
            let agent = PolicyAgent::new(&art, &eval);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
            let mut transcript: Vec<Utterance> = Vec::new();
            if let Some(g) = &task.greeting {
                println!("AI: {g}");
                transcript.push(Utterance::agent(g));
            }
            let stdin = io::stdin();
            loop {
                print!("H: ");
                io::stdout().flush()?;
                let mut line = String::new();
                if stdin.lock().read_line(&mut line)? == 0 {
                    break;
                }
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                if line == "/quit" {
                    break;
                }
                transcript.push(Utterance::human(line));
                let reply = agent.respond(&transcript, &mut rng)?;
                let text = if reply.text.is_empty() { EMPTY_REPLY.to_string() } else { reply.text };
                println!("AI: {text}");
                transcript.push(Utterance::agent(&text));
            }
        }
    }
    Ok(())
}

/// Run the CLI. Exit code 0 on success, 1 on a usage error, 2 when the
/// command fails.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{}", e.render());
            eprintln!();
            eprint!("{}", Cli::command().render_help());
            return 1;
        }
    };
    match run_command(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
