use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ialp::data::{write_catalog, write_interactions};
use ialp::harness::checkpoint::save_reward_model;
use ialp::harness::config::{ExperimentConfig, OracleKind};
use ialp::harness::experiment::{
    build_reward_model, load_dataset, Experiment, Method, MethodResult, Preset,
};
use ialp::training::{BaselineKind, ExplorationStrategy, Scheme};
use ialp::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ialp",
    version,
    about = "Preference-pretrained RL recommenders and their online adaptation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// synthetic | llm
    #[arg(long, global = true)]
    oracle: Option<String>,
    /// greedy | egreedy | categorical; overrides `eval.strategy`.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// ft | ap
    #[arg(long, global = true)]
    scheme: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic catalog, interaction log and generating latents.
    GenData,
    /// Build the simulator's reward model and save it as `env.ckpt`.
    FitEnv,
    /// Pre-train iALP against the preference oracle (resumable).
    Pretrain,
    /// Adapt the pre-trained agent online with `--scheme`.
    Online,
    /// Train a baseline from scratch.
    Baseline {
        /// dqn | pg | a2c | llm_online
        #[arg(long)]
        kind: String,
    },
    /// Evaluate a saved agent greedily on the test environment.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Act on critic Q-values instead of the actor.
        #[arg(long)]
        q_values: bool,
    },
    /// Initial performance of iALP against scratch baselines.
    Rq1,
    /// Long-run online comparison.
    Rq2,
    /// Comparison with an agent steered by the oracle online.
    Rq3,
    /// Exploration strategies for A-iALP and A2C.
    Rq4,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(o) = &common.oracle {
        cfg.oracle.kind = o.parse::<OracleKind>()?;
    }
    if let Some(s) = &common.strategy {
        ExplorationStrategy::parse(s, cfg.eval.epsilon)?;
        cfg.eval.strategy = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_results(results: &[MethodResult]) {
    println!("method\tstrategy\tR@0\tR\tLen\tR_avg");
    for r in results {
        let r0 = r.at(0).map_or("-".to_owned(), |m| format!("{:.4}", m.r));
        println!(
            "{}\t{}\t{r0}\t{:.4}\t{:.4}\t{:.4}",
            r.method, r.strategy, r.final_test.r, r.final_test.len, r.final_test.r_avg
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let scheme = cli
        .common
        .scheme
        .as_deref()
        .map(str::parse::<Scheme>)
        .transpose()?;
    match cli.command {
        Command::GenData => {
            let data = load_dataset(&cfg)?;
            let dir = cfg.run_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            write_catalog(&data.catalog, &dir.join("catalog.csv"))?;
            write_interactions(&data.log, &dir.join("interactions.csv"))?;
            if let Some(truth) = &data.truth {
                truth.save(&dir.join("truth.json"))?;
            }
            println!(
                "wrote {} items, {} sequences to {}",
                data.catalog.num_items(),
                data.log.len(),
                dir.display()
            );
        }
        Command::FitEnv => {
            let exp = Experiment::prepare(cfg)?;
            let (model, _) = build_reward_model(&exp.cfg, &exp.data)?;
            let path = exp.dir.join("env.ckpt");
            save_reward_model(&model, &path)?;
            println!(
                "saved {:?} reward model to {}",
                model.kind(),
                path.display()
            );
        }
        Command::Pretrain => {
            let exp = Experiment::prepare(cfg)?;
            let agent = exp.pretrain()?;
            let m = exp.evaluate(&agent)?;
            println!(
                "ialp\tR@0={:.4}\tLen@0={:.4}\tR_avg@0={:.4}",
                m.r, m.len, m.r_avg
            );
        }
        Command::Online => {
            let exp = Experiment::prepare(cfg)?;
            let strategy = exp.cfg.eval.exploration()?;
            let ialp = exp.pretrained()?;
            let method = Method::Online(scheme.unwrap_or(Scheme::Ap));
            print_results(&[exp.run_method(method, strategy, Some(&ialp), None)?]);
        }
        Command::Baseline { kind } => {
            let exp = Experiment::prepare(cfg)?;
            let strategy = exp.cfg.eval.exploration()?;
            let kind: BaselineKind = kind.parse()?;
            print_results(&[exp.run_method(Method::Baseline(kind), strategy, None, None)?]);
        }
        Command::Eval {
            checkpoint,
            q_values,
        } => {
            let exp = Experiment::prepare(cfg)?;
            let path = checkpoint.unwrap_or_else(|| exp.ialp_path());
            let m = exp.evaluate_checkpoint(&path, q_values)?;
            println!("R={:.4}\tLen={:.4}\tR_avg={:.4}", m.r, m.len, m.r_avg);
        }
        Command::Rq1 | Command::Rq2 | Command::Rq3 | Command::Rq4 => {
            let preset = match cli.command {
                Command::Rq1 => Preset::Rq1,
                Command::Rq2 => Preset::Rq2,
                Command::Rq3 => Preset::Rq3,
                _ => Preset::Rq4,
            };
            let exp = Experiment::prepare(cfg)?;
            print_results(&exp.run_preset(preset, scheme)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
