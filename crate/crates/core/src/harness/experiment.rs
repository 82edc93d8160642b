//! Experiment runner: data, environments, judge, pretraining with resume, online runs,
//! learning curves and summary tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::AgentBundle;
use crate::data::{
    generate_synthetic_with, load_catalog, load_interactions, split_log, InteractionLog,
    ItemCatalog, SyntheticGroundTruth, SyntheticSpec,
};
use crate::encoder::EncoderConfig;
use crate::env::{fit_reward_model, Environment, FitReport, FitSpec, RewardModel, RewardModelKind};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{agent_checkpoint, load_checkpoint, load_reward_model};
use crate::harness::config::{DataSource, ExperimentConfig, OracleKind, RewardSource};
use crate::harness::metrics::{
    evaluate, smooth, steps_to_fraction, EpisodeRecord, Metrics, ScoringPolicy, SMOOTHING_WINDOW,
};
use crate::oracle::{
    ChatBackend, LlmJudge, PreferenceJudge, RecordingBackend, ReplayBackend, SyntheticJudge,
};
use crate::rng::{stream_rng, streams};
use crate::training::baselines::scratch_agent;
use crate::training::{
    online_phase, pretrain_ialp, run_baseline, Adapted, BaselineKind, BaselineModel,
    ExplorationStrategy, PretrainState, Scheme, TrainConfig,
};

/// Interaction data and its train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: ItemCatalog,
    pub log: InteractionLog,
    pub train: InteractionLog,
    pub test: InteractionLog,
    pub truth: Option<SyntheticGroundTruth>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let (catalog, log, truth) = match d.source {
        DataSource::Synthetic => {
            let (c, l, t) = generate_synthetic_with(&SyntheticSpec {
                num_users: d.num_users,
                num_items: d.num_items,
                seq_len: d.seq_len,
                d_lat: d.d_lat,
                noise_scale: d.noise,
                seed: cfg.train.seed,
            })?;
            (c, l, Some(t))
        }
        DataSource::Files => {
            let catalog_path = d.catalog.as_deref().expect("validated");
            let catalog = load_catalog(catalog_path)?;
            let log = load_interactions(d.interactions.as_deref().expect("validated"), &catalog)?;
            (catalog, log, None)
        }
    };
    let (train, test) = split_log(&log, d.train_fraction, cfg.train.seed)?;
    Ok(Dataset {
        catalog,
        log,
        train,
        test,
        truth,
    })
}

/// The simulator's reward model. A fitted model is trained on the whole log so that
/// every user is known to it; the split only decides which users start episodes where.
pub fn build_reward_model(
    cfg: &ExperimentConfig,
    data: &Dataset,
) -> Result<(RewardModel, Option<FitReport>)> {
    let e = &cfg.env;
    match e.reward_source {
        RewardSource::GroundTruth => {
            let truth = data
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("ground-truth rewards need synthetic data".into()))?;
            let model = match e.kind {
                RewardModelKind::MatrixFactorization => {
                    RewardModel::from_ground_truth(truth, e.scale, e.offset)?
                }
                RewardModelKind::Sequential => RewardModel::sequential_from_ground_truth(
                    truth,
                    e.seq.max_seq_len,
                    e.scale,
                    e.offset,
                )?,
            };
            Ok((model, None))
        }
        RewardSource::Fitted => {
            let spec = match e.kind {
                RewardModelKind::MatrixFactorization => FitSpec::Mf(e.mf.clone()),
                RewardModelKind::Sequential => FitSpec::Sequential(e.seq.clone()),
            };
            let (model, report) = fit_reward_model(
                &data.log,
                data.catalog.num_items(),
                &spec,
                e.r_max,
                cfg.train.seed,
            )?;
            Ok((model, Some(report)))
        }
        RewardSource::Checkpoint => {
            let model = load_reward_model(e.model_path.as_deref().expect("validated"))?;
            if model.num_items() != data.catalog.num_items() {
                return Err(Error::Config(format!(
                    "reward model has {} items but the catalog has {}",
                    model.num_items(),
                    data.catalog.num_items()
                )));
            }
            Ok((model, None))
        }
    }
}

pub fn build_judge(cfg: &ExperimentConfig, data: &Dataset) -> Result<Box<dyn PreferenceJudge>> {
    let o = &cfg.oracle;
    match o.kind {
        OracleKind::Synthetic => {
            let truth = data
                .truth
                .clone()
                .ok_or_else(|| Error::Config("the synthetic oracle needs synthetic data".into()))?;
            Ok(Box::new(SyntheticJudge {
                truth,
                threshold: o.threshold,
            }))
        }
        OracleKind::Llm => {
            let backend: Box<dyn ChatBackend> = match (&o.replay, &o.record) {
                (Some(replay), _) => Box::new(ReplayBackend::load(replay)?),
                (None, Some(record)) => Box::new(RecordingBackend::new(o.endpoint(), record)?),
                (None, None) => Box::new(o.endpoint()),
            };
            let spec = o.prompt_spec(data.catalog.schema().to_vec(), cfg.train.k);
            spec.validate()?;
            Ok(Box::new(LlmJudge {
                backend,
                catalog: data.catalog.clone(),
                spec,
                concurrency: o.concurrency,
            }))
        }
    }
}

/// Something trained or evaluated by a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// The pre-trained agent, frozen.
    Ialp,
    Online(Scheme),
    Baseline(BaselineKind),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ialp => "ialp",
            Method::Online(Scheme::Ft) => "a_ialp_ft",
            Method::Online(Scheme::Ap) => "a_ialp_ap",
            Method::Baseline(k) => k.name(),
        }
    }
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub strategy: String,
    pub seed: u64,
    /// `(e, metrics)` for every reported epoch reached by the run.
    pub at_epoch: Vec<(usize, Metrics)>,
    /// Greedy test metrics of the final policy.
    pub final_test: Metrics,
    /// Steps until the smoothed training curve first reaches 90% of its last value.
    pub steps_to_90: Option<usize>,
    pub training_episodes: usize,
    pub wall_clock_s: f64,
}

impl MethodResult {
    pub fn at(&self, epoch: usize) -> Option<Metrics> {
        self.at_epoch
            .iter()
            .find(|(e, _)| *e == epoch)
            .map(|(_, m)| *m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Rq1,
    Rq2,
    Rq3,
    Rq4,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Rq1 => "rq1",
            Preset::Rq2 => "rq2",
            Preset::Rq3 => "rq3",
            Preset::Rq4 => "rq4",
        }
    }
}

/// Training settings agree apart from the epoch budget, so a run can be extended.
fn same_run(a: &TrainConfig, b: &TrainConfig) -> bool {
    TrainConfig {
        pretrain_epochs: b.pretrain_epochs,
        ..a.clone()
    } == *b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PretrainResume {
    train: TrainConfig,
    agent: EncoderConfig,
    state: PretrainState,
}

/// A prepared run: configuration, output directory, data and both environments.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    pub data: Dataset,
    pub train_env: Environment,
    pub test_env: Environment,
}

impl Experiment {
    /// Load data, build the environments, create the run directory and dump `config.full`.
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.run_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_text(&dir.join("config.full"), &cfg.to_full_toml()?)?;
        let data = load_dataset(&cfg)?;
        let (model, report) = build_reward_model(&cfg, &data)?;
        if let Some(report) = report {
            write_json(&dir.join("env_fit.json"), &report)?;
        }
        let train_env = Environment::new(model.clone(), &data.train, cfg.env_config())?;
        let test_env = Environment::new(model, &data.test, cfg.env_config())?;
        Ok(Experiment {
            cfg,
            dir,
            data,
            train_env,
            test_env,
        })
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        EncoderConfig::new(
            self.cfg.agent.embed_dim,
            self.cfg.agent.max_seq_len,
            self.data.catalog.num_items(),
        )
    }

    pub fn judge(&self) -> Result<Box<dyn PreferenceJudge>> {
        build_judge(&self.cfg, &self.data)
    }

    pub fn ialp_path(&self) -> PathBuf {
        self.dir.join("ialp.ckpt")
    }

    fn resume_path(&self) -> PathBuf {
        self.dir.join("pretrain_state.json")
    }

    /// Pre-train against the judge, continuing from the last completed epoch if a
    /// matching resume file exists. Writes `ialp.ckpt` and `pretrain.jsonl` every epoch.
    pub fn pretrain(&self) -> Result<AgentBundle> {
        let cfg = &self.cfg;
        let enc = self.encoder_config()?;
        let judge = self.judge()?;
        let mut resume = None;
        let mut agent = AgentBundle::new(
            enc,
            cfg.train.gamma,
            &mut stream_rng(cfg.train.seed, streams::INIT),
        )?;
        if let Some(saved) = self.load_resume()? {
            let compatible = same_run(&saved.train, &cfg.train) && saved.agent == enc;
            if compatible
                && saved.state.epochs_done <= cfg.train.pretrain_epochs
                && self.ialp_path().exists()
            {
                agent = load_checkpoint(&self.ialp_path())?;
                log::info!(
                    "resuming pre-training after epoch {}",
                    saved.state.epochs_done
                );
                resume = Some(saved.state);
            } else {
                log::warn!(
                    "ignoring a pre-training resume file written under a different configuration"
                );
            }
        }
        let log_path = self.dir.join("pretrain.jsonl");
        let mut log_file =
            BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
        if let Some(state) = &resume {
            for epoch in &state.log {
                write_json_line(&mut log_file, &log_path, epoch)?;
            }
        }
        let initial: Vec<_> = self
            .data
            .train
            .sequences
            .iter()
            .filter_map(|s| s.items.first().copied())
            .collect();
        let mut on_epoch = |a: &AgentBundle, s: &PretrainState| -> Result<()> {
            write_json_line(
                &mut log_file,
                &log_path,
                s.log.last().expect("one epoch done"),
            )?;
            log_file.flush().map_err(|e| Error::io(&log_path, e))?;
            self.save_agent(a, &self.ialp_path())?;
            let resume = PretrainResume {
                train: cfg.train.clone(),
                agent: enc,
                state: s.clone(),
            };
            write_json(&self.resume_path(), &resume)
        };
        let (agent, state) = pretrain_ialp(
            agent,
            judge.as_ref(),
            &cfg.train,
            &initial,
            resume,
            &mut on_epoch,
        )?;
        if state.epochs_done == 0 {
            self.save_agent(&agent, &self.ialp_path())?;
        }
        Ok(agent)
    }

    fn load_resume(&self) -> Result<Option<PretrainResume>> {
        let path = self.resume_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        match serde_json::from_str(&text) {
            Ok(r) => Ok(Some(r)),
            Err(e) => {
                log::warn!("unreadable resume file {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    /// The finished pre-trained agent, training it first if needed.
    pub fn pretrained(&self) -> Result<AgentBundle> {
        if let Some(saved) = self.load_resume()? {
            let done = saved.state.epochs_done == self.cfg.train.pretrain_epochs;
            if done
                && same_run(&saved.train, &self.cfg.train)
                && saved.agent == self.encoder_config()?
            {
                return load_checkpoint(&self.ialp_path());
            }
        }
        self.pretrain()
    }

    fn save_agent(&self, agent: &AgentBundle, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        agent_checkpoint(agent, None)?.save(&tmp)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn evaluate<P: ScoringPolicy + ?Sized>(&self, policy: &P) -> Result<Metrics> {
        Ok(evaluate(
            policy,
            &self.test_env,
            self.cfg.eval.episodes,
            self.cfg.train.seed,
        )?
        .0)
    }

    /// Train (or, for frozen iALP, just evaluate) one method, writing its learning
    /// curve to `curves/<method>[-<strategy>].jsonl`.
    pub fn run_method(
        &self,
        method: Method,
        strategy: ExplorationStrategy,
        pretrained: Option<&AgentBundle>,
        curve_tag: Option<&str>,
    ) -> Result<MethodResult> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let epoch_steps = cfg.epoch_steps();
        let report = &cfg.eval.report_epochs;
        let mut at_epoch = Vec::new();
        let mut hook = |step: usize, p: &dyn ScoringPolicy| -> Result<()> {
            let e = step / epoch_steps;
            if step.is_multiple_of(epoch_steps) && report.contains(&e) {
                at_epoch.push((e, self.evaluate(p)?));
            }
            Ok(())
        };
        let needs_pretrained = || {
            pretrained.cloned().ok_or_else(|| {
                Error::invalid(format!("{} needs a pre-trained agent", method.name()))
            })
        };
        log::info!(
            "running {} with {} exploration",
            method.name(),
            strategy.name()
        );
        let (curve, final_test, saved): (Vec<EpisodeRecord>, Metrics, Option<AgentBundle>) =
            match method {
                Method::Ialp => {
                    let agent = needs_pretrained()?;
                    hook(0, &agent)?;
                    let m = self.evaluate(&agent)?;
                    for &e in report.iter().filter(|&&e| e > 0) {
                        at_epoch.push((e, m));
                    }
                    (Vec::new(), m, None)
                }
                Method::Online(scheme) => {
                    let (adapted, curve) = online_phase(
                        scheme,
                        needs_pretrained()?,
                        &self.train_env,
                        &cfg.train,
                        strategy,
                        Some(epoch_steps),
                        &mut hook,
                    )?;
                    let m = self.evaluate(&adapted)?;
                    let keep = match adapted {
                        Adapted::Ft(a) => a,
                        Adapted::Ap(mix) => mix.into_parts().1,
                    };
                    (curve, m, Some(keep))
                }
                Method::Baseline(kind) => {
                    let judge = match kind {
                        BaselineKind::LlmOnline => Some(self.judge()?),
                        _ => None,
                    };
                    let (model, curve) = run_baseline(
                        kind,
                        &self.train_env,
                        &self.encoder_config()?,
                        &cfg.train,
                        strategy,
                        judge.as_deref(),
                        Some(epoch_steps),
                        &mut hook,
                    )?;
                    let m = self.evaluate(&model)?;
                    (curve, m, Some(model.agent().clone()))
                }
            };
        let tag = curve_tag.map(|t| format!("-{t}")).unwrap_or_default();
        let curves = self.dir.join("curves");
        fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
        write_curve(
            &curves.join(format!("{}{tag}.jsonl", method.name())),
            &curve,
        )?;
        if let Some(agent) = saved {
            self.save_agent(
                &agent,
                &self.dir.join(format!("{}{tag}.ckpt", method.name())),
            )?;
        }
        Ok(MethodResult {
            method: method.name().to_owned(),
            strategy: strategy.name().to_owned(),
            seed: cfg.train.seed,
            at_epoch,
            final_test,
            steps_to_90: steps_to_fraction(&smooth(&curve, SMOOTHING_WINDOW), 0.9),
            training_episodes: curve.len(),
            wall_clock_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Evaluate a saved agent greedily on the test environment, over Q-values when `q_values`.
    pub fn evaluate_checkpoint(&self, path: &Path, q_values: bool) -> Result<Metrics> {
        let agent = load_checkpoint(path)?;
        if q_values {
            self.evaluate(&BaselineModel::Dqn(agent))
        } else {
            self.evaluate(&agent)
        }
    }

    /// Run a research-question preset and write `summary_<preset>.tsv`.
    pub fn run_preset(&self, preset: Preset, scheme: Option<Scheme>) -> Result<Vec<MethodResult>> {
        let strategy = self.cfg.eval.exploration()?;
        let ialp = self.pretrained()?;
        let mut results = Vec::new();
        match preset {
            Preset::Rq1 => {
                // R@0 only: every method is evaluated before its first online step
                let enc = self.encoder_config()?;
                results.push(self.run_method(Method::Ialp, strategy, Some(&ialp), None)?);
                for kind in [BaselineKind::Dqn, BaselineKind::Pg, BaselineKind::A2c] {
                    let agent = scratch_agent(&enc, &self.cfg.train)?;
                    let m = match kind {
                        BaselineKind::Dqn => self.evaluate(&BaselineModel::Dqn(agent))?,
                        _ => self.evaluate(&agent)?,
                    };
                    results.push(MethodResult {
                        method: kind.name().to_owned(),
                        strategy: strategy.name().to_owned(),
                        seed: self.cfg.train.seed,
                        at_epoch: vec![(0, m)],
                        final_test: m,
                        steps_to_90: None,
                        training_episodes: 0,
                        wall_clock_s: 0.0,
                    });
                }
            }
            Preset::Rq2 => {
                for method in [
                    Method::Ialp,
                    Method::Online(Scheme::Ft),
                    Method::Online(Scheme::Ap),
                    Method::Baseline(BaselineKind::Dqn),
                    Method::Baseline(BaselineKind::Pg),
                    Method::Baseline(BaselineKind::A2c),
                ] {
                    results.push(self.run_method(method, strategy, Some(&ialp), None)?);
                }
            }
            Preset::Rq3 => {
                for method in [
                    Method::Online(Scheme::Ft),
                    Method::Online(Scheme::Ap),
                    Method::Baseline(BaselineKind::LlmOnline),
                ] {
                    results.push(self.run_method(method, strategy, Some(&ialp), None)?);
                }
            }
            Preset::Rq4 => {
                let ours = Method::Online(scheme.unwrap_or(Scheme::Ap));
                let eps = self.cfg.eval.epsilon;
                for name in ["egreedy", "categorical", "greedy"] {
                    let s = ExplorationStrategy::parse(name, eps)?;
                    for method in [ours, Method::Baseline(BaselineKind::A2c)] {
                        results.push(self.run_method(method, s, Some(&ialp), Some(name))?);
                    }
                }
            }
        }
        write_summary(
            &self.dir.join(format!("summary_{}.tsv", preset.name())),
            &results,
            &self.cfg.eval.report_epochs,
        )?;
        Ok(results)
    }
}

/// One `EpisodeRecord` per line, in episode order.
pub fn write_curve(path: &Path, curve: &[EpisodeRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in curve {
        write_json_line(&mut out, path, rec)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Tab-separated table: one row per method, R@e/Len@e/R_avg@e columns, then final test metrics.
pub fn write_summary(path: &Path, results: &[MethodResult], epochs: &[usize]) -> Result<()> {
    let mut header = vec![
        "method".to_owned(),
        "strategy".to_owned(),
        "seed".to_owned(),
    ];
    for e in epochs {
        header.extend([format!("R@{e}"), format!("Len@{e}"), format!("R_avg@{e}")]);
    }
    header.extend(
        [
            "R",
            "Len",
            "R_avg",
            "steps_to_90",
            "episodes",
            "wall_clock_s",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut text = header.join("\t");
    text.push('\n');
    for r in results {
        let mut row = vec![r.method.clone(), r.strategy.clone(), r.seed.to_string()];
        for &e in epochs {
            match r.at(e) {
                Some(m) => row.extend([fmt(m.r), fmt(m.len), fmt(m.r_avg)]),
                None => row.extend(["-".to_owned(), "-".to_owned(), "-".to_owned()]),
            }
        }
        row.extend([
            fmt(r.final_test.r),
            fmt(r.final_test.len),
            fmt(r.final_test.r_avg),
            r.steps_to_90.map_or("-".to_owned(), |s| s.to_string()),
            r.training_episodes.to_string(),
            format!("{:.1}", r.wall_clock_s),
        ]);
        text.push_str(&row.join("\t"));
        text.push('\n');
    }
    write_text(path, &text)
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)
        .map_err(|e| Error::invalid(format!("serialising {}: {e}", path.display())))?;
    let tmp = path.with_extension("tmp");
    write_text(&tmp, &text)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json_line<T: Serialize, W: Write>(out: &mut W, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value)
        .map_err(|e| Error::invalid(format!("serialising {}: {e}", path.display())))?;
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}
