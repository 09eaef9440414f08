//! Command planning and execution.
//!
//! Every command is first resolved into a [`RunManifest`] holding the full
//! configuration and the artifact paths, then executed from that manifest
//! alone. Replay re-executes a loaded manifest with its artifacts redirected,
//! which is what makes recorded runs reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use upms::agents::{
    append_summary, dqn_train, evaluate_joint_policy, evaluate_policy, mappo_train, ppo_train, Algorithm, EvalSummary,
    GreedyPolicy, InstanceSource, JointPolicy, Policy, PolicyCheckpoint, RandomPolicy, TrainConfig, TrainError,
    TrainedModel,
};
use upms::env::{EnvError, WorkerAllocation};
use upms::instance::{InstanceError, Range};
use upms::metrics::{brute_force_optimal, export_gantt, OracleObjective, TimeMeasure};
use upms::{generate, illustrative_instance, seed, Action, Env, EnvConfig, GeneratorConfig, MultiEnv, ObjectiveWeights};
use upms::ProblemInstance;

use crate::args::{
    Allocation, Command, EnvArgs, EvaluateArgs, GenerateArgs, GeneratorArgs, MeasureArg, ObjectiveArg, Preset,
    ReplayArgs, SolveArgs, TrainArgs,
};
use crate::error::CliError;
use crate::manifest::{sidecar, InstanceSpec, PolicySpec, RunConfig, RunManifest, TOOLKIT_VERSION};

pub const BASELINES: [&str; 3] = ["random", "random-masked", "greedy"];

/// Plans and executes one parsed command, writing human-readable results to `out`.
pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let (manifest, manifest_path) = match command {
        Command::Generate(a) => plan_generate(a)?,
        Command::Train(a) => plan_train(a)?,
        Command::Evaluate(a) => plan_evaluate(a)?,
        Command::SolveExact(a) => plan_solve(a)?,
        Command::Replay(a) => return replay(a, out),
    };
    execute(&manifest, out)?;
    if let Some(path) = manifest_path {
        ensure_parent(&path)?;
        manifest.save(&path)?;
        say(out, format!("manifest {}", path.display()))?;
    }
    Ok(())
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::io("<stdout>", e))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn absolute(p: &Path) -> PathBuf {
    p.canonicalize()
        .or_else(|_| std::path::absolute(p))
        .unwrap_or_else(|_| p.to_path_buf())
}

fn same_path(a: &Path, b: &Path) -> bool {
    absolute(a) == absolute(b)
}

/// Refuses to write any artifact over an input or over another artifact.
fn check_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<(), CliError> {
    for (i, o) in outputs.iter().enumerate() {
        if let Some(input) = inputs.iter().find(|p| same_path(p, o)) {
            return Err(usage(format!("output path {} is also an input", input.display())));
        }
        if outputs[..i].iter().any(|p| same_path(p, o)) {
            return Err(usage(format!("output path {} is used twice", o.display())));
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_instance(path: &Path) -> Result<ProblemInstance, CliError> {
    ProblemInstance::load(path).map_err(|e| match e {
        InstanceError::Io(io) => CliError::io(path, io),
        other => CliError::Instance(other),
    })
}

fn apply_generator(base: GeneratorConfig, g: &GeneratorArgs) -> GeneratorConfig {
    let range = |r: Range, low: Option<u64>, high: Option<u64>| Range {
        low: low.unwrap_or(r.low),
        high: high.unwrap_or(r.high),
    };
    GeneratorConfig {
        job_count: g.jobs.unwrap_or(base.job_count),
        machine_count: g.machines.unwrap_or(base.machine_count),
        worker_count: g.workers.unwrap_or(base.worker_count),
        processing_time_range: range(base.processing_time_range, g.pt_min, g.pt_max),
        setup_time_range: range(base.setup_time_range, g.st_min, g.st_max),
        workforce_range: range(base.workforce_range, g.r_min, g.r_max),
        eligibility_probability: g.eligibility.unwrap_or(base.eligibility_probability),
        compatibility_probability: g.compatibility.unwrap_or(base.compatibility_probability),
        ..base
    }
}

/// `--instance FILE` or a desk-scale generator with overrides, never both.
fn instance_spec(instance: &Option<PathBuf>, g: &GeneratorArgs) -> Result<InstanceSpec, CliError> {
    match instance {
        Some(_) if g.any_set() => Err(usage("--instance cannot be combined with generator flags")),
        Some(path) => Ok(InstanceSpec::File { path: path.clone() }),
        None => {
            let generator = apply_generator(GeneratorConfig::desk_scale(0), g);
            generator.check()?;
            Ok(InstanceSpec::Generated { generator })
        }
    }
}

fn instance_source(spec: &InstanceSpec) -> Result<InstanceSource, CliError> {
    Ok(match spec {
        InstanceSpec::File { path } => InstanceSource::Fixed(Arc::new(load_instance(path)?)),
        InstanceSpec::Golden => InstanceSource::Fixed(Arc::new(illustrative_instance())),
        InstanceSpec::Generated { generator } => InstanceSource::Generated(generator.clone()),
    })
}

/// Environment settings: generated sources take their slot size and time
/// scale from the generator, fixed instances fall back to the library defaults.
fn env_config(e: &EnvArgs, spec: &InstanceSpec, default_slot: Option<usize>) -> EnvConfig {
    let (slot, scale) = match spec {
        InstanceSpec::Generated { generator } => (generator.job_slot_size, generator.time_scale()),
        _ => (EnvConfig::new(5).job_slot_size, EnvConfig::new(5).time_scale),
    };
    let mut cfg = EnvConfig::new(e.slot.or(default_slot).unwrap_or(slot));
    cfg.time_scale = e.time_scale.unwrap_or(scale);
    cfg.max_decision_steps = e.max_steps;
    if let Some(t) = e.inaction_threshold {
        cfg.inaction_threshold = t;
    }
    cfg
}

fn base_manifest(seed_value: u64, roles: &[&str], config: RunConfig) -> RunManifest {
    RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        seed: seed_value,
        sub_seeds: roles
            .iter()
            .map(|r| (r.to_string(), seed::derive(seed_value, r)))
            .collect(),
        config,
        artifacts: BTreeMap::new(),
    }
}

type Plan = (RunManifest, Option<PathBuf>);

fn plan_generate(a: GenerateArgs) -> Result<Plan, CliError> {
    let base = if a.desk {
        GeneratorConfig::desk_scale(0)
    } else {
        GeneratorConfig::default()
    };
    let mut generator = apply_generator(base, &a.generator);
    if let Some(slot) = a.slot {
        generator.job_slot_size = slot;
    }
    generator.seed = seed::derive(a.seed, "instance");
    generator.check()?;
    let manifest_path = a.manifest.unwrap_or_else(|| sidecar(&a.out));
    check_outputs(&[], &[&a.out, &manifest_path])?;
    let mut m = base_manifest(a.seed, &["instance"], RunConfig::Generate { generator });
    m.artifacts.insert("instance".into(), a.out);
    Ok((m, Some(manifest_path)))
}

fn parse_algorithm(name: &str) -> Result<Algorithm, CliError> {
    Algorithm::parse(name).ok_or_else(|| {
        let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
        usage(format!("unknown algorithm `{name}`; supported: {}", names.join(", ")))
    })
}

fn plan_train(a: TrainArgs) -> Result<Plan, CliError> {
    let algorithm = parse_algorithm(&a.algo)?;
    let dqn_flags = [
        a.replay_capacity.is_some(),
        a.batch.is_some(),
        a.target_sync.is_some(),
        a.exploration_fraction.is_some(),
        a.train_frequency.is_some(),
        a.learning_starts.is_some(),
    ];
    if algorithm == Algorithm::Mappo && (a.worker_allocation.is_some() || dqn_flags.contains(&true)) {
        return Err(usage(
            "mappo does not accept single-agent options (--worker-allocation or DQN flags)",
        ));
    }
    if algorithm != Algorithm::Mappo && a.mappo_masked {
        return Err(usage("--mappo-masked only applies to mappo"));
    }
    let instance = instance_spec(&a.instance, &a.generator)?;
    let mut env = env_config(&a.env, &instance, None);
    env.worker_allocation = match a.worker_allocation {
        Some(Allocation::Greedy) => WorkerAllocation::Greedy,
        _ => WorkerAllocation::Random,
    };
    env.seed = seed::derive(a.seed, "env");

    let mut t = match a.preset {
        Preset::Standard => TrainConfig::default(),
        Preset::Desk => TrainConfig::desk(),
    };
    t.total_timesteps = a.steps;
    t.seed = seed::derive(a.seed, "trainer");
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = a.$flag.clone() { t.$field = v; })*
        };
    }
    set!(
        lr => learning_rate,
        epochs => epochs,
        minibatch => minibatch_size,
        rollout => rollout_length,
        num_envs => num_envs,
        gamma => gamma,
        gae_lambda => gae_lambda,
        clip => clip_ratio,
        entropy => entropy_coef,
        value_coef => value_coef,
        max_grad_norm => max_grad_norm,
        hidden => hidden,
        eval_cadence => eval_cadence,
        reward_window => reward_window,
        replay_capacity => replay_capacity,
        batch => dqn_batch_size,
        target_sync => target_sync_period,
        exploration_fraction => exploration_fraction,
        train_frequency => dqn_train_frequency,
        learning_starts => dqn_learning_starts,
    );
    t.mappo_masked = a.mappo_masked;
    t.check()?;

    let dir = &a.out_dir;
    let mut artifacts = BTreeMap::new();
    artifacts.insert("checkpoint".to_string(), dir.join("checkpoint.json"));
    artifacts.insert("curve".to_string(), dir.join("curve.csv"));
    if algorithm.is_multi_agent() {
        artifacts.insert("agent_curve".to_string(), dir.join("agents.csv"));
        artifacts.insert("agent_log".to_string(), dir.join("agent_log.jsonl"));
    } else {
        artifacts.insert("episode_log".to_string(), dir.join("episode_log.jsonl"));
    }
    let manifest_path = dir.join("manifest.json");
    let inputs: Vec<&Path> = match &instance {
        InstanceSpec::File { path } => vec![path.as_path()],
        _ => vec![],
    };
    let mut outputs: Vec<&Path> = artifacts.values().map(PathBuf::as_path).collect();
    outputs.push(&manifest_path);
    check_outputs(&inputs, &outputs)?;

    let config = RunConfig::Train {
        algorithm,
        instance,
        env,
        train: t,
        log_seed: seed::derive(a.seed, "evaluation"),
    };
    let mut m = base_manifest(a.seed, &["env", "trainer", "evaluation"], config);
    m.artifacts = artifacts;
    Ok((m, Some(manifest_path)))
}

fn plan_evaluate(a: EvaluateArgs) -> Result<Plan, CliError> {
    if a.episodes == 0 {
        return Err(usage("--episodes must be positive"));
    }
    let instance = instance_spec(&a.instance, &a.generator)?;
    let (policy, multi_agent, slot) = match (&a.policy, &a.checkpoint) {
        (Some(name), None) => {
            if !BASELINES.contains(&name.as_str()) {
                return Err(usage(format!(
                    "unknown baseline `{name}`; supported: {}",
                    BASELINES.join(", ")
                )));
            }
            (PolicySpec::Baseline { name: name.clone() }, a.multi, None)
        }
        (None, Some(path)) => {
            let ckpt = PolicyCheckpoint::load(path).map_err(|e| match e {
                upms::nn::NnError::Io(io) => CliError::io(path, io),
                other => CliError::Checkpoint(other),
            })?;
            if a.multi && !ckpt.algorithm.is_multi_agent() {
                return Err(usage(format!("--multi needs a multi-agent checkpoint, got {}", ckpt.algorithm.name())));
            }
            if a.env.slot.is_some_and(|s| s != ckpt.job_slot_size) {
                return Err(usage(format!("checkpoint was trained with slot size {}", ckpt.job_slot_size)));
            }
            let machines = instance_source(&instance)?.machines();
            if machines != ckpt.machines {
                return Err(usage(format!(
                    "checkpoint was trained for {} machines, instances have {machines}",
                    ckpt.machines
                )));
            }
            (
                PolicySpec::Checkpoint { path: path.clone() },
                ckpt.algorithm.is_multi_agent(),
                Some(ckpt.job_slot_size),
            )
        }
        _ => return Err(usage("give exactly one of --policy or --checkpoint")),
    };
    let env = env_config(&a.env, &instance, slot);
    let manifest_path = a.manifest.unwrap_or_else(|| sidecar(&a.out));
    let mut inputs: Vec<&Path> = vec![];
    if let InstanceSpec::File { path } = &instance {
        inputs.push(path);
    }
    if let Some(c) = &a.checkpoint {
        inputs.push(c);
    }
    check_outputs(&inputs, &[&a.out, &manifest_path])?;

    let config = RunConfig::Evaluate {
        policy,
        instance,
        env,
        episodes: a.episodes,
        evaluation_seed: a.seed,
        multi_agent,
    };
    let mut m = base_manifest(a.seed, &[], config);
    m.sub_seeds.insert("evaluation".into(), a.seed);
    m.artifacts.insert("summary".into(), a.out);
    Ok((m, Some(manifest_path)))
}

fn plan_solve(a: SolveArgs) -> Result<Plan, CliError> {
    let instance = match (&a.instance, a.golden) {
        (Some(path), false) => InstanceSpec::File { path: path.clone() },
        (None, true) => InstanceSpec::Golden,
        _ => return Err(usage("give exactly one of --instance or --golden")),
    };
    let objective = match a.objective {
        ObjectiveArg::Makespan => OracleObjective::Makespan,
        ObjectiveArg::TotalCompletion => OracleObjective::TotalCompletion,
        ObjectiveArg::F => {
            let [w1, w2, w3] = a.weights[..] else {
                return Err(usage("--weights takes exactly three values"));
            };
            let weights =
                ObjectiveWeights::new(w1, w2, w3).ok_or_else(|| usage("weights must be finite and non-negative"))?;
            let measure = match a.measure {
                MeasureArg::Makespan => TimeMeasure::Makespan,
                MeasureArg::TotalCompletion => TimeMeasure::TotalCompletion,
            };
            OracleObjective::Weighted { weights, measure }
        }
    };
    let manifest_path = a.manifest.or_else(|| a.gantt.as_deref().map(sidecar));
    let inputs: Vec<&Path> = a.instance.iter().map(PathBuf::as_path).collect();
    let outputs: Vec<&Path> = a.gantt.iter().chain(manifest_path.iter()).map(PathBuf::as_path).collect();
    check_outputs(&inputs, &outputs)?;
    let mut m = base_manifest(0, &[], RunConfig::SolveExact { instance, objective });
    if let Some(g) = a.gantt {
        m.artifacts.insert("gantt".into(), g);
    }
    Ok((m, manifest_path))
}

/// Runs a planned command. Only the manifest is consulted.
pub fn execute(m: &RunManifest, out: &mut dyn Write) -> Result<(), CliError> {
    match &m.config {
        RunConfig::Generate { generator } => {
            let path = m.artifact("instance")?;
            let inst = generate(generator)?;
            ensure_parent(path)?;
            inst.save(path).map_err(|e| match e {
                InstanceError::Io(io) => CliError::io(path, io),
                other => CliError::Instance(other),
            })?;
            for w in &inst.validate().warnings {
                say(out, format!("warning: {w}"))?;
            }
            say(
                out,
                format!(
                    "instance {} jobs, {} machines, {} workers -> {}",
                    inst.jobs,
                    inst.machines,
                    inst.workers,
                    path.display()
                ),
            )
        }
        RunConfig::Train {
            algorithm,
            instance,
            env,
            train,
            log_seed,
        } => execute_train(m, *algorithm, instance, env, train, *log_seed, out),
        RunConfig::Evaluate {
            policy,
            instance,
            env,
            episodes,
            evaluation_seed,
            multi_agent,
        } => {
            let source = instance_source(instance)?;
            let summary = evaluate(policy, &source, env, *episodes, *evaluation_seed, *multi_agent)?;
            let path = m.artifact("summary")?;
            ensure_parent(path)?;
            append_summary(path, &summary).map_err(|e| CliError::io(path, e))?;
            say(out, upms::agents::SUMMARY_HEADER)?;
            say(out, summary.to_csv_row())
        }
        RunConfig::SolveExact { instance, objective } => {
            let inst = match instance_source(instance)? {
                InstanceSource::Fixed(i) => i,
                InstanceSource::Generated(_) => return Err(usage("solve-exact needs a fixed instance")),
            };
            let sol = brute_force_optimal(&inst, *objective)?;
            say(out, format!("makespan {}", sol.makespan()))?;
            say(out, format!("objective {}", sol.value))?;
            say(out, format!("nodes {}", sol.nodes))?;
            if let Some(path) = m.artifacts.get("gantt") {
                ensure_parent(path)?;
                export_gantt(&sol.schedule, path).map_err(|e| CliError::io(path, e))?;
                say(out, format!("gantt {}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn evaluate(
    policy: &PolicySpec,
    source: &InstanceSource,
    env: &EnvConfig,
    episodes: usize,
    seed_value: u64,
    multi: bool,
) -> Result<EvalSummary, CliError> {
    let summary = match policy {
        PolicySpec::Baseline { name } => {
            let label = if multi { format!("{name}-joint") } else { name.clone() };
            let masked = name == "random-masked";
            match (name.as_str(), multi) {
                ("greedy", false) => evaluate_policy(&label, source, env, |_| GreedyPolicy, episodes, seed_value),
                ("greedy", true) => evaluate_joint_policy(&label, source, env, |_| GreedyPolicy, episodes, seed_value),
                (_, false) => {
                    evaluate_policy(&label, source, env, |s| RandomPolicy::new(masked, s), episodes, seed_value)
                }
                (_, true) => {
                    evaluate_joint_policy(&label, source, env, |s| RandomPolicy::new(masked, s), episodes, seed_value)
                }
            }
        }
        PolicySpec::Checkpoint { path } => {
            let ckpt = PolicyCheckpoint::load(path)?;
            let label = ckpt.algorithm.name();
            if multi {
                evaluate_joint_policy(label, source, env, |_| ckpt.joint_policy(), episodes, seed_value)
            } else {
                evaluate_policy(label, source, env, |_| ckpt.single_policy(), episodes, seed_value)
            }
        }
    };
    Ok(summary?)
}

fn train_model(
    algorithm: Algorithm,
    source: &InstanceSource,
    env: &EnvConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    match algorithm {
        Algorithm::Dqn => dqn_train(source, env, cfg),
        Algorithm::Ppo => ppo_train(source, env, cfg, false),
        Algorithm::MaskablePpo => ppo_train(source, env, cfg, true),
        Algorithm::Mappo => mappo_train(source, env, cfg),
    }
}

fn execute_train(
    m: &RunManifest,
    algorithm: Algorithm,
    instance: &InstanceSpec,
    env: &EnvConfig,
    cfg: &TrainConfig,
    log_seed: u64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let source = instance_source(instance)?;
    let model = train_model(algorithm, &source, env, cfg)?;
    let masked = match algorithm {
        Algorithm::MaskablePpo => true,
        Algorithm::Mappo => cfg.mappo_masked,
        _ => false,
    };
    let ckpt = PolicyCheckpoint::from_model(&model, env.job_slot_size, source.machines(), masked);
    write_file(m.artifact("checkpoint")?, &ckpt.to_json())?;
    write_file(m.artifact("curve")?, &model.curve.to_csv())?;

    // One logged episode with the trained policy, acting greedily.
    let log_instance = source.instance(log_seed, 0)?;
    let log_env = env.clone().with_seed(log_seed);
    let (log_reward, makespan) = if algorithm.is_multi_agent() {
        write_file(m.artifact("agent_curve")?, &model.curve.agents_csv())?;
        let mut menv = MultiEnv::new(log_instance, log_env)?;
        let mut policy = ckpt.joint_policy();
        let mut lines = String::new();
        let mut total = 0.0;
        while !menv.is_done() {
            let actions = policy.act_joint(&menv);
            let outcome = menv.joint_step(&actions)?;
            total += outcome.total_reward();
            for rec in menv.log_records(&actions, &outcome) {
                lines.push_str(&serde_json::to_string(&rec).expect("log record serializes"));
                lines.push('\n');
            }
            if !outcome.conflicts.contests.is_empty() {
                let line = json!({
                    "decision_step": menv.state().decision_step,
                    "conflicts": outcome.conflicts.contests,
                });
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
        }
        write_file(m.artifact("agent_log")?, &lines)?;
        (total, menv.state().schedule.makespan())
    } else {
        let mut e = Env::new(log_instance, log_env)?;
        let mut policy = ckpt.single_policy();
        let mut lines = String::new();
        let mut total = 0.0;
        while !e.is_done() {
            let a = policy.act(&e);
            let outcome = e.step(Action(a))?;
            total += outcome.reward;
            lines.push_str(&e.log_record(&outcome).to_line());
            lines.push('\n');
        }
        write_file(m.artifact("episode_log")?, &lines)?;
        (total, e.state().schedule.makespan())
    };

    say(out, format!("algorithm {}", algorithm.name()))?;
    say(out, format!("updates {}", model.updates))?;
    if let Some(last) = model.curve.last() {
        say(
            out,
            format!(
                "final window: mean reward {:.3}, completion {:.3}, objective {:.3} over {} episodes",
                last.mean_reward, last.completion_rate, last.mean_objective, last.episodes
            ),
        )?;
    }
    say(out, format!("logged episode: reward {log_reward:.3}, makespan {}", makespan))?;
    for (role, path) in &m.artifacts {
        say(out, format!("{role} {}", path.display()))?;
    }
    Ok(())
}

fn replay(a: ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut m = RunManifest::load(&a.manifest)?;
    for path in m.artifacts.values_mut() {
        let name = path
            .file_name()
            .ok_or_else(|| CliError::Manifest(format!("artifact path {} has no file name", path.display())))?;
        let target = a.out_dir.join(name);
        if same_path(&target, path) {
            return Err(usage(format!("replay would overwrite {}", path.display())));
        }
        *path = target;
    }
    let manifest_path = a.out_dir.join("manifest.json");
    let outputs: Vec<&Path> = m.artifacts.values().map(PathBuf::as_path).collect();
    check_outputs(&[&a.manifest], &outputs)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    say(out, format!("replaying {} from {}", m.config.name(), a.manifest.display()))?;
    execute(&m, out)?;
    m.save(&manifest_path)?;
    say(out, format!("manifest {}", manifest_path.display()))
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Train(TrainError::from(e))
    }
}
