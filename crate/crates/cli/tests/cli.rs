use std::fs;
use std::path::Path;

use upms_cli::main_with;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("upms").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn solve_exact_golden_prints_makespan_8_and_writes_gantt() {
    let dir = tempfile::tempdir().unwrap();
    let gantt = dir.path().join("golden.csv");
    let r = run(&["solve-exact", "--golden", "--gantt", p(&gantt)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.lines().any(|l| l == "makespan 8"), "{}", r.out);
    let rows = upms::metrics::parse_gantt(&fs::read_to_string(&gantt).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert!(dir.path().join("golden.csv.manifest.json").exists());
}

#[test]
fn unknown_algorithm_lists_supported_ones() {
    let r = run(&["train", "--algo", "a2c"]);
    assert_eq!(r.code, 2);
    assert!(r.err.starts_with("error[usage]:"));
    for name in ["dqn", "ppo", "maskable-ppo", "mappo"] {
        assert!(r.err.contains(name), "{}", r.err);
    }
}

#[test]
fn clap_errors_use_the_usage_category() {
    let r = run(&["train"]);
    assert_eq!(r.code, 2);
    assert!(r.err.starts_with("error[usage]:"), "{}", r.err);
    assert!(r.err.contains("Usage:"));
}

#[test]
fn mappo_rejects_single_agent_flags() {
    for flag in [["--worker-allocation", "greedy"], ["--target-sync", "10"]] {
        let r = run(&["train", "--algo", "mappo", flag[0], flag[1]]);
        assert_eq!(r.code, 2, "{flag:?}");
        assert!(r.err.contains("mappo"));
    }
}

#[test]
fn instance_file_conflicts_with_generator_flags() {
    let r = run(&["evaluate", "--policy", "greedy", "--instance", "x.json", "--jobs", "4"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("--instance"));
}

#[test]
fn oracle_refuses_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    assert_eq!(run(&["generate", "--desk", "--out", p(&inst)]).code, 0);
    let r = run(&["solve-exact", "--instance", p(&inst)]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error[oracle]:"), "{}", r.err);
}

#[test]
fn missing_instance_file_is_an_io_error() {
    let r = run(&["solve-exact", "--instance", "/nonexistent/inst.json"]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error[io]:"), "{}", r.err);
    assert!(r.err.contains("/nonexistent/inst.json"));
}

#[test]
fn output_may_not_overwrite_input() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    assert_eq!(run(&["generate", "--desk", "--out", p(&inst)]).code, 0);
    let r = run(&["evaluate", "--policy", "greedy", "--instance", p(&inst), "--out", p(&inst)]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("input"));
}

#[test]
fn generated_instance_loads_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let summary = dir.path().join("results.csv");
    let r = run(&["generate", "--desk", "--seed", "11", "--out", p(&inst)]);
    assert_eq!(r.code, 0, "{}", r.err);
    let loaded = upms::ProblemInstance::load(&inst).unwrap();
    assert_eq!((loaded.jobs, loaded.machines, loaded.workers), (10, 3, 8));

    for policy in ["greedy", "random-masked"] {
        let r = run(&[
            "evaluate", "--policy", policy, "--instance", p(&inst), "--episodes", "4", "--out", p(&summary),
        ]);
        assert_eq!(r.code, 0, "{}", r.err);
    }
    let text = fs::read_to_string(&summary).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], upms::agents::SUMMARY_HEADER);
    assert!(lines[1].starts_with("greedy,4,"));
}

#[test]
fn generate_is_reproducible_from_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    run(&["generate", "--seed", "5", "--jobs", "6", "--out", p(&a)]);
    run(&["generate", "--seed", "5", "--jobs", "6", "--out", p(&b)]);
    run(&["generate", "--seed", "6", "--jobs", "6", "--out", p(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn train_writes_artifacts_and_replay_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let r = run(&[
        "train", "--algo", "maskable-ppo", "--steps", "2048", "--rollout", "512", "--eval-cadence", "1024", "--seed",
        "3", "--out-dir", p(&run_dir),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    for f in ["checkpoint.json", "curve.csv", "episode_log.jsonl", "manifest.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let curve = fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), upms::agents::CURVE_HEADER);
    for line in fs::read_to_string(run_dir.join("episode_log.jsonl")).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    let replay_dir = dir.path().join("replay");
    let r = run(&["replay", "--manifest", p(&run_dir.join("manifest.json")), "--out-dir", p(&replay_dir)]);
    assert_eq!(r.code, 0, "{}", r.err);
    for f in ["checkpoint.json", "curve.csv", "episode_log.jsonl"] {
        assert_eq!(fs::read(run_dir.join(f)).unwrap(), fs::read(replay_dir.join(f)).unwrap(), "{f}");
    }

    // The checkpoint evaluates through the CLI.
    let summary = dir.path().join("ckpt.csv");
    let r = run(&[
        "evaluate", "--checkpoint", p(&run_dir.join("checkpoint.json")), "--episodes", "3", "--out", p(&summary),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(fs::read_to_string(&summary).unwrap().contains("maskable-ppo,3,"));
}

#[test]
fn mappo_run_logs_agents_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("mappo");
    let r = run(&[
        "train", "--algo", "mappo", "--steps", "1024", "--rollout", "512", "--eval-cadence", "512", "--out-dir",
        p(&run_dir),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let agents = fs::read_to_string(run_dir.join("agents.csv")).unwrap();
    assert_eq!(agents.lines().next().unwrap(), "timestep,agent0,agent1,agent2");
    let log = fs::read_to_string(run_dir.join("agent_log.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["agent"], 0);
    assert!(!run_dir.join("episode_log.jsonl").exists());
}

#[test]
fn checkpoint_shape_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let r = run(&[
        "train", "--algo", "ppo", "--steps", "512", "--rollout", "256", "--eval-cadence", "256", "--out-dir",
        p(&run_dir),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let ckpt = run_dir.join("checkpoint.json");
    let out = dir.path().join("x.csv");
    let r = run(&["evaluate", "--checkpoint", p(&ckpt), "--machines", "2", "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("machines"), "{}", r.err);
    let r = run(&["evaluate", "--checkpoint", p(&ckpt), "--slot", "7", "--out", p(&out)]);
    assert_eq!(r.code, 2);
}

#[test]
fn replay_rejects_unknown_manifest_version() {
    let dir = tempfile::tempdir().unwrap();
    let gantt = dir.path().join("g.csv");
    run(&["solve-exact", "--golden", "--gantt", p(&gantt)]);
    let manifest = dir.path().join("g.csv.manifest.json");
    let text = fs::read_to_string(&manifest).unwrap().replace(upms_cli::manifest::TOOLKIT_VERSION, "0.0.0-other");
    fs::write(&manifest, text).unwrap();
    let r = run(&["replay", "--manifest", p(&manifest), "--out-dir", p(&dir.path().join("again"))]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error[manifest]:"), "{}", r.err);
}
