//! Reward ledger on the two-machine example. Slot `s` holds job `s` after reset.

use std::sync::Arc;

use upms::env::WorkerAllocation;
use upms::{illustrative_instance, Action, Env, EnvConfig, MultiEnv, Verdict};

fn golden(slot: usize) -> Env {
    let mut cfg = EnvConfig::new(slot);
    cfg.worker_allocation = WorkerAllocation::Greedy;
    Env::new(Arc::new(illustrative_instance()), cfg).unwrap()
}

fn reward(env: &mut Env, machine: usize, slot: usize) -> f64 {
    env.step(Action::assign(machine, slot, env.slot_size())).unwrap().reward
}

#[test]
fn best_pair_earns_both_bonuses() {
    // j0 only runs on m0, so it is the minimum on both terms: 1 + 2 + 2.
    let mut env = golden(5);
    assert_eq!(reward(&mut env, 0, 0), 5.0);
}

#[test]
fn off_minimum_terms_cost_a_quarter_per_unit() {
    // j2: time 1 on m0 and 2 on m1; crew 2 on m0 and 1 on m1.
    let mut env = golden(5);
    let out = env.step(Action::assign(0, 2, 5)).unwrap();
    let c = out.info.components;
    assert_eq!((c.feasible, c.time_bonus, c.resource_penalty), (1.0, 2.0, -0.25));
    assert_eq!(out.reward, 2.75);

    let mut env = golden(5);
    let out = env.step(Action::assign(1, 2, 5)).unwrap();
    let c = out.info.components;
    assert_eq!((c.time_penalty, c.resource_bonus), (-0.25, 2.0));
    assert_eq!(out.reward, 2.75);
}

#[test]
fn setup_time_enters_the_time_term() {
    let mut env = golden(5);
    reward(&mut env, 0, 0); // j0 on m0, finishes at 2
    env.step(env.do_nothing()).unwrap();
    while !env.state().machines[0].is_idle() {
        env.step(env.do_nothing()).unwrap();
    }
    // j4 now costs 2 + setup 1 on m0 against 2 on the fresh m1.
    let out = env.step(Action::assign(0, 4, 5)).unwrap();
    assert_eq!(out.info.components.time_penalty, -0.25);
}

#[test]
fn infeasible_and_null_assignments() {
    let mut env = golden(5);
    // j3 needs 2 workers on m1, which has only one compatible worker.
    let out = env.step(Action::assign(1, 3, 5)).unwrap();
    assert_eq!(out.info.verdict, Verdict::Infeasible);
    assert_eq!(out.reward, -1.0);
    // j0 is not eligible on m1.
    let out = env.step(Action::assign(1, 0, 5)).unwrap();
    assert_eq!(out.info.verdict, Verdict::Null);
    assert_eq!(out.reward, -0.5);
}

#[test]
fn do_nothing_sign_depends_on_alternatives() {
    let mut env = golden(5);
    let out = env.step(env.do_nothing()).unwrap();
    assert_eq!(out.info.verdict, Verdict::DoNothing { alternatives: true });
    assert_eq!(out.reward, -0.5);

    let mut env = golden(5);
    reward(&mut env, 0, 0);
    reward(&mut env, 1, 1);
    assert!(!env.any_feasible());
    let out = env.step(env.do_nothing()).unwrap();
    assert_eq!(out.info.verdict, Verdict::DoNothing { alternatives: false });
    assert_eq!(out.reward, 0.5);
}

#[test]
fn inaction_malus_after_threshold() {
    let mut env = golden(5);
    let rewards: Vec<f64> = (0..5).map(|_| env.step(env.do_nothing()).unwrap().reward).collect();
    assert_eq!(rewards, vec![-0.5, -0.5, -0.5, -10.5, -10.5]);
    // Any other action resets the streak.
    reward(&mut env, 0, 0);
    assert_eq!(env.step(env.do_nothing()).unwrap().reward, -0.5);
}

#[test]
fn repeated_empty_slot_choice_is_penalised() {
    let mut env = golden(6); // slot 5 stays empty
    assert_eq!(reward(&mut env, 0, 5), -0.5);
    assert_eq!(reward(&mut env, 0, 5), -1.5);
    assert_eq!(reward(&mut env, 1, 5), -1.5);
}

#[test]
fn conflicting_claims_cost_both_agents() {
    let mut env = MultiEnv::new(Arc::new(illustrative_instance()), EnvConfig::new(5)).unwrap();
    let out = env.joint_step(&[2, 2]).unwrap();
    assert_eq!(out.conflicts.contests.len(), 1);
    assert_eq!(out.conflicts.contests[0].winner, Some(0));
    assert_eq!(out.conflicts.contests[0].losers, vec![1]);
    assert_eq!(out.agents[0].verdict, Verdict::Feasible);
    assert_eq!(out.agents[0].reward, 2.75 - 1.0);
    assert_eq!(out.agents[1].reward, -0.5 - 1.0);
}
