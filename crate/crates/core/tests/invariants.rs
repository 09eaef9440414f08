use std::sync::Arc;

use proptest::prelude::*;
use upms::agents::{run_episode, GreedyPolicy, RandomPolicy};
use upms::instance::Range;
use upms::metrics::{brute_force_optimal, OracleError, OracleObjective};
use upms::verify::{
    check_metrics, check_one_actor_equivalence, check_schedule, checked_random_episode, mask_soundness_walk,
};
use upms::{generate, illustrative_instance, Env, EnvConfig, GeneratorConfig, ProblemInstance};

fn small_instance() -> impl Strategy<Value = (ProblemInstance, usize)> {
    (1usize..9, 1usize..4, 1usize..6, 1usize..5, 1u64..3, any::<u64>()).prop_map(|(j, m, w, slot, rmax, seed)| {
        let cfg = GeneratorConfig {
            job_count: j,
            machine_count: m,
            worker_count: w,
            job_slot_size: slot,
            processing_time_range: Range::new(0, 6),
            setup_time_range: Range::new(0, 3),
            workforce_range: Range::new(1, rmax.min(w as u64)),
            seed,
            ..GeneratorConfig::default()
        };
        (generate(&cfg).unwrap(), slot)
    })
}

fn tiny_instance() -> impl Strategy<Value = ProblemInstance> {
    (2usize..6, 1usize..3, 1usize..5, any::<u64>()).prop_map(|(j, m, w, seed)| {
        generate(&GeneratorConfig {
            job_count: j,
            machine_count: m,
            worker_count: w,
            job_slot_size: 3,
            processing_time_range: Range::new(1, 5),
            setup_time_range: Range::new(0, 2),
            workforce_range: Range::new(1, 2.min(w as u64)),
            seed,
            ..GeneratorConfig::default()
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_episodes_keep_every_invariant((inst, slot) in small_instance(), seed in any::<u64>(), share in 0.0..1.0f64) {
        let r = checked_random_episode(Arc::new(inst), EnvConfig::new(slot), seed, share);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn masked_actions_apply_and_unmasked_ones_are_penalised((inst, slot) in small_instance(), seed in any::<u64>()) {
        let mut env = Env::new(Arc::new(inst), EnvConfig::new(slot).with_seed(seed)).unwrap();
        let r = mask_soundness_walk(&mut env, seed, 40);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn masked_random_play_completes_valid_schedules((inst, slot) in small_instance(), seed in any::<u64>()) {
        let inst = Arc::new(inst);
        let mut env = Env::new(inst.clone(), EnvConfig::new(slot).with_seed(seed)).unwrap();
        let result = run_episode(&mut env, &mut RandomPolicy::new(true, seed)).unwrap();
        prop_assert!(check_metrics(&env).is_ok());
        prop_assert!(check_schedule(&inst, &result.schedule).is_ok());
        if result.terminated {
            prop_assert_eq!(result.schedule.len(), inst.jobs);
        }
    }

    #[test]
    fn one_acting_agent_matches_the_single_agent_env((inst, slot) in small_instance(), seed in any::<u64>()) {
        let r = check_one_actor_equivalence(Arc::new(inst), EnvConfig::new(slot), seed, 200);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oracle_dominates_every_completed_episode(inst in tiny_instance(), seed in any::<u64>()) {
        let inst = Arc::new(inst);
        let optimum = brute_force_optimal(&inst, OracleObjective::Makespan);
        let mut env = Env::new(inst.clone(), EnvConfig::new(3).with_seed(seed)).unwrap();
        let greedy = run_episode(&mut env, &mut GreedyPolicy).unwrap();
        env.reset();
        let random = run_episode(&mut env, &mut RandomPolicy::new(true, seed)).unwrap();
        match optimum {
            Ok(opt) => {
                prop_assert!(check_schedule(&inst, &opt.schedule).is_ok());
                prop_assert_eq!(opt.schedule.len(), inst.jobs);
                for episode in [&greedy, &random] {
                    if episode.terminated {
                        prop_assert!(opt.makespan() <= episode.schedule.makespan());
                    }
                }
            }
            Err(OracleError::Infeasible) => {
                prop_assert!(!greedy.terminated && !random.terminated);
            }
            Err(e) => prop_assert!(false, "unexpected oracle error {e}"),
        }
    }
}

#[test]
fn golden_episodes_never_beat_makespan_8() {
    let inst = Arc::new(illustrative_instance());
    for seed in 0..200 {
        let mut env = Env::new(inst.clone(), EnvConfig::new(5).with_seed(seed)).unwrap();
        let r = run_episode(&mut env, &mut RandomPolicy::new(true, seed)).unwrap();
        if r.terminated {
            assert!(r.schedule.makespan() >= 8, "seed {seed}");
        }
    }
}
