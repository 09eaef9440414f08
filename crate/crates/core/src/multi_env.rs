//! Per-machine multi-agent view of the simulation.
//!
//! Agent `m` controls machine `m` and picks a slot position (`0..S`) or
//! do-nothing (`S`). A joint step resolves all agents' choices against the
//! same pre-step state:
//!
//! 1. jobs claimed by two or more agents are recorded and every claimant gets
//!    an extra `−1`;
//! 2. claims are applied in machine order with greedy crews, feasibility being
//!    re-checked at each application. The first feasible claimant of a
//!    contested job wins it, later claimants are treated as null actions;
//! 3. when every agent chose do-nothing the clock moves to the next
//!    completion, as in the single-agent environment.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{ActionMask, Env, EnvConfig, EnvError, EnvState, RewardComponents, Verdict, WorkerAllocation};
use crate::instance::ProblemInstance;

/// Crew for `job` on `machine`: free compatible workers in `order`
/// (least flexible first, then by id), the first `r` of them.
pub fn allocate_workers_greedy(
    instance: &ProblemInstance,
    state: &EnvState,
    order: &[usize],
    job: usize,
    machine: usize,
) -> Result<Vec<usize>, EnvError> {
    let need = instance
        .workforce(job, machine)
        .ok_or(EnvError::Ineligible { job, machine })? as usize;
    let pool: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&w| state.worker_free[w] && instance.compatible(w, machine))
        .collect();
    if pool.len() < need {
        return Err(EnvError::InsufficientWorkers {
            job,
            machine,
            required: need,
            available: pool.len(),
        });
    }
    let mut crew = pool[..need].to_vec();
    crew.sort_unstable();
    Ok(crew)
}

/// Per-agent action indices, one per machine.
pub type JointAction = Vec<usize>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contest {
    pub job: usize,
    pub winner: Option<usize>,
    pub losers: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub contests: Vec<Contest>,
}

impl ConflictReport {
    pub fn involved_agents(&self) -> usize {
        self.contests
            .iter()
            .map(|c| c.losers.len() + usize::from(c.winner.is_some()))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub verdict: Verdict,
    pub components: RewardComponents,
    /// `(job, slot)` when the agent pointed at a slot job.
    pub claim: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    pub agents: Vec<AgentOutcome>,
    pub conflicts: ConflictReport,
    pub terminated: bool,
    pub truncated: bool,
}

impl JointOutcome {
    pub fn total_reward(&self) -> f64 {
        self.agents.iter().map(|a| a.reward).sum()
    }
}

/// Joint episode log line for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLogRecord {
    pub decision_step: usize,
    pub agent: usize,
    pub clock: u64,
    pub action_index: usize,
    pub claim: Option<(usize, usize)>,
    pub verdict: Verdict,
    pub reward: f64,
    pub components: RewardComponents,
}

#[derive(Debug, Clone)]
pub struct MultiEnv {
    env: Env,
    /// Per-agent (consecutive do-nothing, consecutive empty slot).
    counters: Vec<(u32, u32)>,
}

impl MultiEnv {
    /// Worker allocation is forced to greedy.
    pub fn new(instance: Arc<ProblemInstance>, mut config: EnvConfig) -> Result<Self, EnvError> {
        config.worker_allocation = WorkerAllocation::Greedy;
        let env = Env::new(instance, config)?;
        let counters = vec![(0, 0); env.machines()];
        Ok(MultiEnv { env, counters })
    }

    pub fn reset(&mut self) {
        self.env.reset();
        self.counters.iter_mut().for_each(|c| *c = (0, 0));
    }

    pub fn reset_with(&mut self, instance: Arc<ProblemInstance>, seed: u64) -> Result<(), EnvError> {
        self.env.reset_with(instance, seed)?;
        self.counters.iter_mut().for_each(|c| *c = (0, 0));
        Ok(())
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn state(&self) -> &EnvState {
        self.env.state()
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.env.instance()
    }

    pub fn agent_count(&self) -> usize {
        self.env.machines()
    }

    /// `S + 1` actions per agent.
    pub fn agent_action_count(&self) -> usize {
        self.env.slot_size() + 1
    }

    pub fn agent_observation_len(&self) -> usize {
        crate::env::FEATURES_PER_PAIR * self.env.slot_size()
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    pub fn agent_do_nothing(&self) -> usize {
        self.env.slot_size()
    }

    pub fn observe_agent(&self, machine: usize) -> Vec<f64> {
        self.env.observe_machine(machine)
    }

    /// Concatenation of every agent's observation in machine order.
    pub fn build_global_observation(&self) -> Vec<f64> {
        self.env.observe()
    }

    pub fn per_agent_mask(&self, machine: usize) -> ActionMask {
        let s_len = self.env.slot_size();
        let state = self.env.state();
        let mut mask: Vec<bool> = (0..s_len)
            .map(|s| state.job_slot[s].is_some_and(|job| self.env.feasible(job, machine)))
            .collect();
        mask.push(true);
        ActionMask(mask)
    }

    pub fn allocate_workers_greedy(&self, job: usize, machine: usize) -> Result<Vec<usize>, EnvError> {
        self.env.greedy_workers(job, machine)
    }

    pub fn joint_step(&mut self, actions: &[usize]) -> Result<JointOutcome, EnvError> {
        let m_len = self.agent_count();
        let s_len = self.env.slot_size();
        if self.env.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        if actions.len() != m_len {
            return Err(EnvError::InvalidConfig(format!(
                "joint action has {} entries for {m_len} agents",
                actions.len()
            )));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a > s_len) {
            return Err(EnvError::ActionOutOfRange {
                index: bad,
                size: s_len + 1,
            });
        }

        // Claims and do-nothing judgements are taken against the pre-step state.
        let slot_snapshot = self.env.state().job_slot.clone();
        let claims: Vec<Option<(usize, usize)>> = actions
            .iter()
            .map(|&a| (a < s_len).then(|| slot_snapshot[a].map(|job| (job, a))).flatten())
            .collect();
        let had_feasible: Vec<bool> = (0..m_len).map(|m| self.env.machine_has_feasible(m)).collect();

        let mut claimants: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (m, claim) in claims.iter().enumerate() {
            if let Some((job, _)) = claim {
                claimants.entry(*job).or_default().push(m);
            }
        }
        let contested: BTreeMap<usize, Vec<usize>> =
            claimants.into_iter().filter(|(_, agents)| agents.len() > 1).collect();

        let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
        let mut verdicts = Vec::with_capacity(m_len);
        let mut components = Vec::with_capacity(m_len);
        for m in 0..m_len {
            let a = actions[m];
            let (verdict, pair) = if a == s_len {
                (Verdict::DoNothing { alternatives: had_feasible[m] }, None)
            } else {
                match claims[m] {
                    None => (Verdict::Null, None),
                    Some((job, _)) if taken.contains_key(&job) => (Verdict::Null, None),
                    Some((job, _)) => (self.env.classify_pair(Some(job), m), Some((job, m))),
                }
            };
            let mut c = self.env.reward_for(pair, verdict, self.counters[m]);
            self.counters[m] = Env::advance_counters(self.counters[m], verdict);
            if verdict == Verdict::Feasible {
                let (job, slot) = claims[m].unwrap();
                let crew = self.env.greedy_workers(job, m)?;
                // Slot positions only change when their own job is assigned.
                debug_assert_eq!(self.env.state().job_slot[slot], Some(job));
                self.env.assign(job, m, slot, crew);
                taken.insert(job, m);
            }
            if claims[m].is_some_and(|(job, _)| contested.contains_key(&job)) {
                c.conflict_malus = -1.0;
            }
            verdicts.push(verdict);
            components.push(c);
        }

        if actions.iter().all(|&a| a == s_len) {
            self.env.advance_clock();
        }
        self.env.finish_decision();

        let conflicts = ConflictReport {
            contests: contested
                .into_iter()
                .map(|(job, agents)| {
                    let winner = taken.get(&job).copied();
                    Contest {
                        job,
                        winner,
                        losers: agents.into_iter().filter(|&m| Some(m) != winner).collect(),
                    }
                })
                .collect(),
        };
        let state = self.env.state();
        let agents = (0..m_len)
            .map(|m| AgentOutcome {
                observation: self.env.observe_machine(m),
                reward: components[m].total(),
                verdict: verdicts[m],
                components: components[m],
                claim: claims[m],
            })
            .collect();
        Ok(JointOutcome {
            agents,
            conflicts,
            terminated: state.terminated,
            truncated: state.truncated,
        })
    }

    pub fn log_records(&self, actions: &[usize], outcome: &JointOutcome) -> Vec<AgentLogRecord> {
        let st = self.env.state();
        outcome
            .agents
            .iter()
            .enumerate()
            .map(|(m, a)| AgentLogRecord {
                decision_step: st.decision_step,
                agent: m,
                clock: st.clock,
                action_index: actions[m],
                claim: a.claim,
                verdict: a.verdict,
                reward: a.reward,
                components: a.components,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, JobPhase};
    use crate::instance::illustrative_instance;

    fn golden() -> MultiEnv {
        MultiEnv::new(Arc::new(illustrative_instance()), EnvConfig::new(5)).unwrap()
    }

    #[test]
    fn contested_job_goes_to_lowest_feasible_machine() {
        let mut env = golden();
        let out = env.joint_step(&[2, 2]).unwrap();
        assert_eq!(out.agents[0].verdict, Verdict::Feasible);
        assert_eq!(out.agents[0].reward, 1.75);
        assert_eq!(out.agents[1].verdict, Verdict::Null);
        assert_eq!(out.agents[1].reward, -1.5);
        assert_eq!(
            out.conflicts.contests,
            vec![Contest {
                job: 2,
                winner: Some(0),
                losers: vec![1]
            }]
        );
        assert_eq!(env.state().phase[2], JobPhase::InProcess);
        // Greedy crew for (j3, m1): w2 (1 machine) then w1 (2 machines).
        assert_eq!(env.state().schedule.assignments[0].workers, vec![0, 1]);
    }

    #[test]
    fn all_do_nothing_advances_clock() {
        let mut env = golden();
        env.joint_step(&[5, 1]).unwrap(); // m2 takes j2 until t=3
        assert_eq!(env.state().clock, 0);
        env.joint_step(&[5, 5]).unwrap();
        assert_eq!(env.state().clock, 3);
    }

    #[test]
    fn distinct_claims_both_assign() {
        let mut env = golden();
        let out = env.joint_step(&[0, 1]).unwrap();
        assert!(out.conflicts.contests.is_empty());
        assert_eq!(out.agents[0].verdict, Verdict::Feasible);
        assert_eq!(out.agents[1].verdict, Verdict::Feasible);
        assert!(out.agents.iter().all(|a| a.components.conflict_malus == 0.0));
        assert_eq!(env.state().schedule.len(), 2);
    }

    #[test]
    fn worker_exhaustion_mid_step() {
        let mut env = golden();
        // m1 takes j3 with both workers; m2's claim on j5 then lacks w1.
        let out = env.joint_step(&[2, 4]).unwrap();
        assert_eq!(out.agents[0].verdict, Verdict::Feasible);
        assert_eq!(out.agents[1].verdict, Verdict::Infeasible);
        assert_eq!(out.agents[1].reward, -1.0);
    }

    #[test]
    fn greedy_allocation() {
        let env = golden();
        assert_eq!(env.allocate_workers_greedy(2, 0).unwrap(), vec![0, 1]);
        assert_eq!(env.allocate_workers_greedy(4, 1).unwrap(), vec![0]);
        assert!(env.allocate_workers_greedy(1, 0).is_err());
    }

    #[test]
    fn per_agent_masks() {
        let mut env = golden();
        let m2 = env.per_agent_mask(1);
        assert_eq!(m2.0, vec![false, true, true, false, true, true]);
        env.joint_step(&[5, 1]).unwrap();
        assert_eq!(env.per_agent_mask(1).popcount(), 1);
    }

    #[test]
    fn global_observation_matches_single_agent() {
        let env = golden();
        let single = Env::new(Arc::new(illustrative_instance()), EnvConfig::new(5)).unwrap();
        let g = env.build_global_observation();
        assert_eq!(g.len(), 50);
        assert_eq!(g, single.observe());
        let agents: Vec<f64> = (0..2).flat_map(|m| env.observe_agent(m)).collect();
        assert_eq!(agents, g);
    }

    #[test]
    fn one_actor_step_matches_single_agent() {
        let inst = Arc::new(illustrative_instance());
        let mut cfg = EnvConfig::new(5);
        cfg.worker_allocation = WorkerAllocation::Greedy;
        let mut single = Env::new(inst.clone(), cfg.clone()).unwrap();
        let mut multi = MultiEnv::new(inst, cfg).unwrap();
        single.step(Action::assign(1, 3, 5)).unwrap();
        multi.joint_step(&[5, 3]).unwrap();
        assert!(single.state().same_simulation(multi.state()));
    }
}
