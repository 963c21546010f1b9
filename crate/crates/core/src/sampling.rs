//! Rollout plumbing: greedy-with-temperature completion of a state under a
//! policy. Used by Monte-Carlo value estimation and by the parallel-sampling
//! search strategies.

use rand::Rng;

use crate::mdp::{
    derive_seed, rng_from_seed, terminal_reward, Policy, PolicyError, ReasoningState,
    SamplingParams, Verifier,
};

/// How a rollout consults the policy at each step.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    /// Candidates requested per step. Symbolic adapters enumerate and this
    /// caps the choice set; remote adapters sample this many completions.
    pub branching: usize,
    /// 0 picks the top-ranked candidate; anything positive picks uniformly
    /// among the returned candidates.
    pub temperature: f64,
    /// Hard step cap so rollouts terminate in open-ended domains.
    pub max_steps: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            branching: 64,
            temperature: 1.0,
            max_steps: 64,
        }
    }
}

impl RolloutConfig {
    /// Step cap of twice the nominal solution depth.
    pub fn capped_for_depth(mut self, nominal_depth: usize) -> Self {
        self.max_steps = 2 * nominal_depth.max(1);
        self
    }
}

/// What one completed rollout produced.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub state: ReasoningState,
    pub reward: u8,
    /// Whitespace tokens across the generated continuation only.
    pub tokens: u64,
    /// Policy calls made during the rollout.
    pub policy_calls: u64,
}

/// Picks one step: the top candidate at temperature 0, otherwise a uniform
/// draw over the candidate list.
pub fn sample_step(
    policy: &dyn Policy,
    state: &ReasoningState,
    cfg: &RolloutConfig,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<crate::mdp::ReasoningStep, PolicyError> {
    let params = SamplingParams {
        seed,
        temperature: cfg.temperature,
    };
    let candidates = policy.propose(state, cfg.branching, &params)?;
    if candidates.is_empty() {
        return Err(PolicyError::Exhausted);
    }
    let idx = if cfg.temperature <= 0.0 || candidates.len() == 1 {
        0
    } else {
        rng.gen_range(0..candidates.len())
    };
    Ok(candidates.into_iter().nth(idx).expect("index in range"))
}

/// Runs `state` forward to a terminal step or the step cap, scoring the end
/// state with the verifier. A policy failure mid-rollout ends the rollout
/// with reward 0 (and a log line); the estimator stays well-defined.
pub fn rollout(
    state: &ReasoningState,
    policy: &dyn Policy,
    verifier: &dyn Verifier,
    cfg: &RolloutConfig,
    seed: u64,
) -> RolloutResult {
    let mut rng = rng_from_seed(seed);
    let mut current = state.clone();
    let mut tokens = 0u64;
    let mut policy_calls = 0u64;
    let mut taken = 0usize;
    while !current.terminal && taken < cfg.max_steps {
        let step_seed = derive_seed(seed, &current.problem.id, taken as u64);
        policy_calls += 1;
        match sample_step(policy, &current, cfg, step_seed, &mut rng) {
            Ok(step) => {
                tokens += step.token_count as u64;
                current = current.extend(step).expect("non-terminal state");
                taken += 1;
            }
            Err(PolicyError::Exhausted) => break,
            Err(err) => {
                log::warn!("rollout aborted, scoring 0: {err}");
                break;
            }
        }
    }
    let reward = if current.terminal {
        terminal_reward(&current.problem, &current, verifier).unwrap_or(0)
    } else {
        0
    };
    RolloutResult {
        state: current,
        reward,
        tokens,
        policy_calls,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Domain, Problem, ReasoningStep};
    use std::sync::Arc;

    struct ChainPolicy {
        depth: usize,
    }

    impl Policy for ChainPolicy {
        fn propose(
            &self,
            state: &ReasoningState,
            b: usize,
            _params: &SamplingParams,
        ) -> Result<Vec<ReasoningStep>, PolicyError> {
            if b == 0 {
                return Ok(vec![]);
            }
            let next = state.depth() + 1;
            let terminal = next >= self.depth;
            Ok(vec![ReasoningStep::new(format!("step {next}")).terminal(terminal)])
        }
    }

    struct AlwaysRight;
    impl Verifier for AlwaysRight {
        fn score(&self, _: &Problem, _: &ReasoningState) -> f64 {
            1.0
        }
    }

    fn problem() -> Arc<Problem> {
        Arc::new(Problem {
            id: "chain".into(),
            prompt: "count".into(),
            answer: "3".into(),
            domain: Domain::FreeformMath,
            difficulty: None,
        })
    }

    #[test]
    fn rollout_runs_to_terminal() {
        let root = ReasoningState::root(problem());
        let cfg = RolloutConfig::default();
        let out = rollout(&root, &ChainPolicy { depth: 3 }, &AlwaysRight, &cfg, 1);
        assert!(out.state.terminal);
        assert_eq!(out.reward, 1);
        assert_eq!(out.state.depth(), 3);
        assert_eq!(out.tokens, 6); // "step N" = 2 tokens each
        assert_eq!(out.policy_calls, 3);
    }

    #[test]
    fn rollout_respects_step_cap() {
        let root = ReasoningState::root(problem());
        let cfg = RolloutConfig {
            max_steps: 2,
            ..RolloutConfig::default()
        };
        let out = rollout(&root, &ChainPolicy { depth: 10 }, &AlwaysRight, &cfg, 1);
        assert!(!out.state.terminal);
        assert_eq!(out.reward, 0);
        assert_eq!(out.state.depth(), 2);
    }

    #[test]
    fn rollout_is_seed_reproducible() {
        let root = ReasoningState::root(problem());
        let cfg = RolloutConfig::default();
        let a = rollout(&root, &ChainPolicy { depth: 4 }, &AlwaysRight, &cfg, 9);
        let b = rollout(&root, &ChainPolicy { depth: 4 }, &AlwaysRight, &cfg, 9);
        assert_eq!(a.state, b.state);
        assert_eq!(a.tokens, b.tokens);
    }
}
