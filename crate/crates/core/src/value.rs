//! State-value estimation. The search-time workhorse is Monte-Carlo: K
//! seeded rollouts to a terminal state, scored by an oracle outcome
//! verifier, averaged. A thin HTTP client consumes a served process reward
//! model through the same interface.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{derive_seed, terminal_reward, Policy, ReasoningState, Verifier};
use crate::sampling::{rollout, RolloutConfig};

/// A mean-success-rate estimate for one state.
///
/// `value == correct / rollouts` whenever rollouts were actually run;
/// `rollouts == 0` marks a terminal short-circuit whose value is the exact
/// outcome reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub rollouts: u32,
    pub correct: u32,
    pub rollout_tokens: u64,
}

impl ValueEstimate {
    /// An estimate that spent no rollouts (heuristics, terminal states).
    pub fn exact(value: f64) -> Self {
        ValueEstimate {
            value,
            rollouts: 0,
            correct: 0,
            rollout_tokens: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ValueError {
    #[error("scoring endpoint timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("malformed scoring response: {0}")]
    Protocol(String),
}

/// Anything that can score a state in [0, 1].
pub trait ValueFn: Send + Sync {
    fn estimate(&self, state: &ReasoningState) -> Result<ValueEstimate, ValueError>;
}

/// Estimates the value of a state as the mean outcome reward of `k`
/// independent seeded completions. Terminal states short-circuit to their
/// own reward with zero rollouts. A rollout that fails inside the policy
/// counts as reward 0 (already logged by the rollout layer), keeping K fixed
/// and the estimator well-defined.
pub fn mc_value(
    state: &ReasoningState,
    policy: &dyn Policy,
    verifier: &dyn Verifier,
    k: u32,
    cfg: &RolloutConfig,
    seed: u64,
) -> ValueEstimate {
    assert!(k >= 1, "k must be at least 1");
    if state.terminal {
        let reward = terminal_reward(&state.problem, state, verifier).unwrap_or(0);
        return ValueEstimate::exact(reward as f64);
    }
    let (correct, tokens) = (0..k)
        .into_par_iter()
        .map(|i| {
            let rollout_seed = derive_seed(seed, &state.problem.id, i as u64);
            let result = rollout(state, policy, verifier, cfg, rollout_seed);
            (result.reward as u32, result.tokens)
        })
        .reduce(|| (0u32, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));
    ValueEstimate {
        value: correct as f64 / k as f64,
        rollouts: k,
        correct,
        rollout_tokens: tokens,
    }
}

/// Monte-Carlo `ValueFn` with a per-call cost ledger. Call seeds derive from
/// `(root seed, problem id, call index)`, so a whole search replays
/// bit-exactly from one 64-bit seed.
pub struct McValueFn {
    policy: Arc<dyn Policy>,
    verifier: Arc<dyn Verifier>,
    k: u32,
    cfg: RolloutConfig,
    root_seed: u64,
    calls: AtomicU64,
    ledger: Mutex<Vec<u64>>,
}

impl McValueFn {
    pub fn new(
        policy: Arc<dyn Policy>,
        verifier: Arc<dyn Verifier>,
        k: u32,
        cfg: RolloutConfig,
        root_seed: u64,
    ) -> Self {
        assert!(k >= 1, "k must be at least 1");
        McValueFn {
            policy,
            verifier,
            k,
            cfg,
            root_seed,
            calls: AtomicU64::new(0),
            ledger: Mutex::new(Vec::new()),
        }
    }

    /// Rollout tokens recorded per estimate call, in call order.
    pub fn ledger(&self) -> Vec<u64> {
        self.ledger.lock().expect("poisoned").clone()
    }

    pub fn total_rollout_tokens(&self) -> u64 {
        self.ledger().iter().sum()
    }
}

impl ValueFn for McValueFn {
    fn estimate(&self, state: &ReasoningState) -> Result<ValueEstimate, ValueError> {
        let call_index = self.calls.fetch_add(1, Ordering::SeqCst);
        let seed = derive_seed(self.root_seed, &state.problem.id, call_index);
        let estimate = mc_value(state, &*self.policy, &*self.verifier, self.k, &self.cfg, seed);
        self.ledger
            .lock()
            .expect("poisoned")
            .push(estimate.rollout_tokens);
        Ok(estimate)
    }
}

#[derive(Debug, Clone)]
pub struct PrmClientConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl PrmClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        PrmClientConfig {
            endpoint: endpoint.into(),
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct PrmRequest<'a> {
    question: &'a str,
    steps: Vec<&'a str>,
}

#[derive(Deserialize)]
struct PrmResponse {
    value: f64,
}

/// Client for a served process reward model:
/// POST `{"question","steps"}` -> `{"value"}`.
pub struct RemotePrmScorer {
    config: PrmClientConfig,
    client: reqwest::blocking::Client,
}

impl RemotePrmScorer {
    pub fn new(config: PrmClientConfig) -> Result<Self, ValueError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ValueError::Protocol(e.to_string()))?;
        Ok(RemotePrmScorer { config, client })
    }

    /// Scores a (question, step prefix); out-of-range scalars are clamped
    /// into [0, 1] with a warning.
    pub fn score(&self, question: &str, steps: &[String]) -> Result<f64, ValueError> {
        let request = PrmRequest {
            question,
            steps: steps.iter().map(|s| s.as_str()).collect(),
        };
        let mut attempts = 0;
        loop {
            let sent = self.client.post(&self.config.endpoint).json(&request).send();
            match sent {
                Ok(response) => {
                    if !response.status().is_success() {
                        return Err(ValueError::Protocol(format!(
                            "endpoint returned {}",
                            response.status()
                        )));
                    }
                    let body: PrmResponse = response
                        .json()
                        .map_err(|e| ValueError::Protocol(e.to_string()))?;
                    let raw = body.value;
                    if !(0.0..=1.0).contains(&raw) {
                        log::warn!("PRM returned out-of-range value {raw}, clamping");
                    }
                    return Ok(raw.clamp(0.0, 1.0));
                }
                Err(e) if (e.is_timeout() || e.is_connect()) && attempts < self.config.retries => {
                    attempts += 1;
                }
                Err(e) if e.is_timeout() || e.is_connect() => {
                    return Err(ValueError::Timeout {
                        retries: self.config.retries,
                    })
                }
                Err(e) => return Err(ValueError::Protocol(e.to_string())),
            }
        }
    }
}

impl ValueFn for RemotePrmScorer {
    fn estimate(&self, state: &ReasoningState) -> Result<ValueEstimate, ValueError> {
        let value = self.score(&state.problem.prompt, &state.step_texts())?;
        Ok(ValueEstimate::exact(value))
    }
}

/// Index of the best solution under `scorer`; ties break toward the
/// earliest generation index.
pub fn rank_solutions<T>(
    solutions: &[T],
    mut scorer: impl FnMut(&T) -> f64,
) -> Result<usize, RankError> {
    if solutions.is_empty() {
        return Err(RankError::EmptyInput);
    }
    let mut best = 0usize;
    let mut best_score = scorer(&solutions[0]);
    for (i, s) in solutions.iter().enumerate().skip(1) {
        let score = scorer(s);
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("cannot rank an empty solution list")]
    EmptyInput,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::countdown::{CountdownPolicy, CountdownProblem, CountdownVerifier};
    use crate::mdp::{Domain, PolicyError, Problem, ReasoningStep, SamplingParams};

    #[test]
    fn estimate_value_is_exact_ratio() {
        // the mean is always the exact integer ratio
        let est = ValueEstimate {
            value: 3.0 / 4.0,
            rollouts: 4,
            correct: 3,
            rollout_tokens: 0,
        };
        assert_eq!(est.value, 0.75);
    }

    struct SingleStepPolicy;
    impl Policy for SingleStepPolicy {
        fn propose(
            &self,
            _state: &ReasoningState,
            _b: usize,
            _params: &SamplingParams,
        ) -> Result<Vec<ReasoningStep>, PolicyError> {
            Ok(vec![ReasoningStep::new("done").terminal(true)])
        }
    }

    struct AlwaysRight;
    impl Verifier for AlwaysRight {
        fn score(&self, _: &Problem, _: &ReasoningState) -> f64 {
            1.0
        }
    }

    fn freeform_problem() -> Arc<Problem> {
        Arc::new(Problem {
            id: "f".into(),
            prompt: "q".into(),
            answer: "a".into(),
            domain: Domain::FreeformMath,
            difficulty: None,
        })
    }

    #[test]
    fn all_correct_rollouts_give_one() {
        let root = ReasoningState::root(freeform_problem());
        let est = mc_value(
            &root,
            &SingleStepPolicy,
            &AlwaysRight,
            8,
            &RolloutConfig::default(),
            3,
        );
        assert_eq!(est.value, 1.0);
        assert_eq!(est.correct, 8);
        assert_eq!(est.rollouts, 8);
    }

    #[test]
    fn terminal_state_short_circuits() {
        let p = CountdownProblem::new(vec![3, 3], 6).unwrap();
        let arc = Arc::new(p.to_problem("t"));
        let root = ReasoningState::root(Arc::clone(&arc));
        let steps = CountdownPolicy
            .propose(&root, 1, &SamplingParams::default())
            .unwrap();
        let done = root.extend(steps[0].clone()).unwrap();
        assert!(done.terminal);
        let est = mc_value(
            &done,
            &CountdownPolicy,
            &CountdownVerifier,
            128,
            &RolloutConfig::default(),
            0,
        );
        assert_eq!(est.value, 1.0);
        assert_eq!(est.rollouts, 0);
        assert_eq!(est.rollout_tokens, 0);
    }

    #[test]
    fn estimates_are_seed_reproducible() {
        let p = CountdownProblem::new(vec![2, 3, 4], 24).unwrap();
        let arc = Arc::new(p.to_problem("s"));
        let root = ReasoningState::root(arc);
        let cfg = RolloutConfig::default().capped_for_depth(3);
        let a = mc_value(&root, &CountdownPolicy, &CountdownVerifier, 16, &cfg, 11);
        let b = mc_value(&root, &CountdownPolicy, &CountdownVerifier, 16, &cfg, 11);
        assert_eq!(a, b);
        assert_eq!(a.value, a.correct as f64 / a.rollouts as f64);
    }

    #[test]
    fn ledger_tracks_every_call() {
        let p = CountdownProblem::new(vec![2, 3, 4], 24).unwrap();
        let arc = Arc::new(p.to_problem("l"));
        let root = ReasoningState::root(arc);
        let mc = McValueFn::new(
            Arc::new(CountdownPolicy),
            Arc::new(CountdownVerifier),
            4,
            RolloutConfig::default().capped_for_depth(3),
            7,
        );
        let e1 = mc.estimate(&root).unwrap();
        let e2 = mc.estimate(&root).unwrap();
        let ledger = mc.ledger();
        assert_eq!(ledger, vec![e1.rollout_tokens, e2.rollout_tokens]);
        assert_eq!(mc.total_rollout_tokens(), e1.rollout_tokens + e2.rollout_tokens);
    }

    #[test]
    fn rank_picks_argmax_with_earliest_tie() {
        let scores = [0.2, 0.9, 0.5];
        assert_eq!(rank_solutions(&scores, |s| *s).unwrap(), 1);
        let flat = [0.5, 0.5, 0.5];
        assert_eq!(rank_solutions(&flat, |s| *s).unwrap(), 0);
        let single = [0.1];
        assert_eq!(rank_solutions(&single, |s| *s).unwrap(), 0);
        let empty: [f64; 0] = [];
        assert_eq!(
            rank_solutions(&empty, |s| *s).unwrap_err(),
            RankError::EmptyInput
        );
    }

    #[test]
    fn rank_is_scale_invariant() {
        let scores = [0.1, 0.7, 0.3, 0.7];
        let a = rank_solutions(&scores, |s| *s).unwrap();
        let b = rank_solutions(&scores, |s| *s * 10.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 1); // tie between 1 and 3 goes to the earlier index
    }
}
