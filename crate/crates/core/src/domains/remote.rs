//! HTTP adapter for a served completion model. The endpoint speaks a plain
//! JSON protocol: POST `{"prompt","n","temperature","max_tokens","stop"}`,
//! answer `{"choices":[{"text": ...}, ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domains::math::contains_boxed;
use crate::mdp::{
    Policy, PolicyError, ReasoningState, ReasoningStep, RevisionPolicy, SamplingParams,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemotePolicyConfig {
    pub endpoint: String,
    pub temperature: f64,
    pub max_step_tokens: u32,
    pub stop: Vec<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Completions are split here; the first piece becomes the step.
    pub step_delimiter: String,
    /// Upper bound on concurrent in-flight requests from this adapter.
    pub max_in_flight: usize,
}

impl RemotePolicyConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemotePolicyConfig {
            endpoint: endpoint.into(),
            temperature: 0.7,
            max_step_tokens: 512,
            stop: vec![],
            timeout_ms: 30_000,
            retries: 2,
            step_delimiter: "\n\n".into(),
            max_in_flight: 8,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.timeout_ms == 0 {
            return Err(PolicyError::Protocol("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// Step-proposing client over the completion protocol.
pub struct RemotePolicy {
    config: RemotePolicyConfig,
    client: reqwest::blocking::Client,
    gate: std::sync::Arc<sem::Semaphore>,
}

// std has no Semaphore; a tiny counting gate over Mutex+Condvar.
mod sem {
    pub struct Semaphore {
        state: std::sync::Mutex<usize>,
        cv: std::sync::Condvar,
    }

    impl Semaphore {
        pub fn new(permits: usize) -> Self {
            Semaphore {
                state: std::sync::Mutex::new(permits),
                cv: std::sync::Condvar::new(),
            }
        }

        pub fn acquire(&self) -> Guard<'_> {
            let mut n = self.state.lock().expect("poisoned");
            while *n == 0 {
                n = self.cv.wait(n).expect("poisoned");
            }
            *n -= 1;
            Guard { sem: self }
        }
    }

    pub struct Guard<'a> {
        sem: &'a Semaphore,
    }

    impl Drop for Guard<'_> {
        fn drop(&mut self) {
            let mut n = self.sem.state.lock().expect("poisoned");
            *n += 1;
            self.sem.cv.notify_one();
        }
    }
}

impl RemotePolicy {
    pub fn new(config: RemotePolicyConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| PolicyError::Protocol(e.to_string()))?;
        let gate = std::sync::Arc::new(sem::Semaphore::new(config.max_in_flight.max(1)));
        Ok(RemotePolicy {
            config,
            client,
            gate,
        })
    }

    pub fn config(&self) -> &RemotePolicyConfig {
        &self.config
    }

    /// Serializes a state for the completion prompt: the problem prompt and
    /// each step, blank-line separated.
    pub fn render_state(state: &ReasoningState) -> String {
        let mut out = state.problem.prompt.clone();
        for step in &state.steps {
            out.push_str("\n\n");
            out.push_str(&step.text);
        }
        out
    }

    /// Serializes prior episodes ahead of the current state so revision
    /// sampling conditions on everything tried so far.
    pub fn render_with_history(state: &ReasoningState, history: &[ReasoningState]) -> String {
        let mut out = state.problem.prompt.clone();
        for (i, earlier) in history.iter().enumerate() {
            out.push_str(&format!("\n\n[Attempt {}]\n", i + 1));
            out.push_str(&earlier.step_texts().join("\n\n"));
        }
        if !history.is_empty() {
            out.push_str(&format!("\n\n[Attempt {}]\n", history.len() + 1));
        }
        for step in &state.steps {
            out.push_str("\n\n");
            out.push_str(&step.text);
        }
        out
    }

    fn complete(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<String>, PolicyError> {
        let request = CompletionRequest {
            prompt,
            n,
            temperature: if params.temperature > 0.0 {
                params.temperature
            } else {
                self.config.temperature
            },
            max_tokens: self.config.max_step_tokens,
            stop: &self.config.stop,
            seed: Some(params.seed),
        };
        let mut last_err = None;
        for _attempt in 0..=self.config.retries {
            let _permit = self.gate.acquire();
            let sent = self.client.post(&self.config.endpoint).json(&request).send();
            match sent {
                Ok(response) => {
                    if !response.status().is_success() {
                        return Err(PolicyError::Protocol(format!(
                            "endpoint returned {}",
                            response.status()
                        )));
                    }
                    let body: CompletionResponse = response
                        .json()
                        .map_err(|e| PolicyError::Protocol(e.to_string()))?;
                    return Ok(body.choices.into_iter().map(|c| c.text).collect());
                }
                Err(e) if e.is_timeout() || e.is_connect() => {
                    last_err = Some(e);
                }
                Err(e) => return Err(PolicyError::Protocol(e.to_string())),
            }
        }
        log::warn!("endpoint unreachable: {:?}", last_err);
        Err(PolicyError::Timeout {
            retries: self.config.retries,
        })
    }

    fn completion_to_step(&self, completion: &str) -> Option<ReasoningStep> {
        let first = completion
            .split(&self.config.step_delimiter)
            .map(str::trim)
            .find(|piece| !piece.is_empty())?;
        Some(ReasoningStep::new(first).terminal(contains_boxed(first)))
    }

    fn propose_from_prompt(
        &self,
        prompt: &str,
        b: usize,
        params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        if b == 0 {
            return Ok(vec![]);
        }
        let completions = self.complete(prompt, b, params)?;
        if completions.is_empty() {
            return Err(PolicyError::EmptyCompletion);
        }
        let steps: Vec<ReasoningStep> = completions
            .iter()
            .filter_map(|c| self.completion_to_step(c))
            .collect();
        if steps.is_empty() {
            return Err(PolicyError::EmptyCompletion);
        }
        Ok(steps)
    }
}

impl Policy for RemotePolicy {
    fn propose(
        &self,
        state: &ReasoningState,
        b: usize,
        params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        self.propose_from_prompt(&Self::render_state(state), b, params)
    }
}

impl RevisionPolicy for RemotePolicy {
    fn propose_with_history(
        &self,
        state: &ReasoningState,
        history: &[ReasoningState],
        b: usize,
        params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        self.propose_from_prompt(&Self::render_with_history(state, history), b, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_at_delimiter() {
        let policy = RemotePolicy::new(RemotePolicyConfig::new("http://unused")).unwrap();
        let step = policy.completion_to_step("Step A\n\nStep B").unwrap();
        assert_eq!(step.text, "Step A");
        assert!(!step.terminal);
    }

    #[test]
    fn boxed_completion_is_terminal() {
        let policy = RemotePolicy::new(RemotePolicyConfig::new("http://unused")).unwrap();
        let step = policy
            .completion_to_step("the answer is \\boxed{4}\n\ntrailing")
            .unwrap();
        assert!(step.terminal);
    }

    #[test]
    fn zero_timeout_rejected() {
        let mut cfg = RemotePolicyConfig::new("http://unused");
        cfg.timeout_ms = 0;
        assert!(RemotePolicy::new(cfg).is_err());
    }
}
