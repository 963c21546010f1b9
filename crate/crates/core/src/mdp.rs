//! The reasoning MDP: problems, steps, states, and the contracts that
//! policies, verifiers, and value estimators plug into.
//!
//! States are immutable after construction; transitions copy. All types are
//! cheap to share across worker threads (`Problem` sits behind an `Arc`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Problem domains with built-in adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "countdown")]
    Countdown,
    #[serde(rename = "maze")]
    Maze,
    #[serde(rename = "freeform-math")]
    FreeformMath,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Countdown => write!(f, "countdown"),
            Domain::Maze => write!(f, "maze"),
            Domain::FreeformMath => write!(f, "freeform-math"),
        }
    }
}

/// A prompt with a verifiable ground-truth answer: the unit of search.
///
/// Wire format is one JSON object per line:
/// `{"id","prompt","answer","domain","difficulty"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub prompt: String,
    pub answer: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u8>,
}

/// One reasoning step: free text plus an optional structured form that
/// domain verifiers can replay exactly.
///
/// `token_count` is the whitespace-token count of `text`. That is the
/// budget unit everywhere in this crate: it needs no model weights and is
/// reproducible bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
    pub token_count: usize,
    /// Set by the proposing adapter; the core never infers terminality from text.
    #[serde(default)]
    pub terminal: bool,
}

impl ReasoningStep {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = whitespace_tokens(&text);
        ReasoningStep {
            text,
            payload: None,
            token_count,
            terminal: false,
        }
    }

    pub fn terminal(mut self, terminal: bool) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn with_payload(mut self, payload: serde_json::Value) -> Self {
        self.payload = Some(payload);
        self
    }
}

/// The number of whitespace-separated tokens in `text`.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// The prompt plus the ordered step prefix generated so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningState {
    pub problem: Arc<Problem>,
    pub steps: Vec<ReasoningStep>,
    pub terminal: bool,
}

impl ReasoningState {
    /// The empty (root) state for a problem.
    pub fn root(problem: Arc<Problem>) -> Self {
        ReasoningState {
            problem,
            steps: Vec::new(),
            terminal: false,
        }
    }

    /// A state with a given prefix; terminality comes from the last step.
    pub fn with_steps(problem: Arc<Problem>, steps: Vec<ReasoningStep>) -> Self {
        let terminal = steps.last().map(|s| s.terminal).unwrap_or(false);
        ReasoningState {
            problem,
            steps,
            terminal,
        }
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    /// Appends `step`, returning the extended state. The input is untouched.
    pub fn extend(&self, step: ReasoningStep) -> Result<ReasoningState, MdpError> {
        extend_state(self, step)
    }
}

/// Appends a step to a non-terminal state. The new state's terminal flag is
/// copied from the step; the input state is never mutated.
pub fn extend_state(state: &ReasoningState, step: ReasoningStep) -> Result<ReasoningState, MdpError> {
    if state.terminal {
        return Err(MdpError::ExtendTerminal);
    }
    let mut steps = state.steps.clone();
    let terminal = step.terminal;
    steps.push(step);
    Ok(ReasoningState {
        problem: Arc::clone(&state.problem),
        steps,
        terminal,
    })
}

/// Outcome reward for a terminal state: 1 iff the verifier scores the final
/// answer correct. Intermediate states never receive reward through this
/// function.
pub fn terminal_reward(
    problem: &Problem,
    state: &ReasoningState,
    verifier: &dyn Verifier,
) -> Result<u8, MdpError> {
    if !state.terminal {
        return Err(MdpError::NotTerminal);
    }
    Ok(if verifier.score(problem, state) == 1.0 { 1 } else { 0 })
}

/// Normalizes an answer string for comparison: collapses whitespace, strips
/// a trailing period, and unwraps `\boxed{...}`.
pub fn canonicalize_answer(raw: &str) -> Result<String, MdpError> {
    let mut s = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let before = s.clone();
        s = s.trim().trim_end_matches('.').trim().to_string();
        if let Some(inner) = unwrap_boxed(&s) {
            s = inner.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        if s == before {
            break;
        }
    }
    if s.is_empty() {
        return Err(MdpError::EmptyAnswer);
    }
    Ok(s)
}

/// If the whole string is a single `\boxed{...}` wrapper, returns the content.
fn unwrap_boxed(s: &str) -> Option<String> {
    let rest = s.strip_prefix("\\boxed{")?;
    let mut depth = 1usize;
    for (i, c) in rest.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    // must close exactly at the end of the string
                    if i + 1 == rest.len() {
                        return Some(rest[..i].to_string());
                    }
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MdpError {
    #[error("cannot extend a terminal state")]
    ExtendTerminal,
    #[error("state is not terminal")]
    NotTerminal,
    #[error("answer canonicalizes to the empty string")]
    EmptyAnswer,
}

/// Errors a policy adapter can raise while proposing steps.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no legal step can be proposed from this state")]
    Exhausted,
    #[error("endpoint timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
}

/// Knobs for a single propose call. `seed` makes remote sampling replayable;
/// symbolic adapters ignore it (their proposals are already deterministic).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingParams {
    pub seed: u64,
    pub temperature: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            seed: 0,
            temperature: 1.0,
        }
    }
}

/// Proposes up to `b` candidate next steps for a state.
///
/// Implementations must be deterministic for identical `(state, b, params)`
/// and tolerate concurrent invocation; the search layer fans rollouts out to
/// worker threads.
pub trait Policy: Send + Sync {
    fn propose(
        &self,
        state: &ReasoningState,
        b: usize,
        params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError>;
}

/// A policy that can condition on earlier, complete solution attempts.
///
/// The default ignores the history, which is correct for adapters with no
/// notion of revision.
pub trait RevisionPolicy: Policy {
    fn propose_with_history(
        &self,
        state: &ReasoningState,
        history: &[ReasoningState],
        b: usize,
        params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        let _ = history;
        self.propose(state, b, params)
    }
}

/// Scores a reasoning process in [0, 1]. Oracle verifiers return exactly
/// 0 or 1 and only score terminal states meaningfully.
pub trait Verifier: Send + Sync {
    fn score(&self, problem: &Problem, state: &ReasoningState) -> f64;
}

/// Stable 64-bit FNV-1a over length-delimited parts. Never changes across
/// releases, so replay files stay valid.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        // part separator so ("ab","c") != ("a","bc")
        h ^= 0xff;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Per-call seed derivation: one 64-bit root seed, sub-seeds hashed from
/// `(root, problem id, call index)`. Required for bit-exact replay of
/// Monte-Carlo rollouts.
pub fn derive_seed(root: u64, problem_id: &str, call_index: u64) -> u64 {
    stable_hash(&[
        &root.to_le_bytes(),
        problem_id.as_bytes(),
        &call_index.to_le_bytes(),
    ])
}

/// The crate-wide RNG. ChaCha8 is seedable from a `u64` and produces the
/// same stream on every platform.
pub fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
