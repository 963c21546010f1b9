//! The Countdown / Game-of-24 domain: combine every given number with
//! + - * / to reach a target. Intermediate results are restricted to
//! positive integers with exact division, which keeps the state space
//! finite and the brute-force oracle exact.
//!
//! A step is terminal when it leaves exactly one number equal to the target.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domains::DomainError;
use crate::mdp::{
    Domain, Policy, PolicyError, Problem, ReasoningState, ReasoningStep, RevisionPolicy,
    SamplingParams, Verifier,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountdownOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl CountdownOp {
    pub const ALL: [CountdownOp; 4] = [
        CountdownOp::Add,
        CountdownOp::Sub,
        CountdownOp::Mul,
        CountdownOp::Div,
    ];

    pub fn symbol(self) -> char {
        match self {
            CountdownOp::Add => '+',
            CountdownOp::Sub => '-',
            CountdownOp::Mul => '*',
            CountdownOp::Div => '/',
        }
    }

    pub fn commutative(self) -> bool {
        matches!(self, CountdownOp::Add | CountdownOp::Mul)
    }

    /// `a op b` when the result is a positive integer, else None.
    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        let r = match self {
            CountdownOp::Add => a.checked_add(b)?,
            CountdownOp::Sub => a.checked_sub(b)?,
            CountdownOp::Mul => a.checked_mul(b)?,
            CountdownOp::Div => {
                if b == 0 || a % b != 0 {
                    return None;
                }
                a / b
            }
        };
        (r >= 1).then_some(r)
    }
}

/// A multiset of 2-6 positive integers plus a positive target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountdownProblem {
    pub numbers: Vec<i64>,
    pub target: i64,
}

impl CountdownProblem {
    pub fn new(numbers: Vec<i64>, target: i64) -> Result<Self, DomainError> {
        if numbers.len() < 2 || numbers.len() > 6 {
            return Err(DomainError::InvalidProblem(format!(
                "expected 2-6 numbers, got {}",
                numbers.len()
            )));
        }
        if numbers.iter().any(|&n| n < 1) || target < 1 {
            return Err(DomainError::InvalidProblem(
                "numbers and target must be >= 1".into(),
            ));
        }
        Ok(CountdownProblem { numbers, target })
    }

    /// Canonical prompt, parseable back with [`CountdownProblem::from_problem`].
    pub fn prompt(&self) -> String {
        let nums = self
            .numbers
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "Combine the numbers [{nums}] with + - * / , using each exactly once, to reach the target {}.",
            self.target
        )
    }

    pub fn to_problem(&self, id: impl Into<String>) -> Problem {
        Problem {
            id: id.into(),
            prompt: self.prompt(),
            answer: self.target.to_string(),
            domain: Domain::Countdown,
            // 2 numbers -> 1 ... 6 numbers -> 5
            difficulty: Some((self.numbers.len() - 1) as u8),
        }
    }

    pub fn from_problem(problem: &Problem) -> Result<Self, DomainError> {
        if problem.domain != Domain::Countdown {
            return Err(DomainError::WrongDomain {
                expected: Domain::Countdown,
                got: problem.domain,
            });
        }
        let open = problem
            .prompt
            .find('[')
            .ok_or_else(|| DomainError::InvalidProblem("missing number list".into()))?;
        let close = problem.prompt[open..]
            .find(']')
            .map(|i| open + i)
            .ok_or_else(|| DomainError::InvalidProblem("missing number list".into()))?;
        let numbers = problem.prompt[open + 1..close]
            .split_whitespace()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| DomainError::InvalidProblem(format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let target = problem
            .answer
            .trim()
            .parse::<i64>()
            .map_err(|_| DomainError::InvalidProblem("bad target".into()))?;
        CountdownProblem::new(numbers, target)
    }
}

/// One arithmetic move, replayable under exact integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountdownStep {
    pub a: i64,
    pub b: i64,
    pub op: CountdownOp,
    pub result: i64,
}

impl CountdownStep {
    pub fn encode(&self) -> String {
        format!("{}{}{}={}", self.a, self.op.symbol(), self.b, self.result)
    }

    pub fn to_reasoning_step(&self, terminal: bool) -> ReasoningStep {
        ReasoningStep::new(self.encode())
            .with_payload(serde_json::to_value(self).expect("serializable"))
            .terminal(terminal)
    }

    pub fn from_reasoning_step(step: &ReasoningStep) -> Option<CountdownStep> {
        step.payload
            .as_ref()
            .and_then(|p| serde_json::from_value(p.clone()).ok())
    }
}

/// The multiset left after applying `steps` to the problem numbers, or None
/// if some step is illegal (operand missing, wrong result).
pub fn remaining_numbers(problem: &CountdownProblem, steps: &[ReasoningStep]) -> Option<Vec<i64>> {
    let mut pool = problem.numbers.clone();
    for step in steps {
        let mv = CountdownStep::from_reasoning_step(step)?;
        if mv.op.apply(mv.a, mv.b) != Some(mv.result) {
            return None;
        }
        remove_one(&mut pool, mv.a)?;
        remove_one(&mut pool, mv.b)?;
        pool.push(mv.result);
    }
    Some(pool)
}

fn remove_one(pool: &mut Vec<i64>, value: i64) -> Option<()> {
    let idx = pool.iter().position(|&n| n == value)?;
    pool.swap_remove(idx);
    Some(())
}

/// All legal moves from a number pool, deduplicated on their encoding and
/// ordered by ascending distance-to-target, then lexicographically. The
/// greedy head of this list is a decent but imperfect toy policy, so search
/// has something to correct.
pub fn legal_moves(pool: &[i64], target: i64) -> Vec<CountdownStep> {
    let mut moves = Vec::new();
    for i in 0..pool.len() {
        for j in (i + 1)..pool.len() {
            for op in CountdownOp::ALL {
                let pairs: &[(i64, i64)] = if op.commutative() {
                    &[(pool[i].max(pool[j]), pool[i].min(pool[j]))]
                } else {
                    &[(pool[i], pool[j]), (pool[j], pool[i])]
                };
                for &(a, b) in pairs {
                    if let Some(result) = op.apply(a, b) {
                        moves.push(CountdownStep { a, b, op, result });
                    }
                }
            }
        }
    }
    moves.sort_by(|x, y| {
        let dx = (x.result - target).abs();
        let dy = (y.result - target).abs();
        dx.cmp(&dy).then_with(|| x.encode().cmp(&y.encode()))
    });
    moves.dedup_by_key(|m| m.encode());
    moves
}

/// Symbolic stand-in for a step-proposing model on Countdown problems.
#[derive(Debug, Default)]
pub struct CountdownPolicy;

impl CountdownPolicy {
    fn candidates(
        &self,
        state: &ReasoningState,
        b: usize,
        exclude_first: &[String],
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        let problem = CountdownProblem::from_problem(&state.problem)
            .map_err(|e| PolicyError::Protocol(e.to_string()))?;
        let pool = remaining_numbers(&problem, &state.steps)
            .ok_or_else(|| PolicyError::Protocol("state does not replay".into()))?;
        if pool.len() < 2 {
            return Err(PolicyError::Exhausted);
        }
        let exclude: HashSet<&str> = if state.steps.is_empty() {
            exclude_first.iter().map(|s| s.as_str()).collect()
        } else {
            HashSet::new()
        };
        let steps: Vec<ReasoningStep> = legal_moves(&pool, problem.target)
            .into_iter()
            .filter(|m| !exclude.contains(m.encode().as_str()))
            .take(b)
            .map(|m| {
                let terminal = pool.len() == 2 && m.result == problem.target;
                m.to_reasoning_step(terminal)
            })
            .collect();
        if steps.is_empty() {
            return Err(PolicyError::Exhausted);
        }
        Ok(steps)
    }
}

impl Policy for CountdownPolicy {
    fn propose(
        &self,
        state: &ReasoningState,
        b: usize,
        _params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        if b == 0 {
            return Ok(vec![]);
        }
        self.candidates(state, b, &[])
    }
}

impl RevisionPolicy for CountdownPolicy {
    /// A revision episode never repeats a first move that an earlier episode
    /// already tried.
    fn propose_with_history(
        &self,
        state: &ReasoningState,
        history: &[ReasoningState],
        b: usize,
        _params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        if b == 0 {
            return Ok(vec![]);
        }
        let tried: Vec<String> = history
            .iter()
            .filter_map(|s| s.steps.first().map(|step| step.text.clone()))
            .collect();
        self.candidates(state, b, &tried)
    }
}

/// Exact outcome verifier: replays the step sequence under integer
/// arithmetic and checks that one number remains and equals the target.
#[derive(Debug, Default)]
pub struct CountdownVerifier;

impl Verifier for CountdownVerifier {
    fn score(&self, problem: &Problem, state: &ReasoningState) -> f64 {
        let Ok(cd) = CountdownProblem::from_problem(problem) else {
            return 0.0;
        };
        let Some(pool) = remaining_numbers(&cd, &state.steps) else {
            return 0.0;
        };
        if state.terminal && pool.len() == 1 && pool[0] == cd.target {
            1.0
        } else {
            0.0
        }
    }
}

/// Brute-force solvability oracle: exhaustive search over all operation
/// orders. Only intended for problem sizes the acceptance suite uses.
pub fn countdown_solvable(problem: &CountdownProblem) -> Result<bool, DomainError> {
    if problem.numbers.len() > 6 {
        return Err(DomainError::TooLarge {
            limit: 6,
            got: problem.numbers.len(),
        });
    }
    Ok(solvable_from(&problem.numbers, problem.target))
}

/// Whether `target` is reachable by reducing `pool` to a single number.
/// Usable on partial states: an unreachable pool proves value 0.
pub fn solvable_from(pool: &[i64], target: i64) -> bool {
    fn go(pool: &mut Vec<i64>, target: i64, failed: &mut HashSet<Vec<i64>>) -> bool {
        if pool.len() == 1 {
            return pool[0] == target;
        }
        let mut key = pool.clone();
        key.sort_unstable();
        if failed.contains(&key) {
            return false;
        }
        for i in 0..pool.len() {
            for j in (i + 1)..pool.len() {
                let (a, b) = (pool[i], pool[j]);
                for op in CountdownOp::ALL {
                    let results = if op.commutative() {
                        vec![op.apply(a.max(b), a.min(b))]
                    } else {
                        vec![op.apply(a, b), op.apply(b, a)]
                    };
                    for r in results.into_iter().flatten() {
                        // remove the pair, push the result (j > i, remove j first)
                        let bj = pool.swap_remove(j);
                        let ai = pool.swap_remove(i);
                        pool.push(r);
                        let hit = go(pool, target, failed);
                        pool.pop();
                        pool.push(ai);
                        pool.push(bj);
                        let n = pool.len();
                        pool.swap(i, n - 2);
                        pool.swap(j, n - 1);
                        if hit {
                            return true;
                        }
                    }
                }
            }
        }
        failed.insert(key);
        false
    }
    let mut pool = pool.to_vec();
    if pool.is_empty() {
        return false;
    }
    go(&mut pool, target, &mut HashSet::new())
}

/// Seeded random problem with `n` numbers drawn from 1..=max_number and a
/// target in 1..=max_target. Solvability is whatever it is; use the oracle.
pub fn random_problem(
    rng: &mut impl Rng,
    n: usize,
    max_number: i64,
    max_target: i64,
) -> CountdownProblem {
    let numbers = (0..n).map(|_| rng.gen_range(1..=max_number)).collect();
    let target = rng.gen_range(1..=max_target);
    CountdownProblem { numbers, target }
}

/// Seeded random oracle-solvable Game-of-24 instance (4 numbers in 1..=13).
pub fn random_solvable_24(rng: &mut impl Rng) -> CountdownProblem {
    loop {
        let numbers = (0..4).map(|_| rng.gen_range(1..=13)).collect();
        let p = CountdownProblem {
            numbers,
            target: 24,
        };
        if countdown_solvable(&p).expect("<=6 numbers") {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::SamplingParams;

    fn state_for(p: &CountdownProblem) -> ReasoningState {
        ReasoningState::root(Arc::new(p.to_problem("t")))
    }

    #[test]
    fn propose_includes_terminal_winner() {
        let p = CountdownProblem::new(vec![3, 3], 6).unwrap();
        let steps = CountdownPolicy
            .propose(&state_for(&p), 4, &SamplingParams::default())
            .unwrap();
        let winner = steps.iter().find(|s| s.text == "3+3=6").expect("3+3=6 proposed");
        assert!(winner.terminal);
        // closest-to-target first
        assert_eq!(steps[0].text, "3+3=6");
    }

    #[test]
    fn division_must_be_exact() {
        let p = CountdownProblem::new(vec![5, 1], 5).unwrap();
        let steps = CountdownPolicy
            .propose(&state_for(&p), 64, &SamplingParams::default())
            .unwrap();
        let texts: Vec<&str> = steps.iter().map(|s| s.text.as_str()).collect();
        assert!(texts.contains(&"5/1=5"));
        assert!(!texts.iter().any(|t| t.starts_with("1/5")));
    }

    #[test]
    fn single_number_is_exhausted() {
        let p = CountdownProblem::new(vec![2, 3], 6).unwrap();
        let root = state_for(&p);
        let state = root
            .extend(
                CountdownStep {
                    a: 2,
                    b: 3,
                    op: CountdownOp::Mul,
                    result: 6,
                }
                .to_reasoning_step(false),
            )
            .unwrap();
        // pool is now {6}: nothing to combine
        let err = CountdownPolicy
            .propose(&state, 4, &SamplingParams::default())
            .unwrap_err();
        assert!(matches!(err, PolicyError::Exhausted));
    }

    #[test]
    fn propose_b_zero_is_empty() {
        let p = CountdownProblem::new(vec![3, 3], 6).unwrap();
        let steps = CountdownPolicy
            .propose(&state_for(&p), 0, &SamplingParams::default())
            .unwrap();
        assert!(steps.is_empty());
    }

    #[test]
    fn solvable_oracle_small_cases() {
        let yes = CountdownProblem::new(vec![3, 3], 6).unwrap();
        assert!(countdown_solvable(&yes).unwrap());
        // {1,5} -> 7: all of 1+5, 5-1, 5*1, 5/1 miss
        let no = CountdownProblem::new(vec![1, 5], 7).unwrap();
        assert!(!countdown_solvable(&no).unwrap());
        // witness (7 - 8/8) * 4 = 24
        let four = CountdownProblem::new(vec![4, 7, 8, 8], 24).unwrap();
        assert!(countdown_solvable(&four).unwrap());
    }

    #[test]
    fn solvable_rejects_oversized() {
        let p = CountdownProblem {
            numbers: vec![1; 7],
            target: 7,
        };
        assert!(matches!(
            countdown_solvable(&p),
            Err(DomainError::TooLarge { .. })
        ));
    }

    #[test]
    fn all_numbers_convention() {
        // a number equal to the target is not enough on its own: the pool
        // must reduce to a single value
        let p = CountdownProblem::new(vec![3, 3], 3).unwrap();
        assert!(!countdown_solvable(&p).unwrap());
    }

    #[test]
    fn verifier_replays_exactly() {
        let p = CountdownProblem::new(vec![2, 3, 4], 24).unwrap();
        let arc = Arc::new(p.to_problem("v"));
        let s1 = CountdownStep {
            a: 3,
            b: 2,
            op: CountdownOp::Mul,
            result: 6,
        };
        let s2 = CountdownStep {
            a: 6,
            b: 4,
            op: CountdownOp::Mul,
            result: 24,
        };
        let state = ReasoningState::with_steps(
            Arc::clone(&arc),
            vec![s1.to_reasoning_step(false), s2.to_reasoning_step(true)],
        );
        assert_eq!(CountdownVerifier.score(&arc, &state), 1.0);

        // tampered result fails the replay
        let bad = CountdownStep { result: 25, ..s2 };
        let state = ReasoningState::with_steps(
            Arc::clone(&arc),
            vec![s1.to_reasoning_step(false), bad.to_reasoning_step(true)],
        );
        assert_eq!(CountdownVerifier.score(&arc, &state), 0.0);
    }

    #[test]
    fn prompt_round_trips() {
        let p = CountdownProblem::new(vec![4, 7, 8, 8], 24).unwrap();
        let generic = p.to_problem("rt");
        assert_eq!(CountdownProblem::from_problem(&generic).unwrap(), p);
    }

    #[test]
    fn revision_excludes_tried_first_moves() {
        let p = CountdownProblem::new(vec![6, 2, 2], 5).unwrap();
        let arc = Arc::new(p.to_problem("r"));
        let root = ReasoningState::root(Arc::clone(&arc));
        let all = CountdownPolicy
            .propose(&root, 64, &SamplingParams::default())
            .unwrap();
        let first = all[0].text.clone();
        let attempt = ReasoningState::with_steps(Arc::clone(&arc), vec![all[0].clone()]);
        let retry = CountdownPolicy
            .propose_with_history(&root, &[attempt], 64, &SamplingParams::default())
            .unwrap();
        assert!(retry.iter().all(|s| s.text != first));
        assert_eq!(retry.len(), all.len() - 1);
    }
}
