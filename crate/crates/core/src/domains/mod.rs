//! Built-in verifiable domains (Countdown / Game of 24, grid mazes), the
//! free-form math answer tools, and the remote completion-endpoint adapter.

pub mod countdown;
pub mod math;
pub mod maze;
pub mod remote;

use std::sync::Arc;

use thiserror::Error;

use crate::mdp::{Domain, Problem, ReasoningState};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("expected a {expected} problem, got {got}")]
    WrongDomain { expected: Domain, got: Domain },
    #[error("brute-force oracle only handles up to {limit} numbers, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("text contains no boxed answer")]
    NoBox,
    #[error("text contains more than one boxed answer")]
    MultipleBoxes,
}

/// The search root for a problem. Only the maze domain can be born terminal
/// (start == goal); everything else starts with an empty, open prefix.
pub fn root_state(problem: &Arc<Problem>) -> ReasoningState {
    match problem.domain {
        Domain::Maze => maze::maze_root_state(Arc::clone(problem))
            .unwrap_or_else(|_| ReasoningState::root(Arc::clone(problem))),
        _ => ReasoningState::root(Arc::clone(problem)),
    }
}

/// Expected solution depth used to cap rollouts: countdown reduces n numbers
/// in n - 1 steps; mazes walk at most the optimal length (fallback: grid
/// area); free-form defaults to a small constant.
pub fn nominal_depth(problem: &Problem) -> usize {
    match problem.domain {
        Domain::Countdown => countdown::CountdownProblem::from_problem(problem)
            .map(|p| p.numbers.len().saturating_sub(1))
            .unwrap_or(4)
            .max(1),
        Domain::Maze => maze::MazeProblem::from_problem(problem)
            .map(|m| {
                maze::maze_optimal_oracle(&m)
                    .map(|d| d as usize)
                    .unwrap_or((m.width * m.height) as usize)
            })
            .unwrap_or(32)
            .max(1),
        Domain::FreeformMath => 16,
    }
}

/// The oracle outcome verifier for a problem's domain.
pub fn oracle_verifier(domain: Domain) -> Box<dyn crate::mdp::Verifier> {
    match domain {
        Domain::Countdown => Box::new(countdown::CountdownVerifier),
        Domain::Maze => Box::new(maze::MazeVerifier),
        Domain::FreeformMath => Box::new(math::FreeformMathVerifier),
    }
}

/// The built-in symbolic policy for a problem's domain, when one exists.
pub fn symbolic_policy(domain: Domain) -> Option<Box<dyn crate::mdp::Policy>> {
    match domain {
        Domain::Countdown => Some(Box::new(countdown::CountdownPolicy)),
        Domain::Maze => Some(Box::new(maze::MazePolicy)),
        Domain::FreeformMath => None,
    }
}
