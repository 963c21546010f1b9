//! Grid-maze navigation with unit step costs. Plans are move sequences
//! (U/D/L/R), the heuristic is Manhattan distance, and a breadth-first
//! oracle provides exact optimal lengths for acceptance checks.
//!
//! Problems serialize as ASCII grids inside the generic prompt:
//! `#` wall, `.` open, `S` start, `G` goal; `y` grows downward.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domains::DomainError;
use crate::mdp::{
    Domain, Policy, PolicyError, Problem, ReasoningState, ReasoningStep, RevisionPolicy,
    SamplingParams, Verifier,
};

pub type Cell = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    U,
    D,
    L,
    R,
}

impl Move {
    /// Fixed proposal order; removes nondeterminism from the adapter.
    pub const ALL: [Move; 4] = [Move::U, Move::D, Move::L, Move::R];

    pub fn token(self) -> &'static str {
        match self {
            Move::U => "U",
            Move::D => "D",
            Move::L => "L",
            Move::R => "R",
        }
    }

    pub fn apply(self, (x, y): Cell) -> Cell {
        match self {
            Move::U => (x, y - 1),
            Move::D => (x, y + 1),
            Move::L => (x - 1, y),
            Move::R => (x + 1, y),
        }
    }

    pub fn parse(token: &str) -> Option<Move> {
        match token {
            "U" => Some(Move::U),
            "D" => Some(Move::D),
            "L" => Some(Move::L),
            "R" => Some(Move::R),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeProblem {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Cell>,
    pub start: Cell,
    pub goal: Cell,
}

impl MazeProblem {
    pub fn new(
        width: i32,
        height: i32,
        walls: BTreeSet<Cell>,
        start: Cell,
        goal: Cell,
    ) -> Result<Self, DomainError> {
        let p = MazeProblem {
            width,
            height,
            walls,
            start,
            goal,
        };
        if width < 1 || height < 1 {
            return Err(DomainError::InvalidProblem("empty grid".into()));
        }
        for (name, cell) in [("start", start), ("goal", goal)] {
            if !p.inside(cell) || p.walls.contains(&cell) {
                return Err(DomainError::InvalidProblem(format!(
                    "{name} cell {cell:?} is blocked or outside the grid"
                )));
            }
        }
        Ok(p)
    }

    pub fn inside(&self, (x, y): Cell) -> bool {
        x >= 0 && y >= 0 && x < self.width && y < self.height
    }

    pub fn open(&self, cell: Cell) -> bool {
        self.inside(cell) && !self.walls.contains(&cell)
    }

    pub fn to_ascii(&self) -> String {
        let mut rows = Vec::with_capacity(self.height as usize);
        for y in 0..self.height {
            let mut row = String::with_capacity(self.width as usize);
            for x in 0..self.width {
                let c = if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.walls.contains(&(x, y)) {
                    '#'
                } else {
                    '.'
                };
                row.push(c);
            }
            rows.push(row);
        }
        rows.join("\n")
    }

    pub fn from_ascii(grid: &str) -> Result<Self, DomainError> {
        let rows: Vec<&str> = grid.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(DomainError::InvalidProblem("empty maze".into()));
        }
        let height = rows.len() as i32;
        let width = rows[0].chars().count() as i32;
        let mut walls = BTreeSet::new();
        let mut start = None;
        let mut goal = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() as i32 != width {
                return Err(DomainError::InvalidProblem("ragged maze rows".into()));
            }
            for (x, c) in row.chars().enumerate() {
                let cell = (x as i32, y as i32);
                match c {
                    '#' => {
                        walls.insert(cell);
                    }
                    'S' => start = Some(cell),
                    'G' => goal = Some(cell),
                    '.' => {}
                    other => {
                        return Err(DomainError::InvalidProblem(format!(
                            "unexpected maze char {other:?}"
                        )))
                    }
                }
            }
        }
        match (start, goal) {
            (Some(start), Some(goal)) => MazeProblem::new(width, height, walls, start, goal),
            _ => Err(DomainError::InvalidProblem("maze needs S and G".into())),
        }
    }

    pub fn to_problem(&self, id: impl Into<String>) -> Problem {
        Problem {
            id: id.into(),
            prompt: format!("Navigate from S to G:\n{}", self.to_ascii()),
            answer: maze_optimal_oracle(self)
                .map(|n| n.to_string())
                .unwrap_or_else(|| "unreachable".into()),
            domain: Domain::Maze,
            difficulty: None,
        }
    }

    pub fn from_problem(problem: &Problem) -> Result<Self, DomainError> {
        if problem.domain != Domain::Maze {
            return Err(DomainError::WrongDomain {
                expected: Domain::Maze,
                got: problem.domain,
            });
        }
        let grid = problem
            .prompt
            .split_once('\n')
            .map(|(_, g)| g)
            .unwrap_or(&problem.prompt);
        MazeProblem::from_ascii(grid)
    }
}

/// The cell reached by replaying the state's moves; None if a move is
/// illegal.
pub fn replay_moves(problem: &MazeProblem, steps: &[ReasoningStep]) -> Option<Cell> {
    let mut cell = problem.start;
    for step in steps {
        let mv = Move::parse(&step.text)?;
        cell = mv.apply(cell);
        if !problem.open(cell) {
            return None;
        }
    }
    Some(cell)
}

/// Manhattan distance to the goal; admissible for unit step costs.
pub fn maze_heuristic(problem: &MazeProblem, cell: Cell) -> u32 {
    ((problem.goal.0 - cell.0).abs() + (problem.goal.1 - cell.1).abs()) as u32
}

/// Exact shortest path length in moves, or None when the goal is sealed off.
pub fn maze_optimal_oracle(problem: &MazeProblem) -> Option<u32> {
    if problem.start == problem.goal {
        return Some(0);
    }
    let mut dist: HashMap<Cell, u32> = HashMap::new();
    dist.insert(problem.start, 0);
    let mut queue = VecDeque::from([problem.start]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[&cell];
        for mv in Move::ALL {
            let next = mv.apply(cell);
            if problem.open(next) && !dist.contains_key(&next) {
                if next == problem.goal {
                    return Some(d + 1);
                }
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

fn step_for(problem: &MazeProblem, from: Cell, mv: Move, depth: usize) -> ReasoningStep {
    let to = mv.apply(from);
    ReasoningStep::new(mv.token())
        .with_payload(serde_json::json!({
            "x": to.0,
            "y": to.1,
            "g": depth + 1,
            "h": maze_heuristic(problem, to),
        }))
        .terminal(to == problem.goal)
}

/// Proposes the legal moves in fixed U/D/L/R order. Dead ends return the
/// empty list so the search backtracks rather than erroring.
#[derive(Debug, Default)]
pub struct MazePolicy;

impl Policy for MazePolicy {
    fn propose(
        &self,
        state: &ReasoningState,
        b: usize,
        _params: &SamplingParams,
    ) -> Result<Vec<ReasoningStep>, PolicyError> {
        let problem = MazeProblem::from_problem(&state.problem)
            .map_err(|e| PolicyError::Protocol(e.to_string()))?;
        let cell = replay_moves(&problem, &state.steps)
            .ok_or_else(|| PolicyError::Protocol("state does not replay".into()))?;
        Ok(Move::ALL
            .into_iter()
            .filter(|mv| problem.open(mv.apply(cell)))
            .take(b)
            .map(|mv| step_for(&problem, cell, mv, state.depth()))
            .collect())
    }
}

impl RevisionPolicy for MazePolicy {}

/// Oracle verifier: the plan must replay legally and end on the goal.
#[derive(Debug, Default)]
pub struct MazeVerifier;

impl Verifier for MazeVerifier {
    fn score(&self, problem: &Problem, state: &ReasoningState) -> f64 {
        let Ok(maze) = MazeProblem::from_problem(problem) else {
            return 0.0;
        };
        match replay_moves(&maze, &state.steps) {
            Some(cell) if state.terminal && cell == maze.goal => 1.0,
            _ => 0.0,
        }
    }
}

/// Best-first priority for maze states: strictly decreasing in g + h, so a
/// max-priority frontier pops in A* order.
#[derive(Debug, Default)]
pub struct ManhattanValue;

impl crate::value::ValueFn for ManhattanValue {
    fn estimate(
        &self,
        state: &ReasoningState,
    ) -> Result<crate::value::ValueEstimate, crate::value::ValueError> {
        let maze = MazeProblem::from_problem(&state.problem)
            .map_err(|e| crate::value::ValueError::Protocol(e.to_string()))?;
        let cell = replay_moves(&maze, &state.steps)
            .ok_or_else(|| crate::value::ValueError::Protocol("state does not replay".into()))?;
        let f = state.depth() as f64 + maze_heuristic(&maze, cell) as f64;
        Ok(crate::value::ValueEstimate::exact(1.0 / (1.0 + f)))
    }
}

/// Seeded random maze with the given wall density, rejected until the BFS
/// oracle confirms the goal is reachable.
pub fn random_solvable_maze(
    rng: &mut impl Rng,
    width: i32,
    height: i32,
    wall_density: f64,
) -> MazeProblem {
    loop {
        let start = (rng.gen_range(0..width), rng.gen_range(0..height));
        let goal = loop {
            let g = (rng.gen_range(0..width), rng.gen_range(0..height));
            if g != start {
                break g;
            }
        };
        let mut walls = BTreeSet::new();
        for y in 0..height {
            for x in 0..width {
                let cell = (x, y);
                if cell != start && cell != goal && rng.gen_bool(wall_density) {
                    walls.insert(cell);
                }
            }
        }
        let maze = MazeProblem {
            width,
            height,
            walls,
            start,
            goal,
        };
        if maze_optimal_oracle(&maze).is_some() {
            return maze;
        }
    }
}

/// Root state for a maze problem; degenerate start == goal is already
/// terminal, so propose is never consulted.
pub fn maze_root_state(problem: Arc<Problem>) -> Result<ReasoningState, DomainError> {
    let maze = MazeProblem::from_problem(&problem)?;
    let mut state = ReasoningState::root(problem);
    state.terminal = maze.start == maze.goal;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> MazeProblem {
        MazeProblem::from_ascii("S.G").unwrap()
    }

    #[test]
    fn ascii_round_trip() {
        let maze = MazeProblem::from_ascii("S.#\n..G").unwrap();
        assert_eq!(maze.width, 3);
        assert_eq!(maze.height, 2);
        assert_eq!(maze.start, (0, 0));
        assert_eq!(maze.goal, (2, 1));
        assert!(maze.walls.contains(&(2, 0)));
        assert_eq!(MazeProblem::from_ascii(&maze.to_ascii()).unwrap(), maze);
    }

    #[test]
    fn corridor_moves() {
        let maze = corridor();
        let arc = Arc::new(maze.to_problem("m"));
        let root = ReasoningState::root(Arc::clone(&arc));
        let steps = MazePolicy
            .propose(&root, 8, &SamplingParams::default())
            .unwrap();
        assert_eq!(
            steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            vec!["R"]
        );
        // one cell in: the reverse move appears too
        let mid = root.extend(steps[0].clone()).unwrap();
        let steps = MazePolicy
            .propose(&mid, 8, &SamplingParams::default())
            .unwrap();
        assert_eq!(
            steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            vec!["L", "R"]
        );
        // the move onto G is flagged terminal
        assert!(steps[1].terminal);
    }

    #[test]
    fn boxed_in_cell_has_single_move() {
        let maze = MazeProblem::from_ascii("#S#\n#.#\n#G#").unwrap();
        let arc = Arc::new(maze.to_problem("m"));
        let root = ReasoningState::root(arc);
        let steps = MazePolicy
            .propose(&root, 8, &SamplingParams::default())
            .unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].text, "D");
    }

    #[test]
    fn heuristic_is_manhattan() {
        let maze = MazeProblem {
            width: 10,
            height: 10,
            walls: BTreeSet::new(),
            start: (0, 0),
            goal: (2, 3),
        };
        assert_eq!(maze_heuristic(&maze, (0, 0)), 5);
        assert_eq!(maze_heuristic(&maze, maze.goal), 0);
        assert_eq!(maze_heuristic(&maze, (2, 2)), 1);
    }

    #[test]
    fn oracle_small_cases() {
        assert_eq!(maze_optimal_oracle(&corridor()), Some(2));
        let sealed = MazeProblem::from_ascii("S#G").unwrap();
        assert_eq!(maze_optimal_oracle(&sealed), None);
        let mut same = corridor();
        same.goal = same.start;
        assert_eq!(maze_optimal_oracle(&same), Some(0));
    }

    #[test]
    fn degenerate_root_is_terminal() {
        let mut maze = corridor();
        maze.goal = maze.start;
        let arc = Arc::new(maze.to_problem("m"));
        let state = maze_root_state(arc).unwrap();
        assert!(state.terminal);
    }

    #[test]
    fn verifier_checks_plan() {
        let maze = corridor();
        let arc = Arc::new(maze.to_problem("m"));
        let root = ReasoningState::root(Arc::clone(&arc));
        let plan = root
            .extend(step_for(&maze, (0, 0), Move::R, 0))
            .unwrap()
            .extend(step_for(&maze, (1, 0), Move::R, 1))
            .unwrap();
        assert!(plan.terminal);
        assert_eq!(MazeVerifier.score(&arc, &plan), 1.0);

        let short = root.extend(step_for(&maze, (0, 0), Move::R, 0)).unwrap();
        assert_eq!(MazeVerifier.score(&arc, &short), 0.0);
    }

    #[test]
    fn generated_mazes_are_solvable() {
        let mut rng = crate::mdp::rng_from_seed(5);
        for _ in 0..10 {
            let maze = random_solvable_maze(&mut rng, 10, 10, 0.2);
            assert!(maze_optimal_oracle(&maze).is_some());
        }
    }
}
