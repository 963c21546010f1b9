//! The ordered event log a search leaves behind: every visit, expansion,
//! backtrack, and the terminal success. Traces are the raw material the
//! linearizer turns into training text, so the walk they describe is
//! machine-checkable and the file format is line-delimited JSON.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::NodePath;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedChild {
    pub step_text: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// The walk enters `node`. `reward` is set when the node is terminal and
    /// was scored on this visit; `value` echoes the node's initial estimate.
    Visit {
        node: NodePath,
        step_text: Option<String>,
        value: Option<f64>,
        reward: Option<u8>,
    },
    /// `node` was expanded into `children`, in child-index order.
    Expand {
        node: NodePath,
        children: Vec<ExpandedChild>,
    },
    /// The walk resets from `from` to the previously created node `to`;
    /// the next visit must enter `to`.
    Backtrack { from: NodePath, to: NodePath },
    /// A verified solution; emitted at most once.
    Terminal { node: NodePath, reward: u8 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    /// Candidate steps generated by expansions.
    pub total_steps_generated: u64,
    /// Tokens spent inside value-function rollouts.
    pub total_rollout_tokens: u64,
}

impl SearchTrace {
    pub fn visit(
        &mut self,
        node: NodePath,
        step_text: Option<String>,
        value: Option<f64>,
        reward: Option<u8>,
    ) {
        self.events.push(TraceEvent::Visit {
            node,
            step_text,
            value,
            reward,
        });
    }

    pub fn expand(&mut self, node: NodePath, children: Vec<ExpandedChild>) {
        self.total_steps_generated += children.len() as u64;
        self.events.push(TraceEvent::Expand { node, children });
    }

    pub fn backtrack(&mut self, from: NodePath, to: NodePath) {
        self.events.push(TraceEvent::Backtrack { from, to });
    }

    pub fn terminal(&mut self, node: NodePath, reward: u8) {
        self.events.push(TraceEvent::Terminal { node, reward });
    }

    pub fn backtrack_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Backtrack { .. }))
            .count()
    }

    /// Checks the walk invariant: visits enter the root, a child of the
    /// current position, or the target of the backtrack just emitted; every
    /// referenced node exists; exactly one terminal event iff `success`.
    pub fn validate(&self, success: bool) -> Result<(), TraceError> {
        let mut known: HashMap<NodePath, ()> = HashMap::new();
        known.insert(Vec::new(), ());
        let mut position: Option<NodePath> = None;
        let mut pending_backtrack: Option<NodePath> = None;
        let mut terminals = 0usize;
        for (i, event) in self.events.iter().enumerate() {
            match event {
                TraceEvent::Visit { node, .. } => {
                    if !known.contains_key(node) {
                        return Err(TraceError::UnknownNode { index: i });
                    }
                    let legal = if let Some(target) = pending_backtrack.take() {
                        node == &target
                    } else if node.is_empty() {
                        true
                    } else {
                        match &position {
                            Some(pos) => {
                                node.len() == pos.len() + 1 && node.starts_with(pos)
                            }
                            None => false,
                        }
                    };
                    if !legal {
                        return Err(TraceError::IllegalVisit { index: i });
                    }
                    position = Some(node.clone());
                }
                TraceEvent::Expand { node, children } => {
                    if pending_backtrack.is_some() {
                        return Err(TraceError::DanglingBacktrack { index: i });
                    }
                    if position.as_ref() != Some(node) {
                        return Err(TraceError::ExpandAwayFromPosition { index: i });
                    }
                    if children.is_empty() {
                        return Err(TraceError::EmptyExpansion { index: i });
                    }
                    for c in 0..children.len() {
                        let mut child = node.clone();
                        child.push(c);
                        known.insert(child, ());
                    }
                }
                TraceEvent::Backtrack { from, to } => {
                    if pending_backtrack.is_some() {
                        return Err(TraceError::DanglingBacktrack { index: i });
                    }
                    if position.as_ref() != Some(from) {
                        return Err(TraceError::BacktrackFromElsewhere { index: i });
                    }
                    if !known.contains_key(to) {
                        return Err(TraceError::UnknownNode { index: i });
                    }
                    pending_backtrack = Some(to.clone());
                }
                TraceEvent::Terminal { node, .. } => {
                    if position.as_ref() != Some(node) {
                        return Err(TraceError::TerminalAwayFromPosition { index: i });
                    }
                    terminals += 1;
                }
            }
        }
        if pending_backtrack.is_some() {
            return Err(TraceError::DanglingBacktrack {
                index: self.events.len(),
            });
        }
        let expected = usize::from(success);
        if terminals != expected {
            return Err(TraceError::TerminalCount {
                expected,
                got: terminals,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("event {index}: visit is not the root, a child of the position, or a backtrack target")]
    IllegalVisit { index: usize },
    #[error("event {index}: references a node never created")]
    UnknownNode { index: usize },
    #[error("event {index}: expansion away from the current position")]
    ExpandAwayFromPosition { index: usize },
    #[error("event {index}: expansion with no children")]
    EmptyExpansion { index: usize },
    #[error("event {index}: backtrack does not start at the current position")]
    BacktrackFromElsewhere { index: usize },
    #[error("event {index}: backtrack not followed by a visit to its target")]
    DanglingBacktrack { index: usize },
    #[error("event {index}: terminal event away from the current position")]
    TerminalAwayFromPosition { index: usize },
    #[error("expected {expected} terminal events, got {got}")]
    TerminalCount { expected: usize, got: usize },
}

/// Per-edge statistics recomputed from the event log alone: the backup value
/// of an expansion is the expanded node's recorded creation estimate, and a
/// scored visit backs up its reward. Returns (edge path -> (mean, count),
/// root backup count).
pub fn recompute_edge_stats(trace: &SearchTrace) -> (HashMap<NodePath, (f64, u64)>, u64) {
    let mut node_values: HashMap<NodePath, f64> = HashMap::new();
    let mut sums: HashMap<NodePath, (f64, u64)> = HashMap::new();
    let mut root_count = 0u64;
    let mut push_path = |sums: &mut HashMap<NodePath, (f64, u64)>, path: &NodePath, v: f64| {
        for depth in 1..=path.len() {
            let edge = path[..depth].to_vec();
            let entry = sums.entry(edge).or_insert((0.0, 0));
            entry.0 += v;
            entry.1 += 1;
        }
    };
    for event in &trace.events {
        match event {
            TraceEvent::Expand { node, children } => {
                for (c, child) in children.iter().enumerate() {
                    let mut path = node.clone();
                    path.push(c);
                    node_values.insert(path, child.value);
                }
                let value = if node.is_empty() {
                    None
                } else {
                    node_values.get(node).copied()
                };
                if let Some(v) = value {
                    push_path(&mut sums, node, v);
                }
                root_count += 1;
            }
            TraceEvent::Visit {
                node,
                reward: Some(r),
                ..
            } => {
                push_path(&mut sums, node, *r as f64);
                root_count += 1;
            }
            _ => {}
        }
    }
    let means = sums
        .into_iter()
        .map(|(path, (sum, count))| (path, (sum / count as f64, count)))
        .collect();
    (means, root_count)
}

/// One line of the trace wire format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLine {
    pub t: u64,
    pub kind: String,
    pub node: NodePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_text: Option<String>,
}

/// Closing summary object for one search, following its event lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub kind: String,
    pub problem_id: String,
    pub algorithm: String,
    pub seed: u64,
    pub success: bool,
    pub expansions: u64,
    pub total_steps_generated: u64,
    pub total_rollout_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_steps: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_path: Option<NodePath>,
}

/// Serializes a trace as one JSON object per event; expansions flatten to
/// one line per child (node = the child's path), then the outcome line.
pub fn write_trace<W: Write>(
    w: &mut W,
    trace: &SearchTrace,
    outcome: &OutcomeSummary,
) -> io::Result<()> {
    let mut t = 0u64;
    for event in &trace.events {
        match event {
            TraceEvent::Visit {
                node,
                step_text,
                value,
                reward,
            } => {
                crate::jsonl::write_line(
                    w,
                    &TraceLine {
                        t,
                        kind: "visit".into(),
                        node: node.clone(),
                        value: *value,
                        reward: *reward,
                        step_text: step_text.clone(),
                    },
                )?;
                t += 1;
            }
            TraceEvent::Expand { node, children } => {
                for (c, child) in children.iter().enumerate() {
                    let mut path = node.clone();
                    path.push(c);
                    crate::jsonl::write_line(
                        w,
                        &TraceLine {
                            t,
                            kind: "expand".into(),
                            node: path,
                            value: Some(child.value),
                            reward: None,
                            step_text: Some(child.step_text.clone()),
                        },
                    )?;
                    t += 1;
                }
            }
            TraceEvent::Backtrack { to, .. } => {
                crate::jsonl::write_line(
                    w,
                    &TraceLine {
                        t,
                        kind: "backtrack".into(),
                        node: to.clone(),
                        value: None,
                        reward: None,
                        step_text: None,
                    },
                )?;
                t += 1;
            }
            TraceEvent::Terminal { node, reward } => {
                crate::jsonl::write_line(
                    w,
                    &TraceLine {
                        t,
                        kind: "terminal".into(),
                        node: node.clone(),
                        value: None,
                        reward: Some(*reward),
                        step_text: None,
                    },
                )?;
                t += 1;
            }
        }
    }
    crate::jsonl::write_line(w, outcome)
}

/// Reads back every (trace, outcome) pair in a trace file. Consecutive
/// expand lines that share a parent collapse into one expansion; `from`
/// fields of backtracks are rebuilt by replaying the walk.
pub fn read_traces(text: &str) -> Result<Vec<(SearchTrace, OutcomeSummary)>, TraceReadError> {
    let mut out = Vec::new();
    let mut trace = SearchTrace::default();
    let mut position: NodePath = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let general: serde_json::Value =
            serde_json::from_str(line).map_err(|e| TraceReadError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if general.get("kind").and_then(|k| k.as_str()) == Some("outcome") {
            let outcome: OutcomeSummary =
                serde_json::from_value(general).map_err(|e| TraceReadError::Parse {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            trace.total_steps_generated = outcome.total_steps_generated;
            trace.total_rollout_tokens = outcome.total_rollout_tokens;
            out.push((std::mem::take(&mut trace), outcome));
            position = Vec::new();
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_value(general).map_err(|e| TraceReadError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        match parsed.kind.as_str() {
            "visit" => {
                position = parsed.node.clone();
                trace.events.push(TraceEvent::Visit {
                    node: parsed.node,
                    step_text: parsed.step_text,
                    value: parsed.value,
                    reward: parsed.reward,
                });
            }
            "expand" => {
                let mut parent = parsed.node.clone();
                let child_index = parent.pop().ok_or(TraceReadError::Parse {
                    line: lineno + 1,
                    message: "expand line at the root path".into(),
                })?;
                let child = ExpandedChild {
                    step_text: parsed.step_text.unwrap_or_default(),
                    value: parsed.value.unwrap_or(0.0),
                };
                match trace.events.last_mut() {
                    Some(TraceEvent::Expand { node, children })
                        if *node == parent && children.len() == child_index =>
                    {
                        children.push(child);
                    }
                    _ => {
                        trace.events.push(TraceEvent::Expand {
                            node: parent,
                            children: vec![child],
                        });
                    }
                }
            }
            "backtrack" => {
                trace.events.push(TraceEvent::Backtrack {
                    from: position.clone(),
                    to: parsed.node,
                });
            }
            "terminal" => {
                trace.events.push(TraceEvent::Terminal {
                    node: parsed.node,
                    reward: parsed.reward.unwrap_or(0),
                });
            }
            other => {
                return Err(TraceReadError::Parse {
                    line: lineno + 1,
                    message: format!("unknown event kind {other:?}"),
                })
            }
        }
    }
    if !trace.events.is_empty() {
        return Err(TraceReadError::MissingOutcome);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum TraceReadError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace file ended without an outcome line")]
    MissingOutcome,
}
