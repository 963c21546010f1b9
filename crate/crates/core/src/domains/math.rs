//! Free-form math answer handling: boxed-answer extraction with balanced
//! braces and an exact-match outcome verifier over canonicalized answers.

use crate::domains::DomainError;
use crate::mdp::{canonicalize_answer, Problem, ReasoningState, Verifier};

/// Returns the content of the unique `\boxed{...}` in `text`, scanning with
/// balanced braces.
pub fn extract_boxed(text: &str) -> Result<String, DomainError> {
    let mut found: Option<String> = None;
    let mut search_from = 0usize;
    while let Some(pos) = text[search_from..].find("\\boxed{") {
        let content_start = search_from + pos + "\\boxed{".len();
        if found.is_some() {
            return Err(DomainError::MultipleBoxes);
        }
        let rest = &text[content_start..];
        let mut depth = 1usize;
        let mut end = None;
        for (i, c) in rest.char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let end = end.ok_or(DomainError::NoBox)?; // unbalanced: treat as no usable box
        found = Some(rest[..end].to_string());
        search_from = content_start + end + 1;
    }
    found.ok_or(DomainError::NoBox)
}

/// Whether `text` contains at least one `\boxed{` marker. Used to flag
/// terminality of sampled continuations.
pub fn contains_boxed(text: &str) -> bool {
    text.contains("\\boxed{")
}

/// Outcome verifier for free-form math: the final step must carry a boxed
/// answer whose canonical form equals the problem's canonical answer.
#[derive(Debug, Default)]
pub struct FreeformMathVerifier;

impl Verifier for FreeformMathVerifier {
    fn score(&self, problem: &Problem, state: &ReasoningState) -> f64 {
        if !state.terminal {
            return 0.0;
        }
        let Some(last) = state.steps.last() else {
            return 0.0;
        };
        let Ok(raw) = extract_boxed(&last.text) else {
            return 0.0;
        };
        match (canonicalize_answer(&raw), canonicalize_answer(&problem.answer)) {
            (Ok(a), Ok(b)) if a == b => 1.0,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Domain, ReasoningStep};
    use std::sync::Arc;

    #[test]
    fn extracts_single_box() {
        assert_eq!(extract_boxed("thus \\boxed{1024}.").unwrap(), "1024");
    }

    #[test]
    fn rejects_multiple_boxes() {
        assert!(matches!(
            extract_boxed("a \\boxed{1} b \\boxed{2}"),
            Err(DomainError::MultipleBoxes)
        ));
    }

    #[test]
    fn balances_nested_braces() {
        assert_eq!(
            extract_boxed("\\boxed{\\frac{1}{n!}}").unwrap(),
            "\\frac{1}{n!}"
        );
    }

    #[test]
    fn no_box_is_an_error() {
        assert!(matches!(extract_boxed("plain text"), Err(DomainError::NoBox)));
        assert!(matches!(extract_boxed("\\boxed{oops"), Err(DomainError::NoBox)));
    }

    #[test]
    fn verifier_matches_canonical_answers() {
        let problem = Arc::new(Problem {
            id: "m".into(),
            prompt: "q".into(),
            answer: "1024".into(),
            domain: Domain::FreeformMath,
            difficulty: None,
        });
        let state = ReasoningState::root(Arc::clone(&problem))
            .extend(ReasoningStep::new("so the answer is \\boxed{1024}.").terminal(true))
            .unwrap();
        assert_eq!(FreeformMathVerifier.score(&problem, &state), 1.0);

        let wrong = ReasoningState::root(Arc::clone(&problem))
            .extend(ReasoningStep::new("so the answer is \\boxed{1025}.").terminal(true))
            .unwrap();
        assert_eq!(FreeformMathVerifier.score(&problem, &wrong), 0.0);
    }
}
