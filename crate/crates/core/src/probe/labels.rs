use crate::error::{Result, SstError};
use crate::inference::PassFailMatrix;

/// One training example: the position-0 hidden state of a turn after
/// `depth` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeItem {
    pub question: usize,
    pub turn: usize,
    pub depth: usize,
    pub hidden: Vec<f64>,
    pub must_halt: bool,
}

/// Builds one item per `(question, turn, depth ≤ correct depth)` over the
/// recoverable questions. An item is MUST_HALT iff the question is already
/// solved at `depth` and the flat run at `depth + 1` fails; at `i_max` there
/// is no deeper run to lose, so those items are SAFE.
///
/// `hidden(question, turn, depth)` supplies the recorded state.
pub fn build_labels<F>(matrix: &PassFailMatrix, turns: &[usize], hidden: F) -> Result<Vec<ProbeItem>>
where
    F: Fn(usize, usize, usize) -> Option<Vec<f64>>,
{
    let q_count = matrix.questions();
    let i_max = matrix.i_max();
    if turns.len() != q_count {
        return Err(SstError::Dimension(format!("{} turn counts for {q_count} questions", turns.len())));
    }
    if matrix.flat.len() != q_count || matrix.staged.len() != q_count {
        return Err(SstError::Contract("pass/fail matrix is missing runs for some questions".into()));
    }
    let mut items = Vec::new();
    for q in 0..q_count {
        if matrix.flat[q].len() != i_max || matrix.staged[q].len() != i_max {
            return Err(SstError::Contract(format!("question {q}: missing flat or staged runs")));
        }
        let Some(correct) = matrix.correct_depth(q) else { continue };
        for turn in 0..turns[q] {
            for depth in 1..=correct {
                let must_halt = depth == correct && depth < i_max && !matrix.flat[q][depth];
                let h = hidden(q, turn, depth).ok_or_else(|| {
                    SstError::Contract(format!("no hidden state for question {q}, turn {turn}, depth {depth}"))
                })?;
                items.push(ProbeItem { question: q, turn, depth, hidden: h, must_halt });
            }
        }
    }
    if let Some(d) = items.first().map(|i| i.hidden.len()) {
        if items.iter().any(|i| i.hidden.len() != d) {
            return Err(SstError::Dimension("hidden states differ in width".into()));
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(flat: Vec<Vec<bool>>) -> PassFailMatrix {
        PassFailMatrix { staged: flat.clone(), flat }
    }

    #[test]
    fn label_rules() {
        let matrix = m(vec![
            vec![true, true, false],   // solved at 1, still fine at 2: SAFE
            vec![false, true, false],  // solved at 2, breaks at 3: MUST_HALT at 2
            vec![false, false, false], // never solved: no items
            vec![false, false, true],  // solved at i_max: SAFE
        ]);
        let items = build_labels(&matrix, &[1, 2, 1, 1], |_, _, d| Some(vec![d as f64])).unwrap();
        let summary: Vec<_> = items.iter().map(|i| (i.question, i.turn, i.depth, i.must_halt)).collect();
        assert_eq!(
            summary,
            vec![
                (0, 0, 1, false),
                (1, 0, 1, false),
                (1, 0, 2, true),
                (1, 1, 1, false),
                (1, 1, 2, true),
                (3, 0, 1, false),
                (3, 0, 2, false),
                (3, 0, 3, false),
            ]
        );
    }

    #[test]
    fn missing_runs_rejected() {
        let mut matrix = m(vec![vec![true, false], vec![false, true]]);
        matrix.flat[1].pop();
        assert!(matches!(build_labels(&matrix, &[1, 1], |_, _, _| Some(vec![0.0])), Err(SstError::Contract(_))));
        let matrix = m(vec![vec![true, false]]);
        assert!(matches!(build_labels(&matrix, &[1], |_, _, _| None), Err(SstError::Contract(_))));
    }
}
