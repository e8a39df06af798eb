//! Token files. Both formats are line-based with whitespace-separated ids;
//! blank lines and `#` comments are skipped.
//!
//! Questions: turns separated by `;`, optional expected answer after `|`:
//! `3 1 4 1 31 ; 5 9 | 3 1 4 1`.
//! Training examples: `prefix | target`; the loss covers the target.

use std::path::Path;

use sst_core::trainer::Example;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Question {
    pub turns: Vec<Vec<u32>>,
    pub expected: Option<Vec<u32>>,
}

impl Question {
    /// Passes when the last turn's output starts with the expected answer.
    pub fn passes(&self, last_turn: &[u32]) -> Option<bool> {
        self.expected.as_ref().map(|e| last_turn.starts_with(e))
    }
}

fn tokens(s: &str, path: &Path, line: usize) -> Result<Vec<u32>, CliError> {
    s.split_whitespace()
        .map(|t| t.parse::<u32>().map_err(|_| CliError::Validation(format!("{}:{line}: bad token {t:?}", path.display()))))
        .collect()
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

pub fn read_questions(path: &Path) -> Result<Vec<Question>, CliError> {
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        let (body, expected) = match line.split_once('|') {
            Some((b, e)) => (b, Some(tokens(e, path, n)?)),
            None => (line.as_str(), None),
        };
        let turns = body.split(';').map(|t| tokens(t, path, n)).collect::<Result<Vec<_>, _>>()?;
        if turns[0].is_empty() {
            return Err(CliError::Validation(format!("{}:{n}: first turn is empty", path.display())));
        }
        out.push(Question { turns, expected });
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("{}: no questions", path.display())));
    }
    Ok(out)
}

pub fn read_examples(path: &Path) -> Result<Vec<Example>, CliError> {
    lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let (prefix, target) = line
                .split_once('|')
                .ok_or_else(|| CliError::Validation(format!("{}:{n}: expected `prefix | target`", path.display())))?;
            let (prefix, target) = (tokens(prefix, path, n)?, tokens(target, path, n)?);
            let mask = std::iter::repeat_n(false, prefix.len()).chain(std::iter::repeat_n(true, target.len())).collect();
            Example::new([prefix, target].concat(), mask)
                .map_err(|e| CliError::Validation(format!("{}:{n}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_syntax() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.txt");
        std::fs::write(&p, "# header\n1 2 3 ; 4 | 7 8\n\n5 6\n").unwrap();
        let q = read_questions(&p).unwrap();
        assert_eq!(q[0], Question { turns: vec![vec![1, 2, 3], vec![4]], expected: Some(vec![7, 8]) });
        assert_eq!(q[1].expected, None);
        assert_eq!(q[0].passes(&[7, 8, 9]), Some(true));
        assert_eq!(q[0].passes(&[7]), Some(false));
    }

    #[test]
    fn example_mask() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        std::fs::write(&p, "1 2 | 3 4\n").unwrap();
        let e = read_examples(&p).unwrap();
        assert_eq!(e[0].tokens, vec![1, 2, 3, 4]);
        assert_eq!(e[0].mask, vec![false, false, true, true]);
        std::fs::write(&p, "1 2 3\n").unwrap();
        assert!(matches!(read_examples(&p), Err(CliError::Validation(m)) if m.contains(":1:")));
    }
}
