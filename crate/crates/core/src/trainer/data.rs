use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SstError};

/// One training sequence; the loss covers tokens whose mask bit is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn new(tokens: Vec<u32>, mask: Vec<bool>) -> Result<Self> {
        if tokens.len() != mask.len() {
            return Err(SstError::Dimension(format!("{} tokens vs {} mask bits", tokens.len(), mask.len())));
        }
        if !mask.iter().skip(1).any(|m| *m) {
            return Err(SstError::Contract("example has no predicted masked token".into()));
        }
        Ok(Self { tokens, mask })
    }
}

/// Micro-batch of examples processed before one optimizer step.
pub type Batch = Vec<Example>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
}

/// `x₁ … xₙ SEP x₁ … xₙ` with the loss on the copied half. Content tokens
/// are drawn from `0..alphabet`; `SEP` is `vocab − 1`.
pub fn copy_task(count: usize, n: usize, alphabet: u32, vocab: usize, seed: u64) -> Result<Vec<Example>> {
    if n == 0 || alphabet == 0 || alphabet as usize >= vocab {
        return Err(SstError::Config(format!("copy task needs 0 < alphabet < vocab, n > 0 (n={n}, alphabet={alphabet}, vocab={vocab})")));
    }
    let sep = (vocab - 1) as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let body: Vec<u32> = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
            let mut tokens = body.clone();
            tokens.push(sep);
            tokens.extend(&body);
            let mask = (0..tokens.len()).map(|i| i > n).collect();
            Example::new(tokens, mask)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_layout() {
        let ex = copy_task(3, 4, 10, 16, 1).unwrap();
        for e in &ex {
            assert_eq!(e.tokens.len(), 9);
            assert_eq!(e.tokens[4], 15);
            assert_eq!(e.tokens[..4], e.tokens[5..]);
            assert_eq!(e.mask.iter().filter(|m| **m).count(), 4);
        }
        assert_eq!(ex, copy_task(3, 4, 10, 16, 1).unwrap());
    }

    #[test]
    fn rejects_unmasked() {
        assert!(Example::new(vec![1, 2], vec![true, false]).is_err());
    }
}
