use sha2::{Digest, Sha256};

use crate::error::{Result, SstError};

/// One carried state per layer: the latest post-FFN output.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStateCache {
    states: Vec<Option<Vec<f64>>>,
}

impl LatentStateCache {
    pub fn new(layers: usize) -> Self {
        Self { states: vec![None; layers] }
    }

    pub fn get(&self, layer: usize) -> Option<&[f64]> {
        self.states[layer].as_deref()
    }

    pub fn set(&mut self, layer: usize, state: Vec<f64>) {
        self.states[layer] = Some(state);
    }

    pub fn layers(&self) -> usize {
        self.states.len()
    }

    pub fn all_valid(&self) -> bool {
        self.states.iter().all(|s| s.as_ref().is_some_and(|v| v.iter().all(|x| x.is_finite())))
    }

    /// Snapshot of all states; `None` layers become empty vectors.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.clone().unwrap_or_default()).collect()
    }
}

/// Post-rotary keys and values per layer and position.
#[derive(Clone, Debug, PartialEq)]
pub struct KvCache {
    keys: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<Vec<f64>>>,
    capacity: usize,
}

impl KvCache {
    pub fn new(layers: usize, capacity: usize) -> Self {
        Self { keys: vec![Vec::new(); layers], values: vec![Vec::new(); layers], capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self, layer: usize) -> usize {
        self.keys[layer].len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.iter().all(Vec::is_empty)
    }

    pub fn keys(&self, layer: usize) -> &[Vec<f64>] {
        &self.keys[layer]
    }

    pub fn values(&self, layer: usize) -> &[Vec<f64>] {
        &self.values[layer]
    }

    /// Writes position `t`, dropping anything at or beyond it. Requires all
    /// positions before `t` to be present.
    pub fn write(&mut self, layer: usize, t: usize, key: Vec<f64>, value: Vec<f64>) -> Result<()> {
        if t >= self.capacity {
            return Err(SstError::Capacity { position: t, capacity: self.capacity });
        }
        if self.keys[layer].len() < t {
            return Err(SstError::Contract(format!(
                "layer {layer} cache holds {} positions, cannot write position {t}",
                self.keys[layer].len()
            )));
        }
        self.keys[layer].truncate(t);
        self.values[layer].truncate(t);
        self.keys[layer].push(key);
        self.values[layer].push(value);
        Ok(())
    }

    /// SHA-256 over every layer's entries for positions `< upto`.
    pub fn checksum(&self, upto: usize) -> [u8; 32] {
        let mut h = Sha256::new();
        for (ks, vs) in self.keys.iter().zip(&self.values) {
            for row in ks.iter().take(upto).chain(vs.iter().take(upto)) {
                for v in row {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_overwrites_current_position_only() {
        let mut kv = KvCache::new(1, 4);
        kv.write(0, 0, vec![1.0], vec![1.0]).unwrap();
        kv.write(0, 1, vec![2.0], vec![2.0]).unwrap();
        let before = kv.checksum(1);
        kv.write(0, 1, vec![3.0], vec![3.0]).unwrap();
        assert_eq!(kv.checksum(1), before);
        assert_eq!(kv.keys(0)[1], vec![3.0]);
        assert_ne!(kv.checksum(2), before);
    }

    #[test]
    fn capacity_and_gap_errors() {
        let mut kv = KvCache::new(1, 2);
        assert!(matches!(kv.write(0, 2, vec![], vec![]), Err(SstError::Capacity { .. })));
        assert!(matches!(kv.write(0, 1, vec![], vec![]), Err(SstError::Contract(_))));
    }
}
