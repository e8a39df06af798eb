//! Binary trace archive.
//!
//! Layout (little endian): `SSTTRACE`, version, L, d, T, i_max, K as `u32`;
//! hidden states as `f32` indexed `[iteration][position][layer][dim]`; per
//! `(iteration, position)`, K pairs of `(u32 id, f32 logprob)`; SHA-256 of
//! everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SstError};
use crate::inference::GenerationRun;

pub const TRACE_MAGIC: &[u8; 8] = b"SSTTRACE";
pub const TRACE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 6 * 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceArchive {
    pub layers: usize,
    pub d: usize,
    pub positions: usize,
    pub iterations: usize,
    pub top_k: usize,
    hidden: Vec<f32>,
    top: Vec<(u32, f32)>,
}

/// Orders by logprob descending, then id ascending.
fn rank_order(a: &(u32, f32), b: &(u32, f32)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl TraceArchive {
    pub fn new(
        layers: usize,
        d: usize,
        positions: usize,
        iterations: usize,
        top_k: usize,
        hidden: Vec<f32>,
        top: Vec<(u32, f32)>,
    ) -> Result<Self> {
        let a = Self { layers, d, positions, iterations, top_k, hidden, top };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        let cells = self.iterations * self.positions;
        if self.hidden.len() != cells * self.layers * self.d || self.top.len() != cells * self.top_k {
            return Err(SstError::Format("trace payload does not match its header".into()));
        }
        for chunk in self.top.chunks(self.top_k.max(1)) {
            if chunk.windows(2).any(|w| rank_order(&w[0], &w[1]) != std::cmp::Ordering::Less) {
                return Err(SstError::Format("logprob list not strictly ordered".into()));
            }
        }
        Ok(())
    }

    /// Archive of a run's recorded positions. Every recorded position must
    /// have the same iteration depth.
    pub fn from_run(run: &GenerationRun) -> Result<Self> {
        if run.records.is_empty() {
            return Ok(Self { layers: 0, d: 0, positions: 0, iterations: 0, top_k: 0, hidden: vec![], top: vec![] });
        }
        let iterations = run
            .uniform_depth()
            .ok_or_else(|| SstError::Contract("recorded positions use different iteration depths".into()))?;
        let first = &run.records[0].iterations[0];
        let (layers, d, top_k) = (first.hidden.len(), first.hidden[0].len(), first.top.len());
        let positions = run.records.len();
        let mut hidden = Vec::with_capacity(iterations * positions * layers * d);
        let mut top = Vec::with_capacity(iterations * positions * top_k);
        for i in 0..iterations {
            for rec in &run.records {
                let it = &rec.iterations[i];
                for h in &it.hidden {
                    hidden.extend(h.iter().map(|v| *v as f32));
                }
                let mut pairs: Vec<(u32, f32)> = it.top.iter().map(|(id, lp)| (*id, *lp as f32)).collect();
                if pairs.len() != top_k {
                    return Err(SstError::Contract("top-k lists differ in length".into()));
                }
                pairs.sort_by(rank_order);
                top.extend(pairs);
            }
        }
        Self::new(layers, d, positions, iterations, top_k, hidden, top)
    }

    /// Hidden state at 1-based `iteration`, widened to 64 bits.
    pub fn hidden(&self, iteration: usize, position: usize, layer: usize) -> Vec<f64> {
        let off = (((iteration - 1) * self.positions + position) * self.layers + layer) * self.d;
        self.hidden[off..off + self.d].iter().map(|v| *v as f64).collect()
    }

    pub fn top(&self, iteration: usize, position: usize) -> &[(u32, f32)] {
        let off = ((iteration - 1) * self.positions + position) * self.top_k;
        &self.top[off..off + self.top_k]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.hidden.len() + 8 * self.top.len() + 32);
        out.extend_from_slice(TRACE_MAGIC);
        for v in [TRACE_VERSION as usize, self.layers, self.d, self.positions, self.iterations, self.top_k] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for h in &self.hidden {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for (id, lp) in &self.top {
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&lp.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 32 || &bytes[..8] != TRACE_MAGIC {
            return Err(SstError::Format("not a trace archive".into()));
        }
        let u = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        if u(0) != TRACE_VERSION as usize {
            return Err(SstError::Format(format!("unsupported trace version {}", u(0))));
        }
        let (layers, d, positions, iterations, top_k) = (u(1), u(2), u(3), u(4), u(5));
        let n_hidden = iterations
            .checked_mul(positions)
            .and_then(|c| c.checked_mul(layers))
            .and_then(|c| c.checked_mul(d))
            .ok_or_else(|| SstError::Format("trace header overflows".into()))?;
        let n_top = iterations * positions * top_k;
        let body = HEADER_LEN + 4 * n_hidden + 8 * n_top;
        if bytes.len() != body + 32 {
            return Err(SstError::Format(format!("trace length {} does not match header ({})", bytes.len(), body + 32)));
        }
        if Sha256::digest(&bytes[..body]).as_slice() != &bytes[body..] {
            return Err(SstError::Format("trace checksum mismatch".into()));
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let hidden = (0..n_hidden).map(|i| f(HEADER_LEN + 4 * i)).collect();
        let start = HEADER_LEN + 4 * n_hidden;
        let top = (0..n_top)
            .map(|i| {
                let o = start + 8 * i;
                (u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()), f(o + 4))
            })
            .collect();
        Self::new(layers, d, positions, iterations, top_k, hidden, top)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
