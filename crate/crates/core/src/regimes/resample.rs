use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::window::{SampleSource, WindowedSample};
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_LEN: usize = 12;

/// Chronology-preserving block bootstrap over a window sequence.
///
/// The input is cut into contiguous blocks of `block_len` (the final block
/// may be shorter); blocks are drawn uniformly with replacement and
/// concatenated until the output reaches the input length, the last draw
/// being truncated.
pub fn block_resample(windows: &[WindowedSample], block_len: usize, seed: u64) -> Result<Vec<WindowedSample>> {
    if block_len == 0 {
        return Err(Error::Config("block_len must be at least 1".into()));
    }
    let blocks: Vec<&[WindowedSample]> = windows.chunks(block_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(windows.len());
    while out.len() < windows.len() {
        let block = blocks[rng.random_range(0..blocks.len())];
        for w in block {
            if out.len() == windows.len() {
                break;
            }
            let mut w = w.clone();
            w.source = SampleSource::BlockResampled;
            out.push(w);
        }
    }
    Ok(out)
}
