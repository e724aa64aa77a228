//! Hierarchical, counter-keyed random streams.
//!
//! An [`RngSeed`] is a master seed plus a path of sub-stream indices. The
//! path is hashed into a ChaCha key, so any `(master, path)` pair names one
//! reproducible stream regardless of which thread consumes it or in which
//! order sibling streams are drawn.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub master: u64,
    pub stream_path: Vec<u64>,
}

impl RngSeed {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            stream_path: Vec::new(),
        }
    }

    /// The sub-stream `index` below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut stream_path = Vec::with_capacity(self.stream_path.len() + 1);
        stream_path.extend_from_slice(&self.stream_path);
        stream_path.push(index);
        Self {
            master: self.master,
            stream_path,
        }
    }

    /// Nested sub-stream, equivalent to chained [`RngSeed::child`] calls.
    pub fn descend(&self, path: &[u64]) -> Self {
        let mut s = self.clone();
        s.stream_path.extend_from_slice(path);
        s
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.key())
    }

    fn key(&self) -> [u8; 32] {
        // splitmix64 absorbs the master and every path element; the length is
        // mixed in so that [a] and [a, 0] differ.
        let mut state = splitmix(self.master ^ 0x6a09_e667_f3bc_c908);
        state = splitmix(state ^ self.stream_path.len() as u64);
        for &ix in &self.stream_path {
            state = splitmix(state ^ splitmix(ix.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        let mut key = [0u8; 32];
        let mut s = state;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        key
    }
}

impl fmt::Display for RngSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.master)?;
        for ix in &self.stream_path {
            write!(f, "/{ix}")?;
        }
        Ok(())
    }
}

impl From<u64> for RngSeed {
    fn from(master: u64) -> Self {
        Self::new(master)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
