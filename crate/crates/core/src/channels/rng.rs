//! Hierarchical deterministic random streams.
//!
//! A stream is named by a master seed, a domain tag and a four-part path
//! `(edge, layer, time, trial)`. The path is folded into a 256-bit ChaCha8
//! key with SplitMix64, so any two distinct names give unrelated streams
//! and the same name always gives the same stream on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Keeps e.g. channel noise on edge 0 apart
/// from codebook generation with seed 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    ChannelNoise,
    Source,
    Codebook,
    Message,
    Hash,
    Experiment,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::ChannelNoise => 0x6e6f697365,
            Domain::Source => 0x736f75726365,
            Domain::Codebook => 0x636f6465,
            Domain::Message => 0x6d7367,
            Domain::Hash => 0x68617368,
            Domain::Experiment => 0x657870,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamPath {
    pub edge: u64,
    pub layer: u64,
    pub time: u64,
    pub trial: u64,
}

impl StreamPath {
    pub fn new(edge: u64, layer: u64, time: u64, trial: u64) -> Self {
        StreamPath {
            edge,
            layer,
            time,
            trial,
        }
    }

    pub fn trial(trial: u64) -> Self {
        StreamPath {
            trial,
            ..Default::default()
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(master: u64, words: &[u64]) -> [u8; 32] {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &w in words {
        state ^= w.wrapping_add(acc);
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A reproducible random stream. Implements [`RngCore`].
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, domain: Domain, path: StreamPath) -> Self {
        let key = derive_key(
            master_seed,
            &[domain.tag(), path.edge, path.layer, path.time, path.trial],
        );
        RngStream {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Stream keyed by an arbitrary list of words under a domain.
    pub fn keyed(master_seed: u64, domain: Domain, words: &[u64]) -> Self {
        let mut all = Vec::with_capacity(words.len() + 2);
        all.push(domain.tag());
        all.push(u64::MAX);
        all.extend_from_slice(words);
        RngStream {
            inner: ChaCha8Rng::from_seed(derive_key(master_seed, &all)),
        }
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Standard normal deviate by the Marsaglia polar method. Only IEEE
    /// arithmetic plus `ln` and `sqrt` is involved, and the second deviate of
    /// each pair is discarded so that every call consumes whole rejection
    /// rounds; results depend only on the stream name.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
