//! Random-coding constructions: channel codes, channel-emulation codes and
//! Slepian-Wolf binning codes. Every codebook is a pure function of its
//! seed and parameters.
//!
//! Message indices are 0-based. The emulation encoder's "no typical
//! codeword" fallback is index 0.

mod binning;
mod channel_code;
mod emulation;
pub mod gf2;

use serde::{Deserialize, Serialize};

use crate::channels::Dmc;

pub use self::binning::{
    bin_members, map_ceiling, sw_decode, sw_decode_map_within, sw_decode_with, sw_encode, BinningCode, SwFailure, SwRule, DEFAULT_MAP_BUDGET,
};
pub use self::channel_code::{
    build_channel_code, build_channel_code_with_law, channel_decode, channel_decode_with,
    channel_encode, estimate_error_with, estimate_max_error, ChannelCodebook, DecodeRule,
    ErrorEstimate,
};
pub use self::emulation::{
    build_emulation_code, emulate_decode, emulate_encode, emulate_search, emulation_fidelity,
    EmulationCodebook, EmulationMethod, EnsembleEmulator, FidelityStats, DEFAULT_EMULATION_EPS,
};

/// Largest `floor(N R)` for which a codebook is materialized.
pub const MAX_CODEBOOK_BITS: u32 = 24;

/// `floor(N R)`, with a small guard so that e.g. `24 * (1/3)` gives 8.
pub fn message_bits(n: usize, rate: f64) -> u32 {
    let x = n as f64 * rate;
    if !(x >= 0.0) {
        return 0;
    }
    (x + 1e-9).floor().min(u32::MAX as f64) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    Channel,
    Emulation,
    Binning,
}

/// What a manifest records to rebuild a codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookDescriptor {
    pub kind: CodebookKind,
    pub rate: f64,
    pub blocklength: usize,
    pub seed: u64,
    /// FNV-1a of the transition table's bit patterns, as hex.
    pub channel_hash: String,
}

impl CodebookDescriptor {
    pub fn new(kind: CodebookKind, rate: f64, blocklength: usize, seed: u64, ch: &Dmc) -> Self {
        CodebookDescriptor {
            kind,
            rate,
            blocklength,
            seed,
            channel_hash: format!("{:016x}", channel_hash(ch)),
        }
    }
}

pub fn channel_hash(ch: &Dmc) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |w: u64| {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(ch.inputs() as u64);
    eat(ch.outputs() as u64);
    for p in ch.flat() {
        eat(p.to_bits());
    }
    h
}
