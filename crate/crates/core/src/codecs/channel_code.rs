//! Random channel codes with maximum-likelihood decoding.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{message_bits, CodebookDescriptor, CodebookKind, MAX_CODEBOOK_BITS};
use crate::channels::{Dmc, Domain, RngStream};
use crate::coding_theorems::{ba_capacity, DEFAULT_MAX_ITER};
use crate::error::{invalid, Error, Result};
use crate::info::{is_jointly_typical, JointPmf, Pmf, Sequence};

/// Codebooks below this many words are decoded without rayon.
const PAR_THRESHOLD: usize = 1 << 14;
/// Longest binary blocklength stored bit-packed.
const MAX_PACKED_LEN: usize = 4096;

#[derive(Clone, Debug)]
enum Words {
    /// Binary alphabet: `ceil(n / 64)` words per codeword, symbol `t` in
    /// bit `t % 64` of word `t / 64`.
    Packed(Vec<u64>),
    /// Row-major `count x n`.
    Dense(Vec<u8>),
}

/// `2^bits` codewords of length `n` drawn i.i.d. from `input_law`.
#[derive(Clone, Debug)]
pub struct ChannelCodebook {
    rate: f64,
    n: usize,
    bits: u32,
    seed: u64,
    input_law: Pmf,
    words: Words,
    degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecodeRule {
    MaximumLikelihood,
    /// Unique jointly typical codeword, else failure.
    JointTypicality { epsilon: f64 },
}

/// Monte Carlo view of the message error probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// Largest per-message error frequency among messages that were sent.
    pub max_error: f64,
    pub average_error: f64,
    /// Messages never drawn; their error probability is unobserved.
    pub unhit: u64,
    pub trials: usize,
}

/// Codebook at the capacity-achieving input law of `ch`.
pub fn build_channel_code(ch: &Dmc, rate: f64, n: usize, seed: u64) -> Result<ChannelCodebook> {
    let cap = ba_capacity(ch, 1e-9, DEFAULT_MAX_ITER)?;
    let mut cb = build_channel_code_with_law(ch, &cap.optimal_input, rate, n, seed)?;
    cb.degenerate = cap.capacity < 1e-12;
    Ok(cb)
}

/// Codebook with a caller-chosen input law, e.g. a power-constrained one.
pub fn build_channel_code_with_law(
    ch: &Dmc,
    input_law: &Pmf,
    rate: f64,
    n: usize,
    seed: u64,
) -> Result<ChannelCodebook> {
    if input_law.len() != ch.inputs() {
        return invalid("input law does not match the channel input alphabet");
    }
    if !(rate > 0.0) || n == 0 {
        return invalid(format!("need R > 0 and N >= 1, got R={rate} N={n}"));
    }
    let bits = message_bits(n, rate);
    if bits == 0 {
        return invalid(format!("floor(N R) = 0 for N={n} R={rate}"));
    }
    if bits > MAX_CODEBOOK_BITS {
        return Err(Error::ResourceLimit(format!(
            "{bits} message bits exceeds the materialized limit of {MAX_CODEBOOK_BITS}"
        )));
    }
    if ch.inputs() > 256 {
        return Err(Error::ResourceLimit("input alphabets above 256 symbols".into()));
    }
    let count = 1usize << bits;
    let draw = |m: usize| RngStream::keyed(seed, Domain::Codebook, &[m as u64]);
    let words = if ch.inputs() == 2 && n <= MAX_PACKED_LEN {
        let stride = n.div_ceil(64);
        let mut flat = vec![0u64; count * stride];
        flat.par_chunks_mut(stride).enumerate().for_each(|(m, word)| {
            let mut r = draw(m);
            for t in 0..n {
                word[t / 64] |= (input_law.sample_with(r.uniform()) as u64) << (t % 64);
            }
        });
        Words::Packed(flat)
    } else {
        let mut flat = vec![0u8; count * n];
        flat.par_chunks_mut(n).enumerate().for_each(|(m, word)| {
            let mut r = draw(m);
            for s in word.iter_mut() {
                *s = input_law.sample_with(r.uniform()) as u8;
            }
        });
        Words::Dense(flat)
    };
    Ok(ChannelCodebook {
        rate,
        n,
        bits,
        seed,
        input_law: input_law.clone(),
        words,
        degenerate: false,
    })
}

impl ChannelCodebook {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn blocklength(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        1usize << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_law(&self) -> &Pmf {
        &self.input_law
    }

    /// Set when the channel has zero capacity; decoding is then chance level.
    fn stride(&self) -> usize {
        self.n.div_ceil(64)
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn codeword(&self, m: u64) -> Result<Sequence> {
        if m >= self.len() as u64 {
            return invalid(format!("message {m} outside 0..{}", self.len()));
        }
        let m = m as usize;
        Ok(match &self.words {
            Words::Packed(w) => {
                let word = &w[m * self.stride()..(m + 1) * self.stride()];
                (0..self.n).map(|t| ((word[t / 64] >> (t % 64)) & 1) as usize).collect()
            }
            Words::Dense(w) => w[m * self.n..(m + 1) * self.n]
                .iter()
                .map(|&s| s as usize)
                .collect(),
        })
    }

    pub fn descriptor(&self, ch: &Dmc) -> CodebookDescriptor {
        CodebookDescriptor::new(CodebookKind::Channel, self.rate, self.n, self.seed, ch)
    }

    fn check_output(&self, ys: &[usize], ch: &Dmc) -> Result<()> {
        if ch.inputs() != self.input_law.len() {
            return invalid("channel does not match the codebook alphabet");
        }
        if ys.len() != self.n {
            return invalid(format!("received {} symbols, blocklength is {}", ys.len(), self.n));
        }
        if let Some(y) = ys.iter().find(|&&y| y >= ch.outputs()) {
            return invalid(format!("output symbol {y} outside the channel alphabet"));
        }
        Ok(())
    }

    /// Index with the highest score, ties to the smallest index.
    fn best_by<F>(&self, score: F) -> u64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        let better = |a: (f64, usize), b: (f64, usize)| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        };
        let count = self.len();
        let best = if count >= PAR_THRESHOLD {
            (0..count)
                .into_par_iter()
                .map(|m| (score(m), m))
                .reduce(|| (f64::NEG_INFINITY, usize::MAX), better)
        } else {
            (0..count).fold((f64::NEG_INFINITY, usize::MAX), |a, m| better(a, (score(m), m)))
        };
        // every score may be -inf; the smallest index wins then
        if best.1 == usize::MAX {
            0
        } else {
            best.1 as u64
        }
    }

    fn ml(&self, ys: &[usize], ch: &Dmc) -> u64 {
        let ln = |x: usize, y: usize| ch.get(x, y).ln();
        match &self.words {
            Words::Packed(w) => {
                let stride = self.stride();
                let mut masks = vec![vec![0u64; stride]; ch.outputs()];
                for (t, &y) in ys.iter().enumerate() {
                    masks[y][t / 64] |= 1 << (t % 64);
                }
                let terms: Vec<(Vec<u64>, f64, f64)> = masks
                    .into_iter()
                    .enumerate()
                    .filter(|(_, mk)| mk.iter().any(|&b| b != 0))
                    .map(|(y, mk)| (mk, ln(0, y), ln(1, y)))
                    .collect();
                let term = |c: u32, l: f64| if c == 0 { 0.0 } else { c as f64 * l };
                self.best_by(|m| {
                    let x = &w[m * stride..(m + 1) * stride];
                    terms
                        .iter()
                        .map(|(mk, l0, l1)| {
                            let (mut c0, mut c1) = (0, 0);
                            for (&xi, &mi) in x.iter().zip(mk) {
                                c0 += (!xi & mi).count_ones();
                                c1 += (xi & mi).count_ones();
                            }
                            term(c0, *l0) + term(c1, *l1)
                        })
                        .sum()
                })
            }
            Words::Dense(w) => {
                let nx = ch.inputs();
                let table: Vec<f64> = ys
                    .iter()
                    .flat_map(|&y| (0..nx).map(move |x| ln(x, y)))
                    .collect();
                let n = self.n;
                self.best_by(|m| {
                    w[m * n..(m + 1) * n]
                        .iter()
                        .enumerate()
                        .map(|(t, &x)| table[t * nx + x as usize])
                        .sum()
                })
            }
        }
    }

    fn jt(&self, ys: &[usize], joint: &JointPmf, eps: f64) -> Result<Option<u64>> {
        let mut found = None;
        for m in 0..self.len() as u64 {
            if is_jointly_typical(&self.codeword(m)?, ys, joint, eps)? {
                if found.is_some() {
                    return Ok(None);
                }
                found = Some(m);
            }
        }
        Ok(found)
    }
}

pub fn channel_encode(cb: &ChannelCodebook, m: u64) -> Result<Sequence> {
    cb.codeword(m)
}

/// Maximum-likelihood message, ties to the smallest index.
pub fn channel_decode(cb: &ChannelCodebook, ys: &[usize], ch: &Dmc) -> Result<u64> {
    cb.check_output(ys, ch)?;
    Ok(cb.ml(ys, ch))
}

/// Decoding under an explicit rule; `None` is a declared failure.
pub fn channel_decode_with(
    cb: &ChannelCodebook,
    ys: &[usize],
    ch: &Dmc,
    rule: DecodeRule,
) -> Result<Option<u64>> {
    cb.check_output(ys, ch)?;
    match rule {
        DecodeRule::MaximumLikelihood => Ok(Some(cb.ml(ys, ch))),
        DecodeRule::JointTypicality { epsilon } => {
            let joint = ch.joint(&cb.input_law)?;
            cb.jt(ys, &joint, epsilon)
        }
    }
}

/// Sends uniformly drawn messages through `ch` and tallies decoding errors
/// per message. Trial `t` uses streams keyed by a base drawn from `rng` and
/// `t`, so the result does not depend on thread scheduling.
pub fn estimate_max_error(
    cb: &ChannelCodebook,
    ch: &Dmc,
    trials: usize,
    rng: &mut RngStream,
) -> Result<ErrorEstimate> {
    estimate_error_with(cb, ch, trials, rng, DecodeRule::MaximumLikelihood)
}

pub fn estimate_error_with(
    cb: &ChannelCodebook,
    ch: &Dmc,
    trials: usize,
    rng: &mut RngStream,
    rule: DecodeRule,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let base = rng.next_u64();
    let count = cb.len() as u64;
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let m = RngStream::keyed(base, Domain::Message, &[t]).gen_range(0..count);
            let mut noise = RngStream::keyed(base, Domain::ChannelNoise, &[t]);
            let ys = ch.transmit(&cb.codeword(m)?, &mut noise)?;
            let got = channel_decode_with(cb, &ys, ch, rule)?;
            Ok((m, got != Some(m)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tally: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for &(m, err) in &outcomes {
        let e = tally.entry(m).or_default();
        e.0 += 1;
        e.1 += err as u64;
    }
    let errors: u64 = tally.values().map(|v| v.1).sum();
    Ok(ErrorEstimate {
        max_error: tally
            .values()
            .map(|&(h, e)| e as f64 / h as f64)
            .fold(0.0, f64::max),
        average_error: errors as f64 / trials as f64,
        unhit: count - tally.len() as u64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::StreamPath;
    use crate::info::h2;

    fn rng(s: u64) -> RngStream {
        RngStream::new(s, Domain::Experiment, StreamPath::trial(0))
    }

    #[test]
    fn shape_and_determinism() {
        let ch = Dmc::bsc(0.1).unwrap();
        let cb = build_channel_code(&ch, 1.0, 1, 7).unwrap();
        assert_eq!(cb.len(), 2);
        assert_eq!(cb.codeword(0).unwrap().len(), 1);
        let a = build_channel_code(&ch, 0.5, 20, 7).unwrap();
        let b = build_channel_code(&ch, 0.5, 20, 7).unwrap();
        for m in 0..a.len() as u64 {
            assert_eq!(channel_encode(&a, m).unwrap(), channel_encode(&b, m).unwrap());
        }
        assert!(a.codeword(a.len() as u64).is_err());
        assert!(build_channel_code(&ch, 0.01, 10, 0).is_err());
        assert!(matches!(
            build_channel_code(&ch, 1.0, 25, 0),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn packed_and_dense_paths_agree() {
        // the same codeword streams, stored two ways
        let ch = Dmc::bsc(0.2).unwrap();
        let law = Pmf::uniform(2).unwrap();
        let packed = build_channel_code_with_law(&ch, &law, 0.25, 32, 5).unwrap();
        let long = build_channel_code_with_law(&ch, &law, 0.1, 80, 5).unwrap();
        for m in 0..packed.len() as u64 {
            assert_eq!(packed.codeword(m).unwrap()[..32], long.codeword(m).unwrap()[..32]);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let ch = Dmc::identity(2).unwrap();
        let cb = build_channel_code(&ch, 1.0, 8, 11).unwrap();
        let words: std::collections::HashSet<_> =
            (0..256).map(|m| cb.codeword(m).unwrap()).collect();
        if words.len() == 256 {
            for m in 0..256 {
                let y = cb.codeword(m).unwrap();
                assert_eq!(channel_decode(&cb, &y, &ch).unwrap(), m);
            }
        }
        let est = estimate_max_error(&cb, &ch, 500, &mut rng(1)).unwrap();
        if words.len() == 256 {
            assert_eq!(est.max_error, 0.0);
        }
    }

    #[test]
    fn ml_matches_brute_force() {
        // oracle: product of transition probabilities, computed directly
        let ch = Dmc::new(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.6, 0.3],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let cb = build_channel_code(&ch, 0.5, 10, 3).unwrap();
        let mut r = rng(4);
        for _ in 0..50 {
            let ys: Vec<usize> = (0..10).map(|_| r.gen_range(0..3)).collect();
            let lik = |m: u64| -> f64 {
                let c = cb.codeword(m).unwrap();
                c.iter().zip(&ys).map(|(&x, &y)| ch.get(x, y)).product()
            };
            let best = (0..cb.len() as u64).map(lik).fold(0.0, f64::max);
            let got = channel_decode(&cb, &ys, &ch).unwrap();
            // exact ties may resolve differently under rounding
            assert!((lik(got) - best).abs() <= 1e-12 * best, "{got}");
        }
    }

    #[test]
    fn binary_ml_matches_brute_force() {
        let ch = Dmc::bec(0.3).unwrap();
        let law = Pmf::uniform(2).unwrap();
        let cb = build_channel_code_with_law(&ch, &law, 0.5, 12, 9).unwrap();
        let mut r = rng(5);
        for _ in 0..50 {
            let m = r.gen_range(0..cb.len() as u64);
            let ys = ch.transmit(&cb.codeword(m).unwrap(), &mut r).unwrap();
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..cb.len() as u64 {
                let c = cb.codeword(k).unwrap();
                let p: f64 = c.iter().zip(&ys).map(|(&x, &y)| ch.get(x, y)).product();
                if p > best.0 {
                    best = (p, k);
                }
            }
            assert_eq!(channel_decode(&cb, &ys, &ch).unwrap(), best.1);
        }
    }

    #[test]
    fn useless_channel_is_chance_level() {
        let ch = Dmc::bsc(0.5).unwrap();
        let cb = build_channel_code(&ch, 0.5, 8, 2).unwrap();
        assert!(cb.degenerate());
        let est = estimate_max_error(&cb, &ch, 2000, &mut rng(2)).unwrap();
        assert!(est.average_error >= 0.5);
        assert!(est.max_error >= 0.5);
    }

    #[test]
    fn error_falls_with_blocklength() {
        // R = 1/3 < C(0.05) = 0.714; medians over 10 codebooks
        let ch = Dmc::bsc(0.05).unwrap();
        let mut medians = vec![];
        for n in [8, 16, 24] {
            let mut errs: Vec<f64> = (0..10)
                .map(|s| {
                    let cb = build_channel_code(&ch, 1.0 / 3.0, n, s).unwrap();
                    estimate_max_error(&cb, &ch, 1000, &mut rng(100 + s))
                        .unwrap()
                        .average_error
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(0.5 * (errs[4] + errs[5]));
        }
        assert!(medians[0] >= medians[1] && medians[1] >= medians[2], "{medians:?}");
        assert!(1.0 - h2(0.05) > 1.0 / 3.0);
    }

    #[test]
    fn joint_typicality_decoder() {
        let ch = Dmc::identity(2).unwrap();
        let cb = build_channel_code(&ch, 0.25, 16, 1).unwrap();
        let y = cb.codeword(2).unwrap();
        let rule = DecodeRule::JointTypicality { epsilon: 0.5 };
        let got = channel_decode_with(&cb, &y, &ch, rule).unwrap();
        // either the unique typical word or a declared failure
        assert!(got.is_none() || got == Some(2));
    }
}
