//! Hand-built codes for bit-pipe networks: a random vector quantizer and a
//! typical-set code for one link, and a Slepian-Wolf pair code for two
//! sources feeding one sink.

use crate::channels::{Domain, RngStream};
use crate::codecs::{
    bin_members, map_ceiling, sw_decode_map_within, sw_encode, BinningCode, SwFailure, DEFAULT_MAP_BUDGET, MAX_CODEBOOK_BITS,
};
use crate::coding_theorems::DistortionMeasure;
use crate::error::{invalid, Error, Result};
use crate::info::{typical_count_range, JointPmf, Pmf, Sequence};
use crate::netsim::{from_bits, to_bits, Bits, MessageCode};

/// Point-to-point lossy code: `2^bits` reconstruction words drawn i.i.d.
/// from a law on the reconstruction alphabet; the encoder sends the index
/// of the least-distortion word, ties to the smallest.
#[derive(Clone, Debug)]
pub struct VqCode {
    len: usize,
    n: usize,
    bits: u32,
    measure: DistortionMeasure,
    words: Vec<Sequence>,
    /// Words packed one bit per symbol when the measure is binary Hamming.
    packed: Option<Vec<u64>>,
}

impl VqCode {
    pub fn new(law: &Pmf, measure: DistortionMeasure, len: usize, n: usize, bits: u32, seed: u64) -> Result<Self> {
        if len == 0 || n == 0 {
            return invalid("block lengths must be positive");
        }
        if law.len() != measure.cols() {
            return invalid("the word law must live on the reconstruction alphabet");
        }
        if bits > MAX_CODEBOOK_BITS {
            return Err(Error::ResourceLimit(format!("{bits} codebook bits exceed the cap")));
        }
        let words: Vec<Sequence> = (0..1u64 << bits)
            .map(|m| {
                let mut r = RngStream::keyed(seed, Domain::Codebook, &[0x7671, m]);
                (0..len).map(|_| law.sample_with(r.uniform())).collect()
            })
            .collect();
        let hamming = measure.rows() == 2 && measure == DistortionMeasure::hamming(2)?;
        let packed = (hamming && len <= 64).then(|| words.iter().map(|w| pack(w)).collect());
        Ok(VqCode {
            len,
            n,
            bits,
            measure,
            words,
            packed,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Index of the least-distortion word.
    pub fn quantize(&self, u: &[usize]) -> u64 {
        if let Some(p) = &self.packed {
            let x = pack(u);
            let mut best = (u32::MAX, 0);
            for (m, w) in p.iter().enumerate() {
                let d = (x ^ w).count_ones();
                if d < best.0 {
                    best = (d, m);
                }
            }
            return best.1 as u64;
        }
        let mut best = (f64::INFINITY, 0);
        for (m, w) in self.words.iter().enumerate() {
            let d: f64 = u.iter().zip(w).map(|(&a, &b)| self.measure.get(a, b)).sum();
            if d < best.0 {
                best = (d, m);
            }
        }
        best.1 as u64
    }

    pub fn word(&self, m: u64) -> &[usize] {
        &self.words[m as usize]
    }
}

fn pack(u: &[usize]) -> u64 {
    u.iter().enumerate().fold(0, |acc, (t, &s)| acc | ((s & 1) as u64) << t)
}

impl MessageCode for VqCode {
    fn source_len(&self) -> usize {
        self.len
    }

    fn channel_len(&self) -> usize {
        self.n
    }

    fn encode(&self, node: usize, source: &[usize]) -> Result<Vec<Bits>> {
        Ok(match node {
            0 => vec![to_bits(self.quantize(source), self.bits)],
            _ => Vec::new(),
        })
    }

    fn decode(&self, _: usize, incoming: &[Bits], _: &[usize]) -> Result<Sequence> {
        let m = from_bits(&incoming[0]) & ((1u64 << self.bits) - 1);
        Ok(self.word(m).to_vec())
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn multinomial(c: &[usize]) -> u128 {
    let mut total = 0u64;
    let mut acc = 1u128;
    for &k in c {
        total += k as u64;
        acc *= binomial(total, k as u64);
    }
    acc
}

/// Point-to-point lossless code: the strongly typical sequences, grouped
/// by type in order of decreasing sequence probability and ranked within
/// each type, get consecutive indices. Indices past `2^bits` are dropped.
/// An uncovered block is sent as index 0 and decodes wrongly.
#[derive(Clone, Debug)]
pub struct TypicalSetCode {
    alphabet: usize,
    len: usize,
    n: usize,
    bits: u32,
    /// Covered types with the index of their first sequence.
    types: Vec<(Vec<usize>, u128)>,
    covered: u128,
}

impl TypicalSetCode {
    pub fn new(p: &Pmf, len: usize, n: usize, bits: u32, epsilon: f64) -> Result<Self> {
        if len == 0 || n == 0 {
            return invalid("block lengths must be positive");
        }
        if bits > 64 {
            return Err(Error::ResourceLimit("at most 64 message bits".into()));
        }
        let k = p.len();
        let ranges: Vec<(usize, usize)> = match p
            .probs()
            .iter()
            .map(|&q| typical_count_range(len, q, epsilon))
            .collect::<Option<Vec<_>>>()
        {
            Some(r) => r,
            None => vec![(1, 0); k],
        };
        let mut types = Vec::new();
        let mut c = vec![0usize; k];
        enumerate_types(&ranges, len, 0, &mut c, &mut types);
        let ln_prob = |c: &[usize]| -> f64 {
            c.iter()
                .zip(p.probs())
                .map(|(&k, &q)| if k == 0 { 0.0 } else { k as f64 * q.ln() })
                .sum()
        };
        types.sort_by(|a, b| ln_prob(b).total_cmp(&ln_prob(a)).then(a.cmp(b)));
        let cap: u128 = 1u128 << bits;
        let mut offset = 0u128;
        let mut kept = Vec::new();
        for t in types {
            if offset >= cap {
                break;
            }
            let size = multinomial(&t);
            kept.push((t, offset));
            offset += size;
        }
        Ok(TypicalSetCode {
            alphabet: k,
            len,
            n,
            bits,
            types: kept,
            covered: offset.min(cap),
        })
    }

    /// Number of sequences with an index.
    pub fn covered(&self) -> u128 {
        self.covered
    }

    fn counts(&self, u: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.alphabet];
        for &s in u {
            c[s] += 1;
        }
        c
    }

    /// Index of `u`, or `None` when the code does not cover it.
    pub fn index(&self, u: &[usize]) -> Option<u64> {
        let c = self.counts(u);
        let (_, offset) = self.types.iter().find(|(t, _)| *t == c)?;
        let mut rem = c;
        let mut rank = 0u128;
        for &s in u {
            for smaller in 0..s {
                if rem[smaller] > 0 {
                    rem[smaller] -= 1;
                    rank += multinomial(&rem);
                    rem[smaller] += 1;
                }
            }
            rem[s] -= 1;
        }
        let i = offset + rank;
        (i < self.covered).then_some(i as u64)
    }

    pub fn sequence(&self, i: u64) -> Sequence {
        let i = i as u128;
        let Some((t, offset)) = self.types.iter().rev().find(|(_, o)| *o <= i) else {
            return vec![0; self.len];
        };
        let mut rank = i - offset;
        let mut rem = t.clone();
        let mut u = Vec::with_capacity(self.len);
        for _ in 0..self.len {
            for s in 0..self.alphabet {
                if rem[s] == 0 {
                    continue;
                }
                rem[s] -= 1;
                let block = multinomial(&rem);
                if rank < block {
                    u.push(s);
                    break;
                }
                rank -= block;
                rem[s] += 1;
            }
        }
        u
    }
}

fn enumerate_types(
    ranges: &[(usize, usize)],
    left: usize,
    i: usize,
    c: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if i == ranges.len() {
        if left == 0 {
            out.push(c.clone());
        }
        return;
    }
    let (lo, hi) = ranges[i];
    for k in lo..=hi.min(left) {
        c[i] = k;
        enumerate_types(ranges, left - k, i + 1, c, out);
    }
    c[i] = 0;
}

impl MessageCode for TypicalSetCode {
    fn source_len(&self) -> usize {
        self.len
    }

    fn channel_len(&self) -> usize {
        self.n
    }

    fn encode(&self, node: usize, source: &[usize]) -> Result<Vec<Bits>> {
        Ok(match node {
            0 => vec![to_bits(self.index(source).unwrap_or(0), self.bits)],
            _ => Vec::new(),
        })
    }

    fn decode(&self, _: usize, incoming: &[Bits], _: &[usize]) -> Result<Sequence> {
        Ok(self.sequence(from_bits(&incoming[0])))
    }
}

/// Two sources at nodes 0 and 1, each binned by its own linear hash, and a
/// sink that decodes the pair jointly: it lists the smaller bin and, for
/// each member, MAP-decodes the other source from its bin with the member
/// as side information, keeping the most probable pair.
#[derive(Clone, Debug)]
pub struct SwPairCode {
    joint: JointPmf,
    n: usize,
    codes: [BinningCode; 2],
    budget: usize,
}

impl SwPairCode {
    /// `joint` has `U1` on rows and `U2` on columns.
    pub fn new(joint: JointPmf, len: usize, n: usize, bits: (u32, u32), seed: u64) -> Result<Self> {
        let c1 = BinningCode::with_bits(joint.rows(), len, bits.0, 0.1, seed)?;
        let c2 = BinningCode::with_bits(joint.cols(), len, bits.1, 0.1, seed ^ 0x5357)?;
        Ok(SwPairCode {
            joint,
            n,
            codes: [c1, c2],
            budget: DEFAULT_MAP_BUDGET,
        })
    }

    /// The decoded pair, or `None` when every candidate failed.
    pub fn decode_pair(&self, bins: (u64, u64)) -> Result<Option<(Sequence, Sequence)>> {
        let list_second = self.codes[1].bits() >= self.codes[0].bits();
        let (listed, other, other_bin, law) = if list_second {
            (&self.codes[1], &self.codes[0], bins.0, self.joint.clone())
        } else {
            (&self.codes[0], &self.codes[1], bins.1, self.joint.transpose())
        };
        let listed_bin = if list_second { bins.1 } else { bins.0 };
        let cands = bin_members(listed, listed_bin)?;
        let bases: Vec<f64> = cands.iter().map(|c| map_ceiling(c, &law)).collect();
        // Iterative deepening on the allowed loss so wrong candidates, whose
        // bins are far from the side information, stay cheap.
        let mut best: Option<(f64, usize, Sequence)> = None;
        let mut pending: Vec<usize> = (0..cands.len()).collect();
        let mut reach = 2.0;
        while !pending.is_empty() {
            let mut next = Vec::new();
            for &i in &pending {
                let floor = best.as_ref().map(|b| b.0);
                let limit = match floor {
                    Some(s) => bases[i] - s,
                    None => reach,
                };
                if limit < 0.0 {
                    continue;
                }
                match sw_decode_map_within(other, other_bin, &cands[i], &law, self.budget, limit)? {
                    Ok((u, ll)) => {
                        if best.as_ref().map_or(true, |b| ll > b.0) {
                            best = Some((ll, i, u));
                        }
                    }
                    Err(SwFailure::BeyondLoss) if floor.is_none() => next.push(i),
                    Err(_) => {}
                }
            }
            pending = next;
            reach *= 1.25;
        }
        Ok(best.map(|(_, i, u)| {
            let c = cands[i].clone();
            if list_second {
                (u, c)
            } else {
                (c, u)
            }
        }))
    }
}

impl MessageCode for SwPairCode {
    fn source_len(&self) -> usize {
        self.codes[0].len()
    }

    fn channel_len(&self) -> usize {
        self.n
    }

    fn encode(&self, node: usize, source: &[usize]) -> Result<Vec<Bits>> {
        Ok(match node {
            0 | 1 => {
                let c = &self.codes[node];
                vec![to_bits(sw_encode(c, source)?, c.bits())]
            }
            _ => Vec::new(),
        })
    }

    fn decode(&self, demand: usize, incoming: &[Bits], _: &[usize]) -> Result<Sequence> {
        let bins = (from_bits(&incoming[0]), from_bits(&incoming[1]));
        Ok(match self.decode_pair(bins)? {
            Some((u1, _)) if demand == 0 => u1,
            Some((_, u2)) => u2,
            None => vec![0; self.source_len()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::StreamPath;
    use crate::info::is_typical;

    fn rng(s: u64) -> RngStream {
        RngStream::new(s, Domain::Experiment, StreamPath::trial(0))
    }

    #[test]
    fn multinomial_matches_factorials() {
        assert_eq!(multinomial(&[2, 1, 1]), 12);
        assert_eq!(multinomial(&[12, 12]), 2_704_156);
        assert_eq!(multinomial(&[0, 5]), 1);
    }

    #[test]
    fn typical_set_ranking_is_a_bijection() {
        let p = Pmf::new(vec![0.5, 0.3, 0.2]).unwrap();
        let code = TypicalSetCode::new(&p, 8, 8, 20, 0.5).unwrap();
        let total = code.covered() as u64;
        assert!(total > 0);
        for i in 0..total {
            let u = code.sequence(i);
            assert!(is_typical(&u, &p, 0.5));
            assert_eq!(code.index(&u), Some(i));
        }
        // oracle: count typical sequences by brute force
        let brute = (0..3usize.pow(8))
            .filter(|x| {
                let u: Sequence = (0..8).map(|t| x / 3usize.pow(t) % 3).collect();
                is_typical(&u, &p, 0.5)
            })
            .count() as u64;
        assert_eq!(total, brute);
    }

    #[test]
    fn typical_set_truncates_to_the_message_size() {
        let p = Pmf::bernoulli(0.3).unwrap();
        let code = TypicalSetCode::new(&p, 24, 24, 10, 0.5).unwrap();
        assert_eq!(code.covered(), 1024);
        assert_eq!(code.index(&code.sequence(1023)), Some(1023));
    }

    #[test]
    fn vq_picks_the_nearest_word() {
        let law = Pmf::uniform(2).unwrap();
        let ham = DistortionMeasure::hamming(2).unwrap();
        let code = VqCode::new(&law, ham.clone(), 16, 16, 6, 3).unwrap();
        let mut r = rng(4);
        for _ in 0..50 {
            let u: Sequence = (0..16).map(|_| (r.uniform() < 0.5) as usize).collect();
            let m = code.quantize(&u);
            // oracle: brute-force minimum with the table measure
            let d = |w: &[usize]| ham.average(&u, w).unwrap();
            let best = (0..64).map(|i| d(code.word(i))).fold(f64::INFINITY, f64::min);
            assert_eq!(d(code.word(m)), best);
            assert!((0..m).all(|i| d(code.word(i)) > best));
        }
    }

    #[test]
    fn vq_distortion_near_random_coding_oracle() {
        // E[min] = sum_k P(min > k), with P(one word within k) from the binomial cdf
        let total = 2f64.powi(24);
        let mut cdf = 0.0;
        let mut expect = 0.0;
        for k in 0..24u64 {
            cdf += binomial(24, k) as f64 / total;
            expect += (1.0 - cdf).powi(4096);
        }
        let expect = expect / 24.0;
        let code = VqCode::new(&Pmf::uniform(2).unwrap(), DistortionMeasure::hamming(2).unwrap(), 24, 24, 12, 9).unwrap();
        let mut r = rng(6);
        let trials = 400;
        let mut d = 0.0;
        for _ in 0..trials {
            let u: Sequence = (0..24).map(|_| (r.uniform() < 0.5) as usize).collect();
            let w = code.word(code.quantize(&u));
            d += u.iter().zip(w).filter(|(a, b)| a != b).count() as f64 / 24.0;
        }
        d /= trials as f64;
        assert!((d - expect).abs() < 0.01, "measured {d}, oracle {expect}");
    }

    #[test]
    fn pair_code_recovers_correlated_sources() {
        let joint = JointPmf::dsbs(0.1).unwrap();
        let code = SwPairCode::new(joint, 24, 24, (21, 21), 2).unwrap();
        let mut r = rng(8);
        let mut errors = 0;
        for _ in 0..100 {
            let u2: Sequence = (0..24).map(|_| (r.uniform() < 0.5) as usize).collect();
            let u1: Sequence = u2.iter().map(|&b| b ^ (r.uniform() < 0.1) as usize).collect();
            let m1 = code.encode(0, &u1).unwrap();
            let m2 = code.encode(1, &u2).unwrap();
            let inc = [m1[0].clone(), m2[0].clone()];
            let d1 = code.decode(0, &inc, &[]).unwrap();
            let d2 = code.decode(1, &inc, &[]).unwrap();
            errors += (d1 != u1 || d2 != u2) as usize;
        }
        assert!(errors <= 10, "{errors} block errors");
    }
}
