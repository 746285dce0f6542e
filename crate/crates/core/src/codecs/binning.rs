//! Slepian-Wolf binning by a seeded random linear hash.
//!
//! A sequence over an alphabet of size `q` is packed into `L w` bits with
//! `w = ceil(log2 q)` bits per symbol; its bin is `H x` for a random binary
//! `b x (L w)` matrix `H`. Each bin is then a coset of the kernel of `H`,
//! which the decoders enumerate through [`gf2`](super::gf2).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use super::gf2;
use super::{message_bits, CodebookDescriptor, CodebookKind};
use crate::channels::{Dmc, Domain, RngStream};
use crate::error::{invalid, Error, Result};
use crate::info::{counts, typical_count_range, JointPmf, Sequence};

/// Default number of heap pops for the binary MAP search.
pub const DEFAULT_MAP_BUDGET: usize = 1 << 22;

/// Largest candidate set any decoder will enumerate.
const MAX_ENUMERATION: f64 = (1u64 << 26) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningCode {
    alphabet: usize,
    len: usize,
    width: u32,
    bits: u32,
    seed: u64,
    epsilon: f64,
    /// One `bits`-wide mask per packed input bit.
    cols: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwFailure {
    /// No sequence in the bin is jointly typical with the side information.
    NoneTypical,
    /// More than one is.
    Ambiguous,
    /// The MAP search ran out of budget.
    BudgetExhausted,
    /// Every sequence in the bin loses more than the allowed log-likelihood.
    BeyondLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SwRule {
    /// The unique jointly typical sequence in the bin.
    Typical { epsilon: f64 },
    /// The most probable sequence in the bin given the side information.
    Map { budget: usize },
}

pub type SwDecoded = std::result::Result<Sequence, SwFailure>;

impl BinningCode {
    /// `floor(len * rate)` bin bits.
    pub fn new(alphabet: usize, len: usize, rate: f64, epsilon: f64, seed: u64) -> Result<Self> {
        if !(rate >= 0.0) {
            return invalid(format!("negative binning rate {rate}"));
        }
        Self::with_bits(alphabet, len, message_bits(len, rate), epsilon, seed)
    }

    pub fn with_bits(alphabet: usize, len: usize, bits: u32, epsilon: f64, seed: u64) -> Result<Self> {
        if alphabet == 0 || len == 0 {
            return invalid("empty alphabet or zero length");
        }
        if !(epsilon > 0.0) {
            return invalid("typicality slack must be positive");
        }
        let width = usize::BITS - (alphabet - 1).leading_zeros();
        if len * width as usize > 64 || bits > 64 {
            return Err(Error::ResourceLimit(format!(
                "binning needs L log2|U| <= 64 and at most 64 bin bits; got {} and {bits}",
                len * width as usize
            )));
        }
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        let mut r = RngStream::keyed(seed, Domain::Hash, &[alphabet as u64, len as u64, bits as u64]);
        let cols = (0..len * width as usize).map(|_| r.next_u64() & mask).collect();
        Ok(BinningCode {
            alphabet,
            len,
            width,
            bits,
            seed,
            epsilon,
            cols,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn rate(&self) -> f64 {
        self.bits as f64 / self.len as f64
    }

    pub fn descriptor(&self, ch: &Dmc) -> CodebookDescriptor {
        CodebookDescriptor::new(CodebookKind::Binning, self.rate(), self.len, self.seed, ch)
    }

    fn pack(&self, u: &[usize]) -> u64 {
        u.iter()
            .enumerate()
            .fold(0, |acc, (t, &s)| acc | (s as u64) << (t as u32 * self.width))
    }

    /// `None` when some field holds a code above the alphabet.
    fn unpack(&self, x: u64) -> Option<Sequence> {
        let m = (1u64 << self.width) - 1;
        (0..self.len)
            .map(|t| {
                let s = ((x >> (t as u32 * self.width)) & m) as usize;
                (s < self.alphabet).then_some(s)
            })
            .collect()
    }

    fn bin_of(&self, u: &[usize]) -> u64 {
        gf2::apply(&self.cols, self.pack(u))
    }

    fn coset(&self, bin: u64) -> Option<gf2::Solution> {
        gf2::solve(&self.cols, bin)
    }
}

/// Every sequence in `bin`, in Gray-code order of the coset.
pub fn bin_members(bc: &BinningCode, bin: u64) -> Result<Vec<Sequence>> {
    let Some(coset) = bc.coset(bin) else {
        return Ok(Vec::new());
    };
    if (coset.dimension() as f64).exp2() > MAX_ENUMERATION {
        return Err(Error::ResourceLimit(format!(
            "bin of 2^{} candidates is too large to list",
            coset.dimension()
        )));
    }
    Ok(coset.iter().filter_map(|x| bc.unpack(x)).collect())
}

pub fn sw_encode(bc: &BinningCode, u: &[usize]) -> Result<u64> {
    if u.len() != bc.len {
        return invalid(format!("sequence of {} symbols, code length is {}", u.len(), bc.len));
    }
    counts(u, bc.alphabet)?;
    Ok(bc.bin_of(u))
}

/// Typicality decoding at the code's own slack.
pub fn sw_decode(bc: &BinningCode, bin: u64, side: &[usize], joint: &JointPmf) -> Result<SwDecoded> {
    sw_decode_with(bc, bin, side, joint, SwRule::Typical { epsilon: bc.epsilon })
}

pub fn sw_decode_with(
    bc: &BinningCode,
    bin: u64,
    side: &[usize],
    joint: &JointPmf,
    rule: SwRule,
) -> Result<SwDecoded> {
    if side.len() != bc.len {
        return invalid(format!("side information of {} symbols, code length is {}", side.len(), bc.len));
    }
    if joint.rows() != bc.alphabet {
        return invalid("joint law rows do not match the source alphabet");
    }
    counts(side, joint.cols())?;
    if bc.bits < 64 && bin >> bc.bits != 0 {
        return invalid(format!("bin {bin} outside {} bits", bc.bits));
    }
    let out = match rule {
        SwRule::Typical { epsilon } => decode_typical(bc, bin, side, joint, epsilon)?,
        SwRule::Map { budget } if bc.alphabet == 2 => decode_map_binary(bc, bin, side, joint, budget, f64::INFINITY),
        SwRule::Map { .. } => decode_map_coset(bc, bin, side, joint)?,
    };
    if let Ok(u) = &out {
        if bc.bin_of(u) != bin {
            return Err(Error::ContractViolation("decoded sequence is outside its bin".into()));
        }
    }
    Ok(out)
}

fn decode_typical(
    bc: &BinningCode,
    bin: u64,
    side: &[usize],
    joint: &JointPmf,
    eps: f64,
) -> Result<SwDecoded> {
    let (nu, nv) = (joint.rows(), joint.cols());
    let Some(bx) = joint
        .probs()
        .iter()
        .map(|&p| typical_count_range(bc.len, p, eps))
        .collect::<Option<Vec<_>>>()
    else {
        return Ok(Err(SwFailure::NoneTypical));
    };
    let Some(coset) = bc.coset(bin) else {
        return Ok(Err(SwFailure::NoneTypical));
    };
    let coset_size = (coset.dimension() as f64).exp2();
    let shell = shell_size(side, nu, nv, &bx);
    if coset_size.min(shell) > MAX_ENUMERATION {
        return Err(Error::ResourceLimit(format!(
            "typical decoding would enumerate {:.3e} candidates",
            coset_size.min(shell)
        )));
    }
    let typical = |u: &[usize]| {
        let mut c = vec![0usize; nu * nv];
        for (&a, &b) in u.iter().zip(side) {
            c[a * nv + b] += 1;
        }
        c.iter().zip(&bx).all(|(&k, &(lo, hi))| lo <= k && k <= hi)
    };
    let mut found: Vec<Sequence> = Vec::new();
    if coset_size <= shell {
        for x in coset.iter() {
            if let Some(u) = bc.unpack(x) {
                if typical(&u) {
                    found.push(u);
                    if found.len() > 1 {
                        break;
                    }
                }
            }
        }
    } else {
        let mut dfs = ShellSearch::new(bc, bin, side, nu, nv, &bx);
        dfs.run(0, &mut found);
    }
    Ok(match found.len() {
        0 => Err(SwFailure::NoneTypical),
        1 => Ok(found.pop().expect("one element")),
        _ => Err(SwFailure::Ambiguous),
    })
}

/// Number of sequences jointly typical with `side`, as a float.
fn shell_size(side: &[usize], nu: usize, nv: usize, bx: &[(usize, usize)]) -> f64 {
    let mut m = vec![0usize; nv];
    for &v in side {
        m[v] += 1;
    }
    let lnf = |k: usize| ln_factorial(k as u64);
    let mut total = 0.0;
    for v in 0..nv {
        // ln sum over count vectors in the boxes of the multinomial m_v!/prod c!
        let mut g = vec![f64::NEG_INFINITY; m[v] + 1];
        g[0] = 0.0;
        for u in 0..nu {
            let (lo, hi) = bx[u * nv + v];
            let mut next = vec![f64::NEG_INFINITY; m[v] + 1];
            for (s, slot) in next.iter_mut().enumerate() {
                let terms: Vec<f64> = (lo..=hi.min(s))
                    .map(|c| g[s - c] - lnf(c))
                    .filter(|t| t.is_finite())
                    .collect();
                if let Some(mx) = terms.iter().cloned().reduce(f64::max) {
                    *slot = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
                }
            }
            g = next;
        }
        let lv = lnf(m[v]) + g[m[v]];
        if lv == f64::NEG_INFINITY {
            return 0.0;
        }
        total += lv;
    }
    total.exp()
}

/// Depth-first enumeration of the typical shell with count pruning.
struct ShellSearch<'a> {
    bc: &'a BinningCode,
    bin: u64,
    side: &'a [usize],
    nu: usize,
    nv: usize,
    bx: &'a [(usize, usize)],
    c: Vec<usize>,
    remaining: Vec<usize>,
    u: Sequence,
}

impl<'a> ShellSearch<'a> {
    fn new(
        bc: &'a BinningCode,
        bin: u64,
        side: &'a [usize],
        nu: usize,
        nv: usize,
        bx: &'a [(usize, usize)],
    ) -> Self {
        let mut remaining = vec![0; nv];
        for &v in side {
            remaining[v] += 1;
        }
        ShellSearch {
            bc,
            bin,
            side,
            nu,
            nv,
            bx,
            c: vec![0; nu * nv],
            remaining,
            u: vec![0; side.len()],
        }
    }

    fn feasible(&self, v: usize) -> bool {
        let need: usize = (0..self.nu)
            .map(|a| self.bx[a * self.nv + v].0.saturating_sub(self.c[a * self.nv + v]))
            .sum();
        need <= self.remaining[v]
    }

    fn run(&mut self, t: usize, found: &mut Vec<Sequence>) {
        if found.len() > 1 {
            return;
        }
        if t == self.side.len() {
            if self.bc.bin_of(&self.u) == self.bin {
                found.push(self.u.clone());
            }
            return;
        }
        let v = self.side[t];
        self.remaining[v] -= 1;
        for a in 0..self.nu {
            let cell = a * self.nv + v;
            if self.c[cell] < self.bx[cell].1 {
                self.c[cell] += 1;
                if self.feasible(v) {
                    self.u[t] = a;
                    self.run(t + 1, found);
                }
                self.c[cell] -= 1;
            }
        }
        self.remaining[v] += 1;
    }
}

/// Heap entry of the best-first flip search; ordered so that the
/// `BinaryHeap` pops the cheapest subset first.
#[derive(PartialEq)]
struct Node {
    cost: f64,
    mask: u64,
    last: usize,
    syndrome: u64,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost.total_cmp(&self.cost).then(o.mask.cmp(&self.mask))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Binary MAP: start from the symbol-wise most likely sequence and visit
/// flip sets in order of increasing log-likelihood loss until one lands in
/// the bin. Each subset of the cost-sorted positions is generated once, by
/// either appending the next position or moving the last one forward.
fn decode_map_binary(
    bc: &BinningCode,
    bin: u64,
    side: &[usize],
    joint: &JointPmf,
    budget: usize,
    max_loss: f64,
) -> SwDecoded {
    let mut u0 = vec![0; bc.len];
    let mut flips: Vec<(f64, usize)> = Vec::new();
    for (t, &v) in side.iter().enumerate() {
        let (l0, l1) = (joint.get(0, v).ln(), joint.get(1, v).ln());
        let (best, cost) = if l1 > l0 { (1, l1 - l0) } else { (0, l0 - l1) };
        u0[t] = best;
        if cost.is_finite() {
            flips.push((cost, t));
        }
    }
    let target = bin ^ bc.bin_of(&u0);
    if target == 0 {
        return Ok(u0);
    }
    flips.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let d: Vec<u64> = flips.iter().map(|&(_, t)| bc.cols[t]).collect();
    let mut heap = BinaryHeap::new();
    if let Some(&(c0, _)) = flips.first() {
        heap.push(Node {
            cost: c0,
            mask: 1,
            last: 0,
            syndrome: d[0],
        });
    }
    let mut pops = 0;
    while let Some(node) = heap.pop() {
        if node.cost > max_loss {
            return Err(SwFailure::BeyondLoss);
        }
        if node.syndrome == target {
            let mut u = u0;
            for (i, &(_, t)) in flips.iter().enumerate() {
                if node.mask >> i & 1 == 1 {
                    u[t] ^= 1;
                }
            }
            return Ok(u);
        }
        pops += 1;
        if pops >= budget {
            return Err(SwFailure::BudgetExhausted);
        }
        let j = node.last + 1;
        if j < flips.len() {
            heap.push(Node {
                cost: node.cost + flips[j].0,
                mask: node.mask | 1 << j,
                last: j,
                syndrome: node.syndrome ^ d[j],
            });
            heap.push(Node {
                cost: node.cost - flips[node.last].0 + flips[j].0,
                mask: (node.mask ^ 1 << node.last) | 1 << j,
                last: j,
                syndrome: node.syndrome ^ d[node.last] ^ d[j],
            });
        }
    }
    Err(SwFailure::NoneTypical)
}

/// Binary MAP restricted to sequences whose natural-log likelihood is within
/// `max_loss` of the symbol-wise most likely one. Returns the decoded sequence
/// and its joint log-likelihood with the side information.
pub fn sw_decode_map_within(
    bc: &BinningCode,
    bin: u64,
    side: &[usize],
    joint: &JointPmf,
    budget: usize,
    max_loss: f64,
) -> Result<std::result::Result<(Sequence, f64), SwFailure>> {
    if bc.alphabet != 2 || joint.rows() != 2 {
        return invalid("bounded MAP search needs a binary source");
    }
    if side.len() != bc.len {
        return invalid(format!("side information of {} symbols, code length is {}", side.len(), bc.len));
    }
    counts(side, joint.cols())?;
    if bc.bits < 64 && bin >> bc.bits != 0 {
        return invalid(format!("bin {bin} outside {} bits", bc.bits));
    }
    Ok(decode_map_binary(bc, bin, side, joint, budget, max_loss).map(|u| {
        let ll = u.iter().zip(side).map(|(&a, &b)| joint.get(a, b).ln()).sum();
        (u, ll)
    }))
}

/// Joint log-likelihood of the symbol-wise most likely sequence given `side`.
pub fn map_ceiling(side: &[usize], joint: &JointPmf) -> f64 {
    side.iter()
        .map(|&v| (0..joint.rows()).map(|a| joint.get(a, v).ln()).fold(f64::NEG_INFINITY, f64::max))
        .sum()
}

fn decode_map_coset(bc: &BinningCode, bin: u64, side: &[usize], joint: &JointPmf) -> Result<SwDecoded> {
    let Some(coset) = bc.coset(bin) else {
        return Ok(Err(SwFailure::NoneTypical));
    };
    if (coset.dimension() as f64).exp2() > MAX_ENUMERATION {
        return Err(Error::ResourceLimit(format!(
            "MAP decoding would enumerate 2^{} candidates",
            coset.dimension()
        )));
    }
    let mut best: Option<(f64, Sequence)> = None;
    for x in coset.iter() {
        let Some(u) = bc.unpack(x) else { continue };
        let s: f64 = u.iter().zip(side).map(|(&a, &b)| joint.get(a, b).ln()).sum();
        if s > f64::NEG_INFINITY && best.as_ref().map_or(true, |b| s > b.0) {
            best = Some((s, u));
        }
    }
    Ok(best.map(|b| b.1).ok_or(SwFailure::NoneTypical))
}
