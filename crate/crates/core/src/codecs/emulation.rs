//! Channel emulation over a noiseless rate-R link.
//!
//! The encoder sends the index of the first codeword jointly typical with
//! the input block, or index 0 when there is none; the decoder outputs that
//! codeword. Codewords are i.i.d. from the output marginal p(y).
//!
//! [`EmulationCodebook`] materializes the codebook and is limited to
//! [`MAX_CODEBOOK_BITS`]. [`EnsembleEmulator`] draws the decoder output
//! exactly from its law under a fresh random codebook, which works at any
//! rate: given `x^N`, codewords are i.i.d., so the first typical one is
//! distributed as p(y)^N conditioned on joint typicality, and no codeword
//! is typical with probability `(1 - p_typ)^(2^bits)`. Conditioned on the
//! type of `x^N`, the rows of the joint type are independent multinomials,
//! which makes `p_typ` and the conditional law computable by a small
//! dynamic program per row.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use super::{message_bits, CodebookDescriptor, CodebookKind, MAX_CODEBOOK_BITS};
use crate::channels::{Dmc, Domain, RngStream};
use crate::error::{invalid, Error, Result};
use crate::info::{
    counts, joint_counts, joint_empirical, joint_total_variation, typical_count_range, JointPmf,
    Pmf, Sequence,
};

pub const DEFAULT_EMULATION_EPS: f64 = 0.1;

/// `Auto` materializes up to this many message bits.
const AUTO_MATERIALIZE_BITS: u32 = 12;

/// Key word separating emulation codewords from channel codewords.
const EMULATION_KEY: u64 = 0x656d75;

#[derive(Clone, Debug)]
pub struct EmulationCodebook {
    rate: f64,
    n: usize,
    bits: u32,
    seed: u64,
    epsilon: f64,
    outputs: usize,
    words: Vec<u8>,
}

pub fn build_emulation_code(
    ch: &Dmc,
    p_x: &Pmf,
    rate: f64,
    n: usize,
    epsilon: f64,
    seed: u64,
) -> Result<EmulationCodebook> {
    if !(rate > 0.0) || n == 0 || !(epsilon > 0.0) {
        return invalid(format!("need R > 0, N >= 1, eps > 0; got R={rate} N={n} eps={epsilon}"));
    }
    let p_y = ch.output_marginal(p_x)?;
    let bits = message_bits(n, rate);
    if bits > MAX_CODEBOOK_BITS || ((n as u64) << bits) > 1 << 30 {
        return Err(Error::ResourceLimit(format!(
            "emulation codebook of {bits} bits and length {n} is too large to materialize"
        )));
    }
    if ch.outputs() > 256 {
        return Err(Error::ResourceLimit("output alphabets above 256 symbols".into()));
    }
    let mut words = vec![0u8; n << bits];
    words.par_chunks_mut(n).enumerate().for_each(|(m, word)| {
        let mut r = RngStream::keyed(seed, Domain::Codebook, &[EMULATION_KEY, m as u64]);
        for s in word.iter_mut() {
            *s = p_y.sample_with(r.uniform()) as u8;
        }
    });
    Ok(EmulationCodebook {
        rate,
        n,
        bits,
        seed,
        epsilon,
        outputs: ch.outputs(),
        words,
    })
}

impl EmulationCodebook {
    pub fn len(&self) -> usize {
        1 << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn blocklength(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn descriptor(&self, ch: &Dmc) -> CodebookDescriptor {
        CodebookDescriptor::new(CodebookKind::Emulation, self.rate, self.n, self.seed, ch)
    }

    fn word(&self, m: usize) -> &[u8] {
        &self.words[m * self.n..(m + 1) * self.n]
    }
}

/// Per-cell inclusive count ranges of the typical set, `None` for a cell
/// that no count satisfies.
fn boxes(joint: &JointPmf, n: usize, eps: f64) -> Vec<Option<(usize, usize)>> {
    joint
        .probs()
        .iter()
        .map(|&p| typical_count_range(n, p, eps))
        .collect()
}

/// Index of the first codeword jointly typical with `xs`, or `None`.
pub fn emulate_search(cb: &EmulationCodebook, xs: &[usize], joint: &JointPmf) -> Result<Option<u64>> {
    if xs.len() != cb.n {
        return invalid(format!("input block of {} symbols, blocklength is {}", xs.len(), cb.n));
    }
    if joint.cols() != cb.outputs {
        return invalid("joint law does not match the codebook output alphabet");
    }
    counts(xs, joint.rows())?;
    let Some(bx) = boxes(joint, cb.n, cb.epsilon).into_iter().collect::<Option<Vec<_>>>() else {
        return Ok(None);
    };
    let ny = cb.outputs;
    let mut c = vec![0usize; bx.len()];
    for m in 0..cb.len() {
        c.iter_mut().for_each(|v| *v = 0);
        for (&x, &y) in xs.iter().zip(cb.word(m)) {
            c[x * ny + y as usize] += 1;
        }
        if c.iter().zip(&bx).all(|(&k, &(lo, hi))| lo <= k && k <= hi) {
            return Ok(Some(m as u64));
        }
    }
    Ok(None)
}

/// The encoder: first typical index, falling back to 0.
pub fn emulate_encode(cb: &EmulationCodebook, xs: &[usize], joint: &JointPmf) -> Result<u64> {
    Ok(emulate_search(cb, xs, joint)?.unwrap_or(0))
}

pub fn emulate_decode(cb: &EmulationCodebook, m: u64) -> Result<Sequence> {
    if m >= cb.len() as u64 {
        return invalid(format!("message {m} outside 0..{}", cb.len()));
    }
    Ok(cb.word(m as usize).iter().map(|&y| y as usize).collect())
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Samples an index with probability proportional to `exp(w[i])`.
fn sample_log_weights(w: &[f64], u: f64) -> usize {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = w.iter().map(|x| (x - m).exp()).sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, x) in w.iter().enumerate() {
        let p = (x - m).exp();
        if p > 0.0 {
            acc += p;
            last = i;
            if u * total < acc {
                return i;
            }
        }
    }
    last
}

/// `c ln p` with `0 ln 0 = 0`.
#[inline]
fn c_ln(c: usize, lnp: f64) -> f64 {
    if c == 0 {
        0.0
    } else {
        c as f64 * lnp
    }
}

/// One row of the joint type: `n` positions whose outputs are i.i.d. with
/// log-probabilities `lnp`, constrained to per-symbol count boxes.
struct Row<'a> {
    n: usize,
    lnp: &'a [f64],
    boxes: Vec<(usize, usize)>,
    lnf: &'a [f64],
    /// `g[k][s]`: log of the sum over counts of symbols `k..` in their
    /// boxes adding up to `s`, of `prod p^c / c!`.
    g: Vec<Vec<f64>>,
}

impl<'a> Row<'a> {
    fn new(n: usize, lnp: &'a [f64], boxes: Vec<(usize, usize)>, lnf: &'a [f64]) -> Self {
        let k = lnp.len();
        let mut g = vec![vec![f64::NEG_INFINITY; n + 1]; k + 1];
        g[k][0] = 0.0;
        for j in (0..k).rev() {
            let (lo, hi) = boxes[j];
            for s in 0..=n {
                let top = hi.min(s);
                if lo > top {
                    continue;
                }
                g[j][s] = log_sum_exp(
                    (lo..=top).map(|c| c_ln(c, lnp[j]) - lnf[c] + g[j + 1][s - c]),
                );
            }
        }
        Row {
            n,
            lnp,
            boxes,
            lnf,
            g,
        }
    }

    /// log P(all counts in their boxes).
    fn ln_prob_in(&self) -> f64 {
        self.lnf[self.n] + self.g[0][self.n]
    }

    /// `ln((sum_{j >= k} p_j)^s / s!)`, the unconstrained weight.
    fn free(&self, k: usize, s: usize) -> f64 {
        let tail = log_sum_exp(self.lnp[k..].iter().cloned());
        c_ln(s, tail) - self.lnf[s]
    }

    /// Log weight of "some symbol from `k` on leaves its box".
    fn out(&self, k: usize, s: usize) -> f64 {
        let a = self.free(k, s);
        let g = self.g[k][s];
        if g == f64::NEG_INFINITY {
            return a;
        }
        let d = g - a;
        if d >= 0.0 {
            return f64::NEG_INFINITY;
        }
        a + (-d.exp_m1()).ln()
    }

    fn sample_in(&self, rng: &mut RngStream) -> Vec<usize> {
        let k = self.lnp.len();
        let mut s = self.n;
        let mut c = vec![0; k];
        for j in 0..k {
            let (lo, hi) = self.boxes[j];
            let top = hi.min(s);
            let w: Vec<f64> = (lo..=top)
                .map(|v| c_ln(v, self.lnp[j]) - self.lnf[v] + self.g[j + 1][s - v])
                .collect();
            c[j] = lo + sample_log_weights(&w, rng.uniform());
            s -= c[j];
        }
        c
    }

    /// Counts conditioned on leaving the box somewhere.
    fn sample_out(&self, rng: &mut RngStream) -> Vec<usize> {
        let k = self.lnp.len();
        let mut s = self.n;
        let mut c = vec![0; k];
        let mut escaped = false;
        for j in 0..k {
            let (lo, hi) = self.boxes[j];
            let w: Vec<f64> = (0..=s)
                .map(|v| {
                    let head = c_ln(v, self.lnp[j]) - self.lnf[v];
                    if escaped || v < lo || v > hi {
                        head + self.free(j + 1, s - v)
                    } else {
                        head + self.out(j + 1, s - v)
                    }
                })
                .collect();
            c[j] = sample_log_weights(&w, rng.uniform());
            escaped |= c[j] < lo || c[j] > hi;
            s -= c[j];
        }
        c
    }
}

/// Exact sampler of the emulated output under a fresh random codebook.
#[derive(Clone, Debug)]
pub struct EnsembleEmulator {
    joint: JointPmf,
    p_y: Pmf,
    lnp_y: Vec<f64>,
    n: usize,
    bits: u64,
    epsilon: f64,
    lnf: Vec<f64>,
}

/// One emulated block.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleDraw {
    pub ys: Sequence,
    pub fell_back: bool,
}

impl EnsembleEmulator {
    pub fn new(ch: &Dmc, p_x: &Pmf, rate: f64, n: usize, epsilon: f64) -> Result<Self> {
        if !(rate > 0.0) || n == 0 || !(epsilon > 0.0) {
            return invalid(format!("need R > 0, N >= 1, eps > 0; got R={rate} N={n} eps={epsilon}"));
        }
        let joint = ch.joint(p_x)?;
        let p_y = joint.marginal_y();
        Ok(EnsembleEmulator {
            lnp_y: p_y.probs().iter().map(|p| p.ln()).collect(),
            p_y,
            joint,
            n,
            bits: message_bits(n, rate) as u64,
            epsilon,
            lnf: (0..=n as u64).map(ln_factorial).collect(),
        })
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    fn rows(&self, xs: &[usize]) -> Result<(Vec<Vec<usize>>, Vec<Option<Row<'_>>>)> {
        if xs.len() != self.n {
            return invalid(format!("input block of {} symbols, blocklength is {}", xs.len(), self.n));
        }
        let nx = self.joint.rows();
        let ny = self.joint.cols();
        counts(xs, nx)?;
        let bx = boxes(&self.joint, self.n, self.epsilon);
        let mut positions = vec![Vec::new(); nx];
        for (t, &x) in xs.iter().enumerate() {
            positions[x].push(t);
        }
        let rows = (0..nx)
            .map(|x| {
                let b: Option<Vec<_>> = bx[x * ny..(x + 1) * ny].iter().cloned().collect();
                b.map(|b| Row::new(positions[x].len(), &self.lnp_y, b, &self.lnf))
            })
            .collect();
        Ok((positions, rows))
    }

    /// log of the probability that one codeword is jointly typical with `xs`.
    pub fn ln_typical_probability(&self, xs: &[usize]) -> Result<f64> {
        let (_, rows) = self.rows(xs)?;
        Ok(rows
            .iter()
            .map(|r| r.as_ref().map_or(f64::NEG_INFINITY, Row::ln_prob_in))
            .sum())
    }

    /// log of the probability that none of the `2^bits` codewords is typical.
    pub fn ln_fallback_probability(&self, xs: &[usize]) -> Result<f64> {
        Ok(ln_none_typical(self.ln_typical_probability(xs)?, self.bits))
    }

    pub fn draw(&self, xs: &[usize], rng: &mut RngStream) -> Result<EnsembleDraw> {
        let (positions, rows) = self.rows(xs)?;
        let ln_rows: Vec<f64> = rows
            .iter()
            .map(|r| r.as_ref().map_or(f64::NEG_INFINITY, Row::ln_prob_in))
            .collect();
        let lp: f64 = ln_rows.iter().sum();
        let fell_back = rng.uniform() < ln_none_typical(lp, self.bits).exp();
        let mut ys = vec![0; self.n];
        if !fell_back {
            for (x, row) in rows.iter().enumerate() {
                let row = row.as_ref().expect("typical draw with an empty row box");
                let c = row.sample_in(rng);
                place(&mut ys, &positions[x], &c, rng);
            }
        } else {
            // the fallback codeword is p(y)^N conditioned on not being
            // typical; walk the rows keeping "some row leaves" true
            let mut need_out = lp > f64::NEG_INFINITY;
            let mut suffix: f64 = lp;
            for (x, row) in rows.iter().enumerate() {
                let lr = ln_rows[x];
                let go_out = if !need_out {
                    None
                } else {
                    // P(row out | some row from here out)
                    let p_out = -lr.exp_m1() / -suffix.exp_m1();
                    Some(rng.uniform() < p_out)
                };
                suffix -= lr;
                match (go_out, row) {
                    (Some(true), Some(r)) => {
                        let c = r.sample_out(rng);
                        place(&mut ys, &positions[x], &c, rng);
                        need_out = false;
                    }
                    (Some(false), Some(r)) => {
                        let c = r.sample_in(rng);
                        place(&mut ys, &positions[x], &c, rng);
                    }
                    _ => {
                        for &t in &positions[x] {
                            ys[t] = self.p_y.sample_with(rng.uniform());
                        }
                        if go_out.is_some() {
                            need_out = false;
                        }
                    }
                }
            }
        }
        Ok(EnsembleDraw { ys, fell_back })
    }
}

/// Writes a shuffled arrangement of the counts `c` into `positions`.
fn place(ys: &mut [usize], positions: &[usize], c: &[usize], rng: &mut RngStream) {
    let mut sym: Vec<usize> = c
        .iter()
        .enumerate()
        .flat_map(|(y, &k)| std::iter::repeat(y).take(k))
        .collect();
    sym.shuffle(rng);
    for (&t, y) in positions.iter().zip(sym) {
        ys[t] = y;
    }
}

/// `ln((1 - p)^(2^bits))` from `ln p`.
fn ln_none_typical(ln_p: f64, bits: u64) -> f64 {
    if ln_p == f64::NEG_INFINITY {
        return 0.0;
    }
    // ln(-ln(1 - p)), which is ln p to double precision for tiny p
    let ln_neg_ln_1mp = if ln_p < -30.0 {
        ln_p
    } else {
        let ln_1mp = (-ln_p.exp()).ln_1p();
        if ln_1mp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        (-ln_1mp).ln()
    };
    -(bits as f64 * std::f64::consts::LN_2 + ln_neg_ln_1mp).exp()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmulationMethod {
    /// Materialize small codebooks, sample the ensemble otherwise.
    #[default]
    Auto,
    Materialized,
    Ensemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityStats {
    /// TV between the joint type of `(X^N, Y^N)` and p(x) p(y|x).
    pub mean_tv: f64,
    pub median_tv: f64,
    /// TV between the joint type and pi(x) p(y|x), which removes the
    /// source's own fluctuation.
    pub mean_conditional_tv: f64,
    pub median_conditional_tv: f64,
    pub fallback_rate: f64,
    pub trials: usize,
    pub method: EmulationMethod,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn conditional_tv(xs: &[usize], ys: &[usize], ch: &Dmc) -> Result<f64> {
    let (nx, ny) = (ch.inputs(), ch.outputs());
    let c = joint_counts(xs, ys, nx, ny)?;
    let n = xs.len() as f64;
    let mut s = 0.0;
    for x in 0..nx {
        let row: usize = c[x * ny..(x + 1) * ny].iter().sum();
        for y in 0..ny {
            s += (c[x * ny + y] as f64 - row as f64 * ch.get(x, y)).abs();
        }
    }
    Ok(0.5 * s / n)
}

/// Emulation statistics with a fresh codebook per trial.
pub fn emulation_fidelity(
    ch: &Dmc,
    p_x: &Pmf,
    rate: f64,
    n: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut RngStream,
) -> Result<FidelityStats> {
    emulation_fidelity_with(ch, p_x, rate, n, epsilon, trials, rng, EmulationMethod::Auto)
}

#[allow(clippy::too_many_arguments)]
pub fn emulation_fidelity_with(
    ch: &Dmc,
    p_x: &Pmf,
    rate: f64,
    n: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut RngStream,
    method: EmulationMethod,
) -> Result<FidelityStats> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let bits = message_bits(n, rate);
    let method = match method {
        EmulationMethod::Auto if bits <= AUTO_MATERIALIZE_BITS => EmulationMethod::Materialized,
        EmulationMethod::Auto => EmulationMethod::Ensemble,
        m => m,
    };
    let ens = EnsembleEmulator::new(ch, p_x, rate, n, epsilon)?;
    let joint = ens.joint().clone();
    let base = rng.next_u64();
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut src = RngStream::keyed(base, Domain::Source, &[t]);
            let xs: Sequence = (0..n).map(|_| p_x.sample_with(src.uniform())).collect();
            let (ys, fell_back) = match method {
                EmulationMethod::Materialized => {
                    let seed = RngStream::keyed(base, Domain::Codebook, &[t]).next_u64();
                    let cb = build_emulation_code(ch, p_x, rate, n, epsilon, seed)?;
                    let found = emulate_search(&cb, &xs, &joint)?;
                    (emulate_decode(&cb, found.unwrap_or(0))?, found.is_none())
                }
                _ => {
                    let mut r = RngStream::keyed(base, Domain::Experiment, &[t]);
                    let d = ens.draw(&xs, &mut r)?;
                    (d.ys, d.fell_back)
                }
            };
            let pi = joint_empirical(&xs, &ys, joint.rows(), joint.cols())?;
            Ok((
                joint_total_variation(&pi, &joint)?,
                conditional_tv(&xs, &ys, ch)?,
                fell_back,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tv: Vec<f64> = per_trial.iter().map(|r| r.0).collect();
    let mut ctv: Vec<f64> = per_trial.iter().map(|r| r.1).collect();
    let k = trials as f64;
    Ok(FidelityStats {
        mean_tv: tv.iter().sum::<f64>() / k,
        median_tv: median(&mut tv),
        mean_conditional_tv: ctv.iter().sum::<f64>() / k,
        median_conditional_tv: median(&mut ctv),
        fallback_rate: per_trial.iter().filter(|r| r.2).count() as f64 / k,
        trials,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::StreamPath;
    use crate::info::{is_jointly_typical, mutual_information};

    fn rng(s: u64) -> RngStream {
        RngStream::new(s, Domain::Experiment, StreamPath::trial(0))
    }

    fn ln_choose(n: u64, k: u64) -> f64 {
        ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
    }

    #[test]
    fn constant_output_codebook() {
        let ch = Dmc::new(vec![vec![1.0], vec![1.0]]).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let cb = build_emulation_code(&ch, &p, 0.5, 8, 0.1, 3).unwrap();
        for m in 0..cb.len() as u64 {
            assert_eq!(emulate_decode(&cb, m).unwrap(), vec![0; 8]);
        }
    }

    #[test]
    fn codebook_is_seeded() {
        let ch = Dmc::bsc(0.1).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let a = build_emulation_code(&ch, &p, 0.5, 20, 0.1, 9).unwrap();
        let b = build_emulation_code(&ch, &p, 0.5, 20, 0.1, 9).unwrap();
        let c = build_emulation_code(&ch, &p, 0.5, 20, 0.1, 10).unwrap();
        assert_eq!(a.words, b.words);
        assert_ne!(a.words, c.words);
        // output marginal is uniform: ones fraction within 3 sigma
        let ones = a.words.iter().filter(|&&y| y == 1).count() as f64;
        let total = a.words.len() as f64;
        assert!((ones / total - 0.5).abs() <= 3.0 * (0.25 / total).sqrt());
    }

    #[test]
    fn encoder_picks_first_typical_word() {
        let ch = Dmc::bsc(0.25).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let joint = ch.joint(&p).unwrap();
        let cb = build_emulation_code(&ch, &p, 0.5, 16, 0.3, 1).unwrap();
        let mut r = rng(1);
        for _ in 0..30 {
            let xs: Vec<usize> = (0..16).map(|_| (r.uniform() < 0.5) as usize).collect();
            let found = emulate_search(&cb, &xs, &joint).unwrap();
            // oracle: the typicality predicate over the index order
            let first = (0..cb.len() as u64).find(|&m| {
                is_jointly_typical(&xs, &emulate_decode(&cb, m).unwrap(), &joint, 0.3).unwrap()
            });
            assert_eq!(found, first);
            assert_eq!(emulate_encode(&cb, &xs, &joint).unwrap(), first.unwrap_or(0));
        }
    }

    #[test]
    fn typical_probability_matches_binomial_sum() {
        // oracle: for BSC with uniform p(y), each x-row is Binomial(n_x, 1/2)
        let ch = Dmc::bsc(0.1).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let n = 200;
        let ens = EnsembleEmulator::new(&ch, &p, 0.7, n, 0.1).unwrap();
        let mut xs = vec![0; 96];
        xs.extend(vec![1; n - 96]);
        let j = ens.joint().clone();
        let mut total = 0.0;
        for (x, nx) in [(0usize, 96u64), (1, (n - 96) as u64)] {
            let mut terms = vec![];
            for c in 0..=nx {
                let ok = |cell: usize, k: u64| {
                    let q = j.get(x, cell);
                    ((k as f64) / n as f64 - q).abs() <= 0.1 * q
                };
                if ok(x, c) && ok(1 - x, nx - c) {
                    terms.push(ln_choose(nx, c) - nx as f64 * std::f64::consts::LN_2);
                }
            }
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            total += m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        }
        let got = ens.ln_typical_probability(&xs).unwrap();
        assert!((got - total).abs() < 1e-9, "{got} vs {total}");
    }

    #[test]
    fn fallback_probability_edges() {
        assert_eq!(ln_none_typical(f64::NEG_INFINITY, 10), 0.0);
        assert_eq!(ln_none_typical(0.0, 3), f64::NEG_INFINITY);
        let p: f64 = 0.01;
        let want = 1024.0 * (1.0 - p).ln();
        assert!((ln_none_typical(p.ln(), 10) - want).abs() < 1e-9);
        let tiny = -5000.0;
        assert!((ln_none_typical(tiny, 3) + 8.0 * tiny.exp()).abs() < 1e-300);
        // p below the smallest double: -2^bits p computed in logs
        let want = -(2000.0 * std::f64::consts::LN_2 - 1500.0f64).exp();
        let got = ln_none_typical(-1500.0, 2000);
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        assert!(ln_none_typical(-1500.0, 2400) < -1e60);
    }

    #[test]
    fn draws_are_typical_unless_fallback() {
        let ch = Dmc::bsc(0.1).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let ens = EnsembleEmulator::new(&ch, &p, 0.75, 400, 0.1).unwrap();
        let j = ens.joint().clone();
        let mut r = rng(3);
        let mut seen_fallback = false;
        for _ in 0..200 {
            let xs: Vec<usize> = (0..400).map(|_| (r.uniform() < 0.5) as usize).collect();
            let d = ens.draw(&xs, &mut r).unwrap();
            let typ = is_jointly_typical(&xs, &d.ys, &j, 0.1).unwrap();
            assert_eq!(typ, !d.fell_back);
            seen_fallback |= d.fell_back;
        }
        // the source itself is often atypical at n = 400, forcing fallbacks
        assert!(seen_fallback);
    }

    #[test]
    fn out_of_box_sampling_respects_condition() {
        // rows whose box holds nearly all the mass still sample outside it
        let lnp = [0.5f64.ln(), 0.5f64.ln()];
        let lnf: Vec<f64> = (0..=40u64).map(ln_factorial).collect();
        let row = Row::new(40, &lnp, vec![(5, 35), (5, 35)], &lnf);
        let mut r = rng(8);
        for _ in 0..100 {
            let c = row.sample_out(&mut r);
            assert_eq!(c[0] + c[1], 40);
            assert!(c[0] < 5 || c[0] > 35);
        }
    }

    #[test]
    fn ensemble_matches_materialized_codebooks() {
        // two independent routes to the same law; compare statistics
        let ch = Dmc::bsc(0.2).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let (rate, n, eps, trials) = (0.3, 24, 0.5, 3000);
        let mut a = rng(21);
        let mut b = rng(22);
        let mat = emulation_fidelity_with(
            &ch, &p, rate, n, eps, trials, &mut a, EmulationMethod::Materialized,
        )
        .unwrap();
        let ens = emulation_fidelity_with(
            &ch, &p, rate, n, eps, trials, &mut b, EmulationMethod::Ensemble,
        )
        .unwrap();
        let sd = |q: f64| (q * (1.0 - q) / trials as f64).sqrt();
        let q = 0.5 * (mat.fallback_rate + ens.fallback_rate);
        assert!(q > 0.05 && q < 0.95, "uninformative setting: {q}");
        assert!(
            (mat.fallback_rate - ens.fallback_rate).abs() <= 4.0 * 2f64.sqrt() * sd(q),
            "{mat:?} {ens:?}"
        );
        assert!((mat.mean_tv - ens.mean_tv).abs() <= 0.01, "{mat:?} {ens:?}");
    }

    #[test]
    fn covering_above_and_below_mutual_information() {
        let ch = Dmc::bsc(0.1).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let i = mutual_information(&ch.joint(&p).unwrap());
        let above = emulation_fidelity(&ch, &p, i + 0.15, 1024, 0.1, 100, &mut rng(1)).unwrap();
        let below = emulation_fidelity(&ch, &p, i - 0.2, 1024, 0.1, 100, &mut rng(1)).unwrap();
        assert_eq!(above.method, EmulationMethod::Ensemble);
        assert!(above.median_tv < 0.05, "{above:?}");
        assert!(below.median_tv >= 0.05, "{below:?}");
        assert!(above.fallback_rate <= 0.02, "{above:?}");
    }

    #[test]
    fn point_mass_input() {
        let ch = Dmc::bsc(0.1).unwrap();
        let p = Pmf::point(2, 0).unwrap();
        let s = emulation_fidelity(&ch, &p, 0.6, 1024, 0.1, 50, &mut rng(4)).unwrap();
        assert!(s.median_tv <= 0.05, "{s:?}");
    }

    #[test]
    fn degenerate_channel_is_exact() {
        let ch = Dmc::new(vec![vec![1.0], vec![1.0]]).unwrap();
        let p = Pmf::uniform(2).unwrap();
        let s = emulation_fidelity(&ch, &p, 0.5, 256, 0.1, 20, &mut rng(4)).unwrap();
        assert_eq!(s.mean_conditional_tv, 0.0);
    }
}
