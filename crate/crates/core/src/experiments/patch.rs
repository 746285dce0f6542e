//! Turning a code with small distortion into a lossless one: bin each
//! source block, then send the bins through extra sessions of the same
//! code used as a channel.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{Dmc, Domain, RngStream};
use crate::codecs::{
    build_channel_code, channel_decode, channel_encode, sw_decode_with, sw_encode, BinningCode, ChannelCodebook,
    SwRule, DEFAULT_MAP_BUDGET,
};
use crate::coding_theorems::{ba_capacity, f_epsilon, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{invalid, Error, Result};
use crate::info::{conditional_entropy, entropy, is_typical, joint_empirical, JointPmf, Pmf, Sequence};
use crate::netsim::{from_bits, run_network, run_network_with_sources, to_bits, NetworkCode, NetworkSpec, RunConfig};

/// Sessions reserved per trial when naming noise streams.
const SESSION_STRIDE: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchParams {
    /// Demands to make lossless, by index.
    pub demands: Vec<usize>,
    /// Base sessions `N`.
    pub sessions: usize,
    /// Sessions of the calibration run.
    pub pilot_sessions: usize,
    /// Standard deviations of slack on top of the estimated bin size.
    pub margin: f64,
    /// Bits the inner code carries per extra session.
    pub inner_bits: u32,
    /// Typicality slack of the dummy sources.
    pub delta: f64,
    /// Dummy candidates tried per demand.
    pub candidates: usize,
    pub seed: u64,
}

/// The patch for one demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub demand: usize,
    pub from: usize,
    pub to: usize,
    /// Measured per-letter distortion of the base code.
    pub epsilon: f64,
    /// Plug-in `L H(U|U_hat)`, bits per block.
    pub r0_estimate: f64,
    /// Standard deviation of the block information density.
    pub r0_spread: f64,
    /// `L f(epsilon)`.
    pub r0_bound: f64,
    /// Bin bits per block.
    pub bin_bits: u32,
    pub inner_bits: u32,
    pub extra_sessions: usize,
    /// `(1-delta)^2 L H(U|U^(-a)) - L f(epsilon / (1-delta))`.
    pub c0_bound: f64,
    /// `L` times the capacity of the estimated per-letter channel.
    pub c0_direct: f64,
    pub c0: f64,
    /// Estimated `p(u_hat | u)`.
    pub channel: Dmc,
    /// Fixed blocks of the other nodes, by node.
    pub dummies: Vec<Sequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosslessPatchPlan {
    pub sessions: usize,
    pub source_len: usize,
    pub channel_len: usize,
    pub delta: f64,
    pub seed: u64,
    /// In lexicographic order of `(from, to)`.
    pub pairs: Vec<PairPlan>,
}

impl LosslessPatchPlan {
    pub fn extra_sessions(&self) -> usize {
        self.pairs.iter().map(|p| p.extra_sessions).sum()
    }

    pub fn kappa(&self) -> f64 {
        self.source_len as f64 / self.channel_len as f64
    }

    /// `N L / ((N + sum N') n)`.
    pub fn kappa_prime(&self) -> f64 {
        (self.sessions * self.source_len) as f64 / ((self.sessions + self.extra_sessions()) * self.channel_len) as f64
    }

    /// `kappa / (1 + sum b/k + |pairs|/N) <= kappa' < kappa / (1 + sum b/k) <= kappa`,
    /// checked in integers.
    pub fn sandwich_holds(&self) -> bool {
        let n = self.sessions as u128;
        let extra = self.extra_sessions() as u128;
        // common denominator of the b/k terms
        let prod: u128 = self.pairs.iter().map(|p| p.inner_bits as u128).product();
        let sum_bk: u128 = self
            .pairs
            .iter()
            .map(|p| p.bin_bits as u128 * (prod / p.inner_bits as u128))
            .sum();
        let k = self.pairs.len() as u128;
        // kappa' < kappa / (1 + S)  <=>  N (1 + S) < N + N'  <=>  N S < N'
        let upper = n * sum_bk < extra * prod;
        // kappa' >= kappa / (1 + S + K/N)  <=>  N + N' <= N (1 + S) + K
        let lower = extra * prod <= n * sum_bk + k * prod;
        upper && lower
    }
}

fn session_seed(seed: u64, tag: u64) -> u64 {
    RngStream::keyed(seed, Domain::Experiment, &[0x9a7c, tag]).next_u64()
}

/// Marginal law of all nodes but `a`, in mixed radix over the remaining
/// nodes, and the map from a full source symbol to its index there.
fn others_law(net: &NetworkSpec, a: usize) -> Result<(Pmf, Vec<usize>)> {
    let radix: Vec<usize> = (0..net.nodes.len()).filter(|&b| b != a).map(|b| net.nodes[b].source_alphabet).collect();
    let size: usize = radix.iter().product();
    let mut w = vec![0.0; size];
    let mut index = Vec::with_capacity(net.source.len());
    for s in 0..net.source.len() {
        let digits = net.split_symbol(s);
        let i = digits
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .fold(0, |acc, (b, &d)| acc * net.nodes[b].source_alphabet + d);
        w[i] += net.source.get(s);
        index.push(i);
    }
    Ok((Pmf::new(w)?, index))
}

/// `H(U_a | U^(-a))` under the network's source law.
fn conditional_source_entropy(net: &NetworkSpec, a: usize) -> Result<f64> {
    let (others, _) = others_law(net, a)?;
    Ok((entropy(&net.source) - entropy(&others)).max(0.0))
}

fn estimated_channel(u: &[usize], v: &[usize], nu: usize, nv: usize) -> Result<(Dmc, JointPmf)> {
    let joint = joint_empirical(u, v, nu, nv)?;
    let rows = (0..nu)
        .map(|x| {
            let px: f64 = (0..nv).map(|y| joint.get(x, y)).sum();
            if px > 0.0 {
                (0..nv).map(|y| joint.get(x, y) / px).collect()
            } else {
                vec![1.0 / nv as f64; nv]
            }
        })
        .collect();
    Ok((Dmc::new(rows)?, joint))
}

/// Per-letter `-log2 p(u | u_hat)` under the joint type: mean and variance.
fn information_density(u: &[usize], v: &[usize], joint: &JointPmf) -> (f64, f64) {
    let dens: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&x, &y)| {
            let py: f64 = (0..joint.rows()).map(|r| joint.get(r, y)).sum();
            -(joint.get(x, y) / py).log2()
        })
        .collect();
    let m = dens.iter().sum::<f64>() / dens.len() as f64;
    let var = dens.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / dens.len() as f64;
    (m, var)
}

/// Calibrates a patch from a pilot run of the base code.
pub fn plan_lossless_patch<C: NetworkCode>(net: &NetworkSpec, base: &C, params: &PatchParams) -> Result<LosslessPatchPlan> {
    net.validate()?;
    if base.layers() != 1 {
        return invalid("the base code must be single-layer");
    }
    if params.sessions == 0 || params.pilot_sessions == 0 || params.inner_bits == 0 || params.candidates == 0 {
        return invalid("sessions, pilot sessions, inner bits and candidates must be positive");
    }
    if !(params.delta > 0.0 && params.delta < 1.0) || !(params.margin >= 0.0) {
        return invalid("need 0 < delta < 1 and a nonnegative margin");
    }
    let len = base.source_len();
    let mut demands = params.demands.clone();
    demands.sort_by_key(|&k| net.demands.get(k).map(|d| (d.from, d.to)));
    demands.dedup();
    if demands.is_empty() {
        return invalid("no demand to patch");
    }
    let pilot_seed = session_seed(params.seed, u64::MAX);
    let runs = (0..params.pilot_sessions as u64)
        .into_par_iter()
        .map(|s| run_network(net, base, &quiet(pilot_seed, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for &k in &demands {
        let Some(d) = net.demands.get(k) else {
            return invalid(format!("no demand {k}"));
        };
        let Some(d_min) = d.measure.d_min().filter(|_| d.measure.is_faithful()) else {
            return invalid(format!("demand {k}: the patch needs a faithful measure"));
        };
        let nu = net.nodes[d.from].source_alphabet;
        let nv = d.measure.cols();
        let u: Sequence = runs.iter().flat_map(|r| r.source(d.from)).collect();
        let v: Sequence = runs.iter().flat_map(|r| r.reconstruction(k)).collect();
        let epsilon = d.measure.average(&u, &v)?;
        if epsilon / d_min >= 0.5 || epsilon / (1.0 - params.delta) / d_min >= 0.5 {
            return invalid(format!("demand {k}: distortion {epsilon:.4} is not below d_min/2 with slack"));
        }
        let (channel, joint) = estimated_channel(&u, &v, nu, nv)?;
        let h = conditional_entropy(&joint);
        let (_, var) = information_density(&u, &v, &joint);
        let r0_estimate = len as f64 * h;
        let r0_spread = (len as f64 * var).sqrt();
        let cap_bits = (len as f64 * (nu as f64).log2()).ceil() as u32;
        let bin_bits = ((r0_estimate + params.margin * r0_spread - 1e-9).ceil().max(0.0) as u32).min(cap_bits);
        let r0_bound = len as f64 * f_epsilon(epsilon, d_min, nu)?;
        let c0_bound = (1.0 - params.delta).powi(2) * len as f64 * conditional_source_entropy(net, d.from)?
            - len as f64 * f_epsilon(epsilon / (1.0 - params.delta), d_min, nu)?;
        let c0_direct = len as f64 * ba_capacity(&channel, DEFAULT_TOL, DEFAULT_MAX_ITER)?.capacity;
        let c0 = c0_bound.min(c0_direct);
        if params.inner_bits as f64 >= c0_direct {
            return invalid(format!(
                "demand {k}: {} inner bits per session exceed the estimated capacity {c0_direct:.3}",
                params.inner_bits
            ));
        }
        let extra_sessions = params.sessions * bin_bits as usize / params.inner_bits as usize + 1;
        if !(c0 > 0.0) || c0 * extra_sessions as f64 <= (params.sessions as u64 * bin_bits as u64) as f64 {
            return Err(Error::PlanInfeasible(format!(
                "demand {k}: C0 = {c0:.3} bits per session cannot carry {bin_bits} bits per block in {extra_sessions} sessions"
            )));
        }
        let dummies = choose_dummies(net, base, k, params)?;
        pairs.push(PairPlan {
            demand: k,
            from: d.from,
            to: d.to,
            epsilon,
            r0_estimate,
            r0_spread,
            r0_bound,
            bin_bits,
            inner_bits: params.inner_bits,
            extra_sessions,
            c0_bound,
            c0_direct,
            c0,
            channel,
            dummies,
        });
    }
    Ok(LosslessPatchPlan {
        sessions: params.sessions,
        source_len: len,
        channel_len: base.channel_len(),
        delta: params.delta,
        seed: params.seed,
        pairs,
    })
}

fn quiet(seed: u64, trial: u64) -> RunConfig {
    RunConfig {
        record_trace: false,
        ..RunConfig::new(seed, trial)
    }
}

/// Fixed blocks for every node but the demand's source: the delta-typical
/// candidate with the smallest measured distortion on the demand, ties to
/// the first drawn.
fn choose_dummies<C: NetworkCode>(net: &NetworkSpec, base: &C, k: usize, params: &PatchParams) -> Result<Vec<Sequence>> {
    let a = net.demands[k].from;
    let len = base.source_len();
    if net.nodes.iter().enumerate().all(|(b, n)| b == a || n.source_alphabet == 1) {
        return Ok(vec![vec![0; len]; net.nodes.len()]);
    }
    let (law, index) = others_law(net, a)?;
    let seed = session_seed(params.seed, 0xd0d0 + k as u64);
    let own = Pmf::new((0..net.nodes[a].source_alphabet).map(|x| marginal(net, a, x)).collect())?;
    const SCORE_SESSIONS: u64 = 8;
    let mut best: Option<(f64, Vec<Sequence>)> = None;
    for c in 0..params.candidates as u64 {
        let draw = net.sample_sources(len, 1, seed, c).remove(0);
        let joint_symbols: Sequence = (0..len)
            .map(|t| {
                let s = net.nodes.iter().enumerate().fold(0, |acc, (b, n)| acc * n.source_alphabet + draw[b][t]);
                index[s]
            })
            .collect();
        if !is_typical(&joint_symbols, &law, params.delta) {
            continue;
        }
        let mut total = 0.0;
        for s in 0..SCORE_SESSIONS {
            let mut r = RngStream::keyed(seed, Domain::Source, &[c, s]);
            let mut blocks = draw.clone();
            blocks[a] = (0..len).map(|_| own.sample_with(r.uniform())).collect();
            let out = run_network_with_sources(net, base, &quiet(seed, c * SCORE_SESSIONS + s), vec![blocks.clone()])?;
            total += net.demands[k].measure.average(&blocks[a], &out.reconstructions[k][0])?;
        }
        if best.as_ref().map_or(true, |b| total < b.0) {
            best = Some((total, draw));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::PlanInfeasible(format!("no delta-typical dummy among {} candidates", params.candidates)))
}

fn marginal(net: &NetworkSpec, a: usize, x: usize) -> f64 {
    (0..net.source.len())
        .filter(|&s| net.split_symbol(s)[a] == x)
        .map(|s| net.source.get(s))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchTrial {
    pub trial: u64,
    pub block_error: bool,
    /// Blocks the binning decoder got wrong.
    pub wrong_blocks: usize,
    /// Extra sessions whose inner message was decoded wrongly.
    pub inner_errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    pub trials: Vec<PatchTrial>,
    pub block_error_rate: f64,
    /// `sum N' / N`.
    pub overhead: f64,
    /// `sum R0 / C0` from the plan.
    pub planned_ratio: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub sandwich_holds: bool,
}

struct PreparedPair {
    bins: BinningCode,
    inner: ChannelCodebook,
    joint: JointPmf,
}

/// A plan with its codes built.
pub struct PatchScheme<'a, C: NetworkCode> {
    net: &'a NetworkSpec,
    base: &'a C,
    plan: LosslessPatchPlan,
    pairs: Vec<PreparedPair>,
}

impl<'a, C: NetworkCode> PatchScheme<'a, C> {
    pub fn new(net: &'a NetworkSpec, base: &'a C, plan: LosslessPatchPlan) -> Result<Self> {
        if base.source_len() != plan.source_len || base.channel_len() != plan.channel_len || base.layers() != 1 {
            return invalid("plan does not match the base code");
        }
        let pairs = plan
            .pairs
            .iter()
            .map(|p| {
                let nu = net.nodes[p.from].source_alphabet;
                let law = Pmf::new((0..nu).map(|x| marginal(net, p.from, x)).collect())?;
                let joint = JointPmf::new(
                    nu,
                    p.channel.outputs(),
                    (0..nu)
                        .flat_map(|x| {
                            let px = law.get(x);
                            p.channel.row(x).iter().map(move |w| px * w).collect::<Vec<_>>()
                        })
                        .collect(),
                )?;
                let bins = BinningCode::with_bits(nu, plan.source_len, p.bin_bits, 0.1, session_seed(plan.seed, 0xb1 + p.demand as u64))?;
                let rate = p.inner_bits as f64 / plan.source_len as f64;
                let inner = build_channel_code(&p.channel, rate, plan.source_len, session_seed(plan.seed, 0x1c + p.demand as u64))?;
                if inner.bits() != p.inner_bits {
                    return invalid("inner code size does not match the plan");
                }
                Ok(PreparedPair { bins, inner, joint })
            })
            .collect::<Result<_>>()?;
        Ok(PatchScheme { net, base, plan, pairs })
    }

    pub fn plan(&self) -> &LosslessPatchPlan {
        &self.plan
    }

    pub fn run_trial(&self, trial: u64) -> Result<PatchTrial> {
        let net = self.net;
        let plan = &self.plan;
        let seed = session_seed(plan.seed, 0x5e55);
        let mut session = trial * SESSION_STRIDE;
        let mut base_runs = Vec::with_capacity(plan.sessions);
        for _ in 0..plan.sessions {
            base_runs.push(run_network(net, self.base, &quiet(seed, session))?);
            session += 1;
        }
        let mut wrong_blocks = 0;
        let mut inner_errors = 0;
        for (p, prep) in plan.pairs.iter().zip(&self.pairs) {
            let sources: Vec<&Sequence> = base_runs.iter().map(|r| &r.sources[0][p.from]).collect();
            let sides: Vec<&Sequence> = base_runs.iter().map(|r| &r.reconstructions[p.demand][0]).collect();
            let mut stream = Vec::new();
            for u in &sources {
                stream.extend(to_bits(sw_encode(&prep.bins, u)?, p.bin_bits));
            }
            let k = p.inner_bits as usize;
            stream.resize(p.extra_sessions * k, false);
            let mut got = Vec::with_capacity(stream.len());
            for chunk in stream.chunks(k) {
                let m = from_bits(chunk);
                let mut blocks = p.dummies.clone();
                blocks[p.from] = channel_encode(&prep.inner, m)?;
                let out = run_network_with_sources(net, self.base, &quiet(seed, session), vec![blocks])?;
                session += 1;
                let m_hat = channel_decode(&prep.inner, &out.reconstructions[p.demand][0], &p.channel)?;
                inner_errors += (m_hat != m) as usize;
                got.extend(to_bits(m_hat, p.inner_bits));
            }
            let b = p.bin_bits as usize;
            for (l, (u, side)) in sources.iter().zip(&sides).enumerate() {
                let bin = from_bits(&got[l * b..(l + 1) * b]);
                let rule = SwRule::Map {
                    budget: DEFAULT_MAP_BUDGET,
                };
                let ok = matches!(sw_decode_with(&prep.bins, bin, side, &prep.joint, rule)?, Ok(ref x) if x == *u);
                wrong_blocks += !ok as usize;
            }
        }
        Ok(PatchTrial {
            trial,
            block_error: wrong_blocks > 0,
            wrong_blocks,
            inner_errors,
        })
    }

    pub fn run(&self, trials: usize) -> Result<PatchReport> {
        if trials == 0 {
            return invalid("need at least one trial");
        }
        let rows = (0..trials as u64)
            .into_par_iter()
            .map(|t| self.run_trial(t))
            .collect::<Result<Vec<_>>>()?;
        let plan = &self.plan;
        let errors = rows.iter().filter(|r| r.block_error).count();
        Ok(PatchReport {
            block_error_rate: errors as f64 / trials as f64,
            overhead: plan.extra_sessions() as f64 / plan.sessions as f64,
            planned_ratio: plan.pairs.iter().map(|p| p.bin_bits as f64 / p.c0).sum(),
            kappa: plan.kappa(),
            kappa_prime: plan.kappa_prime(),
            sandwich_holds: plan.sandwich_holds(),
            trials: rows,
        })
    }
}

pub fn run_lossless_patch<C: NetworkCode>(
    net: &NetworkSpec,
    base: &C,
    plan: &LosslessPatchPlan,
    trials: usize,
) -> Result<PatchReport> {
    PatchScheme::new(net, base, plan.clone())?.run(trials)
}
