//! Separated scheme: a bit-pipe network code whose pipe messages ride on
//! channel codes over stacked copies of each noisy link.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{level_costs, Dmc, Domain, RngStream, StreamPath};
use crate::codecs::{
    build_channel_code, build_channel_code_with_law, channel_decode, channel_encode, estimate_max_error,
    message_bits, ChannelCodebook, CodebookDescriptor,
};
use crate::coding_theorems::{ba_capacity, ba_capacity_cost, DEFAULT_MAX_ITER, DEFAULT_TOL};
use super::sweeps::{AWGN_MAX_ITER, AWGN_TOL};
use crate::error::{invalid, Result};
use crate::info::Sequence;
use crate::netsim::{from_bits, links, measure_distortion, to_bits, Bits, ChannelModel, Link, MessageCode, NetworkSpec};

/// Channel coding of one noisy edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePlan {
    /// Channel code rate, below the link capacity.
    pub rate: f64,
    /// Pipe capacity the network code was designed for; at most the link
    /// capacity.
    pub pipe_capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationPlan {
    /// Layers `N` of the stacked network.
    pub layers: usize,
    /// Repetitions `p` of the stack.
    pub repeats: usize,
    /// One entry per edge; `None` on pipes.
    pub edges: Vec<Option<EdgePlan>>,
    pub seed: u64,
    /// Monte Carlo trials behind the max-error estimate of each code.
    pub error_trials: usize,
}

impl SeparationPlan {
    /// Uses of edge `e` per slot: `M_e = ceil(N C_e / R_e)`.
    pub fn copies(&self, e: usize) -> Option<usize> {
        let ep = self.edges.get(e)?.as_ref()?;
        Some((self.layers as f64 * ep.pipe_capacity / ep.rate - 1e-9).ceil() as usize)
    }
}

/// Per-edge view of a prepared plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub edge: usize,
    /// Message bits per layer, `floor(n C_e)`.
    pub layer_bits: u32,
    /// Payload bits per slot.
    pub slot_bits: u32,
    /// Channel uses per slot, `p M_e`; 0 on pipes.
    pub slot_len: usize,
    pub code_bits: u32,
    pub max_error: f64,
    pub average_error: f64,
    pub codebook: Option<CodebookDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatedTrial {
    pub trial: u64,
    /// Realized distortion per demand.
    pub realized: Vec<f64>,
    /// Distortion per demand had every slot been decoded correctly.
    pub bit_pipe: Vec<f64>,
    pub slot_errors: usize,
    /// Layers whose reconstruction differs from the source, per demand.
    pub block_errors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatedReport {
    pub trials: Vec<SeparatedTrial>,
    pub edges: Vec<EdgeReport>,
    pub mean_realized: Vec<f64>,
    pub mean_bit_pipe: Vec<f64>,
    /// `D_b + n |E| P_max d_max` per demand, `E` the noisy edges.
    pub union_bound: Vec<f64>,
    pub p_max: f64,
    pub kappa_bit_pipe: f64,
    /// Source symbols per channel use of the noisy network.
    pub kappa_noisy: f64,
}

struct NoisyEdge {
    code: ChannelCodebook,
    dmc: Dmc,
}

/// A plan checked against a network and a message code.
pub struct SeparatedScheme<'a, C: MessageCode> {
    net: &'a NetworkSpec,
    code: &'a C,
    plan: SeparationPlan,
    links: Vec<Link>,
    noisy: Vec<Option<NoisyEdge>>,
    report: Vec<EdgeReport>,
}

fn codebook_seed(seed: u64, e: usize) -> u64 {
    RngStream::keyed(seed, Domain::Codebook, &[0x5e9, e as u64]).next_u64()
}

impl<'a, C: MessageCode> SeparatedScheme<'a, C> {
    pub fn new(net: &'a NetworkSpec, code: &'a C, plan: SeparationPlan) -> Result<Self> {
        net.validate()?;
        if plan.layers == 0 || plan.repeats == 0 {
            return invalid("need at least one layer and one repetition");
        }
        if plan.edges.len() != net.edges.len() {
            return invalid("one edge plan per edge");
        }
        if plan.error_trials == 0 {
            return invalid("need at least one error-estimation trial");
        }
        let n = code.channel_len();
        if n == 0 {
            return invalid("the network code has no channel uses");
        }
        let stacked = plan.layers * plan.repeats;
        let mut noisy = Vec::new();
        let mut report = Vec::new();
        for (e, (edge, ep)) in net.edges.iter().zip(&plan.edges).enumerate() {
            if let ChannelModel::BitPipe { capacity } = edge.channel {
                if ep.is_some() {
                    return invalid(format!("edge {e} is a pipe and takes no channel code"));
                }
                let b = message_bits(n, capacity);
                noisy.push(None);
                report.push(EdgeReport {
                    edge: e,
                    layer_bits: b,
                    slot_bits: b,
                    slot_len: 0,
                    code_bits: 0,
                    max_error: 0.0,
                    average_error: 0.0,
                    codebook: None,
                });
                continue;
            }
            let Some(ep) = ep else {
                return invalid(format!("noisy edge {e} has no channel code plan"));
            };
            let dmc = edge.channel.dmc()?.expect("noisy edge");
            let (cap, law) = match &edge.channel {
                ChannelModel::Awgn { spec, j, .. } => {
                    let r = ba_capacity_cost(&dmc, &level_costs(*j)?, spec.power, AWGN_TOL, AWGN_MAX_ITER)?;
                    (r.capacity, Some(r.optimal_input))
                }
                _ => (ba_capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER)?.capacity, None),
            };
            if !(ep.rate > 0.0 && ep.rate < cap) {
                return invalid(format!("edge {e}: code rate {} is not in (0, C = {cap:.6})", ep.rate));
            }
            if !(ep.pipe_capacity > 0.0 && ep.pipe_capacity <= cap + 1e-6) {
                return invalid(format!("edge {e}: pipe capacity {} exceeds C = {cap:.6}", ep.pipe_capacity));
            }
            let m = plan.copies(e).expect("noisy edge plan");
            let slot_len = plan.repeats * m;
            let layer_bits = message_bits(n, ep.pipe_capacity);
            let slot_bits = (stacked * layer_bits as usize).div_ceil(n) as u32;
            let code_bits = message_bits(slot_len, ep.rate);
            if code_bits < slot_bits {
                return invalid(format!(
                    "edge {e}: {code_bits}-bit channel code cannot carry {slot_bits}-bit slots"
                ));
            }
            let seed = codebook_seed(plan.seed, e);
            let cb = match law {
                Some(law) => build_channel_code_with_law(&dmc, &law, ep.rate, slot_len, seed)?,
                None => build_channel_code(&dmc, ep.rate, slot_len, seed)?,
            };
            let mut r = RngStream::keyed(plan.seed, Domain::Experiment, &[0x5e9, e as u64]);
            let est = estimate_max_error(&cb, &dmc, plan.error_trials, &mut r)?;
            report.push(EdgeReport {
                edge: e,
                layer_bits,
                slot_bits,
                slot_len,
                code_bits,
                max_error: est.max_error,
                average_error: est.average_error,
                codebook: Some(cb.descriptor(&dmc)),
            });
            noisy.push(Some(NoisyEdge { code: cb, dmc }));
        }
        Ok(SeparatedScheme {
            net,
            code,
            plan,
            links: links(net)?,
            noisy,
            report,
        })
    }

    pub fn edges(&self) -> &[EdgeReport] {
        &self.report
    }

    pub fn p_max(&self) -> f64 {
        self.report.iter().map(|r| r.max_error).fold(0.0, f64::max)
    }

    /// Carries one edge's concatenated stream over its slots.
    fn carry(&self, e: usize, stream: &[bool], trial: u64) -> Result<(Bits, usize)> {
        let Some(ne) = &self.noisy[e] else {
            return Ok((stream.to_vec(), 0));
        };
        let rep = &self.report[e];
        let w = rep.slot_bits as usize;
        let mut out = Vec::with_capacity(stream.len());
        let mut errors = 0;
        for (t, chunk) in stream.chunks(w.max(1)).enumerate() {
            let m = from_bits(chunk);
            let x = channel_encode(&ne.code, m)?;
            let y = x
                .iter()
                .enumerate()
                .map(|(j, &xj)| {
                    let path = StreamPath::new(e as u64, j as u64, t as u64 + 1, trial);
                    self.links[e].noisy(e, xj, self.plan.seed, path)
                })
                .collect::<Result<Sequence>>()?;
            let got = channel_decode(&ne.code, &y, &ne.dmc)?;
            errors += (got != m) as usize;
            out.extend(to_bits(got, chunk.len() as u32));
        }
        Ok((out, errors))
    }

    pub fn run_trial(&self, trial: u64) -> Result<SeparatedTrial> {
        let net = self.net;
        let layers = self.plan.layers * self.plan.repeats;
        let len = self.code.source_len();
        let sources = net.sample_sources(len, layers, self.plan.seed, trial);
        // sent[layer][edge]
        let mut sent = vec![vec![Bits::new(); net.edges.len()]; layers];
        for (l, blocks) in sources.iter().enumerate() {
            for (a, block) in blocks.iter().enumerate() {
                let out = net.out_edges(a);
                let msgs = self.code.encode(a, block)?;
                if msgs.len() != out.len() {
                    return invalid(format!("node {a} produced {} messages for {} edges", msgs.len(), out.len()));
                }
                for (e, mut m) in out.into_iter().zip(msgs) {
                    let b = self.report[e].layer_bits as usize;
                    if m.len() > b {
                        return invalid(format!("edge {e} message of {} bits exceeds {b}", m.len()));
                    }
                    m.resize(b, false);
                    sent[l][e] = m;
                }
            }
        }
        let mut received = sent.clone();
        let mut slot_errors = 0;
        for e in 0..net.edges.len() {
            let b = self.report[e].layer_bits as usize;
            let stream: Bits = sent.iter().flat_map(|s| s[e].iter().copied()).collect();
            let (got, errs) = self.carry(e, &stream, trial)?;
            slot_errors += errs;
            for (l, r) in received.iter_mut().enumerate() {
                r[e] = got[l * b..(l + 1) * b].to_vec();
            }
        }
        let decode_all = |msgs: &[Vec<Bits>]| -> Result<Vec<Vec<Sequence>>> {
            net.demands
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let ins = net.in_edges(d.to);
                    (0..layers)
                        .map(|l| {
                            let incoming: Vec<Bits> = ins.iter().map(|&e| msgs[l][e].clone()).collect();
                            self.code.decode(k, &incoming, &sources[l][d.to])
                        })
                        .collect()
                })
                .collect()
        };
        let realized = decode_all(&received)?;
        let ideal = decode_all(&sent)?;
        let whole: Vec<Sequence> = (0..net.nodes.len())
            .map(|a| sources.iter().flat_map(|l| l[a].iter().copied()).collect())
            .collect();
        let concat = |recs: &[Vec<Sequence>]| -> Vec<Sequence> { recs.iter().map(|r| r.concat()).collect() };
        let block_errors = net
            .demands
            .iter()
            .zip(&realized)
            .map(|(d, recs)| recs.iter().enumerate().filter(|(l, r)| **r != sources[*l][d.from]).count())
            .collect();
        Ok(SeparatedTrial {
            trial,
            realized: measure_distortion(net, &whole, &concat(&realized))?.values(),
            bit_pipe: measure_distortion(net, &whole, &concat(&ideal))?.values(),
            slot_errors,
            block_errors,
        })
    }

    /// Runs trials `0..trials` and aggregates in trial order.
    pub fn run(&self, trials: usize) -> Result<SeparatedReport> {
        if trials == 0 {
            return invalid("need at least one trial");
        }
        let rows = (0..trials as u64)
            .into_par_iter()
            .map(|t| self.run_trial(t))
            .collect::<Result<Vec<_>>>()?;
        let k = self.net.demands.len();
        let mean = |f: &dyn Fn(&SeparatedTrial) -> &Vec<f64>| -> Vec<f64> {
            (0..k)
                .map(|i| rows.iter().map(|r| f(r)[i]).sum::<f64>() / rows.len() as f64)
                .collect()
        };
        let mean_realized = mean(&|r| &r.realized);
        let mean_bit_pipe = mean(&|r| &r.bit_pipe);
        let n = self.code.channel_len();
        let noisy = self.noisy.iter().filter(|x| x.is_some()).count();
        let p_max = self.p_max();
        let union_bound = self
            .net
            .demands
            .iter()
            .zip(&mean_bit_pipe)
            .map(|(d, db)| db + (n * noisy) as f64 * p_max * d.measure.d_max())
            .collect();
        let stacked = (self.plan.layers * self.plan.repeats) as f64;
        let uses = match self.report.iter().map(|r| r.slot_len).max().unwrap_or(0) {
            0 => self.plan.layers * self.plan.repeats,
            u => u,
        };
        let l = self.code.source_len() as f64;
        Ok(SeparatedReport {
            trials: rows,
            edges: self.report.clone(),
            mean_realized,
            mean_bit_pipe,
            union_bound,
            p_max,
            kappa_bit_pipe: l / n as f64,
            kappa_noisy: stacked * l / (n * uses) as f64,
        })
    }
}

/// Prepares the plan and runs `trials` trials.
pub fn run_separated<C: MessageCode>(
    net: &NetworkSpec,
    code: &C,
    plan: &SeparationPlan,
    trials: usize,
) -> Result<SeparatedReport> {
    SeparatedScheme::new(net, code, plan.clone())?.run(trials)
}
