//! Synchronous execution of a network code, one channel use at a time.
//!
//! Channel symbols are `usize`. On a noisy link they index the input and
//! output alphabets; on a bit pipe the symbol at time `t` holds the `q_t`
//! bits delivered at that time, least significant bit first.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::distortion::{measure_distortion, DistortionMatrix};
use super::network::{ChannelModel, NetworkSpec};
use crate::channels::{Dmc, Domain, Quantizer, RngStream, StreamPath};
use crate::error::{invalid, Error, Result};
use crate::info::Sequence;

/// When pipe bits become available.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipeSchedule {
    /// `floor(tC) - floor((t-1)C)` bits at time `t`.
    #[default]
    EqualQuanta,
    /// All `floor(nC)` bits at time `n`.
    EndOfBlock,
}

impl PipeSchedule {
    /// Bits a pipe of capacity `c` carries at time `t` of `n`.
    pub fn quantum(self, c: f64, t: usize, n: usize) -> u32 {
        let cum = |s: usize| (s as f64 * c + 1e-9).floor() as u64;
        match self {
            PipeSchedule::EqualQuanta => (cum(t) - cum(t - 1)) as u32,
            PipeSchedule::EndOfBlock if t == n => cum(n) as u32,
            PipeSchedule::EndOfBlock => 0,
        }
    }
}

/// How a run names its noise streams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathRemap {
    /// Layer `l` at time `t` draws from `(edge, l, t, trial)`.
    #[default]
    Direct,
    /// A single-layer run of an unraveled `layers`-deep code: time
    /// `tau = (r-1) layers + l + 1` draws from `(edge, l, r, trial)`, and
    /// pipes follow the stacked schedule of round `r`.
    Unraveled { layers: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub trial: u64,
    pub schedule: PipeSchedule,
    pub remap: PathRemap,
    pub record_trace: bool,
}

impl RunConfig {
    pub fn new(seed: u64, trial: u64) -> Self {
        RunConfig {
            seed,
            trial,
            schedule: PipeSchedule::default(),
            remap: PathRemap::Direct,
            record_trace: true,
        }
    }
}

/// Read access to channel outputs during a run.
///
/// Reads are checked: a node may only read edges into it, and only at
/// times before the current one.
pub trait OutputView {
    fn get(&self, edge: usize, layer: usize, time: usize) -> Result<usize>;
    /// Bits a pipe carries at `time`; 0 for noisy links.
    fn quantum(&self, edge: usize, time: usize) -> u32;
    /// First time whose outputs are not yet readable.
    fn now(&self) -> usize;
}

/// A code for a (possibly stacked) network.
///
/// `encode` returns the inputs of `node` at time `t` as `[layer][k]`, with
/// `k` running over the node's out-edges in edge-id order. `sources` holds
/// the node's source block per layer. `decode` returns the reconstruction
/// per layer.
pub trait NetworkCode: Sync {
    /// Per-node memory kept across time steps of one run.
    type State: Default;

    fn layers(&self) -> usize {
        1
    }
    fn source_len(&self) -> usize;
    fn channel_len(&self) -> usize;

    fn encode(
        &self,
        state: &mut Self::State,
        node: usize,
        t: usize,
        sources: &[&[usize]],
        past: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>>;

    fn decode(&self, demand: usize, sources: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub edge: usize,
    pub layer: usize,
    pub time: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    /// `[layer][node]`
    pub sources: Vec<Vec<Sequence>>,
    /// `[demand][layer]`
    pub reconstructions: Vec<Vec<Sequence>>,
    pub trace: Vec<TraceRow>,
    pub distortion: DistortionMatrix,
}

impl RunOutput {
    /// Source of `node` over all layers, layer 0 first.
    pub fn source(&self, node: usize) -> Sequence {
        self.sources.iter().flat_map(|l| l[node].iter().copied()).collect()
    }

    pub fn reconstruction(&self, demand: usize) -> Sequence {
        self.reconstructions[demand].concat()
    }

    /// Per demand and layer: whether the block was reconstructed exactly.
    pub fn block_errors(&self, net: &NetworkSpec) -> Vec<Vec<bool>> {
        net.demands
            .iter()
            .zip(&self.reconstructions)
            .map(|(d, recs)| {
                recs.iter()
                    .zip(&self.sources)
                    .map(|(r, s)| *r != s[d.from])
                    .collect()
            })
            .collect()
    }
}

pub(crate) enum Link {
    Dmc(Dmc),
    Awgn { sd: f64, levels: Vec<f64>, out: Quantizer },
    Pipe(f64),
}

impl Link {
    /// One use of a noisy link with the noise drawn from `path`'s stream.
    pub(crate) fn noisy(&self, e: usize, x: usize, seed: u64, path: StreamPath) -> Result<usize> {
        match self {
            Link::Dmc(ch) => {
                if x >= ch.inputs() {
                    return Err(Error::ContractViolation(format!("input {x} outside edge {e}'s alphabet")));
                }
                let u = RngStream::new(seed, Domain::ChannelNoise, path).uniform();
                Ok(ch.sample_with(x, u))
            }
            Link::Awgn { sd, levels, out } => {
                let Some(level) = levels.get(x) else {
                    return Err(Error::ContractViolation(format!("input {x} outside edge {e}'s grid")));
                };
                let z = RngStream::new(seed, Domain::ChannelNoise, path).standard_normal();
                Ok(out.symbol(level + sd * z))
            }
            Link::Pipe(_) => Ok(x),
        }
    }
}

/// History of one run: `y[edge][layer][time - 1]`.
struct History<'a> {
    net: &'a NetworkSpec,
    links: &'a [Link],
    y: Vec<Vec<Vec<usize>>>,
    n: usize,
    schedule: PipeSchedule,
    remap: PathRemap,
}

impl History<'_> {
    fn quantum(&self, edge: usize, time: usize) -> u32 {
        let Link::Pipe(c) = self.links[edge] else {
            return 0;
        };
        match self.remap {
            PathRemap::Direct => self.schedule.quantum(c, time, self.n),
            PathRemap::Unraveled { layers } => {
                let r = (time - 1) / layers + 1;
                self.schedule.quantum(c, r, self.n / layers)
            }
        }
    }
}

/// What node `node` may see at time `t`.
struct NodeView<'h, 'a> {
    h: &'h History<'a>,
    node: usize,
    t: usize,
}

impl OutputView for NodeView<'_, '_> {
    fn get(&self, edge: usize, layer: usize, time: usize) -> Result<usize> {
        let e = self
            .h
            .net
            .edges
            .get(edge)
            .ok_or_else(|| Error::ContractViolation(format!("read of unknown edge {edge}")))?;
        if e.to != self.node {
            return Err(Error::ContractViolation(format!(
                "node {} read edge {edge}, which ends at node {}",
                self.node, e.to
            )));
        }
        if time == 0 || time >= self.t {
            return Err(Error::ContractViolation(format!(
                "node {} read time {time} at time {}",
                self.node, self.t
            )));
        }
        self.h
            .y
            .get(edge)
            .and_then(|l| l.get(layer))
            .map(|ys| ys[time - 1])
            .ok_or_else(|| Error::ContractViolation(format!("read of unknown layer {layer}")))
    }

    fn quantum(&self, edge: usize, time: usize) -> u32 {
        self.h.quantum(edge, time)
    }

    fn now(&self) -> usize {
        self.t
    }
}

pub(crate) fn links(net: &NetworkSpec) -> Result<Vec<Link>> {
    net.edges
        .iter()
        .map(|e| {
            Ok(match &e.channel {
                ChannelModel::Dmc { matrix } => Link::Dmc(matrix.clone()),
                ChannelModel::Awgn { spec, j, k } => Link::Awgn {
                    sd: spec.noise.sqrt(),
                    levels: Quantizer::new(*j)?.levels(),
                    out: Quantizer::new(*k)?,
                },
                ChannelModel::BitPipe { capacity } => Link::Pipe(*capacity),
            })
        })
        .collect()
}

/// Runs `code` on fresh sources drawn from the network's law.
pub fn run_network<C: NetworkCode>(net: &NetworkSpec, code: &C, cfg: &RunConfig) -> Result<RunOutput> {
    let sources = match cfg.remap {
        PathRemap::Direct => net.sample_sources(code.source_len(), code.layers(), cfg.seed, cfg.trial),
        PathRemap::Unraveled { layers } => {
            if code.layers() != 1 || code.source_len() % layers != 0 {
                return invalid("an unraveled run needs a single-layer code with source length divisible by the depth");
            }
            let per = net.sample_sources(code.source_len() / layers, layers, cfg.seed, cfg.trial);
            vec![(0..net.nodes.len())
                .map(|a| per.iter().flat_map(|l| l[a].iter().copied()).collect())
                .collect()]
        }
    };
    run_network_with_sources(net, code, cfg, sources)
}

/// Runs `code` on given source blocks `[layer][node]`.
pub fn run_network_with_sources<C: NetworkCode>(
    net: &NetworkSpec,
    code: &C,
    cfg: &RunConfig,
    sources: Vec<Vec<Sequence>>,
) -> Result<RunOutput> {
    net.validate()?;
    let layers = code.layers();
    let n = code.channel_len();
    let len = code.source_len();
    if layers == 0 || n == 0 {
        return invalid("a code needs at least one layer and one channel use");
    }
    if let PathRemap::Unraveled { layers: depth } = cfg.remap {
        if depth == 0 || n % depth != 0 || layers != 1 {
            return invalid("unraveled remap needs a single-layer code with blocklength divisible by the depth");
        }
    }
    if sources.len() != layers
        || sources.iter().any(|l| {
            l.len() != net.nodes.len()
                || l.iter()
                    .zip(&net.nodes)
                    .any(|(s, node)| s.len() != len || s.iter().any(|&u| u >= node.source_alphabet))
        })
    {
        return invalid("source blocks do not match the code and the network");
    }
    let links = links(net)?;
    let mut h = History {
        net,
        links: &links,
        y: vec![vec![Vec::with_capacity(n); layers]; net.edges.len()],
        n,
        schedule: cfg.schedule,
        remap: cfg.remap,
    };
    let out_edges: Vec<Vec<usize>> = (0..net.nodes.len()).map(|a| net.out_edges(a)).collect();
    let node_sources = |a: usize| -> Vec<&[usize]> { sources.iter().map(|l| l[a].as_slice()).collect() };
    let mut states: Vec<C::State> = (0..net.nodes.len()).map(|_| C::State::default()).collect();
    let mut trace = Vec::new();
    let mut x = vec![vec![0usize; layers]; net.edges.len()];

    for t in 1..=n {
        for (a, outs) in out_edges.iter().enumerate() {
            if outs.is_empty() {
                continue;
            }
            let view = NodeView { h: &h, node: a, t };
            let inputs = code.encode(&mut states[a], a, t, &node_sources(a), &view)?;
            if inputs.len() != layers || inputs.iter().any(|v| v.len() != outs.len()) {
                return Err(Error::ContractViolation(format!(
                    "node {a} produced inputs of the wrong shape at time {t}"
                )));
            }
            for (l, row) in inputs.into_iter().enumerate() {
                for (k, sym) in row.into_iter().enumerate() {
                    x[outs[k]][l] = sym;
                }
            }
        }
        for (e, link) in links.iter().enumerate() {
            for l in 0..layers {
                let xi = x[e][l];
                let path = match cfg.remap {
                    PathRemap::Direct => StreamPath::new(e as u64, l as u64, t as u64, cfg.trial),
                    PathRemap::Unraveled { layers: depth } => StreamPath::new(
                        e as u64,
                        ((t - 1) % depth) as u64,
                        ((t - 1) / depth + 1) as u64,
                        cfg.trial,
                    ),
                };
                let y = match link {
                    Link::Pipe(_) => {
                        let q = h.quantum(e, t);
                        if q < usize::BITS && xi >> q != 0 {
                            return Err(Error::ContractViolation(format!(
                                "pipe {e} carries {q} bits at time {t}, got {xi}"
                            )));
                        }
                        xi
                    }
                    noisy => noisy.noisy(e, xi, cfg.seed, path)?,
                };
                h.y[e][l].push(y);
                if cfg.record_trace {
                    trace.push(TraceRow {
                        edge: e,
                        layer: l,
                        time: t,
                        x: xi,
                        y,
                    });
                }
            }
        }
    }

    let mut reconstructions = Vec::with_capacity(net.demands.len());
    for (i, d) in net.demands.iter().enumerate() {
        let view = NodeView {
            h: &h,
            node: d.to,
            t: n + 1,
        };
        let rec = code.decode(i, &node_sources(d.to), &view)?;
        if rec.len() != layers || rec.iter().any(|r| r.len() != len) {
            return Err(Error::ContractViolation(format!("decoder of demand {i} returned the wrong shape")));
        }
        reconstructions.push(rec);
    }
    let flat_sources: Vec<Sequence> = (0..net.nodes.len())
        .map(|a| sources.iter().flat_map(|l| l[a].iter().copied()).collect())
        .collect();
    let flat_recs: Vec<Sequence> = reconstructions.iter().map(|r| r.concat()).collect();
    let distortion = measure_distortion(net, &flat_sources, &flat_recs)?;
    Ok(RunOutput {
        sources,
        reconstructions,
        trace,
        distortion,
    })
}

/// Writes a trace as CSV with columns `edge,layer,time,x,y`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quanta_sum_to_floor_nc() {
        for &(c, n) in &[(0.875, 24), (0.5, 7), (2.3, 10), (1.0 / 3.0, 24), (0.0, 5)] {
            for s in [PipeSchedule::EqualQuanta, PipeSchedule::EndOfBlock] {
                let total: u32 = (1..=n).map(|t| s.quantum(c, t, n)).sum();
                assert_eq!(total as f64, (n as f64 * c + 1e-9).floor());
            }
        }
        assert_eq!(PipeSchedule::EqualQuanta.quantum(0.5, 1, 4), 0);
        assert_eq!(PipeSchedule::EqualQuanta.quantum(0.5, 2, 4), 1);
    }
}
