//! Code transformations: per-layer replicas, unraveling, uncoded
//! transmission and message codes over bit pipes.

use super::engine::{NetworkCode, OutputView};
use super::network::{ChannelModel, NetworkSpec};
use crate::codecs::message_bits;
use crate::error::{invalid, Error, Result};
use crate::info::Sequence;

/// Bit strings are stored one bit per entry.
pub type Bits = Vec<bool>;

/// The low `width` bits of `v`, least significant first.
pub fn to_bits(v: u64, width: u32) -> Bits {
    (0..width).map(|i| i < 64 && (v >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter()
        .take(64)
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (b as u64) << i)
}

/// Layer 0 of the inner code mapped to layer `layer` of the outer view.
struct LayerView<'a> {
    past: &'a dyn OutputView,
    layer: usize,
}

impl OutputView for LayerView<'_> {
    fn get(&self, edge: usize, layer: usize, time: usize) -> Result<usize> {
        if layer != 0 {
            return Err(Error::ContractViolation(format!(
                "replica of layer {} read layer {layer}",
                self.layer
            )));
        }
        self.past.get(edge, self.layer, time)
    }

    fn quantum(&self, edge: usize, time: usize) -> u32 {
        self.past.quantum(edge, time)
    }

    fn now(&self) -> usize {
        self.past.now()
    }
}

/// The same single-layer code run independently in every layer.
#[derive(Clone, Debug)]
pub struct Replicated<C> {
    inner: C,
    layers: usize,
}

/// `layers` independent copies of a single-layer code.
pub fn stack<C: NetworkCode>(code: C, layers: usize) -> Result<Replicated<C>> {
    if layers == 0 {
        return invalid("a stack needs at least one layer");
    }
    if code.layers() != 1 {
        return invalid("only single-layer codes can be replicated");
    }
    Ok(Replicated { inner: code, layers })
}

impl<C: NetworkCode> Replicated<C> {
    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: NetworkCode> NetworkCode for Replicated<C> {
    type State = Vec<C::State>;

    fn layers(&self) -> usize {
        self.layers
    }

    fn source_len(&self) -> usize {
        self.inner.source_len()
    }

    fn channel_len(&self) -> usize {
        self.inner.channel_len()
    }

    fn encode(
        &self,
        state: &mut Self::State,
        node: usize,
        t: usize,
        sources: &[&[usize]],
        past: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>> {
        if state.is_empty() {
            state.resize_with(self.layers, Default::default);
        }
        let mut out = Vec::with_capacity(self.layers);
        for (l, st) in state.iter_mut().enumerate() {
            let view = LayerView { past, layer: l };
            let mut x = self.inner.encode(st, node, t, &sources[l..=l], &view)?;
            out.push(x.pop().unwrap_or_default());
        }
        Ok(out)
    }

    fn decode(&self, demand: usize, sources: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>> {
        (0..self.layers)
            .map(|l| {
                let view = LayerView { past, layer: l };
                let mut r = self.inner.decode(demand, &sources[l..=l], &view)?;
                r.pop()
                    .ok_or_else(|| Error::ContractViolation("replica returned no reconstruction".into()))
            })
            .collect()
    }
}

/// A stacked view on a single-layer history: `(layer l, round r)` is time
/// `(r-1) N + l + 1`.
struct StackedView<'a> {
    past: &'a dyn OutputView,
    depth: usize,
}

impl OutputView for StackedView<'_> {
    fn get(&self, edge: usize, layer: usize, round: usize) -> Result<usize> {
        if layer >= self.depth || round == 0 {
            return Err(Error::ContractViolation(format!("read of layer {layer} round {round}")));
        }
        self.past.get(edge, 0, (round - 1) * self.depth + layer + 1)
    }

    fn quantum(&self, edge: usize, round: usize) -> u32 {
        self.past.quantum(edge, (round - 1) * self.depth + 1)
    }

    fn now(&self) -> usize {
        (self.past.now() - 1) / self.depth + 1
    }
}

/// A stacked code run as a single-layer code of `N` times the length.
///
/// Round `r` of the stacked code occupies times `(r-1)N+1..=rN`: at time
/// `(r-1)N + l + 1` every node sends what layer `l` sends in round `r`.
/// Run it with `PathRemap::Unraveled` to reproduce the stacked run's noise
/// and pipe schedule.
#[derive(Clone, Debug)]
pub struct Unraveled<C> {
    inner: C,
}

pub fn unravel<C: NetworkCode>(code: C) -> Unraveled<C> {
    Unraveled { inner: code }
}

pub struct UnraveledState<S> {
    inner: S,
    round: usize,
    inputs: Vec<Vec<usize>>,
}

impl<S: Default> Default for UnraveledState<S> {
    fn default() -> Self {
        UnraveledState {
            inner: S::default(),
            round: 0,
            inputs: Vec::new(),
        }
    }
}

impl<C: NetworkCode> Unraveled<C> {
    fn split<'s>(&self, source: &'s [usize]) -> Vec<&'s [usize]> {
        source.chunks(self.inner.source_len().max(1)).collect()
    }
}

impl<C: NetworkCode> NetworkCode for Unraveled<C> {
    type State = UnraveledState<C::State>;

    fn source_len(&self) -> usize {
        self.inner.layers() * self.inner.source_len()
    }

    fn channel_len(&self) -> usize {
        self.inner.layers() * self.inner.channel_len()
    }

    fn encode(
        &self,
        state: &mut Self::State,
        node: usize,
        t: usize,
        sources: &[&[usize]],
        past: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>> {
        let depth = self.inner.layers();
        let round = (t - 1) / depth + 1;
        if state.round != round {
            let view = StackedView { past, depth };
            state.inputs = self
                .inner
                .encode(&mut state.inner, node, round, &self.split(sources[0]), &view)?;
            state.round = round;
        }
        Ok(vec![state.inputs[(t - 1) % depth].clone()])
    }

    fn decode(&self, demand: usize, sources: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>> {
        let view = StackedView {
            past,
            depth: self.inner.layers(),
        };
        let r = self.inner.decode(demand, &self.split(sources[0]), &view)?;
        Ok(vec![r.concat()])
    }
}

/// Symbol-by-symbol transmission: at time `t` each node puts a function of
/// its `t`-th source letter on every out-edge, and each demand maps the
/// `t`-th output of the direct link to a reconstruction letter.
#[derive(Clone, Debug)]
pub struct UncodedCode {
    len: usize,
    /// Per edge: source letter to channel input.
    input_maps: Vec<Vec<usize>>,
    /// Per demand: the link used and channel output to reconstruction.
    output_maps: Vec<(usize, Vec<usize>)>,
    out_edges: Vec<Vec<usize>>,
}

impl UncodedCode {
    pub fn new(
        net: &NetworkSpec,
        len: usize,
        input_maps: Vec<Vec<usize>>,
        output_maps: Vec<(usize, Vec<usize>)>,
    ) -> Result<Self> {
        if len == 0 {
            return invalid("block length must be positive");
        }
        if input_maps.len() != net.edges.len() || output_maps.len() != net.demands.len() {
            return invalid("one input map per edge and one output map per demand");
        }
        for (e, (edge, map)) in net.edges.iter().zip(&input_maps).enumerate() {
            let Some((inputs, _)) = edge.channel.alphabets() else {
                return invalid(format!("edge {e} is a pipe; uncoded transmission needs noisy links"));
            };
            if map.len() != net.nodes[edge.from].source_alphabet || map.iter().any(|&x| x >= inputs) {
                return invalid(format!("input map of edge {e} does not fit its alphabets"));
            }
        }
        for (i, (d, (e, map))) in net.demands.iter().zip(&output_maps).enumerate() {
            let edge = net.edges.get(*e);
            if edge.map_or(true, |edge| edge.from != d.from || edge.to != d.to) {
                return invalid(format!("demand {i} needs a direct link"));
            }
            let outputs = edge.and_then(|e| e.channel.alphabets()).map_or(0, |a| a.1);
            if map.len() != outputs || map.iter().any(|&v| v >= d.measure.cols()) {
                return invalid(format!("output map of demand {i} does not fit its alphabets"));
            }
        }
        Ok(UncodedCode {
            len,
            input_maps,
            output_maps,
            out_edges: (0..net.nodes.len()).map(|a| net.out_edges(a)).collect(),
        })
    }

    /// Sends the source letter as is and reads the output as the estimate.
    pub fn identity(net: &NetworkSpec, len: usize) -> Result<Self> {
        let inputs = net
            .edges
            .iter()
            .map(|e| (0..net.nodes[e.from].source_alphabet).collect())
            .collect();
        let outputs = net
            .demands
            .iter()
            .map(|d| {
                let e = net
                    .edges
                    .iter()
                    .position(|e| e.from == d.from && e.to == d.to)
                    .unwrap_or(usize::MAX);
                let k = net
                    .edges
                    .get(e)
                    .and_then(|e| e.channel.alphabets())
                    .map_or(0, |a| a.1);
                (e, (0..k).collect())
            })
            .collect();
        Self::new(net, len, inputs, outputs)
    }
}

impl NetworkCode for UncodedCode {
    type State = ();

    fn source_len(&self) -> usize {
        self.len
    }

    fn channel_len(&self) -> usize {
        self.len
    }

    fn encode(
        &self,
        _: &mut (),
        node: usize,
        t: usize,
        sources: &[&[usize]],
        _: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>> {
        let u = sources[0][t - 1];
        Ok(vec![self.out_edges[node]
            .iter()
            .map(|&e| self.input_maps[e][u])
            .collect()])
    }

    fn decode(&self, demand: usize, _: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>> {
        let (e, map) = &self.output_maps[demand];
        let rec = (1..=self.len)
            .map(|t| past.get(*e, 0, t).map(|y| map[y]))
            .collect::<Result<_>>()?;
        Ok(vec![rec])
    }
}

/// A code for a network of bit pipes in which every node maps its source
/// block to one message per out-edge and every decoder sees the messages
/// on its in-edges. Messages on edge `e` have exactly `floor(n C_e)` bits.
pub trait MessageCode: Sync {
    fn source_len(&self) -> usize;
    fn channel_len(&self) -> usize;

    /// Messages on the out-edges of `node`, in edge-id order.
    fn encode(&self, node: usize, source: &[usize]) -> Result<Vec<Bits>>;

    /// `incoming[k]` is the message on the `k`-th in-edge of the demand's
    /// sink, in edge-id order; `own` is the sink's source block.
    fn decode(&self, demand: usize, incoming: &[Bits], own: &[usize]) -> Result<Sequence>;
}

/// Message length of every edge of a pipe network.
pub fn pipe_budgets(net: &NetworkSpec, n: usize) -> Result<Vec<u32>> {
    net.edges
        .iter()
        .enumerate()
        .map(|(e, edge)| match edge.channel {
            ChannelModel::BitPipe { capacity } => Ok(message_bits(n, capacity)),
            _ => invalid(format!("edge {e} is not a bit pipe")),
        })
        .collect()
}

/// Runs a [`MessageCode`] over the pipes, releasing each message's bits
/// as the pipe schedule allows.
#[derive(Clone, Debug)]
pub struct PipeCode<M> {
    msg: M,
    budgets: Vec<u32>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    sinks: Vec<usize>,
}

impl<M: MessageCode> PipeCode<M> {
    pub fn new(net: &NetworkSpec, msg: M) -> Result<Self> {
        Ok(PipeCode {
            budgets: pipe_budgets(net, msg.channel_len())?,
            out_edges: (0..net.nodes.len()).map(|a| net.out_edges(a)).collect(),
            in_edges: (0..net.nodes.len()).map(|a| net.in_edges(a)).collect(),
            sinks: net.demands.iter().map(|d| d.to).collect(),
            msg,
        })
    }

    pub fn message_code(&self) -> &M {
        &self.msg
    }
}

#[derive(Default)]
pub struct PipeState {
    messages: Vec<Bits>,
    sent: Vec<usize>,
}

impl<M: MessageCode> NetworkCode for PipeCode<M> {
    type State = PipeState;

    fn source_len(&self) -> usize {
        self.msg.source_len()
    }

    fn channel_len(&self) -> usize {
        self.msg.channel_len()
    }

    fn encode(
        &self,
        state: &mut PipeState,
        node: usize,
        t: usize,
        sources: &[&[usize]],
        past: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>> {
        let outs = &self.out_edges[node];
        if t == 1 {
            let m = self.msg.encode(node, sources[0])?;
            if m.len() != outs.len() || m.iter().zip(outs).any(|(b, &e)| b.len() != self.budgets[e] as usize) {
                return Err(Error::ContractViolation(format!(
                    "node {node}: messages must fill floor(nC) bits on every out-edge"
                )));
            }
            state.messages = m;
            state.sent = vec![0; outs.len()];
        }
        let mut x = Vec::with_capacity(outs.len());
        for (k, &e) in outs.iter().enumerate() {
            let q = past.quantum(e, t) as usize;
            let from = state.sent[k];
            let chunk = state.messages[k]
                .get(from..from + q)
                .ok_or_else(|| Error::ContractViolation(format!("pipe {e} overran its message")))?;
            x.push(from_bits(chunk) as usize);
            state.sent[k] += q;
        }
        Ok(vec![x])
    }

    fn decode(&self, demand: usize, sources: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>> {
        let n = self.msg.channel_len();
        let incoming = self.in_edges[self.sinks[demand]]
            .iter()
            .map(|&e| {
                let mut bits = Vec::with_capacity(self.budgets[e] as usize);
                for t in 1..=n {
                    let q = past.quantum(e, t);
                    bits.extend(to_bits(past.get(e, 0, t)? as u64, q));
                }
                Ok(bits)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![self.msg.decode(demand, &incoming, sources[0])?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_round_trip() {
        for v in [0u64, 1, 0b1011, u64::MAX >> 3] {
            assert_eq!(from_bits(&to_bits(v, 61)), v);
        }
        assert_eq!(to_bits(0b110, 3), vec![false, true, true]);
    }
}
