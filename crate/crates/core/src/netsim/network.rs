use serde::{Deserialize, Serialize};

use crate::channels::{awgn_capacity, discretize_awgn, AwgnSpec, Dmc, Domain, RngStream, StreamPath};
use crate::coding_theorems::{ba_capacity, DistortionMeasure, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{invalid, Result};
use crate::info::{Pmf, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    /// Size of the node's source alphabet; 1 for a node without a source.
    pub source_alphabet: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    Dmc { matrix: Dmc },
    /// Gaussian link seen through the input grid Q[j] and output grid Q[k].
    Awgn { spec: AwgnSpec, j: usize, k: usize },
    /// Error-free link carrying `floor(n C)` bits over `n` uses.
    BitPipe { capacity: f64 },
}

impl ChannelModel {
    pub fn is_pipe(&self) -> bool {
        matches!(self, ChannelModel::BitPipe { .. })
    }

    /// Input and output alphabet sizes of a noisy model.
    pub fn alphabets(&self) -> Option<(usize, usize)> {
        match self {
            ChannelModel::Dmc { matrix } => Some((matrix.inputs(), matrix.outputs())),
            ChannelModel::Awgn { j, k, .. } => Some((2 * j + 1, 2 * k + 1)),
            ChannelModel::BitPipe { .. } => None,
        }
    }

    /// The DMC of a noisy model; discretizes AWGN links.
    pub fn dmc(&self) -> Result<Option<Dmc>> {
        Ok(match self {
            ChannelModel::Dmc { matrix } => Some(matrix.clone()),
            ChannelModel::Awgn { spec, j, k } => Some(discretize_awgn(spec, *j, *k)?),
            ChannelModel::BitPipe { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub channel: ChannelModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Distortion { d: f64 },
    Lossless,
}

/// Node `to` reconstructs the source of node `from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub from: usize,
    pub to: usize,
    pub measure: DistortionMeasure,
    pub target: Target,
}

/// Directed network of independent point-to-point links.
///
/// `source` is a law on the product of the node source alphabets, indexed
/// in mixed radix with the last node varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub source: Pmf,
    pub demands: Vec<Demand>,
}

impl NetworkSpec {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, source: Pmf, demands: Vec<Demand>) -> Result<Self> {
        let net = NetworkSpec {
            nodes,
            edges,
            source,
            demands,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.nodes.len();
        if v == 0 {
            return invalid("network without nodes");
        }
        if self.nodes.iter().any(|n| n.source_alphabet == 0) {
            return invalid("source alphabets must be nonempty");
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= v || e.to >= v {
                return invalid(format!("edge {i} has an endpoint outside the node list"));
            }
            match &e.channel {
                ChannelModel::BitPipe { capacity } if !(*capacity >= 0.0 && capacity.is_finite()) => {
                    return invalid(format!("edge {i} has capacity {capacity}"));
                }
                ChannelModel::Awgn { j, k, .. } if *j == 0 || *k == 0 => {
                    return invalid(format!("edge {i} needs quantizer indices >= 1"));
                }
                _ => {}
            }
        }
        let total: usize = self.nodes.iter().map(|n| n.source_alphabet).product();
        if self.source.len() != total {
            return invalid(format!(
                "source law has {} entries, the product alphabet has {total}",
                self.source.len()
            ));
        }
        for (i, d) in self.demands.iter().enumerate() {
            if d.from >= v || d.to >= v {
                return invalid(format!("demand {i} has an endpoint outside the node list"));
            }
            if d.measure.rows() != self.nodes[d.from].source_alphabet {
                return invalid(format!("demand {i}: measure rows do not match the source alphabet"));
            }
            if d.target == Target::Lossless && !d.measure.is_faithful() {
                return invalid(format!("demand {i}: lossless demands need a faithful measure"));
            }
        }
        Ok(())
    }

    /// Outgoing edge ids of `node`, in increasing order.
    pub fn out_edges(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].from == node).collect()
    }

    pub fn in_edges(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].to == node).collect()
    }

    pub fn kappa(source_len: usize, channel_len: usize) -> f64 {
        source_len as f64 / channel_len as f64
    }

    /// Splits a product-alphabet symbol into per-node symbols.
    pub fn split_symbol(&self, mut s: usize) -> Vec<usize> {
        let mut out = vec![0; self.nodes.len()];
        for (a, node) in self.nodes.iter().enumerate().rev() {
            out[a] = s % node.source_alphabet;
            s /= node.source_alphabet;
        }
        out
    }

    /// Source blocks `[layer][node]` of length `len`, drawn from the stream
    /// `(Source, layer, trial)` so that a layer's block does not depend on
    /// how many layers are drawn.
    pub fn sample_sources(&self, len: usize, layers: usize, seed: u64, trial: u64) -> Vec<Vec<Sequence>> {
        (0..layers)
            .map(|l| {
                let mut r = RngStream::new(seed, Domain::Source, StreamPath::new(0, l as u64, 0, trial));
                let mut blocks = vec![Vec::with_capacity(len); self.nodes.len()];
                for _ in 0..len {
                    let s = self.source.sample_with(r.uniform());
                    for (a, u) in self.split_symbol(s).into_iter().enumerate() {
                        blocks[a].push(u);
                    }
                }
                blocks
            })
            .collect()
    }
}

/// The network with every noisy link replaced by a pipe of its capacity.
pub fn bit_pipe_equivalent(net: &NetworkSpec) -> Result<NetworkSpec> {
    let mut out = net.clone();
    for e in &mut out.edges {
        let capacity = match &e.channel {
            ChannelModel::Dmc { matrix } => ba_capacity(matrix, DEFAULT_TOL, DEFAULT_MAX_ITER)?.capacity,
            ChannelModel::Awgn { spec, .. } => awgn_capacity(spec),
            ChannelModel::BitPipe { capacity } => *capacity,
        };
        e.channel = ChannelModel::BitPipe { capacity };
    }
    Ok(out)
}

/// Two-source topology: sources at nodes 0 and 1, each with a link into node 2,
/// which reconstructs both.
pub fn two_sources_one_sink(
    source: Pmf,
    alphabets: (usize, usize),
    links: (ChannelModel, ChannelModel),
    measures: (DistortionMeasure, DistortionMeasure),
    target: Target,
) -> Result<NetworkSpec> {
    let node = |name: &str, k: usize| Node {
        name: name.into(),
        source_alphabet: k,
    };
    NetworkSpec::new(
        vec![node("u1", alphabets.0), node("u2", alphabets.1), node("sink", 1)],
        vec![
            Edge {
                from: 0,
                to: 2,
                channel: links.0,
            },
            Edge {
                from: 1,
                to: 2,
                channel: links.1,
            },
        ],
        source,
        vec![
            Demand {
                from: 0,
                to: 2,
                measure: measures.0,
                target,
            },
            Demand {
                from: 1,
                to: 2,
                measure: measures.1,
                target,
            },
        ],
    )
}

/// One source node linked to one sink that reconstructs it.
pub fn point_to_point(
    source: Pmf,
    link: ChannelModel,
    measure: DistortionMeasure,
    target: Target,
) -> Result<NetworkSpec> {
    let k = source.len();
    NetworkSpec::new(
        vec![
            Node {
                name: "source".into(),
                source_alphabet: k,
            },
            Node {
                name: "sink".into(),
                source_alphabet: 1,
            },
        ],
        vec![Edge {
            from: 0,
            to: 1,
            channel: link,
        }],
        source,
        vec![Demand {
            from: 0,
            to: 1,
            measure,
            target,
        }],
    )
}
