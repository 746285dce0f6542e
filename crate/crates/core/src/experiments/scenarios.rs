//! Ready-made networks, codes and plans for the reproduced scenarios.

use serde::{Deserialize, Serialize};

use super::codes::{SwPairCode, VqCode};
use super::separated::{EdgePlan, SeparationPlan};
use crate::channels::Dmc;
use crate::codecs::message_bits;
use crate::coding_theorems::DistortionMeasure;
use crate::error::Result;
use crate::info::{JointPmf, Pmf};
use crate::netsim::{point_to_point, two_sources_one_sink, ChannelModel, NetworkSpec, Target};

/// Fair bits over one BSC, Hamming distortion, `L = n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointToPoint {
    pub crossover: f64,
    /// Source symbols and channel uses per block.
    pub len: usize,
    /// Pipe capacity the quantizer is sized for.
    pub pipe_capacity: f64,
    /// Channel code rate.
    pub rate: f64,
    pub layers: usize,
    #[serde(default = "one")]
    pub repeats: usize,
    pub seed: u64,
    #[serde(default = "default_error_trials")]
    pub error_trials: usize,
}

fn one() -> usize {
    1
}

fn default_error_trials() -> usize {
    1 << 16
}

impl PointToPoint {
    /// The BSC tuned to capacity one half, as in the OPTA comparison.
    pub fn half_capacity(seed: u64) -> Self {
        PointToPoint {
            crossover: 0.110_027_864_438_359_6,
            len: 24,
            pipe_capacity: 0.5,
            rate: 1.0 / 6.0,
            layers: 24,
            repeats: 1,
            seed,
            error_trials: default_error_trials(),
        }
    }

    /// A clean BSC(0.01) link with a rate-1/2 code.
    pub fn clean_link(seed: u64) -> Self {
        PointToPoint {
            crossover: 0.01,
            len: 24,
            pipe_capacity: 0.5,
            rate: 0.5,
            layers: 24,
            repeats: 1,
            seed,
            error_trials: default_error_trials(),
        }
    }

    pub fn build(&self) -> Result<(NetworkSpec, VqCode, SeparationPlan)> {
        let law = Pmf::bernoulli(0.5)?;
        let hamming = DistortionMeasure::hamming(2)?;
        let ch = ChannelModel::Dmc {
            matrix: Dmc::bsc(self.crossover)?,
        };
        let net = point_to_point(law.clone(), ch, hamming.clone(), Target::Distortion { d: 0.5 })?;
        let bits = message_bits(self.len, self.pipe_capacity);
        let code = VqCode::new(&law, hamming, self.len, self.len, bits, self.seed)?;
        let plan = SeparationPlan {
            layers: self.layers,
            repeats: self.repeats,
            edges: vec![Some(EdgePlan {
                rate: self.rate,
                pipe_capacity: self.pipe_capacity,
            })],
            seed: self.seed,
            error_trials: self.error_trials,
        };
        Ok((net, code, plan))
    }
}

/// Two correlated binary sources sent over pipes to one sink that wants
/// both losslessly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlepianWolfPair {
    /// Flip probability of the doubly symmetric source.
    pub rho: f64,
    pub len: usize,
    pub capacities: (f64, f64),
    pub seed: u64,
}

impl SlepianWolfPair {
    pub fn inside(seed: u64) -> Self {
        SlepianWolfPair {
            rho: 0.1,
            len: 24,
            capacities: (0.875, 0.875),
            seed,
        }
    }

    /// First link 0.1 bits below `H(U1|U2)`.
    pub fn starved(seed: u64) -> Self {
        SlepianWolfPair {
            capacities: (0.369, 0.875),
            ..Self::inside(seed)
        }
    }

    pub fn build(&self) -> Result<(NetworkSpec, SwPairCode, SeparationPlan)> {
        let joint = JointPmf::dsbs(self.rho)?;
        let hamming = DistortionMeasure::hamming(2)?;
        let pipe = |c: f64| ChannelModel::BitPipe { capacity: c };
        let net = two_sources_one_sink(
            joint.as_pmf(),
            (2, 2),
            (pipe(self.capacities.0), pipe(self.capacities.1)),
            (hamming.clone(), hamming),
            Target::Lossless,
        )?;
        let bits = (
            message_bits(self.len, self.capacities.0),
            message_bits(self.len, self.capacities.1),
        );
        let code = SwPairCode::new(joint, self.len, self.len, bits, self.seed)?;
        let plan = SeparationPlan {
            layers: 1,
            repeats: 1,
            edges: vec![None, None],
            seed: self.seed,
            error_trials: 1,
        };
        Ok((net, code, plan))
    }
}
