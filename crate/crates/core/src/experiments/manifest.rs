//! Replayable experiment manifests.
//!
//! A manifest is a TOML file with a master seed, a trial count and one
//! scenario table tagged by `kind`:
//!
//! ```toml
//! seed = 7
//! trials = 1000
//!
//! [scenario]
//! kind = "capacity"
//! channel = { kind = "bsc", p = 0.1 }
//! ```
//!
//! Unknown fields are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channels::{level_costs, AwgnSpec, Dmc};
use crate::coding_theorems::DistortionMeasure;
use crate::error::{Error, Result};
use crate::info::{JointPmf, Pmf};
use crate::netsim::{point_to_point, two_sources_one_sink, ChannelModel, NetworkSpec, Target};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    #[serde(default)]
    pub trials: Option<usize>,
    /// Output directory; the command line and the environment override it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelRecord {
    Bsc { p: f64 },
    Bec { erasure: f64 },
    /// Row-stochastic transition matrix, one row per input.
    Matrix { rows: Vec<Vec<f64>> },
    /// Gaussian link seen through the grids Q[j] and Q[k].
    Awgn { power: f64, noise: f64, j: usize, k: usize },
    Pipe { capacity: f64 },
}

impl ChannelRecord {
    pub fn model(&self) -> Result<ChannelModel> {
        Ok(match self {
            ChannelRecord::Bsc { p } => ChannelModel::Dmc { matrix: Dmc::bsc(*p)? },
            ChannelRecord::Bec { erasure } => ChannelModel::Dmc {
                matrix: Dmc::bec(*erasure)?,
            },
            ChannelRecord::Matrix { rows } => ChannelModel::Dmc {
                matrix: Dmc::new(rows.clone())?,
            },
            ChannelRecord::Awgn { power, noise, j, k } => ChannelModel::Awgn {
                spec: AwgnSpec::new(*power, *noise)?,
                j: *j,
                k: *k,
            },
            ChannelRecord::Pipe { capacity } => ChannelModel::BitPipe { capacity: *capacity },
        })
    }

    /// The DMC of a noisy link, with per-input costs and budget when the
    /// link is power constrained.
    pub fn dmc(&self) -> Result<(Dmc, Option<(Vec<f64>, f64)>)> {
        let model = self.model()?;
        let Some(dmc) = model.dmc()? else {
            return Err(Error::InvalidArgument("a bit pipe has no transition matrix".into()));
        };
        let cost = match self {
            ChannelRecord::Awgn { power, j, .. } => Some((level_costs(*j)?, *power)),
            _ => None,
        };
        Ok((dmc, cost))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureRecord {
    Hamming { size: usize },
    Matrix { rows: Vec<Vec<f64>> },
}

impl MeasureRecord {
    pub fn measure(&self) -> Result<DistortionMeasure> {
        match self {
            MeasureRecord::Hamming { size } => DistortionMeasure::hamming(*size),
            MeasureRecord::Matrix { rows } => DistortionMeasure::new(rows.clone()),
        }
    }
}

fn one() -> usize {
    1
}

fn default_error_trials() -> usize {
    1 << 16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeparateNetwork {
    /// Fair bits over one BSC with a quantizer sized for the pipe.
    PointToPoint {
        crossover: f64,
        len: usize,
        pipe_capacity: f64,
        rate: f64,
        layers: usize,
        #[serde(default = "one")]
        repeats: usize,
        #[serde(default = "default_error_trials")]
        error_trials: usize,
    },
    /// Two DSBS sources over pipes to one sink.
    SlepianWolf { rho: f64, len: usize, capacities: (f64, f64) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchBase {
    /// Fair bits sent uncoded over one BSC.
    UncodedLink { crossover: f64, len: usize },
    /// Two DSBS sources sent uncoded over two BSCs to one sink.
    UncodedPair {
        rho: f64,
        crossovers: (f64, f64),
        len: usize,
    },
}

impl PatchBase {
    pub fn network(&self) -> Result<NetworkSpec> {
        let ham = DistortionMeasure::hamming(2)?;
        let bsc = |p: f64| -> Result<ChannelModel> { Ok(ChannelModel::Dmc { matrix: Dmc::bsc(p)? }) };
        match self {
            PatchBase::UncodedLink { crossover, .. } => {
                point_to_point(Pmf::bernoulli(0.5)?, bsc(*crossover)?, ham, Target::Lossless)
            }
            PatchBase::UncodedPair { rho, crossovers, .. } => pair_network(*rho, (bsc(crossovers.0)?, bsc(crossovers.1)?)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PatchBase::UncodedLink { len, .. } | PatchBase::UncodedPair { len, .. } => *len,
        }
    }
}

/// DSBS pair with both sources demanded losslessly at the sink.
pub fn pair_network(rho: f64, links: (ChannelModel, ChannelModel)) -> Result<NetworkSpec> {
    let ham = DistortionMeasure::hamming(2)?;
    two_sources_one_sink(JointPmf::dsbs(rho)?.as_pmf(), (2, 2), links, (ham.clone(), ham), Target::Lossless)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Capacity {
        channel: ChannelRecord,
    },
    Rd {
        source: Vec<f64>,
        measure: MeasureRecord,
        distortions: Vec<f64>,
    },
    /// Rates are given as margins over `I(X;Y)`.
    Emulate {
        channel: ChannelRecord,
        input: Vec<f64>,
        margins: Vec<f64>,
        lengths: Vec<usize>,
        epsilon: f64,
    },
    Separate {
        network: SeparateNetwork,
    },
    Patch {
        base: PatchBase,
        sessions: usize,
        pilot_sessions: usize,
        margin: f64,
        inner_bits: u32,
        delta: f64,
        #[serde(default = "default_candidates")]
        candidates: usize,
    },
    AwgnSweep {
        power: f64,
        noise: f64,
        grid: Vec<(usize, usize)>,
    },
    /// Replicated uncoded code on the DSBS pair over two BSCs.
    StackCheck {
        rho: f64,
        crossovers: (f64, f64),
        len: usize,
        layers: usize,
    },
}

fn default_candidates() -> usize {
    64
}

impl Scenario {
    /// The subcommand that runs this scenario.
    pub fn command(&self) -> &'static str {
        match self {
            Scenario::Capacity { .. } => "capacity",
            Scenario::Rd { .. } => "rd",
            Scenario::Emulate { .. } => "emulate",
            Scenario::Separate { .. } => "separate",
            Scenario::Patch { .. } => "patch",
            Scenario::AwgnSweep { .. } => "awgn-sweep",
            Scenario::StackCheck { .. } => "stack-check",
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn trials(&self) -> Result<usize> {
        match self.trials {
            Some(t) if t > 0 => Ok(t),
            _ => Err(Error::Manifest(format!("scenario {} needs a positive trial count", self.scenario.command()))),
        }
    }
}
