//! Stacked run against its unraveled single-layer replay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::netsim::{run_network, unravel, NetworkCode, NetworkSpec, PathRemap, RunConfig, TraceRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackCheckRow {
    pub trial: u64,
    /// Channel uses compared.
    pub uses: usize,
    pub trace_match: bool,
    pub distortion_match: bool,
    pub reconstruction_match: bool,
}

impl StackCheckRow {
    pub fn exact(&self) -> bool {
        self.trace_match && self.distortion_match && self.reconstruction_match
    }
}

/// Stacked trace in the unraveled clock: layer `l` at round `r` becomes
/// time `(r-1) N + l + 1` of layer 0.
fn to_single_layer(trace: &[TraceRow], depth: usize) -> Vec<TraceRow> {
    let mut rows: Vec<TraceRow> = trace
        .iter()
        .map(|r| TraceRow {
            layer: 0,
            time: (r.time - 1) * depth + r.layer + 1,
            ..*r
        })
        .collect();
    rows.sort_by_key(|r| (r.time, r.edge));
    rows
}

/// Runs `code` stacked and unraveled on the same seed and trial and
/// compares transcripts, distortions and reconstructions.
pub fn stack_check<C: NetworkCode + Clone>(net: &NetworkSpec, code: &C, seed: u64, trials: usize) -> Result<Vec<StackCheckRow>> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let depth = code.layers();
    let single = unravel(code.clone());
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let stacked = run_network(net, code, &RunConfig::new(seed, trial))?;
            let cfg = RunConfig {
                remap: PathRemap::Unraveled { layers: depth },
                ..RunConfig::new(seed, trial)
            };
            let flat = run_network(net, &single, &cfg)?;
            let want = to_single_layer(&stacked.trace, depth);
            let mut got = flat.trace.clone();
            got.sort_by_key(|r| (r.time, r.edge));
            let reconstruction_match = (0..net.demands.len()).all(|d| flat.reconstruction(d) == stacked.reconstruction(d));
            Ok(StackCheckRow {
                trial,
                uses: got.len(),
                trace_match: got == want,
                distortion_match: flat.distortion == stacked.distortion,
                reconstruction_match,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::Dmc;
    use crate::coding_theorems::DistortionMeasure;
    use crate::info::Pmf;
    use crate::netsim::{point_to_point, stack, ChannelModel, Target, UncodedCode};

    #[test]
    fn replicated_uncoded_code_matches() {
        let net = point_to_point(
            Pmf::uniform(2).unwrap(),
            ChannelModel::Dmc {
                matrix: Dmc::bsc(0.2).unwrap(),
            },
            DistortionMeasure::hamming(2).unwrap(),
            Target::Lossless,
        )
        .unwrap();
        let code = stack(UncodedCode::identity(&net, 6).unwrap(), 3).unwrap();
        let rows = stack_check(&net, &code, 4, 3).unwrap();
        assert!(rows.iter().all(StackCheckRow::exact));
        assert_eq!(rows[0].uses, 18);
    }
}
