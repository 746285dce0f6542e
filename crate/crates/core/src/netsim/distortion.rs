use serde::{Deserialize, Serialize};

use super::network::NetworkSpec;
use crate::error::{invalid, Result};
use crate::info::Sequence;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionEntry {
    pub from: usize,
    pub to: usize,
    pub distortion: f64,
}

/// One entry per demand, in demand order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistortionMatrix {
    pub entries: Vec<DistortionEntry>,
}

impl DistortionMatrix {
    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map(|e| e.distortion)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.distortion).collect()
    }
}

/// Average per-letter distortion of each demand. `sources` is indexed by
/// node and `reconstructions` by demand.
pub fn measure_distortion(
    net: &NetworkSpec,
    sources: &[Sequence],
    reconstructions: &[Sequence],
) -> Result<DistortionMatrix> {
    if sources.len() != net.nodes.len() || reconstructions.len() != net.demands.len() {
        return invalid("one source block per node and one reconstruction per demand");
    }
    let entries = net
        .demands
        .iter()
        .zip(reconstructions)
        .map(|(d, rec)| {
            Ok(DistortionEntry {
                from: d.from,
                to: d.to,
                distortion: d.measure.average(&sources[d.from], rec)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DistortionMatrix { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding_theorems::DistortionMeasure;
    use crate::info::Pmf;
    use crate::netsim::{point_to_point, ChannelModel, Target};

    fn net() -> NetworkSpec {
        point_to_point(
            Pmf::bernoulli(0.5).unwrap(),
            ChannelModel::BitPipe { capacity: 1.0 },
            DistortionMeasure::hamming(2).unwrap(),
            Target::Lossless,
        )
        .unwrap()
    }

    #[test]
    fn exact_and_complement() {
        let net = net();
        let u = vec![0, 1, 1, 0, 1];
        let m = measure_distortion(&net, &[u.clone(), vec![0; 5]], &[u.clone()]).unwrap();
        assert_eq!(m.get(0, 1), Some(0.0));
        let c: Vec<usize> = u.iter().map(|b| 1 - b).collect();
        let m = measure_distortion(&net, &[u.clone(), vec![0; 5]], &[c]).unwrap();
        assert_eq!(m.values(), vec![1.0]);
        assert!(measure_distortion(&net, &[u, vec![0; 5]], &[vec![0; 4]]).is_err());
    }

    #[test]
    fn constant_guess_of_fair_bits() {
        let net = net();
        let s = net.sample_sources(10_000, 1, 9, 0);
        let m = measure_distortion(&net, &s[0], &[vec![0; 10_000]]).unwrap();
        // binomial oracle: mean 0.5, sd 0.005
        assert!((m.values()[0] - 0.5).abs() < 0.015);
    }
}
