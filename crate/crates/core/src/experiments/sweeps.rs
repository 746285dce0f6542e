//! Grid experiments: emulation fidelity and discretized AWGN capacity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{awgn_capacity, discretize_awgn, level_costs, AwgnSpec, Dmc, Domain, RngStream};
use crate::codecs::{emulation_fidelity, FidelityStats};
use crate::coding_theorems::ba_capacity_cost;
use crate::error::{invalid, Result};
use crate::info::{mutual_information, Pmf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub rate: f64,
    /// `R - I(X;Y)`.
    pub margin: f64,
    pub n: usize,
    pub stats: FidelityStats,
}

/// Emulation fidelity on every `(R, N)` cell, rows ordered by rate then
/// blocklength. Each cell draws from its own stream.
pub fn run_emulation_probe(
    ch: &Dmc,
    p_x: &Pmf,
    rates: &[f64],
    lengths: &[usize],
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if rates.is_empty() || lengths.is_empty() {
        return invalid("rate and blocklength grids must be nonempty");
    }
    let info = mutual_information(&ch.joint(p_x)?);
    let cells: Vec<(usize, usize)> = (0..rates.len())
        .flat_map(|i| (0..lengths.len()).map(move |j| (i, j)))
        .collect();
    cells
        .into_par_iter()
        .map(|(i, j)| {
            let (rate, n) = (rates[i], lengths[j]);
            let mut rng = RngStream::keyed(seed, Domain::Experiment, &[0xe7, rate.to_bits(), n as u64]);
            let stats = emulation_fidelity(ch, p_x, rate, n, epsilon, trials, &mut rng)?;
            Ok(ProbeRow {
                rate,
                margin: rate - info,
                n,
                stats,
            })
        })
        .collect()
}

/// Certified gap, in bits, for power-constrained capacities of discretized
/// Gaussian links. Fine grids converge slowly at the library default.
pub const AWGN_TOL: f64 = 1e-5;
pub const AWGN_MAX_ITER: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwgnCell {
    pub j: usize,
    pub k: usize,
    /// Power-constrained capacity of the discretized channel.
    pub capacity: f64,
    pub ceiling: f64,
    pub gap: f64,
}

/// Capacity of `discretize_awgn(spec, j, k)` under the power budget, per
/// grid cell in input order.
pub fn run_awgn_sweep(spec: &AwgnSpec, grid: &[(usize, usize)]) -> Result<Vec<AwgnCell>> {
    if grid.is_empty() {
        return invalid("empty (j, k) grid");
    }
    let ceiling = awgn_capacity(spec);
    grid.par_iter()
        .map(|&(j, k)| {
            let dmc = discretize_awgn(spec, j, k)?;
            let r = ba_capacity_cost(&dmc, &level_costs(j)?, spec.power, AWGN_TOL, AWGN_MAX_ITER)?;
            Ok(AwgnCell {
                j,
                k,
                capacity: r.capacity,
                ceiling,
                gap: r.gap,
            })
        })
        .collect()
}
