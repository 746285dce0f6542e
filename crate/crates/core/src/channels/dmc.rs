use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{invalid, Result};
use crate::info::{JointPmf, Pmf, PMF_TOL};

/// Discrete memoryless channel given by its row-stochastic matrix
/// `w[x][y] = p(y|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Dmc {
    inputs: usize,
    outputs: usize,
    w: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Dmc {
    type Error = crate::Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Dmc::new(rows)
    }
}

impl From<Dmc> for Vec<Vec<f64>> {
    fn from(d: Dmc) -> Self {
        d.w.chunks(d.outputs).map(<[f64]>::to_vec).collect()
    }
}

impl Dmc {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = rows.len();
        let outputs = rows.first().map_or(0, Vec::len);
        if inputs == 0 || outputs == 0 {
            return invalid("channel needs at least one input and one output");
        }
        if rows.iter().any(|r| r.len() != outputs) {
            return invalid("ragged transition matrix");
        }
        Dmc::from_flat(inputs, outputs, rows.concat())
    }

    pub fn from_flat(inputs: usize, outputs: usize, w: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || w.len() != inputs * outputs {
            return invalid("transition table does not match its shape");
        }
        for (x, row) in w.chunks(outputs).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (s - 1.0).abs() > PMF_TOL {
                return invalid(format!("row {x} is not a distribution (sum {s})"));
            }
        }
        Ok(Dmc { inputs, outputs, w })
    }

    /// Rows known to be stochastic up to rounding; no validation.
    pub(crate) fn from_flat_unchecked(inputs: usize, outputs: usize, w: Vec<f64>) -> Self {
        Dmc { inputs, outputs, w }
    }

    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("crossover {p} outside [0, 1]"));
        }
        Dmc::from_flat(2, 2, vec![1.0 - p, p, p, 1.0 - p])
    }

    /// Binary erasure channel; output 2 is the erasure.
    pub fn bec(e: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&e) {
            return invalid(format!("erasure probability {e} outside [0, 1]"));
        }
        Dmc::from_flat(2, 3, vec![1.0 - e, 0.0, e, 0.0, 1.0 - e, e])
    }

    pub fn identity(k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("empty alphabet");
        }
        let mut w = vec![0.0; k * k];
        for x in 0..k {
            w[x * k + x] = 1.0;
        }
        Dmc::from_flat(k, k, w)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.w[x * self.outputs + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.w[x * self.outputs..(x + 1) * self.outputs]
    }

    pub fn flat(&self) -> &[f64] {
        &self.w
    }

    /// p(x, y) = p(x) p(y|x).
    pub fn joint(&self, p_x: &Pmf) -> Result<JointPmf> {
        if p_x.len() != self.inputs {
            return invalid("input law does not match the channel input alphabet");
        }
        let mut w = Vec::with_capacity(self.w.len());
        for x in 0..self.inputs {
            w.extend(self.row(x).iter().map(|p| p * p_x.get(x)));
        }
        Ok(JointPmf::from_weights(self.inputs, self.outputs, &w))
    }

    pub fn output_marginal(&self, p_x: &Pmf) -> Result<Pmf> {
        Ok(self.joint(p_x)?.marginal_y())
    }

    /// Inverse-CDF draw from row `x`.
    #[inline]
    pub fn sample_with(&self, x: usize, u: f64) -> usize {
        let row = self.row(x);
        let mut acc = 0.0;
        let mut last = 0;
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = y;
                if u < acc {
                    return y;
                }
            }
        }
        last
    }

    /// Passes `xs` through the channel, one uniform draw per symbol.
    pub fn transmit(&self, xs: &[usize], rng: &mut RngStream) -> Result<Vec<usize>> {
        if let Some(x) = xs.iter().find(|&&x| x >= self.inputs) {
            return invalid(format!("input symbol {x} outside alphabet of size {}", self.inputs));
        }
        Ok(xs.iter().map(|&x| self.sample_with(x, rng.uniform())).collect())
    }

    /// Whether every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.w.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

/// Free-function form of [`Dmc::transmit`].
pub fn dmc_transmit(ch: &Dmc, xs: &[usize], rng: &mut RngStream) -> Result<Vec<usize>> {
    ch.transmit(xs, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::rng::{Domain, StreamPath};

    fn stream(trial: u64) -> RngStream {
        RngStream::new(5, Domain::ChannelNoise, StreamPath::trial(trial))
    }

    #[test]
    fn identity_passes_through() {
        let ch = Dmc::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let xs = vec![0, 1, 1, 0, 1];
        let ys = ch.transmit(&xs, &mut stream(0)).unwrap();
        assert_eq!(ys, vec![1, 0, 0, 1, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        let ch = Dmc::bsc(0.1).unwrap();
        assert!(ch.transmit(&[0, 2], &mut stream(0)).is_err());
        assert!(Dmc::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Dmc::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn bsc_half_flips_half() {
        let ch = Dmc::bsc(0.5).unwrap();
        let xs = vec![0; 10_000];
        let ys = ch.transmit(&xs, &mut stream(1)).unwrap();
        let flips = ys.iter().filter(|&&y| y == 1).count() as f64 / 1e4;
        assert!((flips - 0.5).abs() < 0.02);
    }

    #[test]
    fn bsc_flip_band() {
        // band of +-0.01 is 3.33 sd of Bin(1e4, 0.1)/1e4; expected misses
        // over 200 runs are about 0.2
        let ch = Dmc::bsc(0.1).unwrap();
        let xs = vec![1; 10_000];
        let mut inside = 0;
        for t in 0..200 {
            let ys = ch.transmit(&xs, &mut stream(100 + t)).unwrap();
            let f = ys.iter().filter(|&&y| y == 0).count() as f64 / 1e4;
            if (f - 0.1).abs() <= 0.01 {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside} of 200 inside the band");
    }

    #[test]
    fn transmit_is_deterministic() {
        let ch = Dmc::bec(0.3).unwrap();
        let xs: Vec<usize> = (0..500).map(|i| i % 2).collect();
        assert_eq!(
            ch.transmit(&xs, &mut stream(9)).unwrap(),
            ch.transmit(&xs, &mut stream(9)).unwrap()
        );
    }

    #[test]
    fn joint_and_marginal() {
        let ch = Dmc::bsc(0.1).unwrap();
        let j = ch.joint(&Pmf::uniform(2).unwrap()).unwrap();
        assert_eq!(j.probs(), &[0.45, 0.05, 0.05, 0.45]);
        let q = ch.output_marginal(&Pmf::new(vec![0.8, 0.2]).unwrap()).unwrap();
        assert!((q.get(1) - (0.8 * 0.1 + 0.2 * 0.9)).abs() < 1e-15);
    }
}
