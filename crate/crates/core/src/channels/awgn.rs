//! Additive white Gaussian noise links and their quantized versions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::dmc::Dmc;
use super::rng::RngStream;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwgnSpec {
    pub power: f64,
    pub noise: f64,
}

impl AwgnSpec {
    pub fn new(power: f64, noise: f64) -> Result<Self> {
        if !(power > 0.0 && noise > 0.0 && power.is_finite() && noise.is_finite()) {
            return invalid(format!("need P > 0 and N > 0, got P={power} N={noise}"));
        }
        Ok(AwgnSpec { power, noise })
    }
}

/// 0.5 log2(1 + P/N) bits per use.
pub fn awgn_capacity(spec: &AwgnSpec) -> f64 {
    0.5 * (1.0 + spec.power / spec.noise).log2()
}

/// y = x + z with z i.i.d. N(0, noise). The per-symbol power contract is the
/// caller's; see [`check_power`].
pub fn awgn_transmit(spec: &AwgnSpec, xs: &[f64], rng: &mut RngStream) -> Vec<f64> {
    let sd = spec.noise.sqrt();
    xs.iter().map(|&x| x + sd * rng.standard_normal()).collect()
}

/// Largest per-position mean square over a set of equal-length codewords.
/// A codebook meets the per-symbol power contract when this is `<= P`.
pub fn max_position_power(codewords: &[Vec<f64>]) -> Result<f64> {
    let Some(n) = codewords.first().map(Vec::len) else {
        return invalid("empty codebook");
    };
    if codewords.iter().any(|c| c.len() != n) {
        return invalid("codewords of unequal length");
    }
    let m = codewords.len() as f64;
    Ok((0..n)
        .map(|t| codewords.iter().map(|c| c[t] * c[t]).sum::<f64>() / m)
        .fold(0.0, f64::max))
}

pub fn check_power(spec: &AwgnSpec, codewords: &[Vec<f64>]) -> Result<()> {
    let p = max_position_power(codewords)?;
    if p > spec.power * (1.0 + 1e-12) {
        return invalid(format!("per-position power {p} exceeds P={}", spec.power));
    }
    Ok(())
}

/// The grid with step 1/sqrt(i) and levels -i..=i, rounding toward zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantizer {
    index: usize,
}

impl Quantizer {
    pub fn new(index: usize) -> Result<Self> {
        if index == 0 {
            return invalid("quantizer index must be positive");
        }
        Ok(Quantizer { index })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.index as f64).sqrt()
    }

    pub fn num_levels(&self) -> usize {
        2 * self.index + 1
    }

    /// Level with signed grid position `k` in `-i..=i`.
    pub fn level(&self, k: i64) -> f64 {
        k as f64 * self.step()
    }

    /// All levels in increasing order; symbol `s` is level `s - i`.
    pub fn levels(&self) -> Vec<f64> {
        let i = self.index as i64;
        (-i..=i).map(|k| self.level(k)).collect()
    }

    /// Signed grid position of the quantized value.
    pub fn position(&self, x: f64) -> i64 {
        let i = self.index as i64;
        let a = x.abs();
        let mut k = ((a / self.step()).floor() as i64).min(i);
        // guard the float edges so that |level| <= |x| exactly
        while k > 0 && self.level(k) > a {
            k -= 1;
        }
        while k < i && self.level(k + 1) <= a {
            k += 1;
        }
        if x < 0.0 {
            -k
        } else {
            k
        }
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level(self.position(x))
    }

    /// Symbol index in `0..2i+1`.
    pub fn symbol(&self, x: f64) -> usize {
        (self.position(x) + self.index as i64) as usize
    }
}

pub fn quantize(q: &Quantizer, x: f64) -> f64 {
    q.quantize(x)
}

/// Standard normal upper tail Q(z) = P(Z > z).
fn q_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// P(a < Z < b) for Z ~ N(0, 1), computed on whichever side avoids
/// cancellation.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        q_tail(a) - q_tail(b)
    } else if b <= 0.0 {
        q_tail(-b) - q_tail(-a)
    } else {
        1.0 - q_tail(-a) - q_tail(b)
    }
}

/// Preimage `(lo, hi)` of grid position `k` under the toward-zero rule.
/// Open/closed ends do not matter for a continuous law.
fn preimage(q: &Quantizer, k: i64) -> (f64, f64) {
    let i = q.index as i64;
    let d = q.step();
    let v = q.level(k);
    match k {
        0 => (-d, d),
        k if k == i => (v, f64::INFINITY),
        k if k == -i => (f64::NEG_INFINITY, v),
        k if k > 0 => (v, v + d),
        _ => (v - d, v),
    }
}

/// The DMC from input levels of Q[j] to output levels of Q[k] induced by
/// additive Gaussian noise; entry (u, v) is P([u + Z]_k = v).
pub fn discretize_awgn(spec: &AwgnSpec, j: usize, k: usize) -> Result<Dmc> {
    let qin = Quantizer::new(j)?;
    let qout = Quantizer::new(k)?;
    let sd = spec.noise.sqrt();
    let ki = k as i64;
    let mut w = Vec::with_capacity(qin.num_levels() * qout.num_levels());
    for u in qin.levels() {
        let row_start = w.len();
        for pos in -ki..=ki {
            let (lo, hi) = preimage(&qout, pos);
            w.push(normal_interval((lo - u) / sd, (hi - u) / sd).max(0.0));
        }
        let s: f64 = w[row_start..].iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(crate::Error::ContractViolation(format!(
                "discretized row sums to {s}"
            )));
        }
        // absorb the last ulps so that the row is stochastic to 1e-12
        for p in &mut w[row_start..] {
            *p /= s;
        }
    }
    Ok(Dmc::from_flat_unchecked(qin.num_levels(), qout.num_levels(), w))
}

/// Squared input levels of Q[j], the per-symbol cost used for the power
/// constraint on a discretized link.
pub fn level_costs(j: usize) -> Result<Vec<f64>> {
    Ok(Quantizer::new(j)?.levels().iter().map(|v| v * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::rng::{Domain, StreamPath};
    use crate::info::tv_slices;

    #[test]
    fn capacity_formula() {
        let c = |p, n| awgn_capacity(&AwgnSpec::new(p, n).unwrap());
        assert!((c(1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((c(3.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((c(1.0, 0.25) - 1.160964).abs() < 1e-6);
        assert!(AwgnSpec::new(0.0, 1.0).is_err());
    }

    #[test]
    fn quantizer_examples() {
        let q = Quantizer::new(4).unwrap();
        assert_eq!(q.quantize(0.0), 0.0);
        assert_eq!(q.quantize(0.7), 0.5);
        assert_eq!(q.quantize(-3.1), -2.0);
        assert_eq!(q.quantize(-0.7), -0.5);
        assert_eq!(q.quantize(0.5), 0.5);
        assert_eq!(q.num_levels(), 9);
        assert_eq!(q.levels().first(), Some(&-2.0));
    }

    #[test]
    fn quantizer_never_grows_magnitude() {
        for i in 1..40 {
            let q = Quantizer::new(i).unwrap();
            for lv in q.levels() {
                for x in [lv, lv * (1.0 + 1e-15), lv * (1.0 - 1e-15), -lv] {
                    assert!(q.quantize(x).abs() <= x.abs());
                }
            }
        }
    }

    #[test]
    fn one_level_rows_symmetric() {
        let ch = discretize_awgn(&AwgnSpec::new(1.0, 1.0).unwrap(), 1, 1).unwrap();
        assert_eq!((ch.inputs(), ch.outputs()), (3, 3));
        for u in 0..3 {
            for v in 0..3 {
                assert!((ch.get(u, v) - ch.get(2 - u, 2 - v)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_gaussian_cdf_oracle() {
        // independent oracle: midpoint-rule integration of the density
        let spec = AwgnSpec::new(1.0, 0.7).unwrap();
        let ch = discretize_awgn(&spec, 2, 3).unwrap();
        let qout = Quantizer::new(3).unwrap();
        let qin = Quantizer::new(2).unwrap();
        let sd = spec.noise.sqrt();
        for (a, u) in qin.levels().into_iter().enumerate() {
            let mut cells = vec![0.0; qout.num_levels()];
            let h = 1e-4;
            let mut z: f64 = -12.0;
            while z < 12.0 {
                let zm: f64 = z + 0.5 * h;
                let dens = (-(zm * zm) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cells[qout.symbol(u + sd * zm)] += dens * h;
                z += h;
            }
            for (b, c) in cells.iter().enumerate() {
                assert!((ch.get(a, b) - c).abs() < 1e-3, "cell ({a},{b})");
            }
        }
    }

    #[test]
    fn large_noise_rows_merge() {
        let q = Quantizer::new(2).unwrap();
        let spec = AwgnSpec::new(1.0, 1e4 * q.step() * q.step() * 4.0).unwrap();
        let ch = discretize_awgn(&spec, 2, 2).unwrap();
        for a in 0..ch.inputs() {
            for b in 0..ch.inputs() {
                assert!(tv_slices(ch.row(a), ch.row(b)) <= 0.01);
            }
        }
    }

    #[test]
    fn noise_moments() {
        let spec = AwgnSpec::new(1.0, 1.0).unwrap();
        let n = 100_000;
        let mut r = RngStream::new(3, Domain::ChannelNoise, StreamPath::trial(0));
        let y = awgn_transmit(&spec, &vec![0.0; n], &mut r);
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt());
        // sd of the sample variance is sqrt(2/n) = 0.0045
        assert!((var - 1.0).abs() <= 0.01);
        let y = awgn_transmit(&spec, &vec![2.5; n], &mut r);
        let mean = y.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn power_checker() {
        let spec = AwgnSpec::new(1.0, 1.0).unwrap();
        assert!(check_power(&spec, &[vec![1.0, -1.0], vec![-1.0, 0.5]]).is_ok());
        assert!(check_power(&spec, &[vec![1.5, 0.0], vec![1.0, 0.0]]).is_err());
    }
}
