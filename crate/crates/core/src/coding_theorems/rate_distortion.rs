//! Rate-distortion function by Blahut's alternating minimization.
//!
//! For a slope parameter `beta` the iteration converges to the point of the
//! curve where the slope is `-beta` (nats per unit distortion). The target
//! distortion is hit by a geometric sweep over `beta` followed by
//! bisection; where the curve has a straight segment the two bracketing
//! test channels are mixed.

use serde::{Deserialize, Serialize};

use crate::channels::Dmc;
use crate::error::{invalid, Error, Result};
use crate::info::Pmf;

const LN2: f64 = std::f64::consts::LN_2;

/// Slack on the distortion constraint.
pub const DISTORTION_SLACK: f64 = 1e-9;

/// Per-letter distortion table `d(u, uhat)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistortionMeasure {
    rows: usize,
    cols: usize,
    d: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for DistortionMeasure {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DistortionMeasure::new(rows)
    }
}

impl From<DistortionMeasure> for Vec<Vec<f64>> {
    fn from(m: DistortionMeasure) -> Self {
        m.d.chunks(m.cols).map(<[f64]>::to_vec).collect()
    }
}

impl DistortionMeasure {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return invalid("distortion table must be a nonempty rectangle");
        }
        let d = rows.concat();
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("distortions must be finite and nonnegative");
        }
        Ok(DistortionMeasure { rows: r, cols: c, d })
    }

    pub fn hamming(k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("empty alphabet");
        }
        let d = (0..k * k)
            .map(|i| if i / k == i % k { 0.0 } else { 1.0 })
            .collect();
        Ok(DistortionMeasure { rows: k, cols: k, d })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.d[u * self.cols + v]
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }

    /// Square table with d(u, v) = 0 exactly when u = v.
    pub fn is_faithful(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|u| (0..self.cols).all(|v| (self.get(u, v) == 0.0) == (u == v)))
    }

    /// Smallest distortion between distinct symbols, for faithful tables.
    pub fn d_min(&self) -> Option<f64> {
        if !self.is_faithful() {
            return None;
        }
        Some(
            (0..self.rows)
                .flat_map(|u| (0..self.cols).filter(move |&v| v != u).map(move |v| (u, v)))
                .map(|(u, v)| self.get(u, v))
                .fold(f64::INFINITY, f64::min),
        )
    }

    /// Average distortion between two equal-length sequences.
    pub fn average(&self, u: &[usize], v: &[usize]) -> Result<f64> {
        if u.len() != v.len() || u.is_empty() {
            return invalid("sequences must be nonempty and of equal length");
        }
        if u.iter().any(|&a| a >= self.rows) || v.iter().any(|&b| b >= self.cols) {
            return invalid("symbol outside the distortion table");
        }
        Ok(self.total(u, v) / u.len() as f64)
    }

    /// Sum of per-letter distortions, left to right.
    pub(crate) fn total(&self, u: &[usize], v: &[usize]) -> f64 {
        u.iter().zip(v).map(|(&a, &b)| self.get(a, b)).sum()
    }

    /// Expected distortion of the constant reconstruction `v`.
    fn constant_cost(&self, p: &[f64], v: usize) -> f64 {
        p.iter().enumerate().map(|(u, pu)| pu * self.get(u, v)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdResult {
    /// Bits per source symbol.
    pub rate: f64,
    pub test_channel: Dmc,
    pub distortion_achieved: f64,
    /// Slope parameter of the returned point (infinite at the zero-excess
    /// end of the curve, zero at the zero-rate end).
    pub beta: f64,
}

/// Smallest and largest useful distortions for `p`.
pub fn distortion_range(p: &Pmf, d: &DistortionMeasure) -> (f64, f64) {
    let dmin = (0..d.rows)
        .map(|u| p.get(u) * (0..d.cols).map(|v| d.get(u, v)).fold(f64::INFINITY, f64::min))
        .sum();
    let dmax = (0..d.cols)
        .map(|v| d.constant_cost(p.probs(), v))
        .fold(f64::INFINITY, f64::min);
    (dmin, dmax)
}

/// Reduced problem over the support of the source, with distortions
/// shifted so every row has minimum 0.
struct Problem {
    p: Vec<f64>,
    /// shifted distortion, support rows x cols
    d: Vec<f64>,
    cols: usize,
    shift: f64,
}

/// One converged point of the parametric curve.
#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    /// test channel, support rows x cols
    cond: Vec<f64>,
    /// distortion in the shifted measure
    dist: f64,
    /// I(U; Uhat) in bits
    rate: f64,
}

impl Problem {
    fn kernel(&self, beta: Option<f64>) -> Vec<f64> {
        self.d
            .iter()
            .map(|&v| match beta {
                Some(b) => (-b * v).exp(),
                None => {
                    if v <= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }

    fn evaluate(&self, q: &[f64], k: &[f64]) -> Point {
        let n = self.p.len();
        let m = self.cols;
        let mut cond = vec![0.0; n * m];
        for u in 0..n {
            let row = &mut cond[u * m..(u + 1) * m];
            let mut z = 0.0;
            for v in 0..m {
                row[v] = q[v] * k[u * m + v];
                z += row[v];
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let mut out = vec![0.0; m];
        for u in 0..n {
            for v in 0..m {
                out[v] += self.p[u] * cond[u * m + v];
            }
        }
        let mut rate = 0.0;
        let mut dist = 0.0;
        for u in 0..n {
            for v in 0..m {
                let c = cond[u * m + v];
                if c > 0.0 {
                    rate += self.p[u] * c * (c / out[v]).ln();
                    dist += self.p[u] * c * self.d[u * m + v];
                }
            }
        }
        Point {
            q: q.to_vec(),
            cond,
            dist,
            rate: (rate / LN2).max(0.0),
        }
    }

    /// Blahut iteration for one kernel; stops when the rate exceeds the
    /// certified lower bound on R(dist) by at most `tol` bits.
    fn solve(&self, beta: Option<f64>, q0: &[f64], tol: f64, max_iter: usize) -> Result<Point> {
        match self.iterate(beta, q0, tol, max_iter) {
            (pt, None) => Ok(pt),
            (pt, Some(gap)) => Err(Error::Convergence {
                iterations: max_iter,
                best: pt.rate,
                gap,
            }),
        }
    }

    /// The iteration behind `solve`; returns the last iterate and, when it
    /// did not converge, its gap.
    fn iterate(&self, beta: Option<f64>, q0: &[f64], tol: f64, max_iter: usize) -> (Point, Option<f64>) {
        let n = self.p.len();
        let m = self.cols;
        let k = self.kernel(beta);
        let lnk: Vec<f64> = k.iter().map(|&x| if x > 0.0 { x.ln() } else { 0.0 }).collect();
        let mut q = q0.to_vec();
        let mut lambda = vec![0.0; n];
        let mut c = vec![0.0; m];
        for it in 0..=max_iter {
            for u in 0..n {
                let s: f64 = (0..m).map(|v| q[v] * k[u * m + v]).sum();
                lambda[u] = 1.0 / s;
            }
            for v in 0..m {
                c[v] = (0..n).map(|u| self.p[u] * lambda[u] * k[u * m + v]).sum();
            }
            let pt = self.evaluate(&q, &k);
            // sum p Q ln K, equal to -beta * dist for the exponential kernel
            let mut plk = 0.0;
            for u in 0..n {
                for v in 0..m {
                    let cv = pt.cond[u * m + v];
                    if cv > 0.0 {
                        plk += self.p[u] * cv * lnk[u * m + v];
                    }
                }
            }
            let max_lnc = c
                .iter()
                .zip(&q)
                .map(|(&cv, _)| cv.ln())
                .fold(f64::NEG_INFINITY, f64::max);
            let lower = plk + self.p.iter().zip(&lambda).map(|(pu, l)| pu * l.ln()).sum::<f64>() - max_lnc;
            let gap = pt.rate - lower.max(0.0) / LN2;
            if gap <= tol {
                return (pt, None);
            }
            if it == max_iter {
                return (pt, Some(gap));
            }
            for v in 0..m {
                q[v] *= c[v];
            }
            let z: f64 = q.iter().sum();
            q.iter_mut().for_each(|x| *x /= z);
        }
        unreachable!()
    }
}

fn mix(a: &Point, b: &Point, t: f64, prob: &Problem) -> Point {
    // t * a + (1 - t) * b, rate recomputed exactly
    let cond: Vec<f64> = a.cond.iter().zip(&b.cond).map(|(x, y)| t * x + (1.0 - t) * y).collect();
    let n = prob.p.len();
    let m = prob.cols;
    let mut out = vec![0.0; m];
    for u in 0..n {
        for v in 0..m {
            out[v] += prob.p[u] * cond[u * m + v];
        }
    }
    let mut rate = 0.0;
    let mut dist = 0.0;
    for u in 0..n {
        for v in 0..m {
            let c = cond[u * m + v];
            if c > 0.0 {
                rate += prob.p[u] * c * (c / out[v]).ln();
                dist += prob.p[u] * c * prob.d[u * m + v];
            }
        }
    }
    Point {
        q: out,
        cond,
        dist,
        rate: (rate / LN2).max(0.0),
    }
}

/// R(D) in bits with the test channel attaining it.
pub fn ba_rate_distortion(
    src: &Pmf,
    d: &DistortionMeasure,
    d_target: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RdResult> {
    if src.len() != d.rows {
        return invalid("source alphabet does not match the distortion table");
    }
    if !(d_target >= 0.0) || !d_target.is_finite() {
        return invalid(format!("target distortion {d_target} must be finite and nonnegative"));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let (dmin, dmax) = distortion_range(src, d);
    if d_target < dmin - DISTORTION_SLACK {
        return invalid(format!("target {d_target} below the least achievable distortion {dmin}"));
    }
    let m = d.cols;
    let support: Vec<usize> = (0..d.rows).filter(|&u| src.get(u) > 0.0).collect();
    let row_min: Vec<f64> = (0..d.rows)
        .map(|u| (0..m).map(|v| d.get(u, v)).fold(f64::INFINITY, f64::min))
        .collect();
    let argmin_row = |u: usize| (0..m).find(|&v| d.get(u, v) == row_min[u]).unwrap_or(0);

    let assemble = |cond: &[f64], dist: f64, rate: f64, beta: f64| -> RdResult {
        let mut w = vec![0.0; d.rows * m];
        let mut si = 0;
        for u in 0..d.rows {
            if si < support.len() && support[si] == u {
                w[u * m..(u + 1) * m].copy_from_slice(&cond[si * m..(si + 1) * m]);
                si += 1;
            } else {
                w[u * m + argmin_row(u)] = 1.0;
            }
        }
        RdResult {
            rate,
            test_channel: Dmc::from_flat_unchecked(d.rows, m, w),
            distortion_achieved: dist,
            beta,
        }
    };

    if d_target >= dmax {
        let v = (0..m)
            .min_by(|&a, &b| {
                d.constant_cost(src.probs(), a)
                    .partial_cmp(&d.constant_cost(src.probs(), b))
                    .unwrap()
            })
            .unwrap();
        let mut cond = vec![0.0; support.len() * m];
        for i in 0..support.len() {
            cond[i * m + v] = 1.0;
        }
        return Ok(assemble(&cond, dmax, 0.0, 0.0));
    }

    let prob = Problem {
        p: support.iter().map(|&u| src.get(u)).collect(),
        d: support
            .iter()
            .flat_map(|&u| (0..m).map(move |v| (u, v)))
            .map(|(u, v)| d.get(u, v) - row_min[u])
            .collect(),
        cols: m,
        shift: dmin,
    };
    let target = d_target - prob.shift;
    let uniform = vec![1.0 / m as f64; m];

    if target <= DISTORTION_SLACK {
        let pt = prob.solve(None, &uniform, tol, max_iter)?;
        return Ok(assemble(&pt.cond, pt.dist + prob.shift, pt.rate, f64::INFINITY));
    }

    // geometric sweep for a bracket: lo has distortion above target, hi at or below
    let mut q = uniform.clone();
    let mut lo: Option<(f64, Point)> = None;
    let mut hi: Option<(f64, Point)> = None;
    let mut beta = 1.0 / 64.0;
    while beta < 1e9 {
        // slopes near the rate-zero end converge slowly; a bracket only
        // needs the distortion side, so unconverged iterates are kept
        let (pt, _) = prob.iterate(Some(beta), &q, tol * 0.25, max_iter);
        q = pt.q.clone();
        if pt.dist <= target {
            let pt = prob.solve(Some(beta), &q, tol * 0.25, max_iter)?;
            hi = Some((beta, pt));
            break;
        }
        lo = Some((beta, pt));
        beta *= 2.0;
    }
    let (mut bh, mut ph) = match hi {
        Some(h) => h,
        None => {
            // the curve is essentially flat down to the zero-excess end
            let pt = prob.solve(None, &q, tol, max_iter)?;
            return Ok(assemble(&pt.cond, pt.dist + prob.shift, pt.rate, f64::INFINITY));
        }
    };
    let (mut bl, mut pl) = match lo {
        Some(l) => l,
        None => {
            // even the smallest slope is below target: the rate-0 end is close
            let (zero, _) = prob.iterate(Some(0.0), &uniform, tol * 0.25, max_iter);
            (0.0, zero)
        }
    };

    for _ in 0..200 {
        let excess = bh * (target - ph.dist) / LN2;
        if excess <= 0.25 * tol && target - ph.dist <= DISTORTION_SLACK.max(target * 1e-12) {
            break;
        }
        if excess <= 0.25 * tol {
            break;
        }
        if bh - bl <= 1e-13 * bh {
            break;
        }
        let mid = 0.5 * (bl + bh);
        let (pt, gap) = prob.iterate(Some(mid), &ph.q, tol * 0.25, max_iter);
        if pt.dist <= target {
            bh = mid;
            ph = match gap {
                None => pt,
                Some(_) => prob.solve(Some(mid), &pt.q, tol * 0.25, max_iter)?,
            };
        } else {
            bl = mid;
            pl = pt;
        }
    }
    let excess = bh * (target - ph.dist) / LN2;
    if excess > 0.25 * tol && pl.dist > ph.dist {
        // straight segment between the brackets: time-share
        let t = ((target - ph.dist) / (pl.dist - ph.dist)).clamp(0.0, 1.0);
        let mixed = mix(&pl, &ph, t, &prob);
        if mixed.dist <= target + DISTORTION_SLACK {
            ph = mixed;
        }
    }
    Ok(assemble(&ph.cond, ph.dist + prob.shift, ph.rate, bh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::h2;

    fn bern_half() -> Pmf {
        Pmf::uniform(2).unwrap()
    }

    #[test]
    fn binary_hamming_points() {
        let d = DistortionMeasure::hamming(2).unwrap();
        let r0 = ba_rate_distortion(&bern_half(), &d, 0.0, 1e-9, 100_000).unwrap();
        assert!((r0.rate - 1.0).abs() < 1e-9);
        let r5 = ba_rate_distortion(&bern_half(), &d, 0.5, 1e-9, 100_000).unwrap();
        assert_eq!(r5.rate, 0.0);
        let r1 = ba_rate_distortion(&bern_half(), &d, 0.1, 1e-9, 100_000).unwrap();
        assert!((r1.rate - (1.0 - h2(0.1))).abs() < 1e-6, "{}", r1.rate);
        assert!(r1.distortion_achieved <= 0.1 + 1e-9);
    }

    #[test]
    fn biased_source_closed_form() {
        // R(D) = h(p) - h(D) for D <= min(p, 1-p)
        let p = Pmf::bernoulli(0.2).unwrap();
        let d = DistortionMeasure::hamming(2).unwrap();
        for &t in &[0.01, 0.05, 0.1, 0.15] {
            let r = ba_rate_distortion(&p, &d, t, 1e-9, 100_000).unwrap();
            assert!((r.rate - (h2(0.2) - h2(t))).abs() < 1e-6, "D={t}: {}", r.rate);
        }
    }

    #[test]
    fn zero_mass_symbols_reinserted() {
        let p = Pmf::new(vec![0.5, 0.0, 0.5]).unwrap();
        let d = DistortionMeasure::hamming(3).unwrap();
        let r = ba_rate_distortion(&p, &d, 0.0, 1e-9, 100_000).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-8);
        assert_eq!(r.test_channel.inputs(), 3);
        assert_eq!(r.test_channel.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn infeasible_target() {
        let p = bern_half();
        let d = DistortionMeasure::new(vec![vec![0.2, 1.0], vec![1.0, 0.2]]).unwrap();
        assert!(ba_rate_distortion(&p, &d, 0.1, 1e-9, 1000).is_err());
        let r = ba_rate_distortion(&p, &d, 0.2, 1e-9, 100_000).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-8);
    }

    #[test]
    fn faithfulness() {
        let h = DistortionMeasure::hamming(3).unwrap();
        assert!(h.is_faithful());
        assert_eq!(h.d_min(), Some(1.0));
        let nf = DistortionMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(!nf.is_faithful());
        assert_eq!(nf.d_min(), None);
    }
}
