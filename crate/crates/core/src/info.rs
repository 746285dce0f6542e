//! Finite-alphabet distributions, empirical types, entropies and strong
//! typicality. All logarithms are base 2.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Normalization slack accepted by [`Pmf::new`] and [`JointPmf::new`].
pub const PMF_TOL: f64 = 1e-12;

/// A sequence of symbol indices.
pub type Sequence = Vec<usize>;

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return invalid("empty distribution");
    }
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return invalid(format!("probability {p} is negative or not finite"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PMF_TOL {
        return invalid(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// `p log2 p` with the convention `0 log 0 = 0`.
#[inline]
pub fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    -plogp(p) - plogp(1.0 - p)
}

/// Probability mass function on `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Vec<f64> {
        p.probs
    }
}

impl Pmf {
    /// Validates without renormalizing.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs)?;
        Ok(Pmf { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("empty alphabet");
        }
        Ok(Pmf {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn point(k: usize, x: usize) -> Result<Self> {
        if x >= k {
            return invalid(format!("symbol {x} outside alphabet of size {k}"));
        }
        let mut probs = vec![0.0; k];
        probs[x] = 1.0;
        Ok(Pmf { probs })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Pmf::new(vec![1.0 - p, p])
    }

    /// Normalizes nonnegative weights. Used where the mass is known to be
    /// a ratio of counts or the output of an iteration.
    pub(crate) fn from_weights(w: &[f64]) -> Self {
        let s: f64 = w.iter().sum();
        Pmf {
            probs: w.iter().map(|x| x / s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// Inverse-CDF draw from a uniform `u` in [0, 1).
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Joint distribution on `0..rows` x `0..cols`, row major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || probs.len() != rows * cols {
            return invalid(format!(
                "joint table of {} entries does not fit {rows}x{cols}",
                probs.len()
            ));
        }
        check_probs(&probs)?;
        Ok(JointPmf { rows, cols, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return invalid("ragged joint table");
        }
        JointPmf::new(r, c, rows.concat())
    }

    pub fn product(p: &Pmf, q: &Pmf) -> Self {
        let mut probs = Vec::with_capacity(p.len() * q.len());
        for &a in p.probs() {
            for &b in q.probs() {
                probs.push(a * b);
            }
        }
        JointPmf {
            rows: p.len(),
            cols: q.len(),
            probs,
        }
    }

    /// Doubly symmetric binary source: uniform bit and an independent flip.
    pub fn dsbs(flip: f64) -> Result<Self> {
        JointPmf::new(
            2,
            2,
            vec![
                0.5 * (1.0 - flip),
                0.5 * flip,
                0.5 * flip,
                0.5 * (1.0 - flip),
            ],
        )
    }

    pub(crate) fn from_weights(rows: usize, cols: usize, w: &[f64]) -> Self {
        let s: f64 = w.iter().sum();
        JointPmf {
            rows,
            cols,
            probs: w.iter().map(|x| x / s).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.cols + y]
    }

    pub fn marginal_x(&self) -> Pmf {
        let w: Vec<f64> = (0..self.rows)
            .map(|x| (0..self.cols).map(|y| self.get(x, y)).sum())
            .collect();
        Pmf { probs: w }
    }

    pub fn marginal_y(&self) -> Pmf {
        let w: Vec<f64> = (0..self.cols)
            .map(|y| (0..self.rows).map(|x| self.get(x, y)).sum())
            .collect();
        Pmf { probs: w }
    }

    /// The same table with the roles of the two coordinates exchanged.
    pub fn transpose(&self) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len());
        for y in 0..self.cols {
            for x in 0..self.rows {
                probs.push(self.get(x, y));
            }
        }
        JointPmf {
            rows: self.cols,
            cols: self.rows,
            probs,
        }
    }

    /// Flattened view as a distribution on pairs.
    pub fn as_pmf(&self) -> Pmf {
        Pmf {
            probs: self.probs.clone(),
        }
    }
}

fn check_symbols(xs: &[usize], k: usize) -> Result<()> {
    match xs.iter().find(|&&x| x >= k) {
        Some(x) => invalid(format!("symbol {x} outside alphabet of size {k}")),
        None => Ok(()),
    }
}

/// Symbol counts of `xs`.
pub fn counts(xs: &[usize], alphabet_size: usize) -> Result<Vec<usize>> {
    check_symbols(xs, alphabet_size)?;
    let mut c = vec![0; alphabet_size];
    for &x in xs {
        c[x] += 1;
    }
    Ok(c)
}

/// Empirical distribution (type) of a sequence.
pub fn empirical(xs: &[usize], alphabet_size: usize) -> Result<Pmf> {
    if xs.is_empty() {
        return invalid("empirical distribution of an empty sequence");
    }
    let n = xs.len() as f64;
    let c = counts(xs, alphabet_size)?;
    Ok(Pmf {
        probs: c.into_iter().map(|k| k as f64 / n).collect(),
    })
}

/// Joint type of two sequences of equal length.
pub fn joint_empirical(
    xs: &[usize],
    ys: &[usize],
    x_size: usize,
    y_size: usize,
) -> Result<JointPmf> {
    if xs.len() != ys.len() {
        return invalid(format!("lengths {} and {} differ", xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return invalid("joint type of empty sequences");
    }
    let c = joint_counts(xs, ys, x_size, y_size)?;
    let n = xs.len() as f64;
    Ok(JointPmf {
        rows: x_size,
        cols: y_size,
        probs: c.into_iter().map(|k| k as f64 / n).collect(),
    })
}

pub(crate) fn joint_counts(
    xs: &[usize],
    ys: &[usize],
    x_size: usize,
    y_size: usize,
) -> Result<Vec<usize>> {
    check_symbols(xs, x_size)?;
    check_symbols(ys, y_size)?;
    let mut c = vec![0; x_size * y_size];
    for (&x, &y) in xs.iter().zip(ys) {
        c[x * y_size + y] += 1;
    }
    Ok(c)
}

pub fn total_variation(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return invalid(format!("alphabets {} and {} differ", p.len(), q.len()));
    }
    Ok(tv_slices(p.probs(), q.probs()))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total variation between two joint tables of the same shape.
pub fn joint_total_variation(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.rows != q.rows || p.cols != q.cols {
        return invalid("joint tables of different shapes");
    }
    Ok(tv_slices(&p.probs, &q.probs))
}

pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(p.probs())
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    // clamp away the -0.0 of a degenerate law
    (-p.iter().map(|&x| plogp(x)).sum::<f64>()).max(0.0)
}

pub fn joint_entropy(j: &JointPmf) -> f64 {
    entropy_of(&j.probs)
}

pub fn mutual_information(j: &JointPmf) -> f64 {
    let hx = entropy(&j.marginal_x());
    let hy = entropy(&j.marginal_y());
    (hx + hy - joint_entropy(j)).max(0.0)
}

/// H(X|Y) for the joint law of (X, Y).
pub fn conditional_entropy(j: &JointPmf) -> f64 {
    (joint_entropy(j) - entropy(&j.marginal_y())).max(0.0)
}

/// Strong typicality parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub epsilon: f64,
    pub n: usize,
}

impl TypicalityParams {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        if !(epsilon > 0.0) || n == 0 {
            return invalid("typicality needs epsilon > 0 and n >= 1");
        }
        Ok(TypicalityParams { epsilon, n })
    }
}

/// Whether a count `c` out of `n` is within `eps * p` of `p`.
#[inline]
pub(crate) fn count_ok(c: usize, n: usize, p: f64, eps: f64) -> bool {
    (c as f64 / n as f64 - p).abs() <= eps * p
}

/// Strong typicality: `|pi(x) - p(x)| <= eps p(x)` for every symbol.
pub fn is_typical(xs: &[usize], p: &Pmf, eps: f64) -> bool {
    if xs.is_empty() {
        return false;
    }
    let Ok(c) = counts(xs, p.len()) else {
        return false;
    };
    c.iter()
        .zip(p.probs())
        .all(|(&k, &q)| count_ok(k, xs.len(), q, eps))
}

/// Joint strong typicality with respect to `j`.
pub fn is_jointly_typical(xs: &[usize], ys: &[usize], j: &JointPmf, eps: f64) -> Result<bool> {
    if xs.len() != ys.len() {
        return invalid(format!("lengths {} and {} differ", xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Ok(false);
    }
    let Ok(c) = joint_counts(xs, ys, j.rows, j.cols) else {
        return Ok(false);
    };
    Ok(c
        .iter()
        .zip(j.probs())
        .all(|(&k, &q)| count_ok(k, xs.len(), q, eps)))
}

/// Inclusive range of counts `c` out of `n` that pass [`count_ok`], or
/// `None` when no integer does.
pub(crate) fn typical_count_range(n: usize, p: f64, eps: f64) -> Option<(usize, usize)> {
    let lo_f = ((1.0 - eps) * p * n as f64).max(0.0);
    let hi_f = ((1.0 + eps) * p * n as f64).min(n as f64);
    if hi_f < lo_f {
        return None;
    }
    // the float bounds are only a guess; the predicate decides the edges
    let from = (lo_f.floor() as usize).saturating_sub(1);
    let to = ((hi_f.ceil() as usize) + 1).min(n);
    let mut ok = (from..=to).filter(|&c| count_ok(c, n, p, eps));
    let lo = ok.next()?;
    let hi = ok.last().unwrap_or(lo);
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn empirical_counts() {
        let p = empirical(&[0, 1, 1, 2, 2, 2], 3).unwrap();
        assert_eq!(p.probs(), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
        assert_eq!(empirical(&[0, 0, 0], 2).unwrap().probs(), &[1.0, 0.0]);
        assert!(empirical(&[], 2).is_err());
        assert!(empirical(&[3], 2).is_err());
    }

    #[test]
    fn joint_empirical_counts() {
        let j = joint_empirical(&[0, 1, 0, 1], &[0, 0, 1, 1], 2, 2).unwrap();
        assert_eq!(j.probs(), &[0.25; 4]);
        let j = joint_empirical(&[0, 0], &[1, 1], 2, 2).unwrap();
        assert_eq!(j.get(0, 1), 1.0);
        assert!(joint_empirical(&[0], &[0, 1], 2, 2).is_err());
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![-0.1, 1.1]).is_err());
        assert!(Pmf::new(vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn tv_examples() {
        let a = Pmf::new(vec![0.5, 0.5]).unwrap();
        let b = Pmf::new(vec![0.6, 0.4]).unwrap();
        assert!(close(total_variation(&a, &b).unwrap(), 0.1, 1e-15));
        let x = Pmf::point(2, 0).unwrap();
        let y = Pmf::point(2, 1).unwrap();
        assert_eq!(total_variation(&x, &y).unwrap(), 1.0);
        assert!(total_variation(&a, &Pmf::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&Pmf::point(2, 0).unwrap()), 0.0);
        assert_eq!(entropy(&Pmf::uniform(2).unwrap()), 1.0);
        let p = Pmf::new(vec![0.9, 0.1]).unwrap();
        let direct = -(0.9f64 * 0.9f64.log2() + 0.1 * 0.1f64.log2());
        assert!(close(entropy(&p), direct, 1e-15));
        assert!(close(entropy(&p), 0.468996, 1e-6));
    }

    #[test]
    fn information_examples() {
        let u = Pmf::uniform(2).unwrap();
        assert!(close(mutual_information(&JointPmf::product(&u, &u)), 0.0, 1e-15));
        let diag = JointPmf::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(close(mutual_information(&diag), 1.0, 1e-15));
        assert!(close(conditional_entropy(&diag), 0.0, 1e-15));
        let bsc = JointPmf::dsbs(0.1).unwrap();
        assert!(close(mutual_information(&bsc), 1.0 - h2(0.1), 1e-12));
        assert!(close(conditional_entropy(&bsc), h2(0.1), 1e-12));
        assert!(close(
            conditional_entropy(&JointPmf::product(&u, &u)),
            1.0,
            1e-15
        ));
    }

    #[test]
    fn typicality_examples() {
        let p = Pmf::uniform(2).unwrap();
        assert!(is_typical(&[0, 1, 0, 1], &p, 1e-9));
        let q = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert!(!is_typical(&[0, 0, 1], &q, 0.5));
        let xs = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        assert!(!is_typical(&xs, &p, 0.1));
        assert!(is_typical(&xs, &p, 0.2));

        let diag = JointPmf::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(is_jointly_typical(&[0, 1], &[0, 1], &diag, 0.01).unwrap());
        assert!(!is_jointly_typical(&[0, 1], &[1, 1], &diag, 0.9).unwrap());
        assert!(is_jointly_typical(&[0], &[0, 1], &diag, 0.1).is_err());
    }

    #[test]
    fn count_range_matches_predicate() {
        for n in [1usize, 7, 24, 100, 1024] {
            for &p in &[0.0, 0.05, 0.1, 0.25, 0.45, 0.5, 1.0] {
                for &eps in &[0.05, 0.1, 0.5, 1.0, 2.0] {
                    let brute: Vec<usize> = (0..=n).filter(|&c| count_ok(c, n, p, eps)).collect();
                    match typical_count_range(n, p, eps) {
                        None => assert!(brute.is_empty(), "n={n} p={p} eps={eps}"),
                        Some((lo, hi)) => {
                            assert_eq!(brute, (lo..=hi).collect::<Vec<_>>(), "n={n} p={p} eps={eps}")
                        }
                    }
                }
            }
        }
    }
}
