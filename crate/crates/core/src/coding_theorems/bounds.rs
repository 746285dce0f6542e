use crate::coding_theorems::rate_distortion::{
    ba_rate_distortion, distortion_range, DistortionMeasure,
};
use crate::error::{invalid, Result};
use crate::info::{entropy, h2, Pmf};

/// `h2(eps/d_min) + log2|U| * eps/d_min`, the per-symbol conditional
/// entropy allowance of a code with expected distortion `eps`.
pub fn f_epsilon(eps: f64, d_min: f64, alphabet_size: usize) -> Result<f64> {
    if !(d_min > 0.0) {
        return invalid("d_min must be positive");
    }
    if alphabet_size == 0 {
        return invalid("empty alphabet");
    }
    if !(eps >= 0.0) || eps / d_min >= 0.5 {
        return invalid(format!("need 0 <= eps < d_min/2, got eps={eps} d_min={d_min}"));
    }
    let r = eps / d_min;
    Ok(h2(r) + (alphabet_size as f64).log2() * r)
}

/// Least distortion `D` with `kappa * R(D) <= capacity`, by bisection on D.
pub fn separation_frontier(
    src: &Pmf,
    d: &DistortionMeasure,
    capacity: f64,
    kappa: f64,
) -> Result<f64> {
    if !(capacity >= 0.0) || !(kappa > 0.0) {
        return invalid("need capacity >= 0 and kappa > 0");
    }
    let (dmin, dmax) = distortion_range(src, d);
    if capacity == 0.0 {
        return Ok(dmax);
    }
    let tol = 1e-10;
    let rate = |t: f64| ba_rate_distortion(src, d, t, tol, 100_000).map(|r| r.rate);
    if d.is_faithful() && capacity >= kappa * entropy(src) {
        return Ok(dmin);
    }
    if kappa * rate(dmin)? <= capacity {
        return Ok(dmin);
    }
    let (mut lo, mut hi) = (dmin, dmax);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if kappa * rate(mid)? <= capacity {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_epsilon_examples() {
        assert_eq!(f_epsilon(0.0, 1.0, 2).unwrap(), 0.0);
        assert!((f_epsilon(0.1, 1.0, 2).unwrap() - 0.568996).abs() < 1e-6);
        assert!((f_epsilon(0.25, 1.0, 4).unwrap() - 1.311278).abs() < 1e-6);
        assert!(f_epsilon(0.5, 1.0, 2).is_err());
        assert!(f_epsilon(0.3, 0.5, 2).is_err());
    }

    #[test]
    fn frontier_examples() {
        let p = Pmf::uniform(2).unwrap();
        let d = DistortionMeasure::hamming(2).unwrap();
        assert_eq!(separation_frontier(&p, &d, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(separation_frontier(&p, &d, 0.0, 1.0).unwrap(), 0.5);
        let dstar = separation_frontier(&p, &d, 0.5, 1.0).unwrap();
        assert!((h2(dstar) - 0.5).abs() < 1e-6);
        assert!((dstar - 0.1100).abs() < 1e-3);
        // the bisection passes through slopes where the solver is slow
        let (q, c) = (0.49943857202871933, 0.22547026156015926);
        let dstar = separation_frontier(&Pmf::bernoulli(q).unwrap(), &d, c, 1.0).unwrap();
        assert!((h2(q) - h2(dstar) - c).abs() < 1e-5, "{dstar}");
    }
}
