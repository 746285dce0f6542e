//! Blahut-Arimoto channel capacity, with an optional linear input cost.

use serde::{Deserialize, Serialize};

use crate::channels::Dmc;
use crate::error::{invalid, Error, Result};
use crate::info::Pmf;

const LN2: f64 = std::f64::consts::LN_2;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Bits per use; the mutual information achieved by `optimal_input`.
    pub capacity: f64,
    pub optimal_input: Pmf,
    pub iterations: usize,
    /// Certified upper bound minus `capacity`, in bits.
    pub gap: f64,
    /// Lower bound after each iteration, when tracing was requested.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct BaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub trace: bool,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            trace: false,
        }
    }
}

/// `sum_y W(y|x) ln W(y|x)` per input.
fn neg_entropies(ch: &Dmc) -> Vec<f64> {
    (0..ch.inputs())
        .map(|x| ch.row(x).iter().filter(|&&w| w > 0.0).map(|&w| w * w.ln()).sum())
        .collect()
}

/// Per-input divergences D(W(.|x) || q) in nats, with q = p W.
fn divergences(ch: &Dmc, neg_ent: &[f64], p: &[f64], q: &mut [f64], d: &mut [f64]) {
    q.iter_mut().for_each(|v| *v = 0.0);
    for (x, &px) in p.iter().enumerate() {
        if px > 0.0 {
            for (qy, w) in q.iter_mut().zip(ch.row(x)) {
                *qy += px * w;
            }
        }
    }
    q.iter_mut().for_each(|v| *v = v.max(f64::MIN_POSITIVE).ln());
    for (x, dx) in d.iter_mut().enumerate() {
        let cross: f64 = ch.row(x).iter().zip(q.iter()).filter(|(&w, _)| w > 0.0).map(|(w, lq)| w * lq).sum();
        *dx = neg_ent[x] - cross;
    }
}

/// State of one fixed-multiplier run.
struct Lagrangian {
    p: Vec<f64>,
    /// I(p) in nats
    info: f64,
    /// E_p[cost]
    mean_cost: f64,
    /// max_x (D(x) - s c(x)) in nats
    upper: f64,
    iterations: usize,
}

/// Iterates p <- p exp(a (D - s c)) until the Lagrangian gap is below `tol`
/// (nats). The step `a` grows while the objective I - s E[c] improves and
/// falls back to the plain update (a = 1), which never decreases it.
/// `trace` collects I(p) in bits for s = 0.
fn run_fixed(
    ch: &Dmc,
    cost: &[f64],
    s: f64,
    mut p: Vec<f64>,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> std::result::Result<Lagrangian, Lagrangian> {
    let nx = ch.inputs();
    let mut q = vec![0.0; ch.outputs()];
    let mut d = vec![0.0; nx];
    let neg_ent = neg_entropies(ch);
    let objective = |p: &[f64], d: &[f64]| -> (f64, f64) {
        let info: f64 = p.iter().zip(d).map(|(a, b)| a * b).sum();
        let mean_cost: f64 = p.iter().zip(cost).map(|(a, c)| a * c).sum();
        (info, mean_cost)
    };
    divergences(ch, &neg_ent, &p, &mut q, &mut d);
    let (mut info, mut mean_cost) = objective(&p, &d);
    let mut step = 1.0;
    let mut next = vec![0.0; nx];
    let mut d_next = vec![0.0; nx];
    let mut it = 0;
    loop {
        let upper = d
            .iter()
            .zip(cost)
            .map(|(dx, c)| dx - s * c)
            .fold(f64::NEG_INFINITY, f64::max);
        if let Some(t) = trace.as_deref_mut() {
            t.push(info / LN2);
        }
        let gap = upper - (info - s * mean_cost);
        let state = |p| Lagrangian {
            p,
            info,
            mean_cost,
            upper,
            iterations: it,
        };
        if gap <= tol {
            return Ok(state(p));
        }
        if it >= max_iter {
            return Err(state(p));
        }
        loop {
            // subtract the max before exponentiating
            let mut z = 0.0;
            for x in 0..nx {
                next[x] = p[x] * (step * (d[x] - s * cost[x] - upper)).exp();
                z += next[x];
            }
            next.iter_mut().for_each(|v| *v /= z);
            divergences(ch, &neg_ent, &next, &mut q, &mut d_next);
            let (i2, c2) = objective(&next, &d_next);
            if i2 - s * c2 >= info - s * mean_cost || step == 1.0 {
                std::mem::swap(&mut p, &mut next);
                std::mem::swap(&mut d, &mut d_next);
                (info, mean_cost) = (i2, c2);
                step = (step * 1.5).min(1024.0);
                break;
            }
            step = (step * 0.5).max(1.0);
        }
        it += 1;
    }
}

/// Capacity in bits with the default tolerance rules; stops when the
/// certified gap `max_x D(W(.|x)||q) - I(p)` is at most `tol` bits.
pub fn ba_capacity(ch: &Dmc, tol: f64, max_iter: usize) -> Result<CapacityResult> {
    ba_capacity_with(
        ch,
        BaOptions {
            tol,
            max_iter,
            trace: false,
        },
    )
}

pub fn ba_capacity_with(ch: &Dmc, opts: BaOptions) -> Result<CapacityResult> {
    if !(opts.tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let nx = ch.inputs();
    let zero = vec![0.0; nx];
    let mut trace = Vec::new();
    let run = run_fixed(
        ch,
        &zero,
        0.0,
        vec![1.0 / nx as f64; nx],
        opts.tol * LN2,
        opts.max_iter,
        opts.trace.then_some(&mut trace),
    );
    match run {
        Ok(st) => Ok(CapacityResult {
            capacity: st.info / LN2,
            optimal_input: Pmf::from_weights(&st.p),
            iterations: st.iterations,
            gap: (st.upper - st.info).max(0.0) / LN2,
            trace,
        }),
        Err(st) => Err(Error::Convergence {
            iterations: st.iterations,
            best: st.info / LN2,
            gap: (st.upper - st.info) / LN2,
        }),
    }
}

/// Capacity subject to `E[cost(X)] <= budget`, by bisection on the
/// multiplier of the cost. The reported capacity is achieved by an input
/// law that meets the budget; `gap` is certified by the bound
/// `I(p) <= max_x (D(x) - s c(x)) + s * budget`, valid for every s >= 0
/// and every feasible p.
pub fn ba_capacity_cost(
    ch: &Dmc,
    cost: &[f64],
    budget: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CapacityResult> {
    let nx = ch.inputs();
    if cost.len() != nx {
        return invalid("one cost per input symbol is required");
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return invalid("costs must be finite and nonnegative");
    }
    let min_cost = cost.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_cost > budget {
        return invalid(format!("budget {budget} is below the cheapest input cost {min_cost}"));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let inner_tol = 0.25 * tol * LN2;
    let fail = |st: Lagrangian| Error::Convergence {
        iterations: st.iterations,
        best: st.info / LN2,
        gap: f64::INFINITY,
    };

    let start = vec![1.0 / nx as f64; nx];
    // keep every input in the support of a warm start; mass that has
    // underflowed to zero can never come back
    let warm = |p: &[f64]| -> Vec<f64> { p.iter().map(|v| (v + 1e-12) / (1.0 + 1e-12 * nx as f64)).collect() };
    let free = run_fixed(ch, cost, 0.0, start, inner_tol, max_iter, None).map_err(fail)?;
    // later runs share what is left of the budget; a run cut short still
    // yields a valid bound and a usable input law
    let spent = |st: std::result::Result<Lagrangian, Lagrangian>| match st {
        Ok(st) | Err(st) => st,
    };
    let mut total_iter = free.iterations;
    if free.mean_cost <= budget {
        return Ok(CapacityResult {
            capacity: free.info / LN2,
            optimal_input: Pmf::from_weights(&free.p),
            iterations: total_iter,
            gap: (free.upper - free.info).max(0.0) / LN2,
            trace: Vec::new(),
        });
    }

    let mut best_upper = free.upper; // s = 0 bound
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut over = free;
    let mut feasible = loop {
        let left = max_iter.saturating_sub(total_iter);
        let st = spent(run_fixed(ch, cost, hi, warm(&over.p), inner_tol, left, None));
        total_iter += st.iterations;
        best_upper = best_upper.min(st.upper + hi * budget);
        if st.mean_cost <= budget {
            break st;
        }
        over = st;
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 || total_iter >= max_iter {
            return Err(Error::Convergence {
                iterations: total_iter,
                best: 0.0,
                gap: f64::INFINITY,
            });
        }
    };
    for _ in 0..200 {
        if best_upper - feasible.info <= tol * LN2 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_iter >= max_iter {
            break;
        }
        let left = max_iter - total_iter;
        let st = spent(run_fixed(ch, cost, mid, warm(&feasible.p), inner_tol, left, None));
        total_iter += st.iterations;
        best_upper = best_upper.min(st.upper + mid * budget);
        if st.mean_cost <= budget {
            hi = mid;
            feasible = st;
        } else {
            lo = mid;
            over = st;
        }
    }
    // C(P) may be linear between the bracket ends; the mixture that spends
    // the budget exactly is then better than either end.
    let theta = (budget - feasible.mean_cost) / (over.mean_cost - feasible.mean_cost);
    if theta > 0.0 && theta < 1.0 {
        let mix: Vec<f64> = over.p.iter().zip(&feasible.p).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let mut q = vec![0.0; ch.outputs()];
        let mut d = vec![0.0; nx];
        divergences(ch, &neg_entropies(ch), &mix, &mut q, &mut d);
        let info: f64 = mix.iter().zip(&d).map(|(a, b)| a * b).sum();
        if info > feasible.info {
            feasible.mean_cost = mix.iter().zip(cost).map(|(a, c)| a * c).sum();
            feasible.info = info;
            feasible.p = mix;
        }
    }
    let gap = (best_upper - feasible.info).max(0.0) / LN2;
    if gap > tol {
        return Err(Error::Convergence {
            iterations: total_iter,
            best: feasible.info / LN2,
            gap,
        });
    }
    Ok(CapacityResult {
        capacity: feasible.info / LN2,
        optimal_input: Pmf::from_weights(&feasible.p),
        iterations: total_iter,
        gap,
        trace: Vec::new(),
    })
}
