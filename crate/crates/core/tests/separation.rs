use sepnet::coding_theorems::{separation_frontier, DistortionMeasure};
use sepnet::experiments::*;
use sepnet::info::Pmf;

#[test]
fn union_bound_holds_across_seeds() {
    let seeds = 100;
    let mut violations = 0;
    for seed in 0..seeds {
        let scenario = PointToPoint {
            layers: 4,
            error_trials: 2048,
            ..PointToPoint::clean_link(seed)
        };
        let (net, code, plan) = scenario.build().unwrap();
        let report = run_separated(&net, &code, &plan, 4).unwrap();
        for t in &report.trials {
            violations += (t.realized[0] > report.union_bound[0]) as usize;
        }
    }
    // at most 5% of runs above the bound
    assert!(violations * 20 <= seeds as usize * 4, "{violations} violations");
}

#[test]
fn no_seed_beats_the_frontier() {
    let frontier = separation_frontier(
        &Pmf::bernoulli(0.5).unwrap(),
        &DistortionMeasure::hamming(2).unwrap(),
        0.5,
        1.0,
    )
    .unwrap();
    for seed in 0..5 {
        let scenario = PointToPoint {
            error_trials: 4096,
            ..PointToPoint::half_capacity(seed)
        };
        let (net, code, plan) = scenario.build().unwrap();
        let report = run_separated(&net, &code, &plan, 200).unwrap();
        let xs: Vec<f64> = report.trials.iter().map(|t| t.realized[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(mean >= frontier - 3.0 * se, "seed {seed}: {mean} below {frontier}");
    }
}

#[test]
fn pipes_only_network_has_no_link_inflation() {
    let (net, code, plan) = SlepianWolfPair::inside(9).build().unwrap();
    let report = run_separated(&net, &code, &plan, 50).unwrap();
    assert_eq!(report.p_max, 0.0);
    assert_eq!(report.union_bound, report.mean_bit_pipe);
    assert_eq!(report.mean_realized, report.mean_bit_pipe);
}
