use sepnet::channels::Dmc;
use sepnet::coding_theorems::DistortionMeasure;
use sepnet::info::{JointPmf, Pmf, Sequence};
use sepnet::netsim::*;
use sepnet::{Error, Result};

fn bsc(p: f64) -> ChannelModel {
    ChannelModel::Dmc {
        matrix: Dmc::bsc(p).unwrap(),
    }
}

fn fig2(links: (ChannelModel, ChannelModel)) -> NetworkSpec {
    let ham = DistortionMeasure::hamming(2).unwrap();
    two_sources_one_sink(
        JointPmf::dsbs(0.1).unwrap().as_pmf(),
        (2, 2),
        links,
        (ham.clone(), ham),
        Target::Lossless,
    )
    .unwrap()
}

/// 0 -> 1 -> 2, node 0 holds a fair bit source, node 2 wants it.
fn line(p: f64) -> NetworkSpec {
    let node = |name: &str, k| Node {
        name: name.into(),
        source_alphabet: k,
    };
    NetworkSpec::new(
        vec![node("src", 2), node("relay", 1), node("dst", 1)],
        vec![
            Edge {
                from: 0,
                to: 1,
                channel: bsc(p),
            },
            Edge {
                from: 1,
                to: 2,
                channel: bsc(p),
            },
        ],
        Pmf::uniform(2).unwrap(),
        vec![Demand {
            from: 0,
            to: 2,
            measure: DistortionMeasure::hamming(2).unwrap(),
            target: Target::Distortion { d: 0.2 },
        }],
    )
    .unwrap()
}

/// Stacked relay code over `line`: in round `r` the relay sends on layer
/// `l` what it heard on layer `l+1 mod N` in round `r-1`. The decoder undoes
/// the rotation.
struct RotatingRelay {
    layers: usize,
    len: usize,
}

impl NetworkCode for RotatingRelay {
    type State = ();

    fn layers(&self) -> usize {
        self.layers
    }
    fn source_len(&self) -> usize {
        self.len
    }
    fn channel_len(&self) -> usize {
        self.len + 1
    }

    fn encode(
        &self,
        _: &mut (),
        node: usize,
        t: usize,
        sources: &[&[usize]],
        past: &dyn OutputView,
    ) -> Result<Vec<Vec<usize>>> {
        (0..self.layers)
            .map(|l| {
                Ok(vec![match node {
                    0 => sources[l].get(t - 1).copied().unwrap_or(0),
                    _ if t == 1 => 0,
                    _ => past.get(0, (l + 1) % self.layers, t - 1)?,
                }])
            })
            .collect()
    }

    fn decode(&self, _: usize, _: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Sequence>> {
        (0..self.layers)
            .map(|l| {
                let from = (l + self.layers - 1) % self.layers;
                (2..=self.len + 1).map(|t| past.get(1, from, t)).collect()
            })
            .collect()
    }
}

fn remapped(trace: &[TraceRow], depth: usize) -> Vec<TraceRow> {
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

fn assert_unravel_exact<C: NetworkCode>(net: &NetworkSpec, code: C, seed: u64, trial: u64) {
    let depth = code.layers();
    let stacked = run_network(net, &code, &RunConfig::new(seed, trial)).unwrap();
    let cfg = RunConfig {
        remap: PathRemap::Unraveled { layers: depth },
        ..RunConfig::new(seed, trial)
    };
    let single = run_network(net, &unravel(code), &cfg).unwrap();
    let mut want = remapped(&stacked.trace, depth);
    let mut got = single.trace.clone();
    got.sort_by_key(|r| (r.time, r.edge));
    want.sort_by_key(|r| (r.time, r.edge));
    assert_eq!(got, want);
    assert_eq!(single.distortion, stacked.distortion);
    for d in 0..net.demands.len() {
        assert_eq!(single.reconstruction(d), stacked.reconstruction(d));
    }
}

#[test]
fn single_layer_stack_matches_plain_run() {
    let net = fig2((bsc(0.1), bsc(0.2)));
    let code = UncodedCode::identity(&net, 16).unwrap();
    let plain = run_network(&net, &code, &RunConfig::new(5, 3)).unwrap();
    let one = run_network(&net, &stack(code.clone(), 1).unwrap(), &RunConfig::new(5, 3)).unwrap();
    assert_eq!(plain, one);
    let un = run_network(
        &net,
        &unravel(stack(code, 1).unwrap()),
        &RunConfig {
            remap: PathRemap::Unraveled { layers: 1 },
            ..RunConfig::new(5, 3)
        },
    )
    .unwrap();
    assert_eq!(plain.trace, un.trace);
    assert_eq!(plain.distortion, un.distortion);
}

#[test]
fn unravel_reproduces_replicated_stack() {
    let net = fig2((bsc(0.1), bsc(0.05)));
    for trial in 0..5 {
        let code = stack(UncodedCode::identity(&net, 24).unwrap(), 8).unwrap();
        assert_unravel_exact(&net, code, 11, trial);
    }
}

#[test]
fn unravel_reproduces_cross_layer_relay() {
    let net = line(0.1);
    for trial in 0..5 {
        assert_unravel_exact(&net, RotatingRelay { layers: 4, len: 6 }, 2, trial);
    }
    // the rate is unchanged: NL / Nn
    let u = unravel(RotatingRelay { layers: 4, len: 6 });
    assert_eq!((u.source_len(), u.channel_len()), (24, 28));
}

#[test]
fn relay_distortion_matches_two_hop_flip_rate() {
    let net = line(0.1);
    let code = RotatingRelay { layers: 3, len: 200 };
    let mut total = 0.0;
    for trial in 0..20 {
        total += run_network(&net, &code, &RunConfig::new(8, trial)).unwrap().distortion.values()[0];
    }
    // two BSC(0.1) in cascade flip with probability 0.18; sd over 12000 bits is 0.0035
    assert!((total / 20.0 - 0.18).abs() < 0.015);
}

struct Peeking;

impl NetworkCode for Peeking {
    type State = ();
    fn source_len(&self) -> usize {
        4
    }
    fn channel_len(&self) -> usize {
        5
    }
    fn encode(&self, _: &mut (), node: usize, t: usize, _: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Vec<usize>>> {
        // the relay tries to read the current time
        let x = if node == 1 && t > 1 { past.get(0, 0, t)? } else { 0 };
        Ok(vec![vec![x]])
    }
    fn decode(&self, _: usize, _: &[&[usize]], _: &dyn OutputView) -> Result<Vec<Sequence>> {
        Ok(vec![vec![0; 4]])
    }
}

struct WrongEdge;

impl NetworkCode for WrongEdge {
    type State = ();
    fn source_len(&self) -> usize {
        4
    }
    fn channel_len(&self) -> usize {
        5
    }
    fn encode(&self, _: &mut (), node: usize, t: usize, _: &[&[usize]], past: &dyn OutputView) -> Result<Vec<Vec<usize>>> {
        // node 0 has no in-edges
        let x = if node == 0 && t > 1 { past.get(1, 0, 1)? } else { 0 };
        Ok(vec![vec![x]])
    }
    fn decode(&self, _: usize, _: &[&[usize]], _: &dyn OutputView) -> Result<Vec<Sequence>> {
        Ok(vec![vec![0; 4]])
    }
}

#[test]
fn causality_is_enforced() {
    let net = line(0.1);
    assert!(matches!(
        run_network(&net, &Peeking, &RunConfig::new(1, 0)),
        Err(Error::ContractViolation(_))
    ));
    assert!(matches!(
        run_network(&net, &WrongEdge, &RunConfig::new(1, 0)),
        Err(Error::ContractViolation(_))
    ));
}

#[test]
fn no_demands_no_reconstructions() {
    let mut net = fig2((bsc(0.1), bsc(0.1)));
    net.demands.clear();
    let code = UncodedCode::new(&net, 8, vec![vec![0, 1], vec![0, 1]], vec![]).unwrap();
    let out = run_network(&net, &code, &RunConfig::new(0, 0)).unwrap();
    assert!(out.reconstructions.is_empty());
    assert!(out.distortion.entries.is_empty());
}

/// Sends the source verbatim, zero-padded to `widths[node]` bits.
struct Verbatim {
    len: usize,
    n: usize,
    widths: [usize; 2],
}

impl MessageCode for Verbatim {
    fn source_len(&self) -> usize {
        self.len
    }
    fn channel_len(&self) -> usize {
        self.n
    }
    fn encode(&self, node: usize, source: &[usize]) -> Result<Vec<Bits>> {
        let mut m: Bits = source.iter().map(|&u| u == 1).collect();
        m.resize(self.widths[node], false);
        Ok(vec![m])
    }
    fn decode(&self, demand: usize, incoming: &[Bits], _: &[usize]) -> Result<Sequence> {
        Ok(incoming[demand][..self.len].iter().map(|&b| b as usize).collect())
    }
}

#[test]
fn pipe_delivery_ignores_schedule() {
    let net = fig2((
        ChannelModel::BitPipe { capacity: 0.75 },
        ChannelModel::BitPipe { capacity: 0.75 },
    ));
    let code = PipeCode::new(&net, Verbatim { len: 15, n: 20, widths: [15, 15] }).unwrap();
    for trial in 0..10 {
        let a = run_network(&net, &code, &RunConfig::new(4, trial)).unwrap();
        let b = run_network(
            &net,
            &code,
            &RunConfig {
                schedule: PipeSchedule::EndOfBlock,
                ..RunConfig::new(4, trial)
            },
        )
        .unwrap();
        assert_eq!(a.reconstructions, b.reconstructions);
        assert_eq!(a.distortion.values(), vec![0.0, 0.0]);
        assert_eq!(a.distortion, b.distortion);
    }
    // one bit too many for the pipe
    let code = PipeCode::new(&net, Verbatim { len: 16, n: 20, widths: [16, 16] }).unwrap();
    assert!(run_network(&net, &code, &RunConfig::new(4, 0)).is_err());
}

#[test]
fn pipes_unravel_exactly() {
    let net = fig2((
        ChannelModel::BitPipe { capacity: 0.75 },
        ChannelModel::BitPipe { capacity: 0.5 },
    ));
    let code = stack(PipeCode::new(&net, Verbatim { len: 10, n: 20, widths: [15, 10] }).unwrap(), 3).unwrap();
    assert_unravel_exact(&net, code, 9, 0);
}

#[test]
fn edges_draw_independent_noise() {
    // both links carry 0; outputs are the noise bits
    let net = fig2((bsc(0.3), bsc(0.3)));
    let code = UncodedCode::new(
        &net,
        1,
        vec![vec![0, 0], vec![0, 0]],
        vec![(0, vec![0, 1]), (1, vec![0, 1])],
    )
    .unwrap();
    let trials = 10_000u64;
    let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
    for trial in 0..trials {
        let out = run_network(&net, &code, &RunConfig::new(21, trial)).unwrap();
        let a = out.reconstructions[0][0][0] as f64;
        let b = out.reconstructions[1][0][0] as f64;
        sa += a;
        sb += b;
        sab += a * b;
    }
    let n = trials as f64;
    let cov = sab / n - (sa / n) * (sb / n);
    let corr = cov / (0.3 * 0.7);
    // under independence the sample correlation has sd 1/sqrt(n)
    assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr}");
    assert!((sa / n - 0.3).abs() < 3.0 * (0.21f64 / n).sqrt());
}

#[test]
fn replica_layers_are_independent() {
    // 2x2 contingency of "layer error count above median" for layers 0 and 1
    let net = fig2((bsc(0.2), bsc(0.2)));
    let code = stack(UncodedCode::identity(&net, 8).unwrap(), 8).unwrap();
    let mut table = [[0.0f64; 2]; 2];
    let trials = 2000;
    let mut per_layer_means = vec![0.0; 8];
    for trial in 0..trials {
        let out = run_network(
            &net,
            &code,
            &RunConfig {
                record_trace: false,
                ..RunConfig::new(17, trial)
            },
        )
        .unwrap();
        let errs: Vec<usize> = (0..8)
            .map(|l| {
                out.reconstructions[0][l]
                    .iter()
                    .zip(&out.sources[l][0])
                    .filter(|(a, b)| a != b)
                    .count()
            })
            .collect();
        for (m, e) in per_layer_means.iter_mut().zip(&errs) {
            *m += *e as f64 / (8.0 * trials as f64);
        }
        table[(errs[0] >= 2) as usize][(errs[1] >= 2) as usize] += 1.0;
    }
    let n = trials as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let chi2: f64 = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| {
            let e = rows[i] * cols[j] / n;
            (table[i][j] - e).powi(2) / e
        })
        .sum();
    // 5% critical value of chi-square with one degree of freedom
    assert!(chi2 < 3.841, "chi2 {chi2}");
    // stacked distortion is the mean of per-layer distortions
    for m in per_layer_means {
        assert!((m - 0.2).abs() < 0.015);
    }
}

#[test]
fn trace_csv_has_expected_columns() {
    let net = fig2((bsc(0.1), bsc(0.1)));
    let out = run_network(&net, &UncodedCode::identity(&net, 3).unwrap(), &RunConfig::new(0, 0)).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("edge,layer,time,x,y\n"));
    assert_eq!(text.lines().count(), 1 + 6);
}
