mod common;

use common::random_tree;
use dgamp::channel::{Channel, ChannelKind, MeasurementInstance, SignalPrior};
use dgamp::denoiser::{f_in, f_in_prime, f_out_clip};
use dgamp::gamp::{run_dgamp, run_dgamp_observed, run_exact_sum_observed, Denoisers, RunOptions, Schedule};
use dgamp::harness::{ExperimentConfig, ExperimentSet, MeasurementSpec, Runner, TopologySpec};
use dgamp::network::{cp_aggregate, cp_sweep, Consensus, EdgeStore, TreeNetwork};
use dgamp::quadrature::AdaptiveOptions;
use dgamp::se::{inner_moments, se_dgamp, SeModel, SeOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree(seed: u64, nodes: usize) -> TreeNetwork {
    random_tree(nodes, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn instance(rows: &[usize], n: usize, channel: Channel, seed: u64) -> MeasurementInstance {
    let prior = SignalPrior::bernoulli_gaussian(0.1).unwrap();
    MeasurementInstance::sample(n, rows, prior, channel, seed).unwrap()
}

proptest! {
    #[test]
    fn consensus_recovers_global_sum(
        seed in any::<u64>(),
        nodes in 1usize..=32,
        payload in prop::collection::vec(-1e3f64..1e3, 32),
    ) {
        let net = tree(seed, nodes);
        let local: Vec<f64> = payload[..nodes].to_vec();
        let total: f64 = local.iter().sum();
        let mut store = EdgeStore::zeros(&net, &0.0);
        for _ in 0..net.diameter() {
            store = cp_sweep(&net, &local, &store);
        }
        let agg = cp_aggregate(&net, &store, &0.0);
        let scale = local.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
        for (own, a) in local.iter().zip(&agg) {
            prop_assert!((own + a - total).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn warm_started_rounds_converge_to_the_sum(
        seed in any::<u64>(),
        nodes in 2usize..=16,
        sweeps in 1usize..=3,
    ) {
        let net = tree(seed, nodes);
        let local: Vec<[f64; 2]> = (0..nodes).map(|l| [l as f64 + 1.0, 1.0]).collect();
        let mut engine = Consensus::new(&net, [0.0; 2]);
        let mut agg = Vec::new();
        while engine.sweeps_done() < net.diameter().max(1) {
            agg = engine.round(&net, &local, sweeps);
        }
        let total = (nodes * (nodes + 1) / 2) as f64;
        for (own, a) in local.iter().zip(&agg) {
            prop_assert_eq!(own[0] + a[0], total);
            prop_assert_eq!(own[1] + a[1], nodes as f64);
        }
    }

    #[test]
    fn clip_channel_is_monotone_and_bounded(
        threshold in 0.1f64..5.0,
        s1 in -10.0f64..10.0,
        ds in 0.0f64..5.0,
    ) {
        let ch = Channel::clip(threshold, 1e-3).unwrap();
        let (lo, hi) = (ch.measure(s1, 0.0), ch.measure(s1 + ds, 0.0));
        prop_assert!(lo <= hi);
        prop_assert!(hi.abs() <= threshold);
    }

    #[test]
    fn f_in_is_odd_and_monotone(
        rho in 0.01f64..=1.0,
        a in 0.05f64..4.0,
        s2 in 1e-4f64..4.0,
        u in 0.0f64..10.0,
        du in 0.0f64..1.0,
    ) {
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        let f = |u| f_in(u, a, s2, &prior).unwrap();
        let df = |u| f_in_prime(u, a, s2, &prior).unwrap();
        prop_assert_eq!(f(-u), -f(u));
        prop_assert_eq!(df(-u), df(u));
        prop_assert!(df(u) >= 0.0);
        prop_assert!(f(u + du) >= f(u));
    }

    #[test]
    fn f_in_derivative_matches_finite_difference(
        rho in 0.01f64..=1.0,
        a in 0.1f64..3.0,
        s2 in 1e-3f64..2.0,
        u in -6.0f64..6.0,
    ) {
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        let h = 1e-6;
        let fd = (f_in(u + h, a, s2, &prior).unwrap() - f_in(u - h, a, s2, &prior).unwrap()) / (2.0 * h);
        let an = f_in_prime(u, a, s2, &prior).unwrap();
        prop_assert!((fd - an).abs() <= 1e-5 * an.abs(), "fd {} vs {}", fd, an);
    }

    #[test]
    fn f_out_clip_is_antisymmetric_and_finite(
        threshold in 0.2f64..4.0,
        theta in -60.0f64..60.0,
        v in 1e-3f64..5.0,
        s2 in 1e-6f64..1.0,
        branch in 0usize..3,
        frac in -1.0f64..1.0,
    ) {
        let y = match branch {
            0 => threshold,
            1 => -threshold,
            _ => frac * threshold,
        };
        let f = f_out_clip(theta, y, v, s2, threshold).unwrap();
        let g = f_out_clip(-theta, -y, v, s2, threshold).unwrap();
        prop_assert!(f.is_finite());
        prop_assert!((f + g).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn sampling_is_deterministic_and_consistent(seed in any::<u64>(), rows in prop::collection::vec(1usize..20, 1..5)) {
        let ch = Channel::clip(1.5, 0.01).unwrap();
        let a = instance(&rows, 40, ch, seed);
        let b = instance(&rows, 40, ch, seed);
        prop_assert_eq!(&a, &b);
        for node in &a.nodes {
            prop_assert_eq!(node.matrix.dot(&a.x), node.z.clone());
            for ((&y, &z), &w) in node.y.iter().zip(&node.z).zip(&node.noise) {
                prop_assert_eq!(y, ch.measure(z, w));
            }
        }
    }

    #[test]
    fn schedule_bookkeeping(periods in prop::collection::vec(1usize..4, 1..6), sweeps in 1usize..4, t in 0usize..50) {
        let s = Schedule::heterogeneous(periods.clone(), sweeps, 60).unwrap();
        let round = *periods.iter().max().unwrap();
        prop_assert_eq!(s.round_len(), round);
        prop_assert_eq!(s.is_consensus(t), t % round == 0);
        prop_assert!(s.sweeps_after(t + 1) >= s.sweeps_after(t));
        prop_assert_eq!(s.sweeps_after(t), sweeps * (t / round + 1));
        for (l, &p) in periods.iter().enumerate() {
            let start = t - t % round;
            let active = (start..start + round).filter(|&k| s.is_active(l, k)).count();
            prop_assert_eq!(active, p);
            prop_assert!(s.is_active(l, start));
        }
    }

    #[test]
    fn matched_inner_moments_are_orthogonal(
        rho in 0.02f64..=1.0,
        alpha in 0.2f64..3.0,
        sigma in 1e-3f64..2.0,
    ) {
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        let m = inner_moments(alpha, sigma, alpha, sigma, &prior, &AdaptiveOptions::default()).unwrap();
        prop_assert!((m.exf - m.ef2).abs() <= 1e-9 * m.ef2.max(1e-12));
        prop_assert!((m.mse - (1.0 - m.ef2)).abs() <= 1e-9);
    }

    #[test]
    fn config_json_round_trip(
        nodes in 1usize..8,
        n in 1usize..5000,
        delta in 0.01f64..1.0,
        rho in 0.01f64..1.0,
        snr in -10.0f64..60.0,
        clip in prop::option::of(0.1f64..4.0),
        periods in prop::collection::vec(1usize..4, 1..4),
        runner in 0usize..6,
        gamma in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let runner = match runner {
            0 => Runner::Dgamp,
            1 => Runner::Centralized,
            2 => Runner::Naive { gamma },
            3 => Runner::Se,
            4 => Runner::SeCentralized,
            _ => Runner::SeNaive { gamma },
        };
        let config = ExperimentConfig {
            label: None,
            topology: TopologySpec::Chain { nodes },
            signal_dim: n,
            measurements: MeasurementSpec::Ratio { delta },
            rho,
            snr_db: snr,
            channel: clip.map_or(ChannelKind::Linear, |threshold| ChannelKind::Clip { threshold }),
            periods,
            sweeps: 2,
            damping: 0.9,
            iterations: 10,
            trials: 3,
            seed,
            runner,
        };
        let set = ExperimentSet { name: "prop".into(), experiments: vec![config] };
        prop_assert_eq!(ExperimentSet::from_json(&set.to_json()).unwrap(), set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn frozen_nodes_keep_their_estimate(seed in any::<u64>()) {
        let inst = instance(&[60, 60, 60, 60], 200, Channel::linear(1e-3).unwrap(), seed);
        let net = TreeNetwork::chain(4).unwrap();
        let sched = Schedule::heterogeneous(vec![2, 1, 2, 1], 1, 12).unwrap();
        let traj = run_dgamp(&inst, &net, &sched, &Denoisers::matched(&inst), RunOptions::default()).unwrap();
        for t in (1..12).step_by(2) {
            for l in [1, 3] {
                prop_assert_eq!(traj.mse[t][l].to_bits(), traj.mse[t - 1][l].to_bits());
            }
        }
    }

    #[test]
    fn full_consensus_sees_every_node(seed in any::<u64>(), nodes in 2usize..=8, extra in 0usize..2) {
        let net = tree(seed, nodes);
        let rows = vec![30; nodes];
        let inst = instance(&rows, 150, Channel::linear(1e-2).unwrap(), seed);
        let sched = Schedule::homogeneous(nodes, 1, net.diameter() + extra, 5).unwrap();
        let mut etas = Vec::new();
        run_dgamp_observed(&inst, &net, &sched, &Denoisers::matched(&inst), RunOptions::default(), |o| {
            etas.push(o.eta)
        })
        .unwrap();
        prop_assert!(etas.iter().all(|&e| e == nodes as f64));
    }

    #[test]
    fn full_consensus_matches_exact_sums(seed in any::<u64>(), nodes in 2usize..=6, clip in any::<bool>()) {
        let net = tree(seed, nodes);
        let channel = if clip { Channel::clip(1.0, 1e-3) } else { Channel::linear(1e-3) }.unwrap();
        let inst = instance(&vec![40; nodes], 160, channel, seed);
        let den = Denoisers::matched(&inst);
        let sched = Schedule::homogeneous(nodes, 1, net.diameter(), 8).unwrap();
        let mut dgamp = Vec::new();
        run_dgamp_observed(&inst, &net, &sched, &den, RunOptions::default(), |o| {
            dgamp.push((o.x_tilde.clone(), o.sigma2))
        })
        .unwrap();
        let mut exact = Vec::new();
        run_exact_sum_observed(&inst, 8, &den, RunOptions::default(), |o| exact.push((o.x_tilde.clone(), o.sigma2)))
            .unwrap();
        prop_assert_eq!(dgamp.len(), exact.len());
        for ((xd, sd), (xe, se)) in dgamp.iter().zip(&exact) {
            let scale = xe.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            for (a, b) in xd.iter().zip(xe) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
            prop_assert!((sd - se).abs() <= 1e-10 * se);
        }
    }

    #[test]
    fn state_evolution_is_consistent_and_monotone(
        nodes in 2usize..=5,
        tree_seed in any::<u64>(),
        rho in 0.05f64..0.5,
        delta in 0.05f64..0.4,
        snr in 10.0f64..40.0,
        clip in prop::option::of(0.5f64..3.0),
        period in 1usize..=2,
        sweeps in 1usize..=2,
    ) {
        let net = tree(tree_seed, nodes);
        let sigma2 = Channel::noise_variance_from_snr_db(snr);
        let channel = match clip {
            Some(a) => Channel::clip(a, sigma2),
            None => Channel::linear(sigma2),
        }
        .unwrap();
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        let model = SeModel::homogeneous(prior, channel, delta, nodes).unwrap();
        let sched = Schedule::homogeneous(nodes, period, sweeps, 20).unwrap();
        let se = se_dgamp(&net, &sched, &model, &SeOptions::default()).unwrap();
        prop_assert!(se.check_consistency(1e-9).is_ok(), "{:?}", se.check_consistency(1e-9));
        prop_assert!(se.check_monotone(1e-8).is_ok(), "{:?}", se.check_monotone(1e-8));
    }
}

#[test]
fn prior_has_unit_power() {
    for rho in [0.05, 0.1, 0.5, 1.0] {
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        assert_eq!(prior.second_moment(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = dgamp::channel::sample_signal(400_000, &prior, &mut rng);
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (mean, var, _) = common::moments(&sq);
        assert!((mean - 1.0).abs() < 5.0 * (var / sq.len() as f64).sqrt(), "rho {rho}: {mean}");
    }
}
