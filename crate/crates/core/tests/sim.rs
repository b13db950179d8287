use proptest::prelude::*;
use whackamole::adapt::AlphaPolicy;
use whackamole::discrepancy::path_bound;
use whackamole::rational::Rational;
use whackamole::sim::{
    run_sim, run_sim_traced, sender_send_rate, AdaptAction, AdaptConfig, AdaptMode, ChangeCause,
    Completion, CompletionReport, LossPattern, MessageSpec, PathSpec, ProfileSchedule, SendRate,
    SimConfig, SimError, SprayConfig, Status, TraceKind,
};
use whackamole::{PathProfile, SprayMethod, SpraySeed};

const MBPS: u64 = 1_000_000;

fn profile(counts: &[u64]) -> PathProfile {
    PathProfile::from_counts(counts.to_vec()).unwrap()
}

/// Two paths: 100 ms at 100 Mbps and 10 ms at 50 Mbps; 10 Mbit in 10 kbit packets.
fn two_path(schedule: ProfileSchedule) -> SimConfig {
    SimConfig::new(
        vec![
            PathSpec::new(100_000, 100 * MBPS),
            PathSpec::new(10_000, 50 * MBPS),
        ],
        MessageSpec::new(10_000_000, 10_000),
        schedule,
    )
}

fn completed_ms(report: &CompletionReport) -> f64 {
    assert_eq!(report.status, Status::Completed);
    report.completion_time_us.unwrap() as f64 / 1000.0
}

/// Completion when every packet goes to one path that keeps up with the
/// sender: the last packet leaves after `(N-1)` emission gaps, then needs one
/// serialization time and the latency.
fn single_path_completion_us(packets: u64, bits: u64, bps: u64, latency_us: u64) -> u64 {
    let gap = bits * 1_000_000 / bps;
    (packets - 1) * gap + gap + latency_us
}

#[test]
fn static_profiles_complete_on_time() {
    let slow_wide = run_sim(&two_path(ProfileSchedule::fixed(profile(&[1024, 0])))).unwrap();
    assert_eq!(
        slow_wide.completion_time_us,
        Some(single_path_completion_us(1000, 10_000, 100 * MBPS, 100_000))
    );
    assert!((completed_ms(&slow_wide) - 200.0).abs() <= 1.0);

    let fast_narrow = run_sim(&two_path(ProfileSchedule::fixed(profile(&[0, 1024])))).unwrap();
    assert_eq!(
        fast_narrow.completion_time_us,
        Some(single_path_completion_us(1000, 10_000, 50 * MBPS, 10_000))
    );
    assert!((completed_ms(&fast_narrow) - 210.0).abs() <= 1.0);

    // 2/3 of 1000 packets at 100 us each, then 100 ms of latency.
    let split = run_sim(&two_path(ProfileSchedule::fixed(profile(&[683, 341])))).unwrap();
    let ms = completed_ms(&split);
    assert!((ms - 167.0).abs() <= 1.0, "{ms}");
    let fluid = 1000.0 * 2.0 / 3.0 * 0.1 + 100.0;
    assert!((ms - fluid).abs() <= 1.0, "{ms} vs {fluid}");
}

#[test]
fn hybrid_schedule_completes_on_time() {
    let schedule = ProfileSchedule::fixed(profile(&[683, 341])).then(37_000, profile(&[0, 1024]));
    let report = run_sim(&two_path(schedule)).unwrap();
    let ms = completed_ms(&report);
    assert!((ms - 137.0).abs() <= 1.0, "{ms}");
    let causes: Vec<ChangeCause> = report.profile_history.iter().map(|h| h.cause).collect();
    assert_eq!(causes, vec![ChangeCause::Initial, ChangeCause::Schedule]);
    assert_eq!(report.profile_history[1].time_us, 37_000);
    assert_eq!(report.profile_history[1].send_rate_bps, 50 * MBPS);
    assert_eq!(report.final_profile, vec![0, 1024]);
}

#[test]
fn aggregate_rate_counts_active_paths() {
    let paths = vec![PathSpec::new(1, 100 * MBPS), PathSpec::new(1, 50 * MBPS)];
    assert_eq!(
        sender_send_rate(&paths, &profile(&[683, 341]), SendRate::ProfileAggregate),
        150 * MBPS
    );
    assert_eq!(
        sender_send_rate(&paths, &profile(&[1024, 0]), SendRate::ProfileAggregate),
        100 * MBPS
    );
    assert_eq!(
        sender_send_rate(&paths, &profile(&[1024, 0]), SendRate::Fixed { bps: 7 }),
        7
    );
}

#[test]
fn matched_profile_does_not_queue() {
    let report = run_sim(&two_path(ProfileSchedule::fixed(profile(&[683, 341])))).unwrap();
    // Bursts are bounded by the spray deviation (at most ℓ = 10 packets
    // ahead of the fluid share), so the queue never builds a backlog.
    assert!(
        report.per_path.iter().all(|p| p.max_queue_depth <= 11),
        "{:?}",
        report.per_path
    );
}

#[test]
fn mismatched_profile_grows_the_slow_queue() {
    let report = run_sim(&two_path(ProfileSchedule::fixed(profile(&[512, 512])))).unwrap();
    // Half of 150 Mbps offered to a 50 Mbps path: backlog grows at 25 Mbps
    // for the whole send window.
    let window_s = 1000.0 * 10_000.0 / 150e6;
    let expected = 25e6 * window_s / 10_000.0;
    let got = report.per_path[1].max_queue_depth as f64;
    assert!(
        (got - expected).abs() <= 3.0,
        "depth {got}, expected {expected}"
    );
    assert!(report.per_path[0].max_queue_depth <= 11);
}

#[test]
fn tail_drop_at_capacity() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[512, 512])));
    config.paths[1].queue_capacity = 20;
    config.paths[1].ecn_threshold = Some(10);
    let report = run_sim(&config).unwrap();
    let slow = &report.per_path[1];
    assert!(slow.dropped_queue > 100);
    assert_eq!(slow.max_queue_depth, 20);
    assert_eq!(report.status, Status::Timeout);
}

#[test]
fn ecn_marks_reach_the_sender() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[512, 512])));
    config.paths[1].ecn_threshold = Some(5);
    let (report, trace) = run_sim_traced(&config).unwrap();
    let marked_sends: Vec<(usize, u64)> = trace
        .iter()
        .filter(|e| e.event == TraceKind::Send && e.ecn)
        .map(|e| (e.path, e.path_seq))
        .collect();
    assert!(!marked_sends.is_empty());
    assert!(marked_sends.iter().all(|&(p, _)| p == 1));
    let marked_feedback: Vec<(usize, u64)> = report
        .feedback
        .iter()
        .filter(|r| r.ecn)
        .map(|r| (r.path_id, r.path_seq))
        .collect();
    assert!(!marked_feedback.is_empty());
    for key in &marked_feedback {
        assert!(marked_sends.contains(key));
    }
    assert_eq!(report.per_path[1].ecn_marked, marked_sends.len() as u64);
}

#[test]
fn dropped_sequence_is_reported_as_a_gap() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[512, 512])));
    config.paths[1].loss = LossPattern::DropList { path_seqs: vec![5] };
    let report = run_sim(&config).unwrap();
    // one packet never arrives, so an all-packets message cannot finish
    assert_eq!(report.status, Status::Timeout);
    assert_eq!(report.per_path[1].dropped_loss, 1);
    let gaps: Vec<_> = report
        .feedback
        .iter()
        .filter(|r| !r.gaps.is_empty())
        .collect();
    assert_eq!(gaps.len(), 1);
    assert_eq!(
        (gaps[0].path_id, gaps[0].path_seq, gaps[0].gaps.clone()),
        (1, 6, vec![5])
    );
}

#[test]
fn lossless_run_reports_no_gaps() {
    let report = run_sim(&two_path(ProfileSchedule::fixed(profile(&[683, 341])))).unwrap();
    assert!(report.feedback.iter().all(|r| r.gaps.is_empty()));
}

#[test]
fn all_paths_dead_is_a_timeout() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[683, 341])));
    for p in &mut config.paths {
        p.loss = LossPattern::Rate {
            rate: Rational::from_integer(1),
            seed: 3,
        };
    }
    let report = run_sim(&config).unwrap();
    assert_eq!(report.status, Status::Timeout);
    assert_eq!(report.distinct_delivered, 0);
    assert_eq!(report.completion_time_us, None);
}

#[test]
fn horizon_cuts_the_run() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[1024, 0])));
    config.horizon_us = 150_000;
    let report = run_sim(&config).unwrap();
    assert_eq!(report.status, Status::Timeout);
    let p = &report.per_path[0];
    assert!(p.in_flight > 0);
    assert_eq!(p.sent, p.delivered + p.dropped() + p.in_flight);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = two_path(ProfileSchedule::fixed(profile(&[683, 341])));

    let mut c = base.clone();
    c.schedule = ProfileSchedule::fixed(profile(&[1, 2]));
    assert!(matches!(run_sim(&c), Err(SimError::Schedule(_))));

    let mut c = base.clone();
    c.schedule = ProfileSchedule::fixed(profile(&[683, 341])).then(0, profile(&[0, 1024]));
    assert!(matches!(run_sim(&c), Err(SimError::Schedule(_))));

    let mut c = base.clone();
    c.schedule = ProfileSchedule::fixed(profile(&[683, 341])).then(5, profile(&[0, 0, 1024]));
    assert!(matches!(run_sim(&c), Err(SimError::Schedule(_))));

    let mut c = base.clone();
    c.paths[0].bandwidth_bps = 0;
    assert!(matches!(
        run_sim(&c),
        Err(SimError::BadPath { path: 0, .. })
    ));

    let mut c = base.clone();
    c.paths[1].ecn_threshold = Some(c.paths[1].queue_capacity + 1);
    assert!(matches!(
        run_sim(&c),
        Err(SimError::BadPath { path: 1, .. })
    ));

    let mut c = base.clone();
    c.message.completion = Completion::Fountain {
        required: 10,
        budget: 9,
    };
    assert!(matches!(run_sim(&c), Err(SimError::Message(_))));

    let mut c = base.clone();
    c.spray.seed = SpraySeed { sa: 0, sb: 2 };
    assert!(matches!(run_sim(&c), Err(SimError::Spray(_))));

    let mut c = base;
    c.paths.clear();
    assert!(matches!(run_sim(&c), Err(SimError::NoPaths)));
}

#[test]
fn identical_configs_give_identical_reports() {
    let mut config = two_path(ProfileSchedule::fixed(profile(&[600, 424])));
    config.paths[1].loss = LossPattern::Rate {
        rate: Rational::new(1, 20),
        seed: 9,
    };
    config.message.completion = Completion::Fountain {
        required: 1000,
        budget: 1500,
    };
    config.adapt = Some(AdaptConfig {
        policy: AlphaPolicy::default(),
        window_us: 5_000,
        mode: AdaptMode::Whack,
    });
    let a = serde_json::to_string(&run_sim_traced(&config).unwrap()).unwrap();
    let b = serde_json::to_string(&run_sim_traced(&config).unwrap()).unwrap();
    assert_eq!(a, b);
}

fn identical_paths(k_active: usize, total_paths: usize, required: u64) -> SimConfig {
    let m = 1024u64;
    let mut counts = vec![0u64; total_paths];
    for (i, c) in counts.iter_mut().take(k_active).enumerate() {
        *c = m / k_active as u64 + u64::from((i as u64) < m % k_active as u64);
    }
    let mut config = SimConfig::new(
        vec![PathSpec::new(5_000, 20 * MBPS); total_paths],
        MessageSpec {
            size_bits: 4_000_000,
            packet_payload_bits: 10_000,
            completion: Completion::Fountain {
                required,
                budget: 400,
            },
        },
        ProfileSchedule::fixed(profile(&counts)),
    );
    config.spray = SprayConfig {
        method: SprayMethod::Shuffle1,
        seed: SpraySeed { sa: 17, sb: 301 },
        ..Default::default()
    };
    config
}

#[test]
fn fountain_completion_monotone_in_k() {
    let mut previous = 0;
    for required in (20..=400).step_by(20) {
        let t = run_sim(&identical_paths(3, 4, required))
            .unwrap()
            .completion_time_us
            .unwrap();
        assert!(t >= previous, "K={required}: {t} < {previous}");
        previous = t;
    }
}

#[test]
fn fountain_completion_monotone_in_active_paths() {
    let mut previous = u64::MAX;
    for k in 1..=8 {
        let t = run_sim(&identical_paths(k, 8, 300))
            .unwrap()
            .completion_time_us
            .unwrap();
        assert!(t <= previous, "{k} paths: {t} > {previous}");
        previous = t;
    }
}

#[test]
fn per_path_counts_follow_the_profile() {
    let counts = [37u64, 101, 0, 64, 54];
    let p = profile(&counts);
    for method in SprayMethod::ALL {
        let mut config = SimConfig::new(
            vec![PathSpec::new(1_000, 1_000 * MBPS); 5],
            MessageSpec::new(10 * 256 * 1_000 + 123_000, 1_000),
            ProfileSchedule::fixed(p.clone()),
        );
        config.spray = SprayConfig {
            method,
            seed: SpraySeed { sa: 77, sb: 135 },
            ..Default::default()
        };
        let report = run_sim(&config).unwrap();
        let total = report.packets_emitted as i128;
        assert_eq!(total, 2683);
        for (i, stats) in report.per_path.iter().enumerate() {
            let expected = Rational::new(counts[i] as i128 * total, 256);
            let excess = Rational::from_integer(stats.sent as i128) - expected;
            let bound = path_bound(method, &p, i)
                .unwrap()
                .map_or(Rational::from_integer(0), |b| b.tightest);
            assert!(
                excess <= bound && -excess <= bound,
                "{method} path {i}: excess {excess} > {bound}"
            );
        }
    }
}

fn lossy_adaptive(mode: AdaptMode) -> SimConfig {
    let mut config = SimConfig::new(
        vec![
            PathSpec::new(10_000, 100 * MBPS),
            PathSpec::new(10_000, 100 * MBPS),
        ],
        MessageSpec {
            size_bits: 20_000_000,
            packet_payload_bits: 10_000,
            completion: Completion::Fountain {
                required: 2000,
                budget: 4000,
            },
        },
        ProfileSchedule::fixed(profile(&[512, 512])),
    );
    config.paths[1].loss = LossPattern::Rate {
        rate: Rational::new(1, 5),
        seed: 42,
    };
    config.adapt = Some(AdaptConfig {
        policy: AlphaPolicy::default(),
        window_us: 5_000,
        mode,
    });
    config
}

#[test]
fn whacking_moves_traffic_off_a_lossy_path() {
    let report = run_sim(&lossy_adaptive(AdaptMode::Whack)).unwrap();
    assert_eq!(report.status, Status::Completed);
    assert!(report.final_profile[1] < 512, "{:?}", report.final_profile);
    assert!(report
        .adaptations
        .iter()
        .any(|a| matches!(&a.action, AdaptAction::Whacked { paths } if paths.contains(&1))));
    assert!(report
        .profile_history
        .iter()
        .any(|h| h.cause == ChangeCause::Adapt));
    assert_eq!(report.final_profile.iter().sum::<u64>(), 1024);
}

#[test]
fn rebalancing_never_raises_the_objective() {
    let report = run_sim(&lossy_adaptive(AdaptMode::Rebalance { budget: 64 })).unwrap();
    assert!(report.final_profile[1] < 512, "{:?}", report.final_profile);
    let mut applied = 0;
    for a in &report.adaptations {
        if let AdaptAction::Rebalanced {
            objective_before,
            objective_after,
            ..
        } = &a.action
        {
            let before = whackamole::rational::parse_rational(objective_before).unwrap();
            let after = whackamole::rational::parse_rational(objective_after).unwrap();
            assert!(after <= before);
            applied += 1;
        }
    }
    assert!(applied > 0);
}

#[test]
fn adaptation_without_trouble_changes_nothing() {
    let mut config = lossy_adaptive(AdaptMode::Whack);
    config.paths[1].loss = LossPattern::None;
    let report = run_sim(&config).unwrap();
    assert!(report.adaptations.is_empty());
    assert_eq!(report.final_profile, vec![512, 512]);
}

#[test]
fn config_json_round_trip() {
    let json = r#"{
        "paths": [
            {"latency_us": 100000, "bandwidth_bps": 100000000},
            {"latency_us": 10000, "bandwidth_bps": 50000000, "queue_capacity": 64, "ecn_threshold": 16,
             "loss": {"kind": "rate", "rate": 0.01, "seed": 7}}
        ],
        "message": {"size_bits": 10000000, "completion": {"mode": "fountain", "required": 1000, "budget": 1200}},
        "schedule": {"segments": [{"start_us": 0, "profile": [683, 341]}, {"start_us": 37000, "profile": [0, 1024]}]},
        "spray": {"method": "shuffle2", "seed": {"sa": 333, "sb": 735}, "rotation": {"every_period": {"entropy_seed": 5}}},
        "adapt": {"window_us": 2000, "mode": {"kind": "rebalance", "budget": 32}},
        "send_rate": {"kind": "fixed", "bps": 150000000}
    }"#;
    let config: SimConfig = serde_json::from_str(json).unwrap();
    assert_eq!(config.message.packet_payload_bits, 10_000);
    assert_eq!(
        config.paths[1].loss,
        LossPattern::Rate {
            rate: Rational::new(1, 100),
            seed: 7
        }
    );
    assert_eq!(
        config.adapt.as_ref().unwrap().policy,
        AlphaPolicy::default()
    );
    let again: SimConfig = serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
    assert_eq!(config, again);
    assert!(run_sim(&config).is_ok());

    assert!(serde_json::from_str::<SimConfig>(
        &json.replace("latency_us\": 100000,", "latency_us\": 1, \"bogus\": 2,")
    )
    .is_err());
}

prop_compose! {
    fn arb_config()(
        n in 1usize..5,
        seed in any::<u64>(),
    )(
        latencies in proptest::collection::vec(0u64..20_000, n),
        bandwidths in proptest::collection::vec(1u64..200, n),
        capacities in proptest::collection::vec(1u64..40, n),
        losses in proptest::collection::vec(0i128..4, n),
        weights in proptest::collection::vec(0u64..10, n),
        required in 1u64..300,
        extra in 0u64..200,
        method in 0usize..3,
        adapt in any::<bool>(),
        seed in Just(seed),
    ) -> SimConfig {
        let n = weights.len();
        let mut counts: Vec<u64> = weights.iter().map(|w| w * 100).collect();
        let sum: u64 = counts.iter().sum();
        if sum == 0 { counts[0] = 1; }
        let sum: u64 = counts.iter().sum();
        // scale onto m = 256
        let mut scaled: Vec<u64> = counts.iter().map(|c| c * 256 / sum).collect();
        let short = 256 - scaled.iter().sum::<u64>();
        let top = (0..n).max_by_key(|&i| counts[i]).unwrap();
        scaled[top] += short;
        let paths = (0..n).map(|i| PathSpec {
            latency_us: latencies[i],
            bandwidth_bps: bandwidths[i] * MBPS,
            queue_capacity: capacities[i],
            ecn_threshold: Some(capacities[i] / 2),
            loss: LossPattern::Rate { rate: Rational::new(losses[i], 10), seed: seed ^ i as u64 },
            feedback_delay_us: None,
        }).collect();
        let mut config = SimConfig::new(
            paths,
            MessageSpec { size_bits: 1_000_000, packet_payload_bits: 10_000,
                completion: Completion::Fountain { required, budget: required + extra } },
            ProfileSchedule::fixed(PathProfile::from_counts(scaled).unwrap()),
        );
        config.spray = SprayConfig { method: SprayMethod::ALL[method], seed: SpraySeed { sa: seed % 256, sb: (seed >> 8) % 128 * 2 + 1 }, ..Default::default() };
        if adapt {
            config.adapt = Some(AdaptConfig { policy: AlphaPolicy::default(), window_us: 1_000, mode: AdaptMode::Whack });
        }
        config
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn packets_are_conserved(config in arb_config()) {
        let report = run_sim(&config).unwrap();
        let mut sent = 0;
        for p in &report.per_path {
            prop_assert_eq!(p.sent, p.delivered + p.dropped_queue + p.dropped_loss + p.in_flight);
            prop_assert!(p.max_queue_depth <= config.paths.iter().map(|s| s.queue_capacity).max().unwrap());
            sent += p.sent;
        }
        prop_assert_eq!(sent, report.packets_emitted);
        prop_assert!(report.packets_emitted <= config.message.budget());
        prop_assert_eq!(report.final_profile.iter().sum::<u64>(), 256);
        match report.status {
            Status::Completed => {
                let t = report.completion_time_us.unwrap();
                prop_assert!(t >= report.max_needed_latency_us);
                prop_assert_eq!(report.distinct_delivered, config.message.required());
            }
            Status::Timeout => prop_assert!(report.distinct_delivered < config.message.required()),
        }
    }

    #[test]
    fn path_sequences_are_contiguous(config in arb_config()) {
        let (_, trace) = run_sim_traced(&config).unwrap();
        let mut next = vec![0u64; config.paths.len()];
        for e in trace.iter().filter(|e| e.event == TraceKind::Send) {
            prop_assert_eq!(e.path_seq, next[e.path]);
            next[e.path] += 1;
        }
    }

    #[test]
    fn runs_are_reproducible(config in arb_config()) {
        let a = serde_json::to_vec(&run_sim(&config).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_sim(&config).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
