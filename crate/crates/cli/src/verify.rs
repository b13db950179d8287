use std::fmt::Write as _;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use whackamole::discrepancy::{path_bound, path_deviation_with, SelectionTable};
use whackamole::rational::{format_rational, to_f64, Rational};
use whackamole::{PathProfile, SprayMethod, SpraySeed};

use crate::commands::to_json;
use crate::{CliError, Outcome};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Profile totals to sweep; each must be a power of two.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    m: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "shuffle1,shuffle2")]
    methods: Vec<SprayMethod>,
    /// Random seeds per profile.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Random profiles per `m`.
    #[arg(long, default_value_t = 10)]
    profiles: usize,
    /// Most paths in a random profile.
    #[arg(long, default_value_t = 8)]
    max_paths: usize,
    #[arg(long, default_value_t = 1)]
    rng_seed: u64,
}

struct Case {
    group: usize,
    profile: usize,
    seed_index: usize,
    method: SprayMethod,
    ell: u32,
    seed: SpraySeed,
}

/// Result of one (profile, seed, method) point.
struct Measured {
    max_dev: Rational,
    worst_path: usize,
    paths: usize,
    violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize)]
struct Violation {
    m: u64,
    method: SprayMethod,
    profile: Vec<u64>,
    seed: SpraySeed,
    path: usize,
    deviation: String,
    bound: String,
}

#[derive(Serialize)]
struct Worst {
    profile: Vec<u64>,
    seed: SpraySeed,
    path: usize,
}

#[derive(Serialize)]
struct GroupSummary {
    m: u64,
    ell: u32,
    method: SprayMethod,
    pairs: usize,
    paths_checked: usize,
    max_deviation: String,
    max_deviation_approx: f64,
    /// `ℓ`, or `2ℓ` for the second shuffle method.
    bound: u32,
    worst: Option<Worst>,
    violations: usize,
}

#[derive(Serialize)]
struct Summary {
    rng_seed: u64,
    ok: bool,
    groups: Vec<GroupSummary>,
    violations: Vec<Violation>,
}

fn random_profile(rng: &mut ChaCha8Rng, m: u64, max_paths: usize) -> PathProfile {
    let n = rng.gen_range(1..=max_paths);
    let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.gen_range(0..=m)).collect();
    cuts.sort_unstable();
    let mut counts = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts.into_iter().chain([m]) {
        counts.push(c - prev);
        prev = c;
    }
    PathProfile::from_counts(counts).expect("counts sum to m")
}

fn method_bound(method: SprayMethod, ell: u32) -> u32 {
    match method {
        SprayMethod::Shuffle2 => 2 * ell,
        SprayMethod::Plain | SprayMethod::Shuffle1 => ell,
    }
}

fn measure(case: &Case, profile: &PathProfile, m: u64) -> Measured {
    let table = SelectionTable::new(case.method, case.seed, case.ell);
    let coarse = Rational::from_integer(method_bound(case.method, case.ell) as i128);
    let mut out = Measured {
        max_dev: Rational::from_integer(0),
        worst_path: 0,
        paths: 0,
        violations: Vec::new(),
    };
    for path in 0..profile.n() {
        let d = path_deviation_with(&table, profile, path, None).expect("profile matches table");
        let tight = path_bound(case.method, profile, path)
            .expect("power-of-two profile")
            .map_or(Rational::from_integer(0), |b| b.tightest);
        out.paths += 1;
        if d.deviation > out.max_dev {
            out.max_dev = d.deviation;
            out.worst_path = path;
        }
        for bound in [coarse, tight] {
            if d.deviation > bound {
                out.violations.push(Violation {
                    m,
                    method: case.method,
                    profile: profile.counts().to_vec(),
                    seed: case.seed,
                    path,
                    deviation: format_rational(&d.deviation),
                    bound: format_rational(&bound),
                });
                break;
            }
        }
    }
    out
}

pub fn verify_bounds(args: &VerifyArgs, pretty: bool) -> Result<Outcome, CliError> {
    if args.methods.is_empty() || args.seeds == 0 || args.profiles == 0 || args.max_paths == 0 {
        return Err(CliError::Invalid(
            "methods, seeds, profiles and max-paths must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.rng_seed);
    let mut profiles: Vec<Vec<PathProfile>> = Vec::new();
    let mut seeds: Vec<Vec<SpraySeed>> = Vec::new();
    let mut ells = Vec::new();
    for &m in &args.m {
        if !m.is_power_of_two() || m < 2 {
            return Err(CliError::Invalid(format!(
                "m = {m} is not a power of two of at least 2"
            )));
        }
        let ell = m.trailing_zeros();
        ells.push(ell);
        profiles.push(
            (0..args.profiles)
                .map(|_| random_profile(&mut rng, m, args.max_paths))
                .collect(),
        );
        seeds.push(
            (0..args.seeds)
                .map(|_| SpraySeed::random(ell, &mut rng))
                .collect(),
        );
    }

    let mut cases = Vec::new();
    let mut group_keys = Vec::new();
    for (mi, &ell) in ells.iter().enumerate() {
        for &method in &args.methods {
            let group = group_keys.len();
            group_keys.push((mi, method));
            for profile in 0..args.profiles {
                for (seed_index, &seed) in seeds[mi].iter().enumerate() {
                    cases.push(Case {
                        group,
                        profile,
                        seed_index,
                        method,
                        ell,
                        seed,
                    });
                }
            }
        }
    }

    // collect() keeps case order, so the output does not depend on scheduling
    let results: Vec<Measured> = cases
        .par_iter()
        .map(|c| {
            let (mi, _) = group_keys[c.group];
            measure(c, &profiles[mi][c.profile], args.m[mi])
        })
        .collect();

    let mut groups: Vec<GroupSummary> = group_keys
        .iter()
        .map(|&(mi, method)| GroupSummary {
            m: args.m[mi],
            ell: ells[mi],
            method,
            pairs: 0,
            paths_checked: 0,
            max_deviation: "0".into(),
            max_deviation_approx: 0.0,
            bound: method_bound(method, ells[mi]),
            worst: None,
            violations: 0,
        })
        .collect();
    let mut group_max = vec![Rational::from_integer(-1); groups.len()];
    let mut violations = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        let g = &mut groups[case.group];
        g.pairs += 1;
        g.paths_checked += result.paths;
        g.violations += result.violations.len();
        if result.max_dev > group_max[case.group] {
            group_max[case.group] = result.max_dev;
            g.max_deviation = format_rational(&result.max_dev);
            g.max_deviation_approx = to_f64(&result.max_dev);
            let (mi, _) = group_keys[case.group];
            g.worst = Some(Worst {
                profile: profiles[mi][case.profile].counts().to_vec(),
                seed: seeds[mi][case.seed_index],
                path: result.worst_path,
            });
        }
        violations.extend(result.violations);
    }

    let summary = Summary {
        rng_seed: args.rng_seed,
        ok: violations.is_empty(),
        groups,
        violations,
    };
    let violation = !summary.ok;
    let body = if pretty {
        let mut out = String::new();
        writeln!(
            out,
            "{:>6} {:>9} {:>6} {:>7} {:>10} {:>6} {:>10}",
            "m", "method", "pairs", "paths", "max dev", "bound", "violations"
        )
        .unwrap();
        for g in &summary.groups {
            writeln!(
                out,
                "{:>6} {:>9} {:>6} {:>7} {:>10.4} {:>6} {:>10}",
                g.m,
                g.method,
                g.pairs,
                g.paths_checked,
                g.max_deviation_approx,
                g.bound,
                g.violations
            )
            .unwrap();
        }
        writeln!(
            out,
            "{}",
            if summary.ok {
                "all deviations within bounds"
            } else {
                "BOUND VIOLATED"
            }
        )
        .unwrap();
        out
    } else {
        to_json(&summary)
    };
    Ok(Outcome { body, violation })
}
