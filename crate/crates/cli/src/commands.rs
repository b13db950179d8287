use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use whackamole::discrepancy::{path_bound, path_deviation_with, DeviationBound, SelectionTable};
use whackamole::rational::{format_rational, to_f64, Rational};
use whackamole::sim::{run_sim_traced, trace_csv, SimConfig, Status};
use whackamole::spray::RotationPolicy;
use whackamole::update::{apply, Embodiment};
use whackamole::{PathProfile, RemovalProfile, ResidualCursor, SprayMethod, SpraySeed, SprayState};

use crate::{CliError, Outcome, ProfileArgs};

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Parses the profile and checks it against `--m`.
pub fn load_profile(args: &ProfileArgs) -> Result<PathProfile, CliError> {
    let profile: PathProfile = args.profile.parse().map_err(invalid)?;
    if let Some(m) = args.m {
        if m != profile.m() {
            return Err(invalid(format!(
                "profile sums to {} but --m is {m}",
                profile.m()
            )));
        }
    }
    Ok(profile)
}

fn spray_width(profile: &PathProfile) -> Result<u32, CliError> {
    profile.ell().ok_or_else(|| {
        invalid(format!(
            "profile total {} is not a power of two",
            profile.m()
        ))
    })
}

pub fn parse_seed(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("seed {s:?} is not `sa,sb`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad sa in {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad sb in {s:?}"))?;
    Ok((a, b))
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value = "shuffle1")]
    method: SprayMethod,
    /// `sa,sb`.
    #[arg(long, value_parser = parse_seed, default_value = "0,1")]
    seed: (u64, u64),
    /// Packets to emit; defaults to one period `m`.
    #[arg(long)]
    count: Option<u64>,
    /// First counter value.
    #[arg(long, default_value_t = 0)]
    start: u64,
    /// Rotate the seed every period from a generator keyed by this value.
    #[arg(long)]
    rotate: Option<u64>,
}

pub fn trace(args: &TraceArgs, pretty: bool) -> Result<Outcome, CliError> {
    let profile = load_profile(&args.profile)?;
    let ell = spray_width(&profile)?;
    let seed = SpraySeed::new(args.seed.0, args.seed.1, ell).map_err(invalid)?;
    let rotation = args.rotate.map_or(RotationPolicy::Never, |entropy_seed| {
        RotationPolicy::EveryPeriod { entropy_seed }
    });
    let mut state = SprayState::new(ell, args.method, seed)
        .map_err(invalid)?
        .with_rotation(rotation)
        .with_counter(args.start);
    let count = args.count.unwrap_or(profile.m());

    let mut out = String::new();
    if pretty {
        writeln!(
            out,
            "{:>12} {:>10} {:>5} {:>10} {:>10}  method",
            "j", "point", "path", "sa", "sb"
        )
        .unwrap();
    } else {
        out.push_str("j,selection_point,path,sa,sb,method\n");
    }
    for _ in 0..count {
        let d = state.next_path(&profile).map_err(invalid)?;
        if pretty {
            writeln!(
                out,
                "{:>12} {:>10} {:>5} {:>10} {:>10}  {}",
                d.flow_seq, d.selection_point, d.path, d.seed.sa, d.seed.sb, args.method
            )
        } else {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                d.flow_seq, d.selection_point, d.path, d.seed.sa, d.seed.sb, args.method
            )
        }
        .unwrap();
    }
    Ok(Outcome::ok(out))
}

#[derive(Args, Debug)]
pub struct DeviationArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value = "shuffle1")]
    method: SprayMethod,
    /// `sa,sb`.
    #[arg(long, value_parser = parse_seed, default_value = "0,1")]
    seed: (u64, u64),
    /// Measure from this counter value; the supremum over starts otherwise.
    #[arg(long)]
    start: Option<u64>,
}

#[derive(Serialize)]
struct PathReport {
    path: usize,
    balls: u64,
    start: u64,
    maxdisc: String,
    mindisc: String,
    deviation: String,
    deviation_approx: f64,
    empty: bool,
}

#[derive(Serialize)]
struct BoundReport {
    path: usize,
    width_bound: Option<String>,
    length_bound: Option<String>,
    dyadic_bound: Option<String>,
    tightest: String,
}

#[derive(Serialize)]
struct DeviationReport {
    m: u64,
    ell: u32,
    method: SprayMethod,
    seed: SpraySeed,
    start: Option<u64>,
    per_path: Vec<PathReport>,
    bounds: Vec<BoundReport>,
    sound: bool,
}

fn bound_report(path: usize, bound: Option<DeviationBound>) -> BoundReport {
    let fmt = |r: Rational| format_rational(&r);
    match bound {
        Some(b) => BoundReport {
            path,
            width_bound: Some(fmt(b.width_bound)),
            length_bound: b.length_bound.map(fmt),
            dyadic_bound: b.dyadic_bound.map(fmt),
            tightest: fmt(b.tightest),
        },
        None => BoundReport {
            path,
            width_bound: None,
            length_bound: None,
            dyadic_bound: None,
            tightest: "0".into(),
        },
    }
}

pub fn deviation(args: &DeviationArgs, pretty: bool) -> Result<Outcome, CliError> {
    let profile = load_profile(&args.profile)?;
    let ell = spray_width(&profile)?;
    let seed = SpraySeed::new(args.seed.0, args.seed.1, ell).map_err(invalid)?;
    let table = SelectionTable::new(args.method, seed, ell);
    let mut per_path = Vec::new();
    let mut bounds = Vec::new();
    let mut sound = true;
    for path in 0..profile.n() {
        let d = path_deviation_with(&table, &profile, path, args.start).map_err(invalid)?;
        let b = path_bound(args.method, &profile, path).map_err(invalid)?;
        let limit = b.map_or(Rational::from_integer(0), |b| b.tightest);
        sound &= d.deviation <= limit;
        per_path.push(PathReport {
            path,
            balls: d.balls,
            start: d.start,
            maxdisc: format_rational(&d.maxdisc),
            mindisc: format_rational(&d.mindisc),
            deviation: format_rational(&d.deviation),
            deviation_approx: to_f64(&d.deviation),
            empty: d.empty,
        });
        bounds.push(bound_report(path, b));
    }
    let report = DeviationReport {
        m: profile.m(),
        ell,
        method: args.method,
        seed,
        start: args.start,
        per_path,
        bounds,
        sound,
    };
    if !pretty {
        return Ok(Outcome::ok(to_json(&report)));
    }
    let mut out = String::new();
    writeln!(
        out,
        "m={} method={} seed=({},{}) start={}",
        report.m,
        report.method,
        seed.sa,
        seed.sb,
        args.start.map_or("sup".to_string(), |s| s.to_string())
    )
    .unwrap();
    writeln!(
        out,
        "{:>4} {:>6} {:>12} {:>12} {:>12} {:>8} {:>8}",
        "path", "balls", "maxdisc", "mindisc", "dev", "dev~", "bound"
    )
    .unwrap();
    for (p, b) in report.per_path.iter().zip(&report.bounds) {
        writeln!(
            out,
            "{:>4} {:>6} {:>12} {:>12} {:>12} {:>8.3} {:>8}",
            p.path, p.balls, p.maxdisc, p.mindisc, p.deviation, p.deviation_approx, b.tightest
        )
        .unwrap();
    }
    writeln!(out, "sound: {}", report.sound).unwrap();
    Ok(Outcome::ok(out))
}

#[derive(Args, Debug)]
pub struct UpdateArgs {
    /// Procedure 1 (single bin), 2 (all bins), 3 (to untouched bins) or 4 (proportional).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    embodiment: u8,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Either one count per bin (`0,7,0,0,0`) or `bin:count` pairs (`1:7`).
    #[arg(long)]
    remove: String,
    /// Residual cursor position.
    #[arg(long, default_value_t = 0)]
    cursor: usize,
}

pub fn parse_removal(s: &str, n: usize) -> Result<RemovalProfile, CliError> {
    let mut e = vec![0u64; n];
    if s.contains(':') {
        for pair in s.split(',') {
            let (bin, count) = pair
                .split_once(':')
                .ok_or_else(|| invalid(format!("bad removal entry {pair:?}")))?;
            let bin: usize = bin
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad bin in {pair:?}")))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad count in {pair:?}")))?;
            if bin >= n {
                return Err(invalid(format!("bin {bin} is outside [0, {n})")));
            }
            e[bin] += count;
        }
    } else {
        let counts: Vec<u64> = s
            .split(',')
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|_| invalid(format!("bad removal count {c:?}")))
            })
            .collect::<Result<_, _>>()?;
        if counts.len() != n {
            return Err(invalid(format!(
                "removal has {} entries, profile has {n}",
                counts.len()
            )));
        }
        e = counts;
    }
    Ok(RemovalProfile(e))
}

#[derive(Serialize)]
struct UpdateReport {
    embodiment: u8,
    counts: Vec<u64>,
    cursor: usize,
    removed: u64,
    per_bin: u64,
    residual: u64,
    remainder_quotient: Option<u64>,
}

pub fn update(args: &UpdateArgs, pretty: bool) -> Result<Outcome, CliError> {
    let mut profile = load_profile(&args.profile)?;
    let removal = parse_removal(&args.remove, profile.n())?;
    let which = Embodiment::from_number(args.embodiment).expect("clap range check");
    let mut cursor = ResidualCursor::at(args.cursor);
    let s = apply(which, &mut profile, &mut cursor, &removal).map_err(invalid)?;
    let report = UpdateReport {
        embodiment: args.embodiment,
        counts: profile.counts().to_vec(),
        cursor: cursor.position(),
        removed: s.removed,
        per_bin: s.per_bin,
        residual: s.residual,
        remainder_quotient: s.remainder_quotient,
    };
    if pretty {
        let mut out = format!(
            "counts: {profile}\ncursor: {}\nremoved: {} (per bin {}, leftover {})\n",
            report.cursor, s.removed, s.per_bin, s.residual
        );
        if let Some(l) = s.remainder_quotient {
            writeln!(out, "remainder quotient: {l}").unwrap();
        }
        Ok(Outcome::ok(out))
    } else {
        Ok(Outcome::ok(to_json(&report)))
    }
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// JSON simulation config.
    #[arg(long)]
    config: PathBuf,
    /// Also write the per-packet CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn sim(args: &SimArgs, pretty: bool) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let config: SimConfig = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("{}: {e}", args.config.display())))?;
    let (report, trace) = run_sim_traced(&config).map_err(invalid)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, trace_csv(&trace)).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    if !pretty {
        return Ok(Outcome::ok(to_json(&report)));
    }
    let mut out = String::new();
    match (report.status, report.completion_time_us) {
        (Status::Completed, Some(t)) => writeln!(out, "completed at {:.3} ms", t as f64 / 1000.0),
        _ => writeln!(
            out,
            "timed out at {:.3} ms",
            report.end_time_us as f64 / 1000.0
        ),
    }
    .unwrap();
    writeln!(
        out,
        "emitted {} packets, {} distinct delivered",
        report.packets_emitted, report.distinct_delivered
    )
    .unwrap();
    writeln!(
        out,
        "{:>4} {:>8} {:>9} {:>7} {:>7} {:>9} {:>6} {:>9}",
        "path", "sent", "delivered", "q-drop", "lost", "in-flight", "ecn", "max-depth"
    )
    .unwrap();
    for (i, p) in report.per_path.iter().enumerate() {
        writeln!(
            out,
            "{:>4} {:>8} {:>9} {:>7} {:>7} {:>9} {:>6} {:>9}",
            i,
            p.sent,
            p.delivered,
            p.dropped_queue,
            p.dropped_loss,
            p.in_flight,
            p.ecn_marked,
            p.max_queue_depth
        )
        .unwrap();
    }
    for h in &report.profile_history {
        writeln!(
            out,
            "{:>10.3} ms  {:?}  {:?}",
            h.time_us as f64 / 1000.0,
            h.cause,
            h.counts
        )
        .unwrap();
    }
    Ok(Outcome::ok(out))
}
