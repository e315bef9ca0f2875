use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fraclab::config::ExperimentConfig;
use fraclab::probes::{run_theorem_a_probe, run_theorem_b_probe, trend_non_increasing};
use fraclab::rows::{write_csv, write_jsonl};
use fraclab::suite::run_lemma_suite;
use fraclab_core::branching::{
    branching_numbers, branching_scale_finder, interval_decomposition, BranchingOutcome,
    DyadicSubset1D,
};
use fraclab_core::dyadic::{GridSet, ScaleLadder};
use fraclab_core::entropy::entropy_profile;
use fraclab_core::exact::{format_rational, parse_exp, parse_rational, Scale};
use fraclab_core::gen::{ArcMeasure, DigitSystem};
use fraclab_core::measure::{check_ahlfors, check_frostman, check_upper_regular, GridMeasure};
use fraclab_core::multiplicity::{iota_integrand, multiplicity_field, ScalePairQuery};
use fraclab_core::projection::{project_cover, Direction};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fraclab",
    about = "desk-scale dyadic grid geometry laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planar digit-system set and its natural measure
    Generate {
        /// digit system spec, e.g. `b=4;D=(0,0),(0,3),(3,0),(3,3);n=3`
        #[arg(long)]
        system: String,
        /// override the depth in the spec
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        /// translate so the set lies inside the unit ball
        #[arg(long)]
        centered: bool,
        /// write the measure file instead of the bare set
        #[arg(long)]
        measure: bool,
    },
    /// Count the dyadic intervals covering a projected set
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        /// slope `p/q` (or `y:p/q` for the steep family)
        #[arg(long)]
        slope: String,
        /// dyadic scale, e.g. `2^-4`
        #[arg(long)]
        scale: String,
    },
    /// Evaluate the fiber multiplicity field over a scale pair
    Mult {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        slope: String,
        /// fine scale, e.g. `2^-6`
        #[arg(long)]
        lo: String,
        /// coarse scale (ball radius), e.g. `2^-2`
        #[arg(long)]
        hi: String,
        /// write the field as CSV
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Direction-averaged high-multiplicity mass for a (measure, arcs) pair
    Iota {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        /// multiplicity exponent sigma (threshold is delta^-sigma)
        #[arg(long)]
        sigma: String,
        #[arg(long)]
        delta: String,
    },
    /// Per-level entropy profile of a measure along a ladder
    EntropyScan {
        #[arg(long)]
        mu: PathBuf,
        /// base scale, e.g. `2^-2`
        #[arg(long)]
        base: String,
        #[arg(long)]
        depth: u32,
    },
    /// Verify uniform branching of a lattice point set
    Branch {
        #[arg(long)]
        set: PathBuf,
        /// base scale, e.g. `2^-2`
        #[arg(long)]
        base: String,
    },
    /// Interval decomposition around a small exceptional set
    Lemma2 {
        #[arg(long = "E")]
        e_file: PathBuf,
        #[arg(long = "C")]
        c: String,
        /// gamma as a dyadic rational, e.g. `1/4`
        #[arg(long)]
        gamma: String,
        /// measure bound for E
        #[arg(long)]
        eps: String,
    },
    /// Locate a branching scale for a circle measure
    Scalefind {
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        delta: String,
        #[arg(long)]
        dfrak: String,
        #[arg(long)]
        tau: String,
        #[arg(long, default_value = "1/4")]
        eta: String,
    },
    /// Run the Frostman / upper-regularity / two-sided regularity checks
    Certify {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        s: String,
        /// the constant C to certify against
        #[arg(long = "C")]
        c: String,
    },
    /// Execute the probe pipelines and the lemma suite from a config
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// skip the statement probes, run only the lemma suite
        #[arg(long)]
        suite_only: bool,
    },
}

fn read_set(path: &Path) -> Result<GridSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with("level") {
        Ok(GridSet::from_text(&text)?)
    } else {
        Ok(GridSet::from_binary(text.as_bytes())?)
    }
}

fn read_measure(path: &Path) -> Result<GridMeasure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(GridMeasure::from_text(&text)?)
}

/// 1D lattice file: `points k` header, one index per line.
fn read_points(path: &Path) -> Result<(u32, Vec<u64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty points file")?;
    let level: u32 = header
        .trim()
        .strip_prefix("points")
        .and_then(|v| v.trim().parse().ok())
        .context("expected `points k` header")?;
    let mut points = Vec::new();
    for line in lines {
        points.push(line.trim().parse::<u64>().context("bad point index")?);
    }
    Ok((level, points))
}

fn parse_scale(s: &str) -> Result<Scale> {
    s.parse::<Scale>().map_err(|e| anyhow::anyhow!(e))
}

fn run() -> Result<i32> {
    if let Ok(threads) = std::env::var("FRACLAB_THREADS") {
        let n: usize = threads
            .parse()
            .context("FRACLAB_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            system,
            depth,
            out,
            centered,
            measure,
        } => {
            let mut sys = DigitSystem::parse_spec(&system).map_err(|e| anyhow::anyhow!(e))?;
            if let Some(d) = depth {
                sys = DigitSystem::planar(sys.base, sys.digits.clone(), d)
                    .map_err(|e| anyhow::anyhow!(e))?;
            }
            let (set, mu) = if centered {
                sys.generate_centered()?
            } else {
                sys.generate()?
            };
            let payload = if measure { mu.to_text() } else { set.to_text() };
            fs::write(&out, payload).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} cells at level {} ({})",
                set.len(),
                set.level(),
                if measure { "measure" } else { "set" }
            );
            Ok(0)
        }
        Command::Project {
            input,
            slope,
            scale,
        } => {
            let set = read_set(&input)?;
            let dir: Direction = slope.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            let r = parse_scale(&scale)?;
            let cover = project_cover(&set, &dir, r);
            println!("slope,scale,cover");
            println!("{slope},{scale},{cover}");
            Ok(0)
        }
        Command::Mult {
            input,
            slope,
            lo,
            hi,
            field,
        } => {
            let set = read_set(&input)?;
            let dir: Direction = slope.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            let q = ScalePairQuery::new(parse_scale(&lo)?, parse_scale(&hi)?)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let f = multiplicity_field(&set, &dir, &q).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("cells,{}", f.entries.len());
            println!("max,{}", f.max_value());
            if let Some(path) = field {
                let mut csv = String::from("ix,iy,multiplicity\n");
                for ((x, y), v) in &f.entries {
                    csv.push_str(&format!("{x},{y},{v}\n"));
                }
                fs::write(&path, csv)?;
            }
            Ok(0)
        }
        Command::Iota {
            mu,
            nu,
            sigma,
            delta,
        } => {
            let mu = read_measure(&mu)?;
            let text = fs::read_to_string(&nu)?;
            let nu = ArcMeasure::from_text(&text)?;
            let sigma = parse_exp(&sigma).map_err(|e| anyhow::anyhow!(e))?;
            let delta = parse_scale(&delta)?;
            let v = iota_integrand(&mu, &nu, sigma, delta).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("integrand,{}", format_rational(&v));
            Ok(0)
        }
        Command::EntropyScan { mu, base, depth } => {
            let mu = read_measure(&mu)?;
            let base = parse_scale(&base)?;
            if base.log2 >= 0 {
                bail!("base scale must be below 1");
            }
            let ladder = ScaleLadder::new(base.level() as u32, depth);
            let profile = entropy_profile(&mu, &ladder).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("level,entropy_bits,step_bits");
            for (i, lvl) in profile.levels.iter().enumerate() {
                let step = if i == 0 {
                    String::new()
                } else {
                    format!("{:.12}", profile.step_bits[i - 1])
                };
                println!("{},{:.12},{}", lvl, profile.level_bits[i], step);
            }
            Ok(0)
        }
        Command::Branch { set, base } => {
            let (level, points) = read_points(&set)?;
            let base = parse_scale(&base)?;
            let m = base.level() as u32;
            if m == 0 || level % m != 0 {
                bail!("lattice level {level} is not a multiple of the base exponent");
            }
            let ladder = ScaleLadder::new(m, level / m);
            match branching_numbers(&ladder, &points).map_err(|e| anyhow::anyhow!("{e}"))? {
                BranchingOutcome::Uniform(r) => {
                    println!("uniform,true");
                    println!(
                        "branching,{}",
                        r.iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(";")
                    );
                    Ok(0)
                }
                BranchingOutcome::Violation {
                    level,
                    interval,
                    expected,
                    got,
                } => {
                    println!("uniform,false");
                    println!(
                        "violation,level={level};interval={interval};expected={expected};got={got}"
                    );
                    Ok(1)
                }
            }
        }
        Command::Lemma2 {
            e_file,
            c,
            gamma,
            eps,
        } => {
            let (level, cells) = read_points(&e_file)?;
            let e = DyadicSubset1D::new(level, cells);
            let c = parse_rational(&c).map_err(|e| anyhow::anyhow!(e))?;
            let gamma = parse_scale(&gamma)?;
            if gamma.log2 >= 0 {
                bail!("gamma must be a dyadic rational in (0, 1/2]");
            }
            let eps = parse_rational(&eps).map_err(|e| anyhow::anyhow!(e))?;
            let d = interval_decomposition(&e, &c, gamma.level() as u32, &eps)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("good_measure,{}", format_rational(&d.good_measure));
            println!("good_intervals,{}", d.good.len());
            println!("rounds,{}", d.rounds);
            for a in &d.audit {
                println!(
                    "audit,round={};transient={};bad={};good={}",
                    a.round,
                    format_rational(&a.transient_measure),
                    format_rational(&a.bad_measure),
                    format_rational(&a.good_measure)
                );
            }
            Ok(0)
        }
        Command::Scalefind {
            nu,
            delta,
            dfrak,
            tau,
            eta,
        } => {
            let text = fs::read_to_string(&nu)?;
            let nu = ArcMeasure::from_text(&text)?;
            let delta = parse_scale(&delta)?;
            let d = parse_rational(&dfrak).map_err(|e| anyhow::anyhow!(e))?;
            let tau = parse_exp(&tau).map_err(|e| anyhow::anyhow!(e))?;
            let eta = parse_exp(&eta).map_err(|e| anyhow::anyhow!(e))?;
            let cert = branching_scale_finder(&nu, delta, &d, tau, eta)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("p,{}", format_rational(&cert.p));
            println!("fine_level,{}", cert.fine_level);
            println!("coarse_level,{}", cert.coarse_level);
            println!("g_mass,{}", format_rational(&cert.g_mass));
            println!("g_mass_bound,{}", format_rational(&cert.g_mass_bound));
            println!("pairs_checked,{}", cert.pairs_checked);
            Ok(0)
        }
        Command::Certify { mu, s, c } => {
            let mu = read_measure(&mu)?;
            let s = parse_exp(&s).map_err(|e| anyhow::anyhow!(e))?;
            let c = parse_rational(&c).map_err(|e| anyhow::anyhow!(e))?;
            let frostman = check_frostman(&mu, s, &c)?;
            let upper = check_upper_regular(mu.support(), s, &c)?;
            let ahlfors = check_ahlfors(&mu, s, &c)?;
            println!("check,passes,c_best");
            println!(
                "frostman,{},{:.6}",
                frostman.passes,
                frostman.c_best.to_f64()
            );
            println!(
                "upper-regular,{},{:.6}",
                upper.passes,
                upper.c_best.to_f64()
            );
            println!("ahlfors,{},{:.6}", ahlfors.passes, ahlfors.c_best.to_f64());
            if frostman.passes && upper.passes && ahlfors.passes {
                Ok(0)
            } else {
                Ok(1)
            }
        }
        Command::Run {
            config,
            out,
            suite_only,
        } => {
            let cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    match ExperimentConfig::parse(&text) {
                        Ok(c) => c,
                        Err(e) => {
                            eprintln!("config error: {e:#}");
                            return Ok(2);
                        }
                    }
                }
                None => ExperimentConfig::default_corpus(2, 2, 4),
            };
            fs::create_dir_all(&out)?;
            let mut rows = Vec::new();
            if !suite_only {
                let (entries, probe_rows) = run_theorem_a_probe(&cfg)?;
                rows.extend(probe_rows);
                let mut dual_fail = false;
                for e in &entries {
                    if !e.dual_path_equal {
                        eprintln!(
                            "dual-path disagreement: {} / {} sigma={} N={}",
                            e.instance, e.arc, e.sigma, e.n
                        );
                        dual_fail = true;
                    }
                }
                for (group, ok) in trend_non_increasing(&entries) {
                    rows.push(fraclab::ResultRow {
                        instance: group.clone(),
                        operation: "theorem-a-trend".into(),
                        params: String::new(),
                        quantity: "non-increasing".into(),
                        value: ok.to_string(),
                        certificate: fraclab::rows::certificate("trend", &group, &[]),
                        wall_ms: 0,
                    });
                }
                let (_, b_rows) = run_theorem_b_probe(&cfg)?;
                rows.extend(b_rows);
                if dual_fail {
                    fs::write(out.join("results.csv"), write_csv(&rows))?;
                    fs::write(out.join("results.jsonl"), write_jsonl(&rows))?;
                    return Ok(1);
                }
            }
            let ledger = run_lemma_suite(&cfg, false)?;
            let failed = ledger.summary.fail;
            rows.extend(ledger.rows);
            fs::write(out.join("results.csv"), write_csv(&rows))?;
            fs::write(out.join("results.jsonl"), write_jsonl(&rows))?;
            println!(
                "suite: {} pass, {} outside regime, {} fail",
                ledger.summary.pass, ledger.summary.outside_regime, ledger.summary.fail
            );
            Ok(if failed > 0 { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
