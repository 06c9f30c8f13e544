use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tenrank_core::formulas::{
    conjectured_grank, gamma, grank_lower_bound, grank_upper_nmm, known_grank, known_mrank,
    mrank_upper_nmm, nmm_form, KnownValue, Status,
};
use tenrank_core::harness::{build_report, run_sweep, shapes_in, Cache, SweepConfig, SweepReport};
use tenrank_core::tensor::{rank_bounds, Shape};
use tenrank_core::terracini::{estimate_grank, trial_point, ProbeConfig};
use tenrank_core::typical_real::{build_gap_certificate, SkewSource};
use tenrank_core::IntTensor3;

/// Exit status for a counterexample candidate or a formula mismatch.
const EXIT_MISMATCH: u8 = 2;

#[derive(Parser)]
#[command(name = "tenrank", version, about = "Generic ranks of 3-tensors")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone, Copy)]
struct ProbeArgs {
    /// Random points tried per k.
    #[arg(long, env = "TENRANK_TRIALS", default_value_t = 3)]
    trials: usize,
    /// Master seed.
    #[arg(long, env = "TENRANK_SEED", default_value_t = 0)]
    seed: u64,
    /// Factor entries are drawn from LO..HI inclusive.
    #[arg(long, env = "TENRANK_ENTRY_RANGE", default_value = "-99..99",
          value_parser = parse_range, allow_hyphen_values = true)]
    entry_range: (i64, i64),
    /// Bit length of the random primes.
    #[arg(long, env = "TENRANK_PRIME_BITS", default_value_t = 61)]
    prime_bits: u32,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, env = "TENRANK_JOBS")]
    jobs: Option<usize>,
}

impl ProbeArgs {
    fn config(&self) -> ProbeConfig {
        ProbeConfig {
            trials: self.trials,
            entry_lo: self.entry_range.0,
            entry_hi: self.entry_range.1,
            prime_bits: self.prime_bits,
            seed: self.seed,
            max_k: None,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                bail!("--jobs must be at least 1");
            }
            b = b.num_threads(j);
        }
        Ok(b.build()?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Quaternion,
    Generic,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the generic rank of a shape and compare with known values.
    Grank {
        shape: Shape,
        #[command(flatten)]
        probe: ProbeArgs,
        /// Largest k to try.
        #[arg(long, env = "TENRANK_MAX_K")]
        max_k: Option<usize>,
        /// Write the factors of the filling probe as JSON.
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Sweep all shapes up to a dimension and check the small/big pattern.
    VerifyConjecture {
        #[arg(long, env = "TENRANK_MAX_DIM", default_value_t = 8)]
        max_dim: usize,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long, env = "TENRANK_CACHE", default_value = "tenrank-cache.jsonl")]
        cache: PathBuf,
        /// Leave timing fields empty so cache files are reproducible.
        #[arg(long, env = "TENRANK_NO_TIMING")]
        no_timing: bool,
        /// Write the JSON report here.
        #[arg(long, env = "TENRANK_REPORT")]
        report: Option<PathBuf>,
    },
    /// Number of rank-k matrices in a generic linear family of m x n matrices.
    Gamma { k: usize, m: usize, n: usize },
    /// Lower and upper bounds on generic and maximal rank.
    Bounds {
        shape: Shape,
        /// Also bound the rank of this tensor (JSON).
        #[arg(long)]
        tensor: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Certificate that the real typical rank exceeds the generic rank.
    Gap {
        m: usize,
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        /// Number of quaternion matrices, 1 to 3.
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, env = "TENRANK_SEED", default_value_t = 0)]
        seed: u64,
        /// Write the certificate JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a sweep report from a cache file.
    Report {
        #[arg(long, env = "TENRANK_CACHE")]
        cache: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> std::result::Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if lo >= hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn describe(v: &KnownValue) -> String {
    let prov = serde_json::to_value(v.provenance).expect("enum serializes");
    let status = serde_json::to_value(v.status).expect("enum serializes");
    format!(
        "{} [{}, {}]",
        v.value,
        prov.as_str().unwrap_or_default(),
        status.as_str().unwrap_or_default()
    )
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn cmd_grank(shape: Shape, probe: ProbeArgs, max_k: Option<usize>, witness_out: Option<PathBuf>) -> Result<u8> {
    let cfg = ProbeConfig {
        max_k,
        ..probe.config()
    };
    let verdict = probe.pool()?.install(|| estimate_grank(shape, &cfg))?;
    println!("shape {shape}");
    for p in &verdict.curve.points {
        let class = serde_json::to_value(p.status)?;
        println!(
            "  k={:<3} r={:<5} expected={:<5} {}",
            p.k,
            p.r_hat,
            p.expected,
            class.as_str().unwrap_or_default()
        );
    }
    let cert = if verdict.certified { "certified" } else { "uncertified" };
    println!("probed grank {} ({cert})", verdict.grank_estimate);
    let formula = known_grank(shape).or_else(|| conjectured_grank(shape));
    let mut code = 0;
    match formula {
        Some(v) => {
            println!("formula {}", describe(&v));
            let binding = v.status == Status::Proved || verdict.certified;
            if v.value == verdict.grank_estimate {
                println!("agreement");
            } else if binding {
                println!("MISMATCH: probe {} vs formula {}", verdict.grank_estimate, v.value);
                code = EXIT_MISMATCH;
            } else {
                println!("differs from an unproved value");
            }
        }
        None => println!("formula none"),
    }
    if let Some(path) = witness_out {
        let g = verdict.grank_estimate;
        let witness = verdict
            .curve
            .get(g)
            .and_then(|p| p.trials.iter().find(|t| t.r_hat == p.expected).copied());
        let body = match witness {
            Some(t) => {
                let (factors, prime) = trial_point(shape, g, &cfg, t.seed)?;
                json!({
                    "shape": shape, "k": g, "trial": t.trial, "trial_seed": t.seed,
                    "prime": prime, "r_hat": t.r_hat, "factors": factors,
                })
            }
            None => json!({ "shape": shape, "k": g, "factors": null }),
        };
        write_json(&path, &body)?;
    }
    Ok(code)
}

fn print_summary(report: &SweepReport) {
    let t = report.tallies;
    println!(
        "shapes {}: pass {}, defective {}, fail {}, incomplete {}",
        report.shapes.len(),
        t.pass,
        t.defective,
        t.fail,
        t.incomplete
    );
    for v in report.shapes.iter().filter(|v| report.violations.contains(&v.shape)) {
        println!(
            "counterexample candidate {}: {}",
            v.shape,
            v.note.as_deref().unwrap_or("")
        );
    }
}

fn cmd_verify(
    max_dim: usize,
    probe: ProbeArgs,
    cache: PathBuf,
    no_timing: bool,
    report_path: Option<PathBuf>,
) -> Result<u8> {
    let cfg = SweepConfig {
        max_dim,
        probe: probe.config(),
        timing: !no_timing,
    };
    let mut store = Cache::open(&cache).with_context(|| format!("opening {}", cache.display()))?;
    let report = probe.pool()?.install(|| run_sweep(&cfg, &mut store))?;
    print_summary(&report);
    if let Some(p) = report_path {
        write_json(&p, &report)?;
    }
    Ok(if report.has_violations() { EXIT_MISMATCH } else { 0 })
}

fn cmd_bounds(shape: Shape, tensor: Option<PathBuf>, as_json: bool) -> Result<u8> {
    let [a, b, _] = shape.canonical().dims();
    let lower = grank_lower_bound(shape);
    let mut upper = a * b;
    let mut mrank_upper = None;
    if let Some((n, m)) = nmm_form(shape) {
        upper = upper.min(grank_upper_nmm(n, m)?);
        mrank_upper = Some(mrank_upper_nmm(n, m)?);
    }
    let grank = known_grank(shape).or_else(|| conjectured_grank(shape));
    let mrank = known_mrank(shape);
    let tensor_bounds = match tensor {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let t: IntTensor3 = serde_json::from_str(&text)?;
            if t.shape() != shape {
                bail!("tensor has shape {}, expected {shape}", t.shape());
            }
            Some(rank_bounds(&t)?)
        }
        None => None,
    };
    if as_json {
        let body = json!({
            "shape": shape, "lower": lower, "upper": upper, "mrank_upper": mrank_upper,
            "grank": grank, "mrank": mrank, "tensor": tensor_bounds,
        });
        println!("{}", serde_json::to_string_pretty(&body)?);
        return Ok(0);
    }
    println!("shape {shape}");
    println!("lower {lower}");
    println!("upper {upper}");
    if let Some(m) = mrank_upper {
        println!("mrank-upper {m}");
    }
    if let Some(v) = grank {
        println!("grank {}", describe(&v));
    }
    if let Some(v) = mrank {
        println!("mrank {}", describe(&v));
    }
    if let Some(tb) = tensor_bounds {
        println!("tensor rank lower {}", tb.lower);
        println!("tensor rank upper {}", tb.upper);
    }
    Ok(0)
}

fn cmd_gap(m: usize, source: Option<SourceArg>, level: usize, seed: u64, out: Option<PathBuf>) -> Result<u8> {
    let source = source.map(|s| match s {
        SourceArg::Quaternion => SkewSource::Quaternion { level },
        SourceArg::Generic => SkewSource::Generic,
    });
    let cert = build_gap_certificate(m, source, seed)?;
    let confidence = serde_json::to_value(cert.confidence)?;
    let summary = format!(
        "shape {} real rank >= {} > grank {} ({})",
        cert.shape,
        cert.claimed_lower,
        cert.complex_grank,
        confidence.as_str().unwrap_or_default()
    );
    match out {
        Some(p) => {
            write_json(&p, &cert)?;
            println!("{summary}");
        }
        None => {
            eprintln!("{summary}");
            println!("{}", serde_json::to_string_pretty(&cert)?);
        }
    }
    Ok(0)
}

fn cmd_report(cache: PathBuf, out: Option<PathBuf>) -> Result<u8> {
    let records = Cache::read(&cache).with_context(|| format!("reading {}", cache.display()))?;
    let report = build_report(&records, &shapes_in(&records), None);
    print_summary(&report);
    if let Some(p) = out {
        write_json(&p, &report)?;
    }
    Ok(if report.has_violations() { EXIT_MISMATCH } else { 0 })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Command::Grank {
            shape,
            probe,
            max_k,
            witness_out,
        } => cmd_grank(shape, probe, max_k, witness_out),
        Command::VerifyConjecture {
            max_dim,
            probe,
            cache,
            no_timing,
            report,
        } => cmd_verify(max_dim, probe, cache, no_timing, report),
        Command::Gamma { k, m, n } => {
            println!("{}", gamma(k, m, n)?);
            Ok(0)
        }
        Command::Bounds {
            shape,
            tensor,
            json,
        } => cmd_bounds(shape, tensor, json),
        Command::Gap {
            m,
            source,
            level,
            seed,
            out,
        } => cmd_gap(m, source, level, seed, out),
        Command::Report { cache, out } => cmd_report(cache, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
