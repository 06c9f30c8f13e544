//! Desk-scale sweep of the ceiling conjecture with a resumable cache.
//!
//! For every sorted shape `3 <= m1 <= m2 <= m3 <= max_dim` the sweep probes
//! a window of `k` and checks the small/big pattern the shape should show.
//! Each trial becomes one [`SweepRecord`] line in an append-only JSONL
//! cache; a rerun skips every `(shape, k)` already settled there. The
//! report is a pure function of the cached records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::{ceiling_bound, is_three_odd_square};
use crate::terracini::{classify_value, probe_trial, trial_seed, KClass, ProbeConfig};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// `m3 <= (m1-1)(m2-1)`: every `k` below the ceiling should be small
    /// and the ceiling big.
    Conjecture,
    /// `(3, 2p+1, 2p+1)`: the generic rank is one above the ceiling.
    KnownExceptional,
    /// `m3 > (m1-1)(m2-1)`: the generic rank is `min(m3, m1 m2)`.
    Unbalanced,
}

/// Category of a sorted shape together with the generic rank it should
/// show and the last `k` probed.
pub fn classify_shape(shape: Shape) -> (Category, usize) {
    let [a, b, c] = shape.canonical().dims();
    if c > (a - 1) * (b - 1) {
        (Category::Unbalanced, c.min(a * b))
    } else if is_three_odd_square(shape) {
        (Category::KnownExceptional, ceiling_bound(shape) + 1)
    } else {
        (Category::Conjecture, ceiling_bound(shape))
    }
}

/// Sorted shapes `3 <= m1 <= m2 <= m3 <= max_dim`.
pub fn sweep_shapes(max_dim: usize) -> Vec<Shape> {
    let mut out = Vec::new();
    for a in 3..=max_dim {
        for b in a..=max_dim {
            for c in b..=max_dim {
                out.push(Shape::new(a, b, c).expect("positive dims"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordStatus {
    Certified,
    Shortfall,
}

/// One probe trial as stored in the cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub shape: Shape,
    pub k: usize,
    pub trial: usize,
    pub prime: u64,
    pub trial_seed: u64,
    pub r_hat: usize,
    pub expected: usize,
    pub status: RecordStatus,
    pub wall_time_ms: Option<u64>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub max_dim: usize,
    pub probe: ProbeConfig,
    /// Record wall time and timestamps. Off makes cache files reproducible
    /// byte for byte.
    pub timing: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_dim < 3 {
            return Err(Error::InvalidArgument(format!(
                "max_dim must be at least 3, got {}",
                self.max_dim
            )));
        }
        self.probe.validate()
    }
}

/// Append-only JSONL store of [`SweepRecord`]s.
#[derive(Debug)]
pub struct Cache {
    path: PathBuf,
    records: Vec<SweepRecord>,
}

impl Cache {
    /// Opens `path`, creating it if missing. A trailing line without a
    /// newline is the remnant of an interrupted write and is truncated.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut reader = BufReader::new(&file);
        let mut records = Vec::new();
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            if !line.ends_with('\n') {
                break;
            }
            let rec: SweepRecord = serde_json::from_str(line.trim_end()).map_err(|e| {
                Error::Cache(format!("{}:{lineno}: {e}", path.display()))
            })?;
            records.push(rec);
            good_len += n as u64;
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        Ok(Self { path, records })
    }

    /// Reads `path` without modifying it.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => records.push(r),
                Err(e) if e.is_eof() => break,
                Err(e) => return Err(Error::Cache(format!("{}:{}: {e}", path.display(), i + 1))),
            }
        }
        Ok(records)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[SweepRecord] {
        &self.records
    }

    pub fn append(&mut self, recs: &[SweepRecord]) -> Result<()> {
        if recs.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new().append(true).open(&self.path)?;
        let mut w = BufWriter::new(file);
        for r in recs {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        w.get_ref().sync_data()?;
        self.records.extend_from_slice(recs);
        Ok(())
    }
}

/// Records of `records` produced under `probe`, recognised by their seed.
fn matching<'a>(
    records: &'a [SweepRecord],
    probe: &'a ProbeConfig,
) -> impl Iterator<Item = &'a SweepRecord> + 'a {
    records
        .iter()
        .filter(move |r| r.trial_seed == trial_seed(probe.seed, r.shape, r.k, r.trial))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn run_task(
    shape: Shape,
    k: usize,
    cfg: &SweepConfig,
    done: &[usize],
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for trial in (0..cfg.probe.trials).filter(|t| !done.contains(t)) {
        let start = Instant::now();
        let t = probe_trial(shape, k, &cfg.probe, trial)?;
        let expected = shape.expected_dim(k);
        let status = if t.r_hat == expected {
            RecordStatus::Certified
        } else {
            RecordStatus::Shortfall
        };
        out.push(SweepRecord {
            shape,
            k,
            trial,
            prime: t.prime,
            trial_seed: t.seed,
            r_hat: t.r_hat,
            expected,
            status,
            wall_time_ms: cfg.timing.then(|| start.elapsed().as_millis() as u64),
            timestamp: cfg.timing.then(now_ms),
        });
        if status == RecordStatus::Certified {
            break;
        }
    }
    Ok(out)
}

/// Probes every unsettled `(shape, k)` of the sweep and appends the new
/// records, one shape at a time in canonical order. Within a shape the
/// `k` run in parallel on the current rayon pool.
pub fn run_sweep(cfg: &SweepConfig, cache: &mut Cache) -> Result<SweepReport> {
    cfg.validate()?;
    let shapes = sweep_shapes(cfg.max_dim);
    for &shape in &shapes {
        let (_, last) = classify_shape(shape);
        let pending: Vec<(usize, Vec<usize>)> = (2..=last)
            .filter_map(|k| {
                let recs: Vec<&SweepRecord> = matching(cache.records(), &cfg.probe)
                    .filter(|r| r.shape == shape && r.k == k)
                    .collect();
                let settled = recs.iter().any(|r| r.status == RecordStatus::Certified)
                    || (0..cfg.probe.trials).all(|t| recs.iter().any(|r| r.trial == t));
                (!settled).then(|| (k, recs.iter().map(|r| r.trial).collect()))
            })
            .collect();
        let batches = pending
            .par_iter()
            .map(|(k, done)| run_task(shape, *k, cfg, done))
            .collect::<Result<Vec<_>>>()?;
        cache.append(&batches.concat())?;
    }
    Ok(build_report(
        cache.records(),
        &shapes,
        Some(ConfigEcho::from(cfg)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub max_dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub entry_lo: i64,
    pub entry_hi: i64,
    pub prime_bits: u32,
}

impl From<&SweepConfig> for ConfigEcho {
    fn from(c: &SweepConfig) -> Self {
        Self {
            max_dim: c.max_dim,
            trials: c.probe.trials,
            seed: c.probe.seed,
            entry_lo: c.probe.entry_lo,
            entry_hi: c.probe.entry_hi,
            prime_bits: c.probe.prime_bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub k: usize,
    pub r_hat: usize,
    pub expected: usize,
    pub class: KClass,
    pub trials_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    /// A known exceptional shape showing its expected defect.
    Defective,
    Fail,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeVerdict {
    pub shape: Shape,
    pub category: Category,
    pub ceiling: usize,
    pub expected_grank: usize,
    pub points: Vec<ReportPoint>,
    pub outcome: Outcome,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub pass: usize,
    pub fail: usize,
    pub defective: usize,
    pub incomplete: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: Option<ConfigEcho>,
    pub shapes: Vec<ShapeVerdict>,
    pub tallies: Tallies,
    pub violations: Vec<Shape>,
}

impl SweepReport {
    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty()
    }
}

fn judge(category: Category, g: usize, points: &[ReportPoint]) -> (Outcome, Option<String>) {
    let at = |k: usize| points.iter().find(|p| p.k == k).map(|p| p.class);
    let fail = |msg: String| (Outcome::Fail, Some(msg));
    match category {
        Category::Conjecture | Category::KnownExceptional => {
            let ceiling = if category == Category::Conjecture { g } else { g - 1 };
            for p in points.iter().filter(|p| p.k < ceiling) {
                if !p.class.is_small() {
                    return fail(format!("k={} is not small (r̂={} < {})", p.k, p.r_hat, p.expected));
                }
            }
            if !at(g).is_some_and(KClass::is_big) {
                return fail(format!("k={g} does not fill the space"));
            }
            if category == Category::KnownExceptional {
                if at(ceiling).is_some_and(KClass::is_big) {
                    return fail(format!("k={ceiling} fills the space of a defective shape"));
                }
                return (Outcome::Defective, None);
            }
            (Outcome::Pass, None)
        }
        Category::Unbalanced => {
            if !at(g).is_some_and(KClass::is_big) {
                return fail(format!("k={g} does not fill the space"));
            }
            if at(g - 1).is_some_and(KClass::is_big) {
                return fail(format!("k={} already fills the space", g - 1));
            }
            (Outcome::Pass, None)
        }
    }
}

/// Verdicts for `shapes` from `records`. With `config`, records from a
/// different master seed are ignored and a `k` short of `config.trials`
/// uncertified trials counts as incomplete.
pub fn build_report(records: &[SweepRecord], shapes: &[Shape], config: Option<ConfigEcho>) -> SweepReport {
    let mut tallies = Tallies::default();
    let mut violations = Vec::new();
    let mut verdicts = Vec::with_capacity(shapes.len());
    let mut canon: Vec<Shape> = shapes.iter().map(|s| s.canonical()).collect();
    canon.sort();
    canon.dedup();
    for shape in canon {
        let (category, g) = classify_shape(shape);
        let mut points = Vec::new();
        let mut complete = true;
        for k in 2..=g {
            let recs: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.shape == shape && r.k == k)
                .filter(|r| {
                    config.is_none_or(|c| r.trial_seed == trial_seed(c.seed, r.shape, k, r.trial))
                })
                .collect();
            let mut trials: Vec<usize> = recs.iter().map(|r| r.trial).collect();
            trials.sort_unstable();
            trials.dedup();
            let r_hat = recs.iter().map(|r| r.r_hat).max();
            let expected = shape.expected_dim(k);
            let certified = r_hat == Some(expected);
            let enough = config.is_none_or(|c| trials.len() >= c.trials);
            match r_hat {
                Some(r) if certified || enough => points.push(ReportPoint {
                    k,
                    r_hat: r,
                    expected,
                    class: classify_value(shape, k, r),
                    trials_run: trials.len(),
                }),
                _ => complete = false,
            }
        }
        let (outcome, note) = if complete {
            judge(category, g, &points)
        } else {
            (Outcome::Incomplete, None)
        };
        match outcome {
            Outcome::Pass => tallies.pass += 1,
            Outcome::Defective => tallies.defective += 1,
            Outcome::Fail => {
                tallies.fail += 1;
                violations.push(shape);
            }
            Outcome::Incomplete => tallies.incomplete += 1,
        }
        verdicts.push(ShapeVerdict {
            shape,
            category,
            ceiling: ceiling_bound(shape),
            expected_grank: g,
            points,
            outcome,
            note,
        });
    }
    SweepReport {
        config,
        shapes: verdicts,
        tallies,
        violations,
    }
}

/// Distinct canonical shapes among `records`, sorted.
pub fn shapes_in(records: &[SweepRecord]) -> Vec<Shape> {
    let mut v: Vec<Shape> = records.iter().map(|r| r.shape.canonical()).collect();
    v.sort();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize, c: usize) -> Shape {
        Shape::new(a, b, c).unwrap()
    }

    #[test]
    fn categories() {
        assert_eq!(classify_shape(s(3, 3, 3)), (Category::KnownExceptional, 5));
        assert_eq!(classify_shape(s(3, 5, 5)), (Category::KnownExceptional, 8));
        assert_eq!(classify_shape(s(3, 3, 4)), (Category::Conjecture, 5));
        assert_eq!(classify_shape(s(3, 4, 4)), (Category::Conjecture, 6));
        assert_eq!(classify_shape(s(3, 3, 6)), (Category::Unbalanced, 6));
        assert_eq!(sweep_shapes(4).len(), 4);
    }

    #[test]
    fn sweep_resume_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cfg = SweepConfig {
            max_dim: 4,
            probe: ProbeConfig::default(),
            timing: false,
        };
        let mut cache = Cache::open(&path).unwrap();
        let report = run_sweep(&cfg, &mut cache).unwrap();
        // k = 5 on (3, 4, 4) falls one short of its expected dimension.
        assert_eq!(report.tallies, Tallies { pass: 2, fail: 1, defective: 1, incomplete: 0 });
        assert_eq!(report.violations, vec![s(3, 4, 4)]);
        let full = std::fs::read(&path).unwrap();

        // A torn final line and a missing tail are both recovered.
        let lines: Vec<&[u8]> = full.split_inclusive(|&b| b == b'\n').collect();
        let mut torn: Vec<u8> = lines[..lines.len() / 2].concat();
        torn.extend_from_slice(&lines[lines.len() / 2][..5]);
        std::fs::write(&path, &torn).unwrap();
        let mut cache = Cache::open(&path).unwrap();
        assert_eq!(cache.records().len(), lines.len() / 2);
        let resumed = run_sweep(&cfg, &mut cache).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), full);
        assert_eq!(resumed, report);

        // A settled cache is left untouched.
        let mut cache = Cache::open(&path).unwrap();
        run_sweep(&cfg, &mut cache).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), full);

        let from_file = Cache::read(&path).unwrap();
        let again = build_report(&from_file, &shapes_in(&from_file), None);
        assert_eq!(again.shapes, report.shapes);
    }

    #[test]
    fn corrupt_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"nope\":1}\n").unwrap();
        assert!(matches!(Cache::open(&path), Err(Error::Cache(_))));
    }

    #[test]
    fn shortfall_below_ceiling_is_a_violation() {
        let shape = s(3, 3, 4);
        let recs: Vec<SweepRecord> = (2..=5)
            .map(|k| {
                let expected = shape.expected_dim(k);
                let r_hat = if k == 3 { expected - 1 } else { expected };
                SweepRecord {
                    shape,
                    k,
                    trial: 0,
                    prime: 0,
                    trial_seed: 0,
                    r_hat,
                    expected,
                    status: if r_hat == expected {
                        RecordStatus::Certified
                    } else {
                        RecordStatus::Shortfall
                    },
                    wall_time_ms: None,
                    timestamp: None,
                }
            })
            .collect();
        let r = build_report(&recs, &[shape], None);
        assert_eq!(r.violations, vec![shape]);
        assert_eq!(r.shapes[0].outcome, Outcome::Fail);
    }
}
