//! Jacobian rank probes for the map
//! `f_k(x) = sum_{l=1}^{k} x_{l,1} ⊗ x_{l,2} ⊗ x_{l,3}`.
//!
//! The column space of the Jacobian at a point is the span of the tangent
//! spaces to the rank-one variety at the `k` terms. Its rank at a generic
//! point is `r(k)`, and the generic rank of a shape is the least `k` with
//! `r(k) = m1 m2 m3`. Rank modulo a prime never exceeds the rank over the
//! rationals, so a probe that reaches `expected(k)` is a proof that the
//! generic value is `expected(k)`. A shortfall is only evidence.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::{grank_lower_bound, perfect_ratio};
use crate::linalg::{fp_rank, random_prime, FpMatrix, IntMatrix};
use crate::rng;
use crate::tensor::{FactorList, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub trials: usize,
    pub entry_lo: i64,
    pub entry_hi: i64,
    pub prime_bits: u32,
    pub seed: u64,
    /// Largest `k` tried by [`estimate_grank`]; `None` means `m1' m2'`
    /// for the sorted shape.
    pub max_k: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            trials: 3,
            entry_lo: -99,
            entry_hi: 99,
            prime_bits: 61,
            seed: 0,
            max_k: None,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.entry_lo >= self.entry_hi {
            return Err(Error::InvalidArgument(format!(
                "entry range {}..{} is empty",
                self.entry_lo, self.entry_hi
            )));
        }
        if self.entry_lo.unsigned_abs().max(self.entry_hi.unsigned_abs()) > 1 << 20 {
            return Err(Error::InvalidArgument(
                "entry range must lie within ±2^20".into(),
            ));
        }
        if !(30..=62).contains(&self.prime_bits) {
            return Err(Error::InvalidArgument(format!(
                "prime bit length {} outside 30..=62",
                self.prime_bits
            )));
        }
        Ok(())
    }
}

/// Seed of trial `trial` for the probe of `k` on `shape` (dims as given).
pub fn trial_seed(master: u64, shape: Shape, k: usize, trial: usize) -> u64 {
    let [a, b, c] = shape.dims();
    rng::derive_seed(master, &[a as u64, b as u64, c as u64, k as u64, trial as u64])
}

/// The random factors and prime of one trial, regenerated from its seed.
pub fn trial_point(shape: Shape, k: usize, cfg: &ProbeConfig, seed: u64) -> Result<(FactorList, u64)> {
    let mut r = rng::stream(seed);
    let mut draw = |len: usize| loop {
        let v: Vec<i64> = (0..len)
            .map(|_| r.random_range(cfg.entry_lo..=cfg.entry_hi))
            .collect();
        if v.iter().any(|&x| x != 0) {
            break v;
        }
    };
    let dims = shape.dims();
    let terms = (0..k)
        .map(|_| [draw(dims[0]), draw(dims[1]), draw(dims[2])])
        .collect();
    let prime = random_prime(cfg.prime_bits, r.next_u64())?;
    Ok((FactorList::new(terms), prime))
}

/// Visits the nonzero entries of the Jacobian as `(row, col, a, b)` where
/// the entry is the product `a * b` of two factor coordinates.
fn for_each_entry(shape: Shape, f: &FactorList, mut visit: impl FnMut(usize, usize, i64, i64)) {
    let [m1, m2, m3] = shape.dims();
    let width = shape.factor_len();
    for (l, [x1, x2, x3]) in f.terms.iter().enumerate() {
        let base = l * width;
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                for i3 in 0..m3 {
                    let row = shape.offset(i1, i2, i3);
                    visit(row, base + i1, x2[i2], x3[i3]);
                    visit(row, base + m1 + i2, x1[i1], x3[i3]);
                    visit(row, base + m1 + m2 + i3, x1[i1], x2[i2]);
                }
            }
        }
    }
}

/// The `m1 m2 m3 × k(m1+m2+m3)` Jacobian of `f_k` at `f`.
///
/// Columns come in blocks of `m1 + m2 + m3` per term; within a block the
/// column for axis 1 and index `p` is `e_p ⊗ x_2 ⊗ x_3`, and likewise for
/// the other axes. Rows follow the lexicographic tensor order.
pub fn jacobian(shape: Shape, f: &FactorList) -> Result<IntMatrix> {
    f.check_shape(shape)?;
    let cols = f.k() * shape.factor_len();
    let mut m = IntMatrix::zeros(shape.volume(), cols);
    for_each_entry(shape, f, |r, c, a, b| {
        m.set(r, c, i128::from(a) * i128::from(b));
    });
    Ok(m)
}

/// The Jacobian reduced modulo `prime`.
pub fn jacobian_mod_p(shape: Shape, f: &FactorList, prime: u64) -> Result<FpMatrix> {
    f.check_shape(shape)?;
    let cols = f.k() * shape.factor_len();
    let mut m = FpMatrix::zeros(shape.volume(), cols, prime)?;
    let p = i128::from(prime);
    for_each_entry(shape, f, |r, c, a, b| {
        let v = (i128::from(a) * i128::from(b)).rem_euclid(p);
        m.set(r, c, v as u64);
    });
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub prime: u64,
    pub r_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub shape: Shape,
    pub k: usize,
    pub expected: usize,
    pub r_hat: usize,
    pub trials: Vec<TrialRecord>,
}

impl ProbeOutcome {
    pub fn reached(&self) -> bool {
        self.r_hat == self.expected
    }

    /// The first trial that reached `expected`, if any.
    pub fn witness(&self) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| t.r_hat == self.expected)
    }
}

/// One trial: rank modulo a fresh prime at a fresh random point.
pub fn probe_trial(shape: Shape, k: usize, cfg: &ProbeConfig, trial: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.seed, shape, k, trial);
    let (f, prime) = trial_point(shape, k, cfg, seed)?;
    let r_hat = fp_rank(&jacobian_mod_p(shape, &f, prime)?);
    Ok(TrialRecord {
        trial,
        seed,
        prime,
        r_hat,
    })
}

/// Maximum Jacobian rank over up to `cfg.trials` trials, stopping at the
/// first trial that reaches `expected(k)`.
pub fn probe_r(shape: Shape, k: usize, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    cfg.validate()?;
    let expected = shape.expected_dim(k);
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut r_hat = 0;
    for t in 0..cfg.trials {
        let rec = probe_trial(shape, k, cfg, t)?;
        r_hat = r_hat.max(rec.r_hat);
        trials.push(rec);
        if r_hat == expected {
            break;
        }
    }
    Ok(ProbeOutcome {
        shape,
        k,
        expected,
        r_hat,
        trials,
    })
}

/// Small/big classification of `k` for a shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KClass {
    /// `r(k) = k(m1+m2+m3-2) < m1 m2 m3`.
    Small,
    /// `r(k) = m1 m2 m3 < k(m1+m2+m3-2)`.
    Big,
    /// `r(k) = k(m1+m2+m3-2) = m1 m2 m3`.
    Perfect,
    /// `r̂(k) < expected(k)` after every trial.
    Defective,
}

impl KClass {
    pub fn is_small(self) -> bool {
        matches!(self, KClass::Small | KClass::Perfect)
    }

    pub fn is_big(self) -> bool {
        matches!(self, KClass::Big | KClass::Perfect)
    }
}

/// Classification implied by a probe value.
pub fn classify_value(shape: Shape, k: usize, r_hat: usize) -> KClass {
    let full = k * shape.rank_one_dim();
    let vol = shape.volume();
    if r_hat < shape.expected_dim(k) {
        KClass::Defective
    } else if full == vol {
        KClass::Perfect
    } else if r_hat == vol {
        KClass::Big
    } else {
        KClass::Small
    }
}

pub fn classify_k(shape: Shape, k: usize, cfg: &ProbeConfig) -> Result<KClass> {
    let o = probe_r(shape, k, cfg)?;
    Ok(classify_value(shape, k, o.r_hat))
}

/// Whether `m1 m2 m3 / (m1+m2+m3-2)` is an integer `k0` and `k0` is both
/// small and big.
pub fn is_perfect(shape: Shape, cfg: &ProbeConfig) -> Result<bool> {
    match perfect_ratio(shape) {
        Some(k0) => Ok(classify_k(shape, k0, cfg)? == KClass::Perfect),
        None => Ok(false),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub r_hat: usize,
    pub expected: usize,
    pub status: KClass,
    pub trials: Vec<TrialRecord>,
}

impl CurvePoint {
    fn from_outcome(o: ProbeOutcome) -> Self {
        Self {
            k: o.k,
            r_hat: o.r_hat,
            expected: o.expected,
            status: classify_value(o.shape, o.k, o.r_hat),
            trials: o.trials,
        }
    }
}

/// `r̂(k)` for consecutive `k` starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCurve {
    pub shape: Shape,
    pub points: Vec<CurvePoint>,
}

impl RankCurve {
    pub fn get(&self, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.k == k)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[0].r_hat <= w[1].r_hat)
    }

    pub fn within_expected(&self) -> bool {
        self.points.iter().all(|p| p.r_hat <= p.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrankVerdict {
    pub shape: Shape,
    pub grank_estimate: usize,
    pub curve: RankCurve,
    /// The estimate is proved: `r̂` reached `m1 m2 m3` at the estimate and
    /// `k = estimate - 1` cannot fill the space by a dimension count.
    pub certified: bool,
    pub defective_ks: Vec<usize>,
}

fn default_max_k(shape: Shape) -> usize {
    let [a, b, _] = shape.canonical().dims();
    a * b
}

/// Smallest `k` whose probe fills the ambient space, with `r̂(k)` for every
/// `k` from 1 to the estimate.
pub fn estimate_grank(shape: Shape, cfg: &ProbeConfig) -> Result<GrankVerdict> {
    cfg.validate()?;
    if shape.has_unit_dim() {
        let [_, b, c] = shape.canonical().dims();
        return Ok(GrankVerdict {
            shape,
            grank_estimate: b.min(c),
            curve: RankCurve {
                shape,
                points: Vec::new(),
            },
            certified: true,
            defective_ks: Vec::new(),
        });
    }
    let lb = grank_lower_bound(shape);
    let max_k = cfg.max_k.unwrap_or_else(|| default_max_k(shape));
    let vol = shape.volume();
    let mut upper = Vec::new();
    let mut found = None;
    for k in lb..=max_k {
        let o = probe_r(shape, k, cfg)?;
        let full = o.r_hat == vol;
        upper.push(CurvePoint::from_outcome(o));
        if full {
            found = Some(k);
            break;
        }
    }
    let Some(g) = found else {
        return Err(Error::ResourceCap {
            shape: shape.to_string(),
            max_k,
        });
    };
    let mut points = (1..lb)
        .into_par_iter()
        .map(|k| probe_r(shape, k, cfg).map(CurvePoint::from_outcome))
        .collect::<Result<Vec<_>>>()?;
    points.extend(upper);
    let certified = g == lb || shape.expected_dim(g - 1) < vol;
    let defective_ks = points
        .iter()
        .filter(|p| p.status == KClass::Defective)
        .map(|p| p.k)
        .collect();
    Ok(GrankVerdict {
        shape,
        grank_estimate: g,
        curve: RankCurve { shape, points },
        certified,
        defective_ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rational_rank;
    use crate::tensor::build_from_factors;

    fn s(a: usize, b: usize, c: usize) -> Shape {
        Shape::new(a, b, c).unwrap()
    }

    #[test]
    fn single_term_jacobian_rank() {
        let e = vec![1, 0];
        let f = FactorList::new(vec![[e.clone(), e.clone(), e]]);
        let j = jacobian(s(2, 2, 2), &f).unwrap();
        assert_eq!((j.rows(), j.cols()), (8, 6));
        assert_eq!(rational_rank(&j).unwrap(), 4);
    }

    #[test]
    fn column_space_contains_the_point() {
        let sh = s(2, 3, 4);
        let f = FactorList::new(vec![[vec![2, -1], vec![1, 0, 3], vec![1, 1, -2, 5]]]);
        let j = jacobian(sh, &f).unwrap();
        let t = build_from_factors(sh, &f).unwrap();
        let [x1, _, _] = &f.terms[0];
        // sum_p x1[p] * column(axis 1, p) reproduces the rank-one tensor.
        for row in 0..sh.volume() {
            let combo: i128 = (0..2)
                .map(|p| i128::from(x1[p]) * j.get_i64(row, p).unwrap() as i128)
                .sum();
            assert_eq!(combo, t.entries()[row] as i128);
        }
        let mut rows = j.to_rows_i64().unwrap();
        for (row, v) in rows.iter_mut().zip(t.entries()) {
            row.push(*v);
        }
        let aug = IntMatrix::from_rows(&rows).unwrap();
        assert_eq!(rational_rank(&aug).unwrap(), rational_rank(&j).unwrap());
    }

    #[test]
    fn vanishing_middle_factor() {
        let f = FactorList::new(vec![[vec![1, 2], vec![0, 0], vec![3, -1]]]);
        let j = jacobian(s(2, 2, 2), &f).unwrap();
        assert_eq!(rational_rank(&j).unwrap(), 2);
    }

    #[test]
    fn jacobian_rejects_bad_lengths() {
        let f = FactorList::new(vec![[vec![1], vec![1, 0], vec![1, 0]]]);
        assert!(jacobian(s(2, 2, 2), &f).is_err());
        assert!(jacobian_mod_p(s(2, 2, 2), &f, 101).is_err());
    }

    #[test]
    fn modular_jacobian_matches_reduction() {
        let cfg = ProbeConfig::default();
        let sh = s(3, 2, 4);
        let (f, p) = trial_point(sh, 3, &cfg, 11).unwrap();
        let exact = jacobian(sh, &f).unwrap().reduce_mod(p).unwrap();
        assert_eq!(jacobian_mod_p(sh, &f, p).unwrap(), exact);
    }

    #[test]
    fn trial_points_are_reproducible_and_nonzero() {
        let cfg = ProbeConfig {
            entry_lo: 0,
            entry_hi: 1,
            ..ProbeConfig::default()
        };
        let sh = s(1, 1, 2);
        let a = trial_point(sh, 20, &cfg, 5).unwrap();
        assert_eq!(a, trial_point(sh, 20, &cfg, 5).unwrap());
        for term in &a.0.terms {
            assert!(term.iter().all(|v| v.iter().any(|&x| x != 0)));
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            ProbeConfig { trials: 0, ..Default::default() },
            ProbeConfig { entry_lo: 3, entry_hi: 3, ..Default::default() },
            ProbeConfig { prime_bits: 64, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
            assert!(probe_r(s(2, 2, 2), 1, &c).is_err());
        }
        assert!(probe_r(s(2, 2, 2), 0, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn probe_values() {
        let cfg = ProbeConfig::default();
        assert_eq!(probe_r(s(2, 2, 2), 2, &cfg).unwrap().r_hat, 8);
        let o = probe_r(s(3, 3, 3), 4, &cfg).unwrap();
        assert_eq!((o.r_hat, o.expected, o.trials.len()), (26, 27, 3));
        assert_eq!(probe_r(s(3, 3, 3), 5, &cfg).unwrap().r_hat, 27);
    }

    #[test]
    fn classification() {
        let cfg = ProbeConfig::default();
        assert_eq!(classify_k(s(2, 2, 2), 2, &cfg).unwrap(), KClass::Perfect);
        assert_eq!(classify_k(s(3, 3, 5), 5, &cfg).unwrap(), KClass::Perfect);
        assert_eq!(classify_k(s(3, 3, 3), 4, &cfg).unwrap(), KClass::Defective);
        assert_eq!(classify_k(s(3, 3, 3), 3, &cfg).unwrap(), KClass::Small);
        assert_eq!(classify_k(s(3, 3, 3), 5, &cfg).unwrap(), KClass::Big);
        assert!(is_perfect(s(3, 3, 5), &cfg).unwrap());
        assert!(!is_perfect(s(3, 3, 3), &cfg).unwrap());
    }

    #[test]
    fn estimates() {
        let cfg = ProbeConfig::default();
        let v = estimate_grank(s(2, 2, 2), &cfg).unwrap();
        assert_eq!((v.grank_estimate, v.certified), (2, true));
        let v = estimate_grank(s(3, 3, 3), &cfg).unwrap();
        assert_eq!(v.grank_estimate, 5);
        assert_eq!(v.defective_ks, vec![4]);
        assert!(!v.certified);
        assert_eq!(v.curve.points.iter().map(|p| p.k).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        let v = estimate_grank(s(4, 4, 4), &cfg).unwrap();
        assert_eq!((v.grank_estimate, v.certified), (7, true));
        assert!(v.curve.is_nondecreasing() && v.curve.within_expected());
        let v = estimate_grank(s(1, 3, 5), &cfg).unwrap();
        assert_eq!((v.grank_estimate, v.certified), (3, true));
    }

    #[test]
    fn resource_cap() {
        let cfg = ProbeConfig {
            max_k: Some(4),
            ..ProbeConfig::default()
        };
        assert!(matches!(
            estimate_grank(s(3, 3, 3), &cfg),
            Err(Error::ResourceCap { max_k: 4, .. })
        ));
    }
}
