//! Certificates that the real maximal typical rank of `(m, m, l)` exceeds
//! the complex generic rank.
//!
//! A subspace `L` of real `m × m` matrices with no rank-one member cannot
//! lie inside a subspace of dimension `dim L` spanned by rank-one
//! matrices, so the tensor whose slices form a basis of `L` has real rank
//! at least `dim L + 1`. We take `L = S_{m,0} + K`: the trace-zero
//! symmetric matrices plus a skew-symmetric space `K` with no nonzero
//! member of rank 2.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::known_grank;
use crate::linalg::{determinant, rational_rank, IntMatrix};
use crate::rng;
use crate::tensor::{IntTensor3, Shape};

/// Bounded redraws before a random skew space is declared dependent.
const MAX_DRAWS: usize = 32;
/// Starts of the multi-start search over the coefficient sphere.
pub const HEURISTIC_STARTS: usize = 64;
/// Smallest admissible `σ3 / σ1` at any local optimum.
pub const HEURISTIC_THRESHOLD: f64 = 1e-6;

/// Linearly independent `m × m` integer matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub m: usize,
    pub matrices: Vec<IntMatrix>,
}

fn stacked(m: usize, mats: &[IntMatrix]) -> Result<IntMatrix> {
    let mut entries = Vec::with_capacity(mats.len() * m * m);
    for a in mats {
        if a.rows() != m || a.cols() != m {
            return Err(Error::ShapeMismatch(format!(
                "expected {m}x{m} matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        entries.extend(a.entries().iter().cloned());
    }
    IntMatrix::new(mats.len(), m * m, entries)
}

fn independent(m: usize, mats: &[IntMatrix]) -> Result<bool> {
    if mats.is_empty() {
        return Ok(true);
    }
    Ok(rational_rank(&stacked(m, mats)?)? == mats.len())
}

impl SubspaceBasis {
    pub fn new(m: usize, matrices: Vec<IntMatrix>) -> Result<Self> {
        if !independent(m, &matrices)? {
            return Err(Error::IndependenceFailure { attempts: 1 });
        }
        Ok(Self { m, matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_independent(&self) -> Result<bool> {
        independent(self.m, &self.matrices)
    }
}

fn is_symmetric(a: &IntMatrix) -> bool {
    a.is_square() && *a == a.transpose()
}

fn is_skew(a: &IntMatrix) -> bool {
    a.is_square() && a.transpose() == a.scale(&BigInt::from(-1))
}

/// `E_ii - E_{i+1,i+1}` for `i < m` and `E_ij + E_ji` for `i < j`.
pub fn traceless_symmetric_basis(m: usize) -> Result<SubspaceBasis> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need m >= 2, got {m}")));
    }
    let mut mats = Vec::new();
    for i in 0..m - 1 {
        let mut a = IntMatrix::zeros(m, m);
        a.set(i, i, 1);
        a.set(i + 1, i + 1, -1);
        mats.push(a);
    }
    for i in 0..m {
        for j in i + 1..m {
            let mut a = IntMatrix::zeros(m, m);
            a.set(i, j, 1);
            a.set(j, i, 1);
            mats.push(a);
        }
    }
    SubspaceBasis::new(m, mats)
}

const QUATERNION: [[[i64; 4]; 4]; 3] = [
    [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
    [[0, 0, 1, 0], [0, 0, 0, -1], [-1, 0, 0, 0], [0, 1, 0, 0]],
    [[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]],
];

/// The first `level` of three anticommuting orthogonal skew `4 × 4`
/// matrices.
pub fn quaternion_skew_basis(level: usize) -> Result<SubspaceBasis> {
    if !(1..=3).contains(&level) {
        return Err(Error::InvalidArgument(format!(
            "quaternion level must be 1, 2 or 3, got {level}"
        )));
    }
    let mats = QUATERNION[..level]
        .iter()
        .map(|t| IntMatrix::from_rows(&t.iter().map(|r| r.to_vec()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    SubspaceBasis::new(4, mats)
}

fn random_skew(m: usize, r: &mut rng::StreamRng) -> IntMatrix {
    let mut a = IntMatrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v: i64 = r.random_range(-99..=99);
            a.set(i, j, v);
            a.set(j, i, -v);
        }
    }
    a
}

/// `dim = (m-2)(m-3)/2` random integer skew matrices with entries in
/// `[-99, 99]`, independent over the rationals.
pub fn generic_skew_subspace(m: usize, dim: usize, seed: u64) -> Result<SubspaceBasis> {
    if m < 4 {
        return Err(Error::InvalidArgument(format!("need m >= 4, got {m}")));
    }
    let want = (m - 2) * (m - 3) / 2;
    if dim != want {
        return Err(Error::InvalidArgument(format!(
            "skew dimension for m={m} must be {want}, got {dim}"
        )));
    }
    for attempt in 0..MAX_DRAWS {
        let mut r = rng::stream(rng::derive_seed(seed, &[m as u64, dim as u64, attempt as u64]));
        let mats: Vec<IntMatrix> = (0..dim).map(|_| random_skew(m, &mut r)).collect();
        if independent(m, &mats)? {
            return Ok(SubspaceBasis { m, matrices: mats });
        }
    }
    Err(Error::IndependenceFailure {
        attempts: MAX_DRAWS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Confidence {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewMethod {
    /// No skew part.
    Empty,
    /// One `4 × 4` skew matrix with nonzero Pfaffian.
    Pfaffian,
    /// One skew matrix of exact rank above 2.
    ExactRank,
    /// `X_i^T X_j + X_j^T X_i = 2 g_ij I` with `G` positive definite, so
    /// every nonzero combination is a multiple of an orthogonal matrix.
    OrthogonalPencil,
    /// Multi-start minimization of `σ3 / σ1` over the coefficient sphere.
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub symmetric_part_check: bool,
    pub skew_part_check: bool,
    pub independence_check: bool,
    pub transpose_closure_check: bool,
    pub skew_method: SkewMethod,
    /// Smallest `σ3 / σ1` found, for the numerical method only.
    pub min_sigma_ratio: Option<f64>,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.symmetric_part_check
            && self.skew_part_check
            && self.independence_check
            && self.transpose_closure_check
    }

    /// `None` when some check failed.
    pub fn confidence(&self) -> Option<Confidence> {
        if !self.passed() {
            None
        } else if self.skew_method == SkewMethod::Numerical {
            Some(Confidence::Heuristic)
        } else {
            Some(Confidence::Exact)
        }
    }
}

/// Pfaffian of a `4 × 4` skew matrix.
pub fn pfaffian4(a: &IntMatrix) -> Result<BigInt> {
    if a.rows() != 4 || !is_skew(a) {
        return Err(Error::InvalidArgument("pfaffian4 needs a 4x4 skew matrix".into()));
    }
    let e = |i, j| a.get(i, j).clone();
    Ok(e(0, 1) * e(2, 3) - e(0, 2) * e(1, 3) + e(0, 3) * e(1, 2))
}

/// `H` with `X_i^T X_j + X_j^T X_i = H_ij I`, if every such sum is scalar.
pub fn polarization_gram(mats: &[IntMatrix]) -> Result<Option<IntMatrix>> {
    let l = mats.len();
    let mut h = IntMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let s = mats[i]
                .transpose()
                .mul(&mats[j])?
                .add(&mats[j].transpose().mul(&mats[i])?)?;
            let c = s.get(0, 0).clone();
            if s != IntMatrix::identity(s.rows()).scale(&c) {
                return Ok(None);
            }
            h.set(i, j, c);
        }
    }
    Ok(Some(h))
}

fn positive_definite(h: &IntMatrix) -> Result<bool> {
    for n in 1..=h.rows() {
        let mut minor = IntMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                minor.set(i, j, h.get(i, j).clone());
            }
        }
        if !determinant(&minor)?.is_positive() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn to_dmatrix(a: &IntMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        a.get_i64(i, j).expect("small skew entries") as f64
    })
}

fn sigma_ratio(mats: &[DMatrix<f64>], c: &[f64]) -> f64 {
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sum = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (x, &ci) in mats.iter().zip(c) {
        sum += x * (ci / norm);
    }
    let mut sv: Vec<f64> = sum.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] == 0.0 {
        return 0.0;
    }
    sv.get(2).copied().unwrap_or(0.0) / sv[0]
}

/// Smallest `σ3 / σ1` over unit combinations of `mats`, by compass search
/// from [`HEURISTIC_STARTS`] seeded starting points.
pub fn min_sigma3_ratio(mats: &[IntMatrix], seed: u64) -> f64 {
    let dm: Vec<DMatrix<f64>> = mats.iter().map(to_dmatrix).collect();
    let d = dm.len();
    let mut r = rng::stream(rng::derive_seed(seed, &[0x7369_676d_61]));
    let mut best = f64::INFINITY;
    for _ in 0..HEURISTIC_STARTS {
        let mut c: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..=1.0)).collect();
            if v.iter().any(|x| x.abs() > 1e-3) {
                break v;
            }
        };
        let mut f = sigma_ratio(&dm, &c);
        let mut step = 0.5;
        while step > 1e-9 {
            let mut improved = false;
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut t = c.clone();
                    t[i] += sign * step;
                    if t.iter().all(|x| x.abs() < 1e-12) {
                        continue;
                    }
                    let ft = sigma_ratio(&dm, &t);
                    if ft < f {
                        f = ft;
                        c = t;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
            let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= n);
        }
        best = best.min(f);
    }
    best
}

fn skew_rank_two_free(skew: &SubspaceBasis, seed: u64) -> Result<(bool, SkewMethod, Option<f64>)> {
    let mats = &skew.matrices;
    if mats.is_empty() {
        return Ok((true, SkewMethod::Empty, None));
    }
    if !mats.iter().all(is_skew) {
        return Ok((false, SkewMethod::ExactRank, None));
    }
    if mats.len() == 1 {
        if skew.m == 4 {
            return Ok((!pfaffian4(&mats[0])?.is_zero(), SkewMethod::Pfaffian, None));
        }
        return Ok((rational_rank(&mats[0])? > 2, SkewMethod::ExactRank, None));
    }
    if skew.m >= 3 {
        if let Some(h) = polarization_gram(mats)? {
            if positive_definite(&h)? {
                return Ok((true, SkewMethod::OrthogonalPencil, None));
            }
        }
    }
    let ratio = min_sigma3_ratio(mats, seed);
    Ok((ratio > HEURISTIC_THRESHOLD, SkewMethod::Numerical, Some(ratio)))
}

/// Checks that `symmetric_part + skew` has no real rank-one member.
///
/// A rank-one `xy^T` splits into a symmetric part and the skew part
/// `(xy^T - yx^T)/2`, which is zero or of rank 2. A symmetric rank-one
/// matrix `±xx^T` has nonzero trace, so trace-zero symmetric matrices plus
/// a skew space without rank-2 members suffice.
pub fn rank_one_free_check(skew: &SubspaceBasis, symmetric_part: &SubspaceBasis, seed: u64) -> Result<Audit> {
    let m = symmetric_part.m;
    let symmetric_part_check = symmetric_part
        .matrices
        .iter()
        .all(|a| is_symmetric(a) && a.trace().is_zero());
    let (skew_ok, skew_method, min_sigma_ratio) = if skew.m == m || skew.matrices.is_empty() {
        skew_rank_two_free(skew, seed)?
    } else {
        (false, SkewMethod::ExactRank, None)
    };
    let mut all = symmetric_part.matrices.clone();
    all.extend(skew.matrices.iter().cloned());
    let independence_check = skew_ok && independent(m, &all)?;
    let transpose_closure_check = independence_check && {
        let mut ok = true;
        for a in &all {
            let mut with = all.clone();
            with.push(a.transpose());
            ok &= rational_rank(&stacked(m, &with)?)? == all.len();
        }
        ok
    };
    Ok(Audit {
        symmetric_part_check,
        skew_part_check: skew_ok,
        independence_check,
        transpose_closure_check,
        skew_method,
        min_sigma_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SkewSource {
    Quaternion { level: usize },
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub shape: Shape,
    pub tensor: IntTensor3,
    pub basis: Vec<IntMatrix>,
    /// Lower bound on the real rank of `tensor`.
    pub claimed_lower: usize,
    pub complex_grank: usize,
    pub source: Option<SkewSource>,
    pub seed: u64,
    pub audit: Audit,
    pub confidence: Confidence,
}

/// Default skew source: none for `m <= 3`, quaternions with level 1 for
/// `m = 4`, random otherwise.
pub fn default_source(m: usize) -> Option<SkewSource> {
    match m {
        0..=3 => None,
        4 => Some(SkewSource::Quaternion { level: 1 }),
        _ => Some(SkewSource::Generic),
    }
}

pub fn build_gap_certificate(m: usize, source: Option<SkewSource>, seed: u64) -> Result<GapCertificate> {
    let sym = traceless_symmetric_basis(m)?;
    let source = if m <= 3 { None } else { source.or(default_source(m)) };
    let skew = match source {
        None => SubspaceBasis {
            m,
            matrices: Vec::new(),
        },
        Some(SkewSource::Quaternion { level }) => {
            if m != 4 {
                return Err(Error::InvalidArgument(format!(
                    "the quaternion source needs m = 4, got {m}"
                )));
            }
            quaternion_skew_basis(level)?
        }
        Some(SkewSource::Generic) => generic_skew_subspace(m, (m - 2) * (m - 3) / 2, seed)?,
    };
    let audit = rank_one_free_check(&skew, &sym, seed)?;
    let confidence = audit
        .confidence()
        .ok_or_else(|| Error::CheckFailed(format!("rank-one freeness audit failed: {audit:?}")))?;
    let mut basis = sym.matrices;
    basis.extend(skew.matrices);
    let tensor = IntTensor3::from_axis3_slices(&basis)?;
    let shape = tensor.shape();
    let complex_grank = known_grank(shape)
        .map(|v| v.value)
        .ok_or_else(|| Error::CheckFailed(format!("no generic rank formula for {shape}")))?;
    let claimed_lower = basis.len() + 1;
    if claimed_lower <= complex_grank {
        return Err(Error::CheckFailed(format!(
            "claimed bound {claimed_lower} does not exceed generic rank {complex_grank}"
        )));
    }
    Ok(GapCertificate {
        shape,
        tensor,
        basis,
        claimed_lower,
        complex_grank,
        source,
        seed,
        audit,
        confidence,
    })
}
