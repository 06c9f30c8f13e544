//! Closed-form generic and maximal rank values, bounds and the degree
//! formula for determinantal loci in generic linear spaces of matrices.
//!
//! Every value carries a [`Status`]: results that are established are
//! `Proved`, a value quoted without proof is `Claimed`, and the ceiling
//! conjecture is `Conjectured`. Downstream reports must never present the
//! latter two as certified.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Proved,
    Claimed,
    Conjectured,
}

/// Which closed-form family produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// `min(m3, m1 m2)` once `m3 >= (m1-1)(m2-1) + 1`; matrices when `m1 = 1`.
    Unbalanced,
    /// `min(m3, 2 m2)` for `m1 = 2`.
    TwoSlice,
    /// The ceiling value at `m3 = (m1-1)(m2-1)`, `m1, m2 >= 3`.
    UnbalancedBoundary,
    /// `ceil(12p^2 / (4p+1))` for `(3, 2p, 2p)`.
    ThreeEvenSquare,
    /// `ceil(3(2p+1)^2 / (4p+3)) + 1` for `(3, 2p+1, 2p+1)`.
    ThreeOddSquare,
    /// `ceil(4m^2 / (2m+2))` for `(4, m, m)`.
    FourSquare,
    /// `ceil(n^3 / (3n-2))` for `(n, n, n)`, `n != 3`.
    Cube,
    /// `(n, n, n+2)` is perfect for `n != 2 (mod 3)`.
    PerfectNearCube,
    /// `(n-1, n, n)` is perfect for `n = 0 (mod 3)`.
    PerfectShortCube,
    /// `ceil(m1 m2 m3 / (m1+m2+m3-2))` inside the conjecture range.
    CeilingConjecture,
    /// `m + min(m, floor(n/2))` for `(2, m, n)`.
    TwoSliceMaximal,
    /// The quoted maximal rank 5 of `3 x 3 x 3`.
    CubeThreeMaximal,
    /// `m1 m2` once `m1 m2 <= m3`.
    MatrixSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownValue {
    pub value: usize,
    pub provenance: Provenance,
    pub status: Status,
}

impl KnownValue {
    fn proved(value: usize, provenance: Provenance) -> Self {
        Self {
            value,
            provenance,
            status: Status::Proved,
        }
    }
}

/// The perfect-shape families with an established perfectness result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerfectFamily {
    /// `(n, n, n+2)`, `n != 2 (mod 3)`.
    NearCube,
    /// `(n-1, n, n)`, `n = 0 (mod 3)`.
    ShortCube,
    /// `(m1, m2, (m1-1)(m2-1)+1)`.
    UnbalancedEdge,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// `ceil(m1 m2 m3 / (m1+m2+m3-2))`, the dimension-count lower bound.
pub fn ceiling_bound(shape: Shape) -> usize {
    ceil_div(shape.volume(), shape.rank_one_dim())
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Best proved lower bound on the generic rank.
///
/// Combines the dimension count, the multilinear bound `min(m3, m1 m2)`
/// valid for a generic tensor, and `grank(l, m, m) >= m + 2` for `l >= 3`,
/// `m >= 4`.
pub fn grank_lower_bound(shape: Shape) -> usize {
    let [a, b, c] = shape.canonical().dims();
    let mut lb = ceiling_bound(shape).max(c.min(a * b));
    let dims = [a, b, c];
    for (i, j, other) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
        if dims[i] == dims[j] && dims[i] >= 4 && dims[other] >= 3 {
            lb = lb.max(dims[i] + 2);
        }
    }
    lb
}

/// Established generic-rank value for `shape`, if a listed family applies.
pub fn known_grank(shape: Shape) -> Option<KnownValue> {
    let [a, b, c] = shape.canonical().dims();
    let s = shape.canonical();
    if c > (a - 1) * (b - 1) {
        let provenance = if a == 2 {
            Provenance::TwoSlice
        } else {
            Provenance::Unbalanced
        };
        return Some(KnownValue::proved(c.min(a * b), provenance));
    }
    if a >= 3 && c == (a - 1) * (b - 1) {
        return Some(KnownValue::proved(
            ceiling_bound(s),
            Provenance::UnbalancedBoundary,
        ));
    }
    if a == 3 && b == c {
        if b % 2 == 0 {
            let p = b / 2;
            return Some(KnownValue::proved(
                ceil_div(12 * p * p, 4 * p + 1),
                Provenance::ThreeEvenSquare,
            ));
        }
        let p = (b - 1) / 2;
        let v = ceil_div(3 * (2 * p + 1) * (2 * p + 1), 4 * p + 3) + 1;
        return Some(KnownValue::proved(v, Provenance::ThreeOddSquare));
    }
    if a == 4 && b == c {
        return Some(KnownValue::proved(
            ceil_div(4 * b * b, 2 * b + 2),
            Provenance::FourSquare,
        ));
    }
    if a == b && b == c && a != 3 {
        return Some(KnownValue::proved(
            ceil_div(a * a * a, 3 * a - 2),
            Provenance::Cube,
        ));
    }
    if a == b && c == a + 2 && a % 3 != 2 {
        return Some(KnownValue::proved(
            s.volume() / s.rank_one_dim(),
            Provenance::PerfectNearCube,
        ));
    }
    if b == c && a + 1 == b && b % 3 == 0 {
        return Some(KnownValue::proved(
            s.volume() / s.rank_one_dim(),
            Provenance::PerfectShortCube,
        ));
    }
    None
}

/// `(3, 2p+1, 2p+1)` shapes, excluded from the ceiling conjecture.
pub fn is_three_odd_square(shape: Shape) -> bool {
    let [a, b, c] = shape.canonical().dims();
    a == 3 && b == c && b % 2 == 1
}

/// Whether `3 <= m1 <= m2 <= m3 <= (m1-1)(m2-1)` and the shape is not
/// `(3, 2p+1, 2p+1)`.
pub fn in_conjecture_range(shape: Shape) -> bool {
    let [a, b, c] = shape.canonical().dims();
    a >= 3 && c <= (a - 1) * (b - 1) && !is_three_odd_square(shape)
}

/// The conjectured ceiling value, when the shape is in range.
pub fn conjectured_grank(shape: Shape) -> Option<KnownValue> {
    in_conjecture_range(shape).then(|| KnownValue {
        value: ceiling_bound(shape),
        provenance: Provenance::CeilingConjecture,
        status: Status::Conjectured,
    })
}

/// Established or quoted maximal-rank value for `shape`.
pub fn known_mrank(shape: Shape) -> Option<KnownValue> {
    let [a, b, c] = shape.canonical().dims();
    if a == 2 {
        return Some(KnownValue::proved(
            b + b.min(c / 2),
            Provenance::TwoSliceMaximal,
        ));
    }
    if [a, b, c] == [3, 3, 3] {
        return Some(KnownValue {
            value: 5,
            provenance: Provenance::CubeThreeMaximal,
            status: Status::Claimed,
        });
    }
    if a * b <= c {
        return Some(KnownValue::proved(a * b, Provenance::MatrixSpan));
    }
    None
}

/// Number of rank-`k` matrices in the projectivisation of a generic
/// `((m-k)(n-k)+1)`-dimensional space of `m x n` matrices:
/// `prod_{j=0}^{n-k-1} (m+j)! j! / ((k+j)! (m-k+j)!)`.
pub fn gamma(k: usize, m: usize, n: usize) -> Result<BigUint> {
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "gamma needs 1 <= k <= min(m, n), got k={k}, m={m}, n={n}"
        )));
    }
    let fact = |x: usize| -> BigInt { (1..=x).map(BigInt::from).product() };
    let mut acc = BigRational::one();
    for j in 0..n - k {
        let num = fact(m + j) * fact(j);
        let den = fact(k + j) * fact(m - k + j);
        acc *= BigRational::new(num, den);
    }
    if !acc.is_integer() {
        return Err(Error::InvalidArgument(format!(
            "gamma({k},{m},{n}) is not integral"
        )));
    }
    Ok(acc
        .to_integer()
        .to_biguint()
        .expect("gamma is a product of positive ratios"))
}

fn check_nmm(n: usize, m: usize) -> Result<()> {
    if n < 3 || m < 3 {
        return Err(Error::InvalidArgument(format!(
            "(n, m, m) bounds need n, m >= 3, got n={n}, m={m}"
        )));
    }
    Ok(())
}

/// Upper bound on `grank(n, m, m)`: the minimum of every applicable branch.
///
/// Branches, with `l = floor(sqrt(n-1))`:
/// * `floor(n/2) m + (n mod 2)(m - l)` when `m >= 2l`;
/// * `n (m - l)` when `m < 2l < 2(m-1)`;
/// * `min(n, m^2)` when `n >= (m-1)^2 + 1` (exact);
/// * `n + 1` when `n = (m-1)^2` (exact).
pub fn grank_upper_nmm(n: usize, m: usize) -> Result<usize> {
    check_nmm(n, m)?;
    let l = isqrt(n - 1);
    let mut best = usize::MAX;
    if m >= 2 * l {
        best = best.min((n / 2) * m + (n % 2) * (m - l));
    }
    if m < 2 * l && 2 * l < 2 * (m - 1) {
        best = best.min(n * (m - l));
    }
    if n > (m - 1) * (m - 1) {
        best = best.min(n.min(m * m));
    }
    if n == (m - 1) * (m - 1) {
        best = best.min(n + 1);
    }
    Ok(best)
}

/// Upper bound on `mrank(n, m, m)`:
/// `sum_{i=1}^{l} (2i-1)(m-i+1) + (n - l^2)(m - l)`, `l = floor(sqrt(n-1))`.
///
/// The last factor counts the `n - l^2` basis matrices left after the
/// first `l^2`, each of rank at most `m - l`.
pub fn mrank_upper_nmm(n: usize, m: usize) -> Result<usize> {
    check_nmm(n, m)?;
    let l = isqrt(n - 1);
    let head: i64 = (1..=l as i64).map(|i| (2 * i - 1) * (m as i64 - i + 1)).sum();
    let tail = (n as i64 - (l * l) as i64) * (m as i64 - l as i64);
    (head + tail)
        .to_usize()
        .ok_or_else(|| Error::InvalidArgument(format!("negative bound for n={n}, m={m}")))
}

/// The `(n, m)` pair of a shape with two equal dimensions `m` and a third
/// dimension `n`, both at least 3.
pub fn nmm_form(shape: Shape) -> Option<(usize, usize)> {
    let [a, b, c] = shape.canonical().dims();
    if b == c && a >= 3 {
        Some((a, b))
    } else if a == b && a >= 3 {
        Some((c, a))
    } else {
        None
    }
}

/// Shapes with every dimension at most `max_dim` that belong to an
/// established perfect family, sorted and deduplicated per family.
pub fn perfectness_expectations(max_dim: usize) -> Vec<(Shape, PerfectFamily)> {
    let mut out = Vec::new();
    for n in 3..=max_dim {
        if n + 2 <= max_dim && n % 3 != 2 {
            out.push((Shape::new(n, n, n + 2).unwrap(), PerfectFamily::NearCube));
        }
        if n % 3 == 0 {
            out.push((Shape::new(n - 1, n, n).unwrap(), PerfectFamily::ShortCube));
        }
    }
    for m1 in 2..=max_dim {
        for m2 in m1..=max_dim {
            let m3 = (m1 - 1) * (m2 - 1) + 1;
            if m3 <= max_dim {
                let s = Shape::new(m1, m2, m3).unwrap().canonical();
                out.push((s, PerfectFamily::UnbalancedEdge));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Whether `m1 m2 m3 / (m1+m2+m3-2)` is an integer, the arithmetic
/// precondition of perfectness.
pub fn perfect_ratio(shape: Shape) -> Option<usize> {
    let (q, r) = shape.volume().div_rem(&shape.rank_one_dim());
    (r == 0).then_some(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize, c: usize) -> Shape {
        Shape::new(a, b, c).unwrap()
    }

    #[test]
    fn lower_bounds() {
        assert_eq!(grank_lower_bound(s(3, 3, 3)), 4);
        assert_eq!(grank_lower_bound(s(3, 4, 4)), 6);
        assert_eq!(grank_lower_bound(s(1, 5, 7)), 5);
        assert_eq!(grank_lower_bound(s(4, 3, 4)), 6);
        assert_eq!(grank_lower_bound(s(5, 5, 5)), 10);
    }

    #[test]
    fn known_grank_values() {
        let v = known_grank(s(3, 3, 3)).unwrap();
        assert_eq!((v.value, v.provenance, v.status), (5, Provenance::ThreeOddSquare, Status::Proved));
        let v = known_grank(s(2, 3, 7)).unwrap();
        assert_eq!((v.value, v.provenance), (6, Provenance::TwoSlice));
        let v = known_grank(s(4, 5, 5)).unwrap();
        assert_eq!((v.value, v.provenance), (9, Provenance::FourSquare));
        assert_eq!(known_grank(s(3, 5, 5)).unwrap().value, 8);
        assert_eq!(known_grank(s(3, 4, 4)).unwrap().value, 6);
        assert_eq!(known_grank(s(3, 3, 4)).unwrap().value, 5);
        assert_eq!(known_grank(s(4, 4, 4)).unwrap().value, 7);
        assert_eq!(known_grank(s(5, 5, 5)).unwrap().value, 10);
        assert_eq!(known_grank(s(4, 4, 6)).unwrap().value, 8);
        assert_eq!(known_grank(s(5, 6, 6)).unwrap().value, 12);
        assert_eq!(known_grank(s(1, 4, 2)).unwrap().value, 2);
        assert_eq!(known_grank(s(3, 4, 5)), None);
        assert_eq!(known_grank(s(7, 3, 3)).unwrap().value, 7);
    }

    #[test]
    fn conjecture_range() {
        let v = conjectured_grank(s(5, 5, 5)).unwrap();
        assert_eq!((v.value, v.status), (10, Status::Conjectured));
        assert_eq!(conjectured_grank(s(3, 5, 5)), None);
        assert_eq!(conjectured_grank(s(3, 3, 8)), None);
        assert_eq!(conjectured_grank(s(3, 3, 4)).unwrap().value, 5);
    }

    #[test]
    fn known_mrank_values() {
        let v = known_mrank(s(2, 2, 2)).unwrap();
        assert_eq!((v.value, v.status), (3, Status::Proved));
        let v = known_mrank(s(3, 3, 3)).unwrap();
        assert_eq!((v.value, v.status), (5, Status::Claimed));
        let v = known_mrank(s(2, 3, 9)).unwrap();
        assert_eq!((v.value, v.status), (6, Status::Proved));
        assert_eq!(known_mrank(s(3, 4, 13)).unwrap().value, 12);
        assert_eq!(known_mrank(s(4, 4, 4)), None);
    }

    #[test]
    fn gamma_small_values() {
        assert_eq!(gamma(1, 2, 2).unwrap(), BigUint::from(2u32));
        assert_eq!(gamma(2, 3, 3).unwrap(), BigUint::from(3u32));
        assert_eq!(gamma(1, 3, 3).unwrap(), BigUint::from(6u32));
        assert!(gamma(0, 3, 3).is_err());
        assert!(gamma(4, 3, 5).is_err());
        // k = min(m, n) leaves an empty product.
        assert_eq!(gamma(3, 3, 3).unwrap(), BigUint::from(1u32));
    }

    #[test]
    fn gamma_integral_and_symmetric_up_to_ten() {
        for n in 1..=10 {
            for m in 1..=n {
                for k in 1..=m {
                    let g = gamma(k, m, n).unwrap();
                    assert_eq!(g, gamma(k, n, m).unwrap(), "k={k} m={m} n={n}");
                    assert!(g >= BigUint::one());
                }
            }
        }
    }

    #[test]
    fn nmm_bounds_reproduce_tabulated_rows() {
        // (n, m, grank upper, mrank upper)
        let rows = [
            (3, 3, 5, 7),
            (4, 3, 5, 9),
            (5, 3, 5, 10),
            (3, 4, 7, 10),
            (4, 4, 8, 13),
            (5, 4, 10, 15),
            (3, 5, 9, 13),
            (4, 5, 10, 17),
            (5, 5, 13, 20),
        ];
        for (n, m, g, mr) in rows {
            assert_eq!(grank_upper_nmm(n, m).unwrap(), g, "grank n={n} m={m}");
            assert_eq!(mrank_upper_nmm(n, m).unwrap(), mr, "mrank n={n} m={m}");
        }
        assert!(grank_upper_nmm(2, 3).is_err());
        assert!(mrank_upper_nmm(3, 2).is_err());
    }

    #[test]
    fn known_values_lie_within_bounds() {
        for a in 1..=10 {
            for b in a..=10 {
                for c in b..=10 {
                    let sh = s(a, b, c);
                    let Some(v) = known_grank(sh) else { continue };
                    assert!(grank_lower_bound(sh) <= v.value, "{sh}");
                    assert!(v.value <= a * b, "{sh}");
                    if let Some((n, m)) = nmm_form(sh) {
                        assert!(v.value <= grank_upper_nmm(n, m).unwrap(), "{sh}");
                    }
                    for p in [s(b, c, a), s(c, a, b), s(b, a, c)] {
                        assert_eq!(known_grank(p), Some(v));
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_families() {
        let list = perfectness_expectations(8);
        assert!(list.contains(&(s(4, 4, 6), PerfectFamily::NearCube)));
        assert!(list.contains(&(s(5, 6, 6), PerfectFamily::ShortCube)));
        assert!(list.contains(&(s(3, 4, 7), PerfectFamily::UnbalancedEdge)));
        assert!(!list.iter().any(|(sh, _)| *sh == s(5, 5, 7)));
        for (sh, _) in &list {
            assert!(sh.dims().iter().all(|&d| d <= 8));
            assert!(perfect_ratio(*sh).is_some(), "{sh}");
        }
    }
}
