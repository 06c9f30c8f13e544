//! Dense integer 3-tensors.
//!
//! Entries are stored lexicographically in `(i1, i2, i3)`. Unfolding along
//! axis `j` produces an `(m_p * m_q) x m_j` matrix whose rows enumerate the
//! pairs `(i_p, i_q)`, `p < q`, in lexicographic order; every module uses
//! this flattening.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, IntMatrix};

/// Ordered dimension triple of a 3-tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape {
    m: [usize; 3],
}

impl Shape {
    pub fn new(m1: usize, m2: usize, m3: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 || m3 == 0 {
            return Err(Error::InvalidArgument(format!(
                "shape dimensions must be positive, got {m1}x{m2}x{m3}"
            )));
        }
        Ok(Self { m: [m1, m2, m3] })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.m
    }

    pub fn dim(&self, axis: Axis) -> usize {
        self.m[axis.index()]
    }

    /// The sorted permutation `m1 <= m2 <= m3`.
    pub fn canonical(&self) -> Shape {
        let mut m = self.m;
        m.sort_unstable();
        Shape { m }
    }

    pub fn is_canonical(&self) -> bool {
        self.m[0] <= self.m[1] && self.m[1] <= self.m[2]
    }

    /// `m1 * m2 * m3`, the dimension of the ambient tensor space.
    pub fn volume(&self) -> usize {
        self.m.iter().product()
    }

    /// `m1 + m2 + m3 - 2`, the dimension of the rank-one locus.
    pub fn rank_one_dim(&self) -> usize {
        self.m.iter().sum::<usize>() - 2
    }

    /// `m1 + m2 + m3`, the number of Jacobian columns per rank-one term.
    pub fn factor_len(&self) -> usize {
        self.m.iter().sum()
    }

    /// `min(k (m1+m2+m3-2), m1 m2 m3)`, the naive dimension count for `k`
    /// rank-one terms.
    pub fn expected_dim(&self, k: usize) -> usize {
        (k * self.rank_one_dim()).min(self.volume())
    }

    pub fn has_unit_dim(&self) -> bool {
        self.m.contains(&1)
    }

    /// Flat index of `(i1, i2, i3)`, zero-based.
    pub fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.m[1] + i2) * self.m[2] + i3
    }
}

impl TryFrom<[usize; 3]> for Shape {
    type Error = Error;

    fn try_from(m: [usize; 3]) -> Result<Self> {
        Shape::new(m[0], m[1], m[2])
    }
}

impl From<Shape> for [usize; 3] {
    fn from(s: Shape) -> Self {
        s.m
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m[0], self.m[1], self.m[2])
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// Parses `M1xM2xM3`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let bad = || Error::InvalidArgument(format!("expected a shape like 3x4x5, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut m = [0usize; 3];
        for (slot, part) in m.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|_| bad())?;
        }
        Shape::try_from(m)
    }
}

/// Tensor axis, numbered 1 to 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    One,
    Two,
    Three,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::One, Axis::Two, Axis::Three];

    pub fn index(self) -> usize {
        match self {
            Axis::One => 0,
            Axis::Two => 1,
            Axis::Three => 2,
        }
    }

    /// The other two axes `(p, q)` with `p < q`.
    pub fn complement(self) -> (Axis, Axis) {
        match self {
            Axis::One => (Axis::Two, Axis::Three),
            Axis::Two => (Axis::One, Axis::Three),
            Axis::Three => (Axis::One, Axis::Two),
        }
    }
}

impl TryFrom<usize> for Axis {
    type Error = Error;

    fn try_from(j: usize) -> Result<Self> {
        match j {
            1 => Ok(Axis::One),
            2 => Ok(Axis::Two),
            3 => Ok(Axis::Three),
            _ => Err(Error::InvalidAxis(j)),
        }
    }
}

/// Dense 3-tensor with exact integer entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct IntTensor3 {
    shape: Shape,
    entries: Vec<i64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Shape,
    entries: Vec<i64>,
}

impl TryFrom<RawTensor> for IntTensor3 {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        IntTensor3::new(raw.shape, raw.entries)
    }
}

impl IntTensor3 {
    pub fn new(shape: Shape, entries: Vec<i64>) -> Result<Self> {
        if entries.len() != shape.volume() {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for shape {shape}",
                entries.len()
            )));
        }
        Ok(Self { shape, entries })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            entries: vec![0; shape.volume()],
        }
    }

    /// Builds a tensor from its axis-3 slices, `t[i][j][k] = slices[k][i][j]`.
    pub fn from_axis3_slices(slices: &[IntMatrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no slices".into()))?;
        let (m1, m2) = (first.rows(), first.cols());
        let shape = Shape::new(m1, m2, slices.len())?;
        let mut t = Self::zeros(shape);
        for (k, s) in slices.iter().enumerate() {
            if (s.rows(), s.cols()) != (m1, m2) {
                return Err(Error::ShapeMismatch("slices of unequal size".into()));
            }
            for i in 0..m1 {
                for j in 0..m2 {
                    let v = s.get_i64(i, j).ok_or(Error::Overflow("slice entry"))?;
                    t.set(i, j, k, v);
                }
            }
        }
        Ok(t)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> i64 {
        self.entries[self.shape.offset(i1, i2, i3)]
    }

    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: i64) {
        let o = self.shape.offset(i1, i2, i3);
        self.entries[o] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    /// Entry at the index with `axis` set to `ij` and the other two axes
    /// set to `ip`, `iq` in increasing axis order.
    fn get_along(&self, axis: Axis, ij: usize, ip: usize, iq: usize) -> i64 {
        match axis {
            Axis::One => self.get(ij, ip, iq),
            Axis::Two => self.get(ip, ij, iq),
            Axis::Three => self.get(ip, iq, ij),
        }
    }
}

/// Rank-one terms `x_{l,1} ⊗ x_{l,2} ⊗ x_{l,3}`, `l = 1..k`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactorList {
    pub terms: Vec<[Vec<i64>; 3]>,
}

impl FactorList {
    pub fn new(terms: Vec<[Vec<i64>; 3]>) -> Self {
        Self { terms }
    }

    pub fn k(&self) -> usize {
        self.terms.len()
    }

    pub fn check_shape(&self, shape: Shape) -> Result<()> {
        for (l, term) in self.terms.iter().enumerate() {
            for (axis, v) in term.iter().enumerate() {
                if v.len() != shape.dims()[axis] {
                    return Err(Error::ShapeMismatch(format!(
                        "term {l} axis {} has length {}, shape {shape} needs {}",
                        axis + 1,
                        v.len(),
                        shape.dims()[axis]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Multilinear rank: the ranks of the three unfoldings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlRank {
    pub r: [usize; 3],
}

impl MlRank {
    /// `R1 <= R2 <= R3`.
    pub fn sorted(&self) -> [usize; 3] {
        let mut s = self.r;
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBounds {
    pub lower: usize,
    pub upper: usize,
    pub exact: Option<usize>,
}

/// The unfolding `A(j)`, of size `(m_p m_q) x m_j`.
pub fn unfold(t: &IntTensor3, axis: Axis) -> IntMatrix {
    let (p, q) = axis.complement();
    let s = t.shape();
    let (mp, mq, mj) = (s.dim(p), s.dim(q), s.dim(axis));
    let mut a = IntMatrix::zeros(mp * mq, mj);
    for ip in 0..mp {
        for iq in 0..mq {
            let row = ip * mq + iq;
            for ij in 0..mj {
                let v = t.get_along(axis, ij, ip, iq);
                if v != 0 {
                    a.set(row, ij, v);
                }
            }
        }
    }
    a
}

/// The `m_p x m_q` slice with index `index` (zero-based) fixed on `axis`.
pub fn slice(t: &IntTensor3, axis: Axis, index: usize) -> Result<IntMatrix> {
    let s = t.shape();
    if index >= s.dim(axis) {
        return Err(Error::IndexOutOfRange {
            index,
            len: s.dim(axis),
        });
    }
    let (p, q) = axis.complement();
    let (mp, mq) = (s.dim(p), s.dim(q));
    let mut m = IntMatrix::zeros(mp, mq);
    for ip in 0..mp {
        for iq in 0..mq {
            m.set(ip, iq, t.get_along(axis, index, ip, iq));
        }
    }
    Ok(m)
}

pub fn mlrank(t: &IntTensor3) -> Result<MlRank> {
    let mut r = [0; 3];
    for axis in Axis::ALL {
        r[axis.index()] = linalg::exact_or_modular_rank(&unfold(t, axis))?;
    }
    Ok(MlRank { r })
}

/// `R3 <= rank <= R1 R2`, tight when `R3 = R1 R2`.
pub fn rank_bounds(t: &IntTensor3) -> Result<RankBounds> {
    let [r1, r2, r3] = mlrank(t)?.sorted();
    let upper = r1 * r2;
    Ok(RankBounds {
        lower: r3,
        upper,
        exact: (r3 == upper).then_some(upper),
    })
}

/// Applies `Q1`, `Q2`, `Q3` along the three axes:
/// `t'[i][j][k] = sum Q1[i][a] Q2[j][b] Q3[k][c] t[a][b][c]`. On axis-3
/// slices this is `Q1 T_k Q2^T` followed by `T'_k = sum_l Q3[k][l] T_l`.
pub fn change_basis(
    t: &IntTensor3,
    q1: &IntMatrix,
    q2: &IntMatrix,
    q3: &IntMatrix,
) -> Result<IntTensor3> {
    let s = t.shape();
    for (axis, q) in [q1, q2, q3].into_iter().enumerate() {
        let m = s.dims()[axis];
        if q.rows() != m || q.cols() != m {
            return Err(Error::ShapeMismatch(format!(
                "basis change for axis {} must be {m}x{m}, got {}x{}",
                axis + 1,
                q.rows(),
                q.cols()
            )));
        }
        if !linalg::is_invertible(q)? {
            return Err(Error::SingularBasisChange { axis: axis + 1 });
        }
    }
    let [m1, m2, m3] = s.dims();
    let idx = |i: usize, j: usize, k: usize| (i * m2 + j) * m3 + k;
    let mut cur: Vec<BigInt> = t.entries().iter().map(|&v| BigInt::from(v)).collect();

    let mut next = vec![BigInt::zero(); cur.len()];
    for i in 0..m1 {
        for a in 0..m1 {
            let c = q1.get(i, a);
            if c.is_zero() {
                continue;
            }
            for j in 0..m2 {
                for k in 0..m3 {
                    next[idx(i, j, k)] += c * &cur[idx(a, j, k)];
                }
            }
        }
    }
    cur = std::mem::replace(&mut next, vec![BigInt::zero(); cur.len()]);
    for j in 0..m2 {
        for b in 0..m2 {
            let c = q2.get(j, b);
            if c.is_zero() {
                continue;
            }
            for i in 0..m1 {
                for k in 0..m3 {
                    next[idx(i, j, k)] += c * &cur[idx(i, b, k)];
                }
            }
        }
    }
    cur = std::mem::replace(&mut next, vec![BigInt::zero(); cur.len()]);
    for k in 0..m3 {
        for l in 0..m3 {
            let c = q3.get(k, l);
            if c.is_zero() {
                continue;
            }
            for i in 0..m1 {
                for j in 0..m2 {
                    next[idx(i, j, k)] += c * &cur[idx(i, j, l)];
                }
            }
        }
    }
    let entries = next
        .iter()
        .map(|v| v.to_i64().ok_or(Error::Overflow("change of basis")))
        .collect::<Result<Vec<_>>>()?;
    IntTensor3::new(s, entries)
}

/// `sum_l x_{l,1} ⊗ x_{l,2} ⊗ x_{l,3}`.
pub fn build_from_factors(shape: Shape, f: &FactorList) -> Result<IntTensor3> {
    f.check_shape(shape)?;
    let [m1, m2, m3] = shape.dims();
    let mut t = IntTensor3::zeros(shape);
    for [x1, x2, x3] in &f.terms {
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                let a = x1[i1]
                    .checked_mul(x2[i2])
                    .ok_or(Error::Overflow("rank-one term"))?;
                for i3 in 0..m3 {
                    let o = shape.offset(i1, i2, i3);
                    t.entries[o] = a
                        .checked_mul(x3[i3])
                        .and_then(|v| t.entries[o].checked_add(v))
                        .ok_or(Error::Overflow("rank-one sum"))?;
                }
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fp_rank, random_prime, rational_rank};
    use proptest::prelude::*;

    fn shape(a: usize, b: usize, c: usize) -> Shape {
        Shape::new(a, b, c).unwrap()
    }

    fn e(n: usize, i: usize) -> Vec<i64> {
        (0..n).map(|j| i64::from(j == i)).collect()
    }

    fn e111() -> IntTensor3 {
        build_from_factors(shape(2, 2, 2), &FactorList::new(vec![[e(2, 0), e(2, 0), e(2, 0)]]))
            .unwrap()
    }

    #[test]
    fn shape_parsing_and_canonical_form() {
        let s: Shape = "4x2x3".parse().unwrap();
        assert_eq!(s.dims(), [4, 2, 3]);
        assert_eq!(s.canonical().dims(), [2, 3, 4]);
        assert_eq!(s.to_string(), "4x2x3");
        assert!("4x2".parse::<Shape>().is_err());
        assert!("0x2x3".parse::<Shape>().is_err());
        assert!("ax2x3".parse::<Shape>().is_err());
        assert_eq!(serde_json::to_string(&s).unwrap(), "[4,2,3]");
    }

    #[test]
    fn unfold_of_unit_tensor() {
        let a = unfold(&e111(), Axis::Three);
        assert_eq!((a.rows(), a.cols()), (4, 2));
        for r in 0..4 {
            for c in 0..2 {
                let want = i64::from(r == 0 && c == 0);
                assert_eq!(a.get_i64(r, c), Some(want));
            }
        }
        assert_eq!(
            slice(&e111(), Axis::Three, 0).unwrap(),
            IntMatrix::from_rows(&[vec![1, 0], vec![0, 0]]).unwrap()
        );
    }

    #[test]
    fn unfold_uses_lexicographic_pair_order() {
        // Shape 2x3x4 with t = 100 i1 + 10 i2 + i3 (one-based indices).
        let s = shape(2, 3, 4);
        let mut t = IntTensor3::zeros(s);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    t.set(i, j, k, (100 * (i + 1) + 10 * (j + 1) + k + 1) as i64);
                }
            }
        }
        // Axis 2: rows are (i1, i3), l = (i1 - 1) m3 + i3.
        let a = unfold(&t, Axis::Two);
        assert_eq!((a.rows(), a.cols()), (8, 3));
        for l in 1..=8usize {
            let ip = l.div_ceil(4);
            let iq = l - (ip - 1) * 4;
            for ij in 1..=3usize {
                assert_eq!(
                    a.get_i64(l - 1, ij - 1),
                    Some((100 * ip + 10 * ij + iq) as i64)
                );
            }
        }
    }

    #[test]
    fn all_ones_factor_unfolds_to_ones() {
        let s = shape(2, 3, 4);
        let f = FactorList::new(vec![[vec![1; 2], vec![1; 3], vec![1; 4]]]);
        let t = build_from_factors(s, &f).unwrap();
        let a = unfold(&t, Axis::Two);
        assert_eq!((a.rows(), a.cols()), (8, 3));
        assert!(a.entries().iter().all(|v| *v == BigInt::from(1)));
        assert_eq!(rational_rank(&a).unwrap(), 1);
    }

    #[test]
    fn slice_out_of_range() {
        assert!(matches!(
            slice(&e111(), Axis::Three, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(matches!(Axis::try_from(4), Err(Error::InvalidAxis(4))));
        assert!(Axis::try_from(0).is_err());
    }

    #[test]
    fn bounds_of_simple_tensors() {
        let z = IntTensor3::zeros(shape(2, 3, 4));
        assert_eq!(mlrank(&z).unwrap().r, [0, 0, 0]);
        assert_eq!(
            rank_bounds(&z).unwrap(),
            RankBounds { lower: 0, upper: 0, exact: Some(0) }
        );
        assert_eq!(mlrank(&e111()).unwrap().r, [1, 1, 1]);
        assert_eq!(
            rank_bounds(&e111()).unwrap(),
            RankBounds { lower: 1, upper: 1, exact: Some(1) }
        );
    }

    #[test]
    fn matrix_units_give_exact_rank_nine() {
        // Shape 9x3x3 whose axis-1 slices are the nine 3x3 matrix units.
        let s = shape(9, 3, 3);
        let mut t = IntTensor3::zeros(s);
        for a in 0..3 {
            for b in 0..3 {
                t.set(3 * a + b, a, b, 1);
            }
        }
        let ml = mlrank(&t).unwrap();
        assert_eq!(ml.r, [9, 3, 3]);
        assert_eq!(ml.sorted(), [3, 3, 9]);
        assert_eq!(
            rank_bounds(&t).unwrap(),
            RankBounds { lower: 9, upper: 9, exact: Some(9) }
        );
    }

    #[test]
    fn generic_two_three_four_has_full_mlrank() {
        let mut t = IntTensor3::zeros(shape(2, 3, 4));
        let mut x: i64 = 7;
        for v in t.entries.iter_mut() {
            x = (x * 37 + 11) % 199 - 99;
            *v = x;
        }
        assert_eq!(mlrank(&t).unwrap().r, [2, 3, 4]);
    }

    #[test]
    fn identity_change_of_basis() {
        let t = e111();
        let i = IntMatrix::identity(2);
        assert_eq!(change_basis(&t, &i, &i, &i).unwrap(), t);
    }

    #[test]
    fn permutation_on_axis_three_permutes_slices() {
        let s = shape(2, 2, 3);
        let mut t = IntTensor3::zeros(s);
        for (o, v) in t.entries.iter_mut().enumerate() {
            *v = o as i64 + 1;
        }
        let q3 = IntMatrix::from_rows(&[vec![0, 0, 1], vec![1, 0, 0], vec![0, 1, 0]]).unwrap();
        let i = IntMatrix::identity(2);
        let u = change_basis(&t, &i, &i, &q3).unwrap();
        // T'_k = sum_l q[k][l] T_l, so T'_0 = T_2, T'_1 = T_0, T'_2 = T_1.
        for (k, src) in [(0, 2), (1, 0), (2, 1)] {
            assert_eq!(
                slice(&u, Axis::Three, k).unwrap(),
                slice(&t, Axis::Three, src).unwrap()
            );
        }
    }

    #[test]
    fn change_basis_slice_law() {
        let s = shape(2, 3, 2);
        let mut t = IntTensor3::zeros(s);
        for (o, v) in t.entries.iter_mut().enumerate() {
            *v = (o as i64 * 5) % 7 - 3;
        }
        let q1 = IntMatrix::from_rows(&[vec![1, 2], vec![0, 1]]).unwrap();
        let q2 = IntMatrix::from_rows(&[vec![2, 0, 1], vec![1, 1, 0], vec![0, 3, 1]]).unwrap();
        let i = IntMatrix::identity(2);
        let u = change_basis(&t, &q1, &q2, &i).unwrap();
        for k in 0..2 {
            let want = q1
                .mul(&slice(&t, Axis::Three, k).unwrap())
                .unwrap()
                .mul(&q2.transpose())
                .unwrap();
            assert_eq!(slice(&u, Axis::Three, k).unwrap(), want);
        }
    }

    #[test]
    fn singular_change_of_basis_is_rejected() {
        let sing = IntMatrix::from_rows(&[vec![1, 2], vec![2, 4]]).unwrap();
        let i = IntMatrix::identity(2);
        assert!(matches!(
            change_basis(&e111(), &i, &sing, &i),
            Err(Error::SingularBasisChange { axis: 2 })
        ));
        assert!(change_basis(&e111(), &IntMatrix::identity(3), &i, &i).is_err());
    }

    #[test]
    fn zero_factor_list_is_zero_tensor() {
        let s = shape(2, 3, 2);
        assert!(build_from_factors(s, &FactorList::default()).unwrap().is_zero());
        let bad = FactorList::new(vec![[vec![1], vec![1; 3], vec![1; 2]]]);
        assert!(matches!(build_from_factors(s, &bad), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn degenerate_unit_dimension() {
        let s = shape(1, 3, 2);
        let f = FactorList::new(vec![[vec![2], vec![1, 0, -1], vec![3, 4]]]);
        let t = build_from_factors(s, &f).unwrap();
        assert_eq!(mlrank(&t).unwrap().r, [1, 1, 1]);
        let sl = slice(&t, Axis::One, 0).unwrap();
        assert_eq!((sl.rows(), sl.cols()), (3, 2));
    }

    #[test]
    fn tensor_json_format() {
        let t = e111();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"shape":[2,2,2],"entries":[1,0,0,0,0,0,0,0]}"#);
        let back: IntTensor3 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<IntTensor3>(r#"{"shape":[2,2,2],"entries":[1]}"#).is_err());
    }

    fn shape_strategy(max: usize) -> impl Strategy<Value = Shape> {
        (1..=max, 1..=max, 1..=max).prop_map(|(a, b, c)| Shape::new(a, b, c).unwrap())
    }

    fn factors_for(s: Shape, max_k: usize) -> impl Strategy<Value = FactorList> {
        let [a, b, c] = s.dims();
        prop::collection::vec(
            (
                prop::collection::vec(-5i64..=5, a),
                prop::collection::vec(-5i64..=5, b),
                prop::collection::vec(-5i64..=5, c),
            )
                .prop_map(|(x, y, z)| [x, y, z]),
            0..=max_k,
        )
        .prop_map(FactorList::new)
    }

    fn tensor_and_factors() -> impl Strategy<Value = (Shape, FactorList)> {
        shape_strategy(4).prop_flat_map(|s| (Just(s), factors_for(s, 5)))
    }

    proptest! {
        #[test]
        fn unfolding_rank_bounded_by_dims((s, f) in tensor_and_factors()) {
            let t = build_from_factors(s, &f).unwrap();
            let ml = mlrank(&t).unwrap();
            for axis in Axis::ALL {
                let (p, q) = axis.complement();
                let bound = s.dim(axis).min(s.dim(p) * s.dim(q));
                prop_assert!(ml.r[axis.index()] <= bound);
            }
            // R3 <= rank <= k.
            prop_assert!(ml.sorted()[2] <= f.k());
            let b = rank_bounds(&t).unwrap();
            prop_assert!(b.lower <= b.upper);
        }

        #[test]
        fn slices_stack_into_unfolding((s, f) in tensor_and_factors(), j in 1usize..=3) {
            let t = build_from_factors(s, &f).unwrap();
            let axis = Axis::try_from(j).unwrap();
            let a = unfold(&t, axis);
            let (p, q) = axis.complement();
            let mq = s.dim(q);
            let mut stacked = IntMatrix::zeros(s.dim(axis), s.dim(p) * mq);
            for ij in 0..s.dim(axis) {
                let sl = slice(&t, axis, ij).unwrap();
                for ip in 0..s.dim(p) {
                    for iq in 0..mq {
                        prop_assert_eq!(a.get(ip * mq + iq, ij), sl.get(ip, iq));
                        stacked.set(ij, ip * mq + iq, sl.get(ip, iq).clone());
                    }
                }
            }
            // Span dimension of the slices equals the unfolding rank.
            let p61 = random_prime(61, j as u64).unwrap();
            prop_assert_eq!(
                rational_rank(&stacked).unwrap(),
                fp_rank(&a.reduce_mod(p61).unwrap())
            );
        }

        #[test]
        fn mlrank_respects_axis_transposition((s, f) in tensor_and_factors()) {
            // Swap axes 1 and 2 by swapping factor roles.
            let [a, b, c] = s.dims();
            let swapped_shape = Shape::new(b, a, c).unwrap();
            let swapped = FactorList::new(
                f.terms.iter().map(|[x, y, z]| [y.clone(), x.clone(), z.clone()]).collect(),
            );
            let t = build_from_factors(s, &f).unwrap();
            let u = build_from_factors(swapped_shape, &swapped).unwrap();
            let (rt, ru) = (mlrank(&t).unwrap().r, mlrank(&u).unwrap().r);
            prop_assert_eq!(rt, [ru[1], ru[0], ru[2]]);
        }

        #[test]
        fn axis_three_unfolding_is_sum_of_outer_products((s, f) in tensor_and_factors()) {
            let t = build_from_factors(s, &f).unwrap();
            let a = unfold(&t, Axis::Three);
            let [m1, m2, m3] = s.dims();
            for i1 in 0..m1 {
                for i2 in 0..m2 {
                    for i3 in 0..m3 {
                        let want: i64 = f.terms.iter().map(|[x, y, z]| x[i1] * y[i2] * z[i3]).sum();
                        prop_assert_eq!(a.get_i64(i1 * m2 + i2, i3), Some(want));
                    }
                }
            }
        }

        #[test]
        fn change_basis_preserves_mlrank(
            (s, f) in tensor_and_factors(),
            seeds in prop::collection::vec(-3i64..=3, 48),
        ) {
            let t = build_from_factors(s, &f).unwrap();
            // Unit lower-triangular times upper-triangular with unit diagonal
            // is always invertible.
            let qs: Vec<IntMatrix> = s.dims().iter().enumerate().map(|(axis, &m)| {
                let mut lo = IntMatrix::identity(m);
                let mut up = IntMatrix::identity(m);
                for i in 0..m {
                    for j in 0..i {
                        lo.set(i, j, seeds[(axis * 16 + i * 4 + j) % 48]);
                        up.set(j, i, seeds[(axis * 16 + j * 4 + i + 7) % 48]);
                    }
                }
                lo.mul(&up).unwrap()
            }).collect();
            let u = change_basis(&t, &qs[0], &qs[1], &qs[2]).unwrap();
            prop_assert_eq!(mlrank(&t).unwrap(), mlrank(&u).unwrap());
        }
    }
}
