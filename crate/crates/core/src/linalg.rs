//! Exact rank computation.
//!
//! [`fp_rank`] eliminates over a prime field with single-word Montgomery
//! arithmetic and is the fast path used by every Jacobian probe.
//! [`rational_rank`] runs fraction-free Bareiss elimination over the
//! integers and serves as the ground-truth oracle on small matrices.
//!
//! Reduction modulo a prime can only lower the rank of an integer matrix,
//! so `fp_rank(M mod p) <= rational_rank(M)` for every prime `p`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default size cap (in entries) for [`rational_rank`]; 200 x 200.
pub const RATIONAL_ORACLE_CAP: usize = 40_000;

/// Bases that make Miller-Rabin deterministic for every `u64`.
const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[inline]
fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// One Miller-Rabin round; `n` odd and > 3, `d * 2^s = n - 1`.
fn miller_rabin_round(n: u64, d: u64, s: u32, a: u64) -> bool {
    let a = a % n;
    if a == 0 {
        return true;
    }
    let mut x = pow_mod(a, d, n);
    if x == 1 || x == n - 1 {
        return true;
    }
    for _ in 1..s {
        x = mul_mod(x, x, n);
        if x == n - 1 {
            return true;
        }
    }
    false
}

/// Deterministic primality test for 64-bit integers.
pub fn is_probable_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &MR_BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    MR_BASES.iter().all(|&a| miller_rabin_round(n, d, s, a))
}

/// A probable prime of exactly `bits` bits, determined by `seed`.
pub fn random_prime(bits: u32, seed: u64) -> Result<u64> {
    if !(30..=62).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "prime bit length {bits} outside 30..=62"
        )));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, &[0x7072_696d_65, bits as u64]));
    let top = 1u64 << (bits - 1);
    let mask = (1u64 << bits) - 1;
    loop {
        let candidate = (rng.random::<u64>() & mask) | top | 1;
        if is_probable_prime(candidate) {
            return Ok(candidate);
        }
    }
}

/// Dense matrix over the prime field with `prime` elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpMatrix {
    rows: usize,
    cols: usize,
    prime: u64,
    entries: Vec<u64>,
}

impl FpMatrix {
    pub fn new(rows: usize, cols: usize, prime: u64, entries: Vec<u64>) -> Result<Self> {
        check_prime(prime)?;
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(&value) = entries.iter().find(|&&e| e >= prime) {
            return Err(Error::UnreducedEntry { value, prime });
        }
        Ok(Self {
            rows,
            cols,
            prime,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize, prime: u64) -> Result<Self> {
        check_prime(prime)?;
        Ok(Self {
            rows,
            cols,
            prime,
            entries: vec![0; rows * cols],
        })
    }

    /// Reduces signed integers into `[0, prime)`.
    pub fn from_i64(rows: usize, cols: usize, prime: u64, values: &[i64]) -> Result<Self> {
        let entries = values.iter().map(|&v| reduce_i64(v, prime)).collect();
        Self::new(rows, cols, prime, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.entries[r * self.cols + c]
    }

    /// Writes `value mod prime` at `(r, c)`.
    pub fn set(&mut self, r: usize, c: usize, value: u64) {
        self.entries[r * self.cols + c] = value % self.prime;
    }

    pub fn transpose(&self) -> Self {
        let mut entries = vec![0; self.entries.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                entries[c * self.rows + r] = self.entries[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            prime: self.prime,
            entries,
        }
    }
}

fn check_prime(prime: u64) -> Result<()> {
    if prime == 2 || prime >= 1 << 62 || !is_probable_prime(prime) {
        return Err(Error::NotPrime { value: prime });
    }
    Ok(())
}

pub(crate) fn reduce_i64(v: i64, p: u64) -> u64 {
    (v as i128).rem_euclid(p as i128) as u64
}

/// Montgomery arithmetic modulo an odd `p < 2^62` with `R = 2^64`.
#[derive(Debug, Clone, Copy)]
struct Montgomery {
    p: u64,
    neg_p_inv: u64,
    r2: u64,
}

impl Montgomery {
    fn new(p: u64) -> Self {
        // Newton iteration for p^{-1} mod 2^64; each step doubles the
        // number of correct low bits, starting from 3 bits for odd p.
        let mut inv = p;
        for _ in 0..5 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p.wrapping_mul(inv)));
        }
        let r = ((1u128 << 64) % p as u128) as u64;
        Self {
            p,
            neg_p_inv: inv.wrapping_neg(),
            r2: mul_mod(r, r, p),
        }
    }

    #[inline(always)]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_p_inv);
        let u = ((t + m as u128 * self.p as u128) >> 64) as u64;
        if u >= self.p {
            u - self.p
        } else {
            u
        }
    }

    #[inline(always)]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    fn to_mont(&self, a: u64) -> u64 {
        self.mul(a, self.r2)
    }

    fn from_mont(&self, a: u64) -> u64 {
        self.redc(a as u128)
    }
}

/// Rank over the field with `m.prime()` elements.
pub fn fp_rank(m: &FpMatrix) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    let mont = Montgomery::new(m.prime);
    let p = m.prime;
    let cols = m.cols;
    let mut a: Vec<u64> = m.entries.iter().map(|&e| mont.to_mont(e)).collect();

    let mut rank = 0;
    for col in 0..cols {
        if rank == m.rows {
            break;
        }
        let Some(pivot) = (rank..m.rows).find(|&r| a[r * cols + col] != 0) else {
            continue;
        };
        if pivot != rank {
            for j in col..cols {
                a.swap(rank * cols + j, pivot * cols + j);
            }
        }
        let inv = pow_mod(mont.from_mont(a[rank * cols + col]), p - 2, p);
        let inv = mont.to_mont(inv);

        let (head, tail) = a.split_at_mut((rank + 1) * cols);
        let pivot_row = &head[rank * cols..];
        for row in tail.chunks_exact_mut(cols) {
            let lead = row[col];
            if lead == 0 {
                continue;
            }
            let f = mont.mul(lead, inv);
            row[col] = 0;
            for (x, &y) in row[col + 1..].iter_mut().zip(&pivot_row[col + 1..]) {
                let t = mont.mul(f, y);
                *x = if *x >= t { *x - t } else { *x + p - t };
            }
        }
        rank += 1;
    }
    rank
}

/// Dense matrix of arbitrary-precision integers, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BigInt>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<BigInt>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, values: &[i64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| BigInt::from(v)).collect())
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let flat: Vec<i64> = rows.iter().flatten().copied().collect();
        Self::from_i64(rows.len(), cols, &flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> &BigInt {
        &self.entries[r * self.cols + c]
    }

    pub fn get_i64(&self, r: usize, c: usize) -> Option<i64> {
        self.get(r, c).to_i64()
    }

    pub fn set(&mut self, r: usize, c: usize, value: impl Into<BigInt>) {
        self.entries[r * self.cols + c] = value.into();
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Zero::is_zero)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.entries[c * self.rows + r] = self.entries[r * self.cols + c].clone();
            }
        }
        out
    }

    pub fn trace(&self) -> BigInt {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .sum()
    }

    pub fn mul(&self, rhs: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.entries[i * rhs.cols + j] += a * rhs.get(l, j);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &IntMatrix) -> Result<IntMatrix> {
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(Error::ShapeMismatch("matrix sum of unequal shapes".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.rows, self.cols, entries)
    }

    pub fn scale(&self, s: &BigInt) -> IntMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * s).collect(),
        }
    }

    /// Reduces every entry into `[0, prime)`.
    pub fn reduce_mod(&self, prime: u64) -> Result<FpMatrix> {
        let p = BigInt::from(prime);
        let entries = self
            .entries
            .iter()
            .map(|e| e.mod_floor(&p).to_u64().expect("residue fits in u64"))
            .collect();
        FpMatrix::new(self.rows, self.cols, prime, entries)
    }

    /// The matrix as nested rows, when every entry fits in an `i64`.
    pub fn to_rows_i64(&self) -> Option<Vec<Vec<i64>>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get_i64(r, c)).collect())
            .collect()
    }
}

/// Serialized as nested rows; entries outside the `i64` range become
/// decimal strings.
impl Serialize for IntMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Entry {
            Small(i64),
            Big(String),
        }
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            let row: Vec<Entry> = (0..self.cols)
                .map(|c| {
                    let e = self.get(r, c);
                    e.to_i64().map_or_else(|| Entry::Big(e.to_string()), Entry::Small)
                })
                .collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Small(i64),
            Big(String),
        }
        let rows: Vec<Vec<Entry>> = Vec::deserialize(deserializer)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(de::Error::custom("ragged matrix rows"));
        }
        let n = rows.len();
        let entries = rows
            .into_iter()
            .flatten()
            .map(|e| match e {
                Entry::Small(v) => Ok(BigInt::from(v)),
                Entry::Big(s) => s.parse::<BigInt>().map_err(de::Error::custom),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        IntMatrix::new(n, cols, entries).map_err(de::Error::custom)
    }
}

/// Exact rank over the rationals, capped at [`RATIONAL_ORACLE_CAP`] entries.
pub fn rational_rank(m: &IntMatrix) -> Result<usize> {
    rational_rank_capped(m, RATIONAL_ORACLE_CAP)
}

/// Bareiss fraction-free elimination. Every intermediate entry is a minor
/// of the input, so each division below is exact.
pub fn rational_rank_capped(m: &IntMatrix, cap: usize) -> Result<usize> {
    if m.rows * m.cols > cap {
        return Err(Error::OracleCapExceeded {
            rows: m.rows,
            cols: m.cols,
            cap,
        });
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(0);
    }
    let cols = m.cols;
    let mut a = m.entries.clone();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..cols {
        if rank == m.rows {
            break;
        }
        let Some(pivot) = (rank..m.rows).find(|&r| !a[r * cols + col].is_zero()) else {
            continue;
        };
        if pivot != rank {
            for j in 0..cols {
                a.swap(rank * cols + j, pivot * cols + j);
            }
        }
        let piv = a[rank * cols + col].clone();
        for r in rank + 1..m.rows {
            let lead = a[r * cols + col].clone();
            for j in col + 1..cols {
                let num = &piv * &a[r * cols + j] - &lead * &a[rank * cols + j];
                let (q, rem) = num.div_rem(&prev);
                debug_assert!(rem.is_zero(), "Bareiss division must be exact");
                a[r * cols + j] = q;
            }
            a[r * cols + col] = BigInt::zero();
        }
        prev = piv;
        rank += 1;
    }
    Ok(rank)
}

/// Exact determinant of a square matrix via Bareiss elimination.
pub fn determinant(m: &IntMatrix) -> Result<BigInt> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("determinant of a non-square matrix".into()));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(BigInt::one());
    }
    let mut a = m.entries.clone();
    let mut prev = BigInt::one();
    let mut sign = BigInt::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r * n + col].is_zero()) else {
            return Ok(BigInt::zero());
        };
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            sign = -sign;
        }
        let piv = a[col * n + col].clone();
        for r in col + 1..n {
            let lead = a[r * n + col].clone();
            for j in col + 1..n {
                let num = &piv * &a[r * n + j] - &lead * &a[col * n + j];
                a[r * n + j] = num / &prev;
            }
            a[r * n + col] = BigInt::zero();
        }
        prev = piv;
    }
    Ok(sign * &a[n * n - 1])
}

/// Whether a square integer matrix is invertible over the rationals.
pub fn is_invertible(m: &IntMatrix) -> Result<bool> {
    Ok(m.is_square() && !determinant(m)?.is_zero())
}

/// Max of [`fp_rank`] over `trials` independent random primes; a lower
/// bound on the rational rank that is exact with overwhelming probability.
pub fn modular_rank(m: &IntMatrix, trials: usize, seed: u64) -> Result<usize> {
    let mut best = 0;
    for t in 0..trials.max(1) {
        let p = random_prime(61, rng::derive_seed(seed, &[t as u64]))?;
        best = best.max(fp_rank(&m.reduce_mod(p)?));
        if best == m.rows.min(m.cols) {
            break;
        }
    }
    Ok(best)
}

/// Rank by the rational oracle when the matrix is under the cap, by
/// three modular trials otherwise.
pub fn exact_or_modular_rank(m: &IntMatrix) -> Result<usize> {
    if m.rows * m.cols <= RATIONAL_ORACLE_CAP {
        rational_rank(m)
    } else {
        modular_rank(m, 3, 0x6d6c_7261_6e6b)
    }
}
