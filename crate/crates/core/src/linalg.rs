//! Sparse square matrices over a [`Field`] and null-space solvers.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::outcome::Outcome;
use crate::qseries::{Field, Rational};

/// Column-major sparse matrix. Explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<F> {
    rows: usize,
    cols: Vec<BTreeMap<usize, F>>,
}

impl<F: Field> SparseMatrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols: vec![BTreeMap::new(); cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.add_to(i, i, F::one());
        }
        m
    }

    /// Permutation matrix sending basis vector `j` to `perm[j]`.
    pub fn permutation(perm: &[usize]) -> Self {
        let mut m = Self::zeros(perm.len(), perm.len());
        for (j, &i) in perm.iter().enumerate() {
            m.add_to(i, j, F::one());
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.cols[c].get(&r).cloned().unwrap_or_else(F::zero)
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: F) {
        if v.is_zero() {
            return;
        }
        let col = &mut self.cols[c];
        match col.get_mut(&r) {
            Some(x) => {
                *x += v;
                if x.is_zero() {
                    col.remove(&r);
                }
            }
            None => {
                col.insert(r, v);
            }
        }
    }

    /// Nonzero entries of column `c` as `(row, value)`.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, &F)> {
        self.cols[c].iter().map(|(r, v)| (*r, v))
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(BTreeMap::len).sum()
    }

    pub fn mul(&self, other: &SparseMatrix<F>) -> SparseMatrix<F> {
        assert_eq!(self.ncols(), other.rows, "matrix shape mismatch");
        let mut out = Self::zeros(self.rows, other.ncols());
        for j in 0..other.ncols() {
            for (k, b) in other.column(j) {
                for (i, a) in self.column(k) {
                    out.add_to(i, j, a.clone() * b);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &SparseMatrix<F>) -> SparseMatrix<F> {
        self.combine(other, F::one())
    }

    pub fn sub(&self, other: &SparseMatrix<F>) -> SparseMatrix<F> {
        self.combine(other, -F::one())
    }

    fn combine(&self, other: &SparseMatrix<F>, sign: F) -> SparseMatrix<F> {
        assert_eq!((self.rows, self.ncols()), (other.rows, other.ncols()));
        let mut out = self.clone();
        for j in 0..other.ncols() {
            for (i, v) in other.column(j) {
                out.add_to(i, j, sign.clone() * v);
            }
        }
        out
    }

    pub fn scale(&self, s: &F) -> SparseMatrix<F> {
        let mut out = Self::zeros(self.rows, self.ncols());
        for j in 0..self.ncols() {
            for (i, v) in self.column(j) {
                out.add_to(i, j, v.clone() * s);
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix<F> {
        let mut out = Self::zeros(self.ncols(), self.rows);
        for j in 0..self.ncols() {
            for (i, v) in self.column(j) {
                out.add_to(j, i, v.clone());
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.rows];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            for (i, v) in self.column(j) {
                y[i] += v.clone() * xj;
            }
        }
        y
    }

    pub fn col_sums(&self) -> Vec<F> {
        self.cols
            .iter()
            .map(|c| c.values().fold(F::zero(), |acc, v| acc + v))
            .collect()
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<F>> {
        let mut d = vec![vec![F::zero(); self.ncols()]; self.rows];
        for j in 0..self.ncols() {
            for (i, v) in self.column(j) {
                d[i][j] = v.clone();
            }
        }
        d
    }

    pub fn map<G: Field>(&self, f: impl Fn(&F) -> G) -> SparseMatrix<G> {
        let mut out = SparseMatrix::zeros(self.rows, self.ncols());
        for j in 0..self.ncols() {
            for (i, v) in self.column(j) {
                out.add_to(i, j, f(v));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.cols.iter().all(BTreeMap::is_empty)
    }

    /// Exact entrywise comparison; the witness is the first differing
    /// entry in column-major order, labelled by `label(row, col)`.
    pub fn compare(&self, other: &SparseMatrix<F>, label: impl Fn(usize, usize) -> String) -> Outcome {
        assert_eq!((self.rows, self.ncols()), (other.rows, other.ncols()));
        for j in 0..self.ncols() {
            let keys: std::collections::BTreeSet<usize> =
                self.cols[j].keys().chain(other.cols[j].keys()).copied().collect();
            for i in keys {
                let (a, b) = (self.get(i, j), other.get(i, j));
                if a != b {
                    return Outcome::fail(label(i, j), a, b);
                }
            }
        }
        Outcome::Pass
    }

    /// Entrywise comparison with tolerance `atol + rtol * max(|a|, |b|)`.
    pub fn compare_approx(
        &self,
        other: &SparseMatrix<F>,
        rtol: f64,
        atol: f64,
        label: impl Fn(usize, usize) -> String,
    ) -> Outcome {
        for j in 0..self.ncols() {
            let keys: std::collections::BTreeSet<usize> =
                self.cols[j].keys().chain(other.cols[j].keys()).copied().collect();
            for i in keys {
                let (a, b) = (self.get(i, j).to_f64(), other.get(i, j).to_f64());
                if (a - b).abs() > atol + rtol * a.abs().max(b.abs()) {
                    return Outcome::fail(label(i, j), a, b);
                }
            }
        }
        Outcome::Pass
    }
}

/// Fields with a null-space solver.
pub trait Kernel: Field {
    /// Basis of `{x : A x = 0}` for the dense `rows` (all of length `ncols`).
    fn null_space(rows: &[Vec<Self>], ncols: usize) -> Vec<Vec<Self>>;
}

impl Kernel for Rational {
    fn null_space(rows: &[Vec<Self>], ncols: usize) -> Vec<Vec<Self>> {
        multimodular_null_space(rows, ncols).unwrap_or_else(|| null_space_bareiss(rows, ncols))
    }
}

/// Exact null space by fraction-free elimination over the integers.
/// Slower than the default solver on large systems; kept as a reference.
pub fn null_space_bareiss(rows: &[Vec<Rational>], ncols: usize) -> Vec<Vec<Rational>> {
    let mut a: Vec<Vec<BigInt>> = rows.iter().map(|r| integer_row(r)).collect();
    let pivots = bareiss_echelon(&mut a, ncols);
    back_substitute(&a, &pivots, ncols, |v| Rational(BigRational::from_integer(v.clone())))
}

const MAX_PRIMES: usize = 1000;

// Residues of the reduced null basis, accumulated over primes that share
// the same pivot columns.
struct ModularBasis {
    pivots: Vec<usize>,
    modulus: BigInt,
    residues: Vec<Vec<BigInt>>,
}

/// Null space modulo many primes, lifted by CRT and rational reconstruction.
///
/// The rank modulo a prime never exceeds the rank over the rationals, and the
/// lifted vectors are checked exactly, so a returned basis is always correct.
/// Returns `None` if reconstruction does not settle within the prime budget.
fn multimodular_null_space(rows: &[Vec<Rational>], ncols: usize) -> Option<Vec<Vec<Rational>>> {
    let mut acc: Option<ModularBasis> = None;
    let mut previous: Option<Vec<Vec<Rational>>> = None;
    for p in primes_below(1 << 31).take(MAX_PRIMES) {
        let Some(a) = reduce_mod(rows, ncols, p) else {
            continue;
        };
        let (pivots, basis) = null_space_mod(a, ncols, p);
        let residues: Vec<Vec<BigInt>> = basis
            .into_iter()
            .map(|v| v.into_iter().map(BigInt::from).collect())
            .collect();
        let fresh = ModularBasis {
            pivots,
            modulus: BigInt::from(p),
            residues,
        };
        let st = match acc.as_mut() {
            None => {
                acc = Some(fresh);
                acc.as_mut().expect("just set")
            }
            Some(st) => {
                // Unlucky primes lose rank or move a pivot to the right.
                let better = (fresh.pivots.len(), std::cmp::Reverse(&fresh.pivots))
                    .cmp(&(st.pivots.len(), std::cmp::Reverse(&st.pivots)));
                match better {
                    std::cmp::Ordering::Greater => {
                        *st = fresh;
                        previous = None;
                        continue;
                    }
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => {
                        crt_merge(st, &fresh);
                        st
                    }
                }
            }
        };
        if st.residues.is_empty() {
            return Some(Vec::new());
        }
        let Some(lifted) = reconstruct_all(&st.residues, &st.modulus) else {
            previous = None;
            continue;
        };
        if previous.as_ref() == Some(&lifted) && lifted.iter().all(|x| annihilates(rows, x)) {
            return Some(lifted);
        }
        previous = Some(lifted);
    }
    None
}

fn annihilates(rows: &[Vec<Rational>], x: &[Rational]) -> bool {
    rows.iter().all(|row| {
        row.iter()
            .zip(x)
            .filter(|(a, b)| !a.is_zero() && !b.is_zero())
            .fold(Rational::zero(), |s, (a, b)| s + a.clone() * b)
            .is_zero()
    })
}

fn crt_merge(st: &mut ModularBasis, fresh: &ModularBasis) {
    let p = &fresh.modulus;
    // m * (m^{-1} mod p) for combining x = a (mod m), x = b (mod p).
    let m_inv = mod_inverse(&(&st.modulus % p), p);
    for (acc, new) in st.residues.iter_mut().zip(&fresh.residues) {
        for (a, b) in acc.iter_mut().zip(new) {
            let diff = (b - &*a).mod_floor(p);
            let t = (diff * &m_inv).mod_floor(p);
            *a += &st.modulus * t;
        }
    }
    st.modulus *= p;
}

fn mod_inverse(a: &BigInt, p: &BigInt) -> BigInt {
    let e = a.extended_gcd(p);
    e.x.mod_floor(p)
}

fn reconstruct_all(residues: &[Vec<BigInt>], modulus: &BigInt) -> Option<Vec<Vec<Rational>>> {
    let bound: BigInt = (modulus / 2u32).sqrt();
    residues
        .iter()
        .map(|v| v.iter().map(|a| rational_reconstruction(a, modulus, &bound)).collect())
        .collect()
}

// The unique r/s = a (mod m) with |r|, s <= bound, if any.
fn rational_reconstruction(a: &BigInt, m: &BigInt, bound: &BigInt) -> Option<Rational> {
    let (mut r0, mut r1) = (m.clone(), a.clone());
    let (mut s0, mut s1) = (BigInt::zero(), BigInt::one());
    while &r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let s2 = &s0 - &q * &s1;
        r0 = std::mem::replace(&mut r1, r2);
        s0 = std::mem::replace(&mut s1, s2);
    }
    if s1.is_zero() || &s1.abs() > bound {
        return None;
    }
    Some(Rational(BigRational::new(r1, s1)))
}

// Entries modulo p, or None if p divides a denominator.
fn reduce_mod(rows: &[Vec<Rational>], ncols: usize, p: u64) -> Option<Vec<Vec<u64>>> {
    let pb = BigInt::from(p);
    let to_u64 = |v: &BigInt| -> u64 {
        let r = v.mod_floor(&pb);
        r.iter_u64_digits().next().unwrap_or(0)
    };
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut r = vec![0u64; ncols];
        for (j, v) in row.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let den = to_u64(v.denom());
            if den == 0 {
                return None;
            }
            r[j] = to_u64(v.numer()) * pow_mod(den, p - 2, p) % p;
        }
        out.push(r);
    }
    Some(out)
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

// Reduced row echelon form modulo p; returns pivot columns and the null
// basis with one free coordinate set to 1 per vector.
fn null_space_mod(mut a: Vec<Vec<u64>>, ncols: usize, p: u64) -> (Vec<usize>, Vec<Vec<u64>>) {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == a.len() {
            break;
        }
        let Some(k) = (r..a.len()).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, k);
        let inv = pow_mod(a[r][c], p - 2, p);
        for v in a[r].iter_mut().skip(c) {
            *v = *v * inv % p;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c] == 0 {
                continue;
            }
            let f = row[c];
            for j in c..ncols {
                if pivot_row[j] != 0 {
                    row[j] = (row[j] + p - f * pivot_row[j] % p) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    let basis = free
        .iter()
        .map(|&fc| {
            let mut x = vec![0u64; ncols];
            x[fc] = 1;
            for (row, &pc) in pivots.iter().enumerate() {
                x[pc] = (p - a[row][fc]) % p;
            }
            x
        })
        .collect();
    (pivots, basis)
}

// Primes below `limit`, descending.
fn primes_below(limit: u64) -> impl Iterator<Item = u64> {
    (2..limit).rev().filter(|&n| {
        if n % 2 == 0 {
            return n == 2;
        }
        let mut d = 3;
        while d * d <= n {
            if n % d == 0 {
                return false;
            }
            d += 2;
        }
        true
    })
}

impl Kernel for f64 {
    fn null_space(rows: &[Vec<Self>], ncols: usize) -> Vec<Vec<Self>> {
        let mut a: Vec<Vec<f64>> = rows.to_vec();
        let scale = a
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let tol = 1e-10 * scale;
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..ncols {
            if r == a.len() {
                break;
            }
            let (p, best) = (r..a.len())
                .map(|i| (i, a[i][c].abs()))
                .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= tol {
                for row in a.iter_mut().skip(r) {
                    row[c] = 0.0;
                }
                continue;
            }
            a.swap(r, p);
            for i in r + 1..a.len() {
                let f = a[i][c] / a[r][c];
                if f != 0.0 {
                    for j in c..ncols {
                        let t = a[r][j];
                        a[i][j] -= f * t;
                    }
                }
                a[i][c] = 0.0;
            }
            pivots.push(c);
            r += 1;
        }
        back_substitute(&a, &pivots, ncols, |v| *v)
    }
}

// Clear denominators so that the row has integer entries.
fn integer_row(r: &[Rational]) -> Vec<BigInt> {
    let l = r
        .iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.0.denom()));
    r.iter()
        .map(|v| v.0.numer() * (&l / v.0.denom()))
        .collect()
}

// Fraction-free Gaussian elimination to row echelon form. Returns the
// pivot column of each nonzero row.
fn bareiss_echelon(a: &mut [Vec<BigInt>], ncols: usize) -> Vec<usize> {
    let mut prev = BigInt::one();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == a.len() {
            break;
        }
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let (top, rest) = a.split_at_mut(r + 1);
        let pivot_row = &top[r];
        let piv = &pivot_row[c];
        for row in rest.iter_mut() {
            let f = std::mem::take(&mut row[c]);
            for j in c + 1..ncols {
                let mut v = piv * &row[j];
                if !f.is_zero() && !pivot_row[j].is_zero() {
                    v -= &f * &pivot_row[j];
                }
                if !prev.is_one() {
                    debug_assert!((&v % &prev).is_zero(), "inexact Bareiss division");
                    v /= &prev;
                }
                row[j] = v;
            }
        }
        prev = a[r][c].clone();
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn back_substitute<T, F: Field>(
    a: &[Vec<T>],
    pivots: &[usize],
    ncols: usize,
    conv: impl Fn(&T) -> F,
) -> Vec<Vec<F>> {
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Vec::with_capacity(free.len());
    for &fc in &free {
        let mut x = vec![F::zero(); ncols];
        x[fc] = F::one();
        for (r, &pc) in pivots.iter().enumerate().rev() {
            let mut s = F::zero();
            for j in pc + 1..ncols {
                if !x[j].is_zero() {
                    s += conv(&a[r][j]) * &x[j];
                }
            }
            x[pc] = -s / conv(&a[r][pc]);
        }
        basis.push(x);
    }
    basis
}

/// Sign of a rational as -1, 0 or 1.
pub fn signum(r: &Rational) -> i32 {
    if r.0.is_positive() {
        1
    } else if r.0.is_negative() {
        -1
    } else {
        0
    }
}
