//! Scalar arithmetic and q-combinatorial primitives.
//!
//! Everything downstream is generic over [`Field`], which is implemented by
//! the exact [`Rational`] type and by `f64`. Exact mode is the default; the
//! float implementation exists for the simulator and for sanity sweeps.
//! Because the mode is a type parameter, combining an exact and a float value
//! does not compile. [`Scalar`] is the run-time tagged form used at the I/O
//! boundary, where mixing modes is reported as [`ZrpError::ModeMismatch`].

use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, ZrpError};
use crate::statespace::Occupancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => f.write_str("exact"),
            Mode::Float => f.write_str("float"),
        }
    }
}

/// A commutative field the model can be evaluated over.
pub trait Field:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + for<'a> AddAssign<&'a Self>
    + for<'a> SubAssign<&'a Self>
    + for<'a> MulAssign<&'a Self>
{
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    /// `num / den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn is_zero(&self) -> bool;
    fn to_f64(&self) -> f64;

    fn is_one(&self) -> bool {
        *self == Self::one()
    }

    fn inv(&self) -> Self {
        Self::one() / self.clone()
    }

    /// Integer power; negative exponents invert. `0^0 = 1`.
    fn powi(&self, exp: i64) -> Self {
        let mut base = if exp < 0 { self.inv() } else { self.clone() };
        let mut e = exp.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= &base;
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * &base;
            }
        }
        acc
    }

    /// Division that reports a zero denominator instead of producing inf/NaN
    /// or panicking.
    fn checked_div(&self, den: &Self, context: &str) -> Result<Self> {
        if den.is_zero() {
            Err(ZrpError::Singular(context.to_string()))
        } else {
            Ok(self.clone() / den)
        }
    }
}

impl Field for f64 {
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_rational(r: &Rational) -> Self {
        r.to_f64()
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn powi(&self, exp: i64) -> Self {
        f64::powi(*self, exp as i32)
    }
}

/// Arbitrary-precision rational in canonical form (reduced, positive
/// denominator).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_integer(v: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Rational {
        Rational(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        if let Some(v) = self.0.to_f64() {
            if v.is_finite() {
                return v;
            }
        }
        // Very large numerator and denominator: scale both down first.
        let n = self.0.numer();
        let d = self.0.denom();
        let shift = n.bits().max(d.bits()).saturating_sub(1000) as usize;
        let nf = (n >> shift).to_f64().unwrap_or(f64::NAN);
        let df = (d >> shift).to_f64().unwrap_or(f64::NAN);
        nf / df
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = ZrpError;

    /// Accepts `p`, `p/q` and plain decimals such as `-0.25` (converted
    /// exactly). Leading `+` or `-` allowed.
    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| ZrpError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let t = s.trim();
        if t.is_empty() {
            return Err(err("empty"));
        }
        if let Some((p, q)) = t.split_once('/') {
            let num: BigInt = p.trim().parse().map_err(|_| err("bad numerator"))?;
            let den: BigInt = q.trim().parse().map_err(|_| err("bad denominator"))?;
            if den.is_zero() {
                return Err(err("zero denominator"));
            }
            return Ok(Rational(BigRational::new(num, den)));
        }
        if let Some((ip, fp)) = t.split_once('.') {
            let (neg, ip) = match ip.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, ip.strip_prefix('+').unwrap_or(ip)),
            };
            if !fp.chars().all(|c| c.is_ascii_digit())
                || !ip.chars().all(|c| c.is_ascii_digit())
                || (ip.is_empty() && fp.is_empty())
            {
                return Err(err("bad decimal"));
            }
            let digits = format!("{}{}", ip, fp);
            let num: BigInt = digits.parse().map_err(|_| err("bad decimal"))?;
            let den = num_traits::pow(BigInt::from(10u32), fp.len());
            let r = BigRational::new(num, den);
            return Ok(Rational(if neg { -r } else { r }));
        }
        let num: BigInt = t.parse().map_err(|_| err("bad integer"))?;
        Ok(Rational(BigRational::from_integer(num)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! rational_binop {
    ($tr:ident, $method:ident, $atr:ident, $amethod:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((self.0).$method(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $tr<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $tr<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $atr for Rational {
            fn $amethod(&mut self, rhs: Rational) {
                (self.0).$amethod(rhs.0);
            }
        }
        impl<'a> $atr<&'a Rational> for Rational {
            fn $amethod(&mut self, rhs: &'a Rational) {
                (self.0).$amethod(&rhs.0);
            }
        }
    };
}

rational_binop!(Add, add, AddAssign, add_assign);
rational_binop!(Sub, sub, SubAssign, sub_assign);
rational_binop!(Mul, mul, MulAssign, mul_assign);
rational_binop!(Div, div, DivAssign, div_assign);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl<'a> Neg for &'a Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::from_integer(0), |a, b| a + b)
    }
}

impl Product for Rational {
    fn product<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::from_integer(1), |a, b| a * b)
    }
}

impl From<i64> for Rational {
    fn from(v: i64) -> Self {
        Rational::from_integer(v)
    }
}

impl Field for Rational {
    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Rational(BigRational::zero())
    }
    fn one() -> Self {
        Rational(BigRational::one())
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(v)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(num, den)
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn to_f64(&self) -> f64 {
        Rational::to_f64(self)
    }
    fn is_one(&self) -> bool {
        self.0.is_one()
    }
    fn inv(&self) -> Self {
        Rational(self.0.recip())
    }
}

/// Mode-tagged scalar used where values cross the I/O boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(Rational),
    Float(f64),
}

impl Scalar {
    pub fn parse(s: &str, mode: Mode) -> Result<Scalar> {
        let r: Rational = s.parse()?;
        Ok(match mode {
            Mode::Exact => Scalar::Exact(r),
            Mode::Float => Scalar::Float(r.to_f64()),
        })
    }

    pub fn mode(&self) -> Mode {
        match self {
            Scalar::Exact(_) => Mode::Exact,
            Scalar::Float(_) => Mode::Float,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => r.to_f64(),
            Scalar::Float(v) => *v,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Scalar::Exact(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    fn combine(
        &self,
        other: &Scalar,
        exact: impl FnOnce(&Rational, &Rational) -> Result<Rational>,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Result<Scalar> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Ok(Scalar::Exact(exact(a, b)?)),
            (Scalar::Float(a), Scalar::Float(b)) => Ok(Scalar::Float(float(*a, *b))),
            _ => Err(ZrpError::ModeMismatch {
                left: self.mode(),
                right: other.mode(),
            }),
        }
    }

    pub fn checked_add(&self, other: &Scalar) -> Result<Scalar> {
        self.combine(other, |a, b| Ok(a + b), |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Scalar) -> Result<Scalar> {
        self.combine(other, |a, b| Ok(a - b), |a, b| a - b)
    }

    pub fn checked_mul(&self, other: &Scalar) -> Result<Scalar> {
        self.combine(other, |a, b| Ok(a * b), |a, b| a * b)
    }

    pub fn checked_div(&self, other: &Scalar) -> Result<Scalar> {
        self.combine(
            other,
            |a, b| a.checked_div(b, "scalar division"),
            |a, b| a / b,
        )
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => fmt::Display::fmt(r, f),
            Scalar::Float(v) => write!(f, "{v}"),
        }
    }
}

/// Model parameters shared by every construction: species count and `q`.
/// The regime is `0 < q < 1` with the sign `epsilon` fixed to `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub n: usize,
    pub q: F,
}

impl<F: Field> ModelParams<F> {
    pub fn new(n: usize, q: F) -> Result<Self> {
        if n == 0 {
            return Err(ZrpError::InvalidParams("species count must be >= 1".into()));
        }
        if !(q > F::zero() && q < F::one()) {
            return Err(ZrpError::InvalidParams(format!("q = {q} outside (0, 1)")));
        }
        Ok(ModelParams { n, q })
    }
}

/// q-Pochhammer symbol `(z; q)_m = prod_{j=1}^m (1 - z q^{j-1})`.
pub fn qpoch<F: Field>(z: &F, m: usize, q: &F) -> F {
    let mut acc = F::one();
    let mut zq = z.clone();
    for _ in 0..m {
        acc *= F::one() - &zq;
        zq *= q;
    }
    acc
}

/// q-binomial coefficient, zero when `k` lies outside `[0, m]`.
pub fn qbinom<F: Field>(m: i64, k: i64, q: &F) -> F {
    if k < 0 || m < 0 || k > m {
        return F::zero();
    }
    let k = k.min(m - k);
    let mut num = F::one();
    let mut den = F::one();
    for i in 1..=k {
        num *= F::one() - q.powi(m - k + i);
        den *= F::one() - q.powi(i);
    }
    if den.is_zero() {
        return qbinom_pascal(m as usize, k as usize, q);
    }
    num / den
}

// Division-free fallback for q at a root of unity.
fn qbinom_pascal<F: Field>(m: usize, k: usize, q: &F) -> F {
    let mut row = vec![F::zero(); k + 1];
    row[0] = F::one();
    for i in 1..=m {
        for j in (1..=k.min(i)).rev() {
            let t = q.powi(j as i64) * &row[j];
            row[j] = row[j - 1].clone() + t;
        }
    }
    row[k].clone()
}

/// `sum_{i<j} alpha_i beta_j` on possibly negative integer arrays.
pub fn phi_signed(alpha: &[i64], beta: &[i64]) -> i64 {
    let mut acc = 0i64;
    let mut prefix = 0i64;
    for (a, b) in alpha.iter().zip(beta) {
        acc += prefix * b;
        prefix += a;
    }
    acc
}

/// The exponent `phi(alpha, beta) = sum_{i<j} alpha_i beta_j`.
pub fn phi_exp(alpha: &Occupancy, beta: &Occupancy) -> Result<u64> {
    if alpha.n() != beta.n() {
        return Err(ZrpError::LengthMismatch {
            left: alpha.n(),
            right: beta.n(),
        });
    }
    Ok(phi_signed(&alpha.to_signed(), &beta.to_signed()) as u64)
}

/// `g_alpha(mu) = mu^{-|alpha|} (mu)_{|alpha|} / prod_i (q)_{alpha_i}`.
pub fn g_weight<F: Field>(alpha: &Occupancy, mu: &F, q: &F) -> Result<F> {
    if mu.is_zero() {
        return Err(ZrpError::Singular("g_weight: mu = 0".into()));
    }
    let total = alpha.total() as usize;
    let mut den = F::one();
    for &a in alpha.counts() {
        den *= qpoch(q, a as usize, q);
    }
    let num = mu.powi(-(total as i64)) * qpoch(mu, total, q);
    num.checked_div(&den, "g_weight: (q)_a = 0")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn qpoch_examples() {
        let q = r(1, 3);
        assert_eq!(qpoch(&r(7, 5), 0, &q), Rational::one());
        for m in 1..5 {
            assert!(qpoch(&Rational::one(), m, &q).is_zero());
        }
        assert_eq!(qpoch(&r(1, 2), 2, &q), r(5, 12));
    }

    #[test]
    fn qbinom_examples() {
        let q = r(2, 7);
        for m in 0..6 {
            assert_eq!(qbinom(m, 0, &q), Rational::one());
        }
        let expect = Rational::one() + &q + q.powi(2);
        assert_eq!(qbinom(3, 1, &q), expect);
        assert!(qbinom(2, 3, &q).is_zero());
        assert!(qbinom(2, -1, &q).is_zero());
    }

    #[test]
    fn qbinom_at_root_of_unity_uses_pascal() {
        let q = Rational::from_integer(-1);
        // [4 choose 2] at q = -1 is 2.
        assert_eq!(qbinom(4, 2, &q), Rational::from_integer(2));
    }

    #[test]
    fn phi_examples() {
        let a = Occupancy::new(vec![1, 0]);
        let b = Occupancy::new(vec![0, 1]);
        assert_eq!(phi_exp(&a, &b).unwrap(), 1);
        assert_eq!(phi_exp(&a, &Occupancy::zero(2)).unwrap(), 0);
        let a = Occupancy::new(vec![2, 1, 3]);
        let b = Occupancy::new(vec![1, 4, 2]);
        assert_eq!(phi_exp(&a, &b).unwrap(), 14);
        assert!(matches!(
            phi_exp(&a, &Occupancy::zero(2)),
            Err(ZrpError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn g_weight_examples() {
        let q = r(1, 3);
        let mu = r(1, 5);
        assert_eq!(g_weight(&Occupancy::zero(2), &mu, &q).unwrap(), Rational::one());
        let got = g_weight(&Occupancy::new(vec![1, 1]), &mu, &q).unwrap();
        let one = Rational::one();
        let expect = mu.powi(-2) * (&one - &mu) * (&one - &q * &mu)
            / ((&one - &q) * (&one - &q));
        assert_eq!(got, expect);
        assert!(g_weight(&Occupancy::new(vec![1, 0]), &Rational::one(), &q)
            .unwrap()
            .is_zero());
        assert!(g_weight(&Occupancy::new(vec![1, 0]), &Rational::zero(), &q).is_err());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!("-3/7".parse::<Rational>().unwrap(), r(-3, 7));
        assert_eq!("6/-4".parse::<Rational>().unwrap(), r(-3, 2));
        assert_eq!("+5".parse::<Rational>().unwrap(), r(5, 1));
        assert_eq!("0.3".parse::<Rational>().unwrap(), r(3, 10));
        assert_eq!("-.25".parse::<Rational>().unwrap(), r(-1, 4));
        assert!("1/0".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
        assert_eq!(r(4, -6).to_string(), "-2/3");
        assert_eq!(r(4, 2).to_string(), "2");
    }

    #[test]
    fn scalar_modes_do_not_mix() {
        let a = Scalar::parse("1/3", Mode::Exact).unwrap();
        let b = Scalar::parse("1/3", Mode::Float).unwrap();
        assert!(matches!(a.checked_add(&b), Err(ZrpError::ModeMismatch { .. })));
        assert_eq!(
            a.checked_mul(&a).unwrap(),
            Scalar::Exact(r(1, 9))
        );
        assert!(matches!(
            a.checked_div(&Scalar::Exact(Rational::zero())),
            Err(ZrpError::Singular(_))
        ));
    }

    #[test]
    fn model_params_regime() {
        assert!(ModelParams::new(2, r(1, 3)).is_ok());
        assert!(ModelParams::new(2, r(3, 2)).is_err());
        assert!(ModelParams::new(0, r(1, 3)).is_err());
    }
}
