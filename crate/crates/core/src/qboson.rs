//! The q-boson algebra with generators `b+`, `b-`, `k`:
//! `k b+ = q b+ k`, `b- k = q k b-`, `b+ b- = 1 - k`, `b- b+ = 1 - q k`.
//!
//! Elements are kept in the normal order `b+^a k^s b-^c`. Traces are
//! evaluated exactly; truncated Fock matrices serve as an independent
//! representation for checking operator identities.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::RwLock;

use crate::error::{Result, ZrpError};
use crate::outcome::{expect_eq, first_failure, Outcome};
use crate::qseries::{g_weight, phi_signed, qbinom, qpoch, Field};
use crate::statespace::Occupancy;
use crate::stochastic_r::phi_weight;

/// Exponents `(a, s, c)` of `b+^a k^s b-^c`.
pub type Monomial = (u32, u32, u32);

/// A finite linear combination of normal-ordered monomials.
#[derive(Clone, PartialEq)]
pub struct NoElement<F> {
    terms: BTreeMap<Monomial, F>,
}

impl<F: Field> NoElement<F> {
    pub fn zero() -> Self {
        NoElement { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::monomial(0, 0, 0, F::one())
    }

    pub fn constant(c: F) -> Self {
        Self::monomial(0, 0, 0, c)
    }

    pub fn monomial(a: u32, s: u32, c: u32, coef: F) -> Self {
        let mut e = Self::zero();
        e.add_term((a, s, c), coef);
        e
    }

    pub fn bp() -> Self {
        Self::monomial(1, 0, 0, F::one())
    }

    pub fn bm() -> Self {
        Self::monomial(0, 0, 1, F::one())
    }

    pub fn k() -> Self {
        Self::monomial(0, 1, 0, F::one())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &F)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: Monomial) -> F {
        self.terms.get(&m).cloned().unwrap_or_else(F::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, m: Monomial, coef: F) {
        if coef.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(x) => {
                *x += coef;
                if x.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, coef);
            }
        }
    }

    pub fn add(&self, other: &NoElement<F>) -> NoElement<F> {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &NoElement<F>) -> NoElement<F> {
        self.add(&other.scale(&-F::one()))
    }

    pub fn scale(&self, s: &F) -> NoElement<F> {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(*m, c.clone() * s);
        }
        out
    }

    /// Apply `b+ -> c b+`, `b- -> c^{-1} b-`.
    pub fn rescale_bosons(&self, c: &F) -> NoElement<F> {
        let mut out = Self::zero();
        for (&(a, s, d), v) in &self.terms {
            out.add_term((a, s, d), v.clone() * c.powi(a as i64 - d as i64));
        }
        out
    }

    /// Largest net lowering `c - a` over the terms.
    fn lowering(&self) -> usize {
        self.terms
            .keys()
            .map(|&(a, _, c)| c.saturating_sub(a) as usize)
            .max()
            .unwrap_or(0)
    }
}

impl<F: Field> fmt::Debug for NoElement<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(&(a, s, c), v)| format!("({v}) b+^{a} k^{s} b-^{c}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl<F: Field> fmt::Display for NoElement<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The algebra at a fixed `q`, with a cache of the normal forms of `b-^c b+^a`.
pub struct QBoson<F> {
    q: F,
    swaps: RwLock<HashMap<(u32, u32), NoElement<F>>>,
}

impl<F: Field> QBoson<F> {
    pub fn new(q: F) -> Self {
        QBoson {
            q,
            swaps: RwLock::new(HashMap::new()),
        }
    }

    pub fn q(&self) -> &F {
        &self.q
    }

    // Normal form of b-^c b+^a, using b- b+^a = b+^{a-1} (1 - q^a k).
    fn swap(&self, c: u32, a: u32) -> NoElement<F> {
        if c == 0 || a == 0 {
            return NoElement::monomial(a, 0, c, F::one());
        }
        if let Some(e) = self.swaps.read().expect("swap cache poisoned").get(&(c, a)) {
            return e.clone();
        }
        let inner = self.swap(c - 1, a - 1);
        let qa = self.q.powi(a as i64);
        let mut out = inner.clone();
        // Right multiplication by k: b+^x k^y b-^z k = q^z b+^x k^{y+1} b-^z.
        for (&(x, y, z), v) in &inner.terms {
            out.add_term((x, y + 1, z), -(v.clone() * &qa * self.q.powi(z as i64)));
        }
        self.swaps
            .write()
            .expect("swap cache poisoned")
            .insert((c, a), out.clone());
        out
    }

    /// Canonical form in which no term carries both `b+` and `b-`, using
    /// `b+^t k^s b-^t = q^{-st} k^s prod_{i<t} (1 - q^{-i} k)`. Monomials with
    /// `min(a, c) = 0` form a basis of the algebra, so canonical elements are
    /// equal exactly when the operators are. At `q = 0` the identity is
    /// unavailable and the element is returned unchanged.
    pub fn reduce(&self, x: &NoElement<F>) -> NoElement<F> {
        if self.q.is_zero() {
            return x.clone();
        }
        let mut out = NoElement::zero();
        for (&(a, s, c), v) in &x.terms {
            let t = a.min(c);
            if t == 0 {
                out.add_term((a, s, c), v.clone());
                continue;
            }
            let mut poly = vec![F::one()];
            for i in 0..t {
                let qi = self.q.powi(-(i as i64));
                let mut next = vec![F::zero(); poly.len() + 1];
                for (r, e) in poly.iter().enumerate() {
                    next[r] += e.clone();
                    next[r + 1] -= e.clone() * &qi;
                }
                poly = next;
            }
            let pre = v.clone() * self.q.powi(-(s as i64) * t as i64);
            for (r, e) in poly.into_iter().enumerate() {
                // b+^{a-t} k^{s+r} b-^{c-t} is already canonical.
                out.add_term((a - t, s + r as u32, c - t), pre.clone() * e);
            }
        }
        out
    }

    /// Normal-ordered product `x y`, in canonical form.
    pub fn mul(&self, x: &NoElement<F>, y: &NoElement<F>) -> NoElement<F> {
        self.reduce(&self.mul_raw(x, y))
    }

    fn mul_raw(&self, x: &NoElement<F>, y: &NoElement<F>) -> NoElement<F> {
        let mut out = NoElement::zero();
        for (&(a, s, c), u) in &x.terms {
            for (&(a2, s2, c2), v) in &y.terms {
                let uv = u.clone() * v;
                for (&(bx, by, bz), w) in &self.swap(c, a2).terms {
                    let e = s as i64 * bx as i64 + bz as i64 * s2 as i64;
                    out.add_term((a + bx, s + by + s2, bz + c2), uv.clone() * w * self.q.powi(e));
                }
            }
        }
        out
    }

    pub fn product<'a>(&self, factors: impl IntoIterator<Item = &'a NoElement<F>>) -> NoElement<F> {
        factors
            .into_iter()
            .fold(NoElement::one(), |acc, f| self.mul(&acc, f))
    }

    pub fn pow(&self, x: &NoElement<F>, n: u32) -> NoElement<F> {
        (0..n).fold(NoElement::one(), |acc, _| self.mul(&acc, x))
    }

    /// Factors `1 - q^j z`, `j = 0..n`, of the q-Pochhammer `(z)_n`.
    pub fn qpoch_factors(&self, z: &NoElement<F>, n: u32) -> Vec<NoElement<F>> {
        (0..n)
            .map(|j| NoElement::one().sub(&z.scale(&self.q.powi(j as i64))))
            .collect()
    }

    pub fn qpoch(&self, z: &NoElement<F>, n: u32) -> NoElement<F> {
        self.product(&self.qpoch_factors(z, n))
    }

    /// Exact trace with `Tr(k^r) = 1/(1 - q^r)`.
    ///
    /// Only terms with equal numbers of `b+` and `b-` contribute. Each is
    /// moved cyclically to `k^s b-^a b+^a = k^s prod_{i=1}^a (1 - q^i k)`.
    pub fn trace(&self, x: &NoElement<F>) -> Result<F> {
        let mut total = F::zero();
        for (&(a, s, c), v) in &x.terms {
            if a != c {
                continue;
            }
            // Coefficients of prod_{i=1}^a (1 - q^i k) in powers of k.
            let mut poly = vec![F::one()];
            for i in 1..=a {
                let qi = self.q.powi(i as i64);
                let mut next = vec![F::zero(); poly.len() + 1];
                for (r, e) in poly.iter().enumerate() {
                    next[r] += e.clone();
                    next[r + 1] -= e.clone() * &qi;
                }
                poly = next;
            }
            for (r, e) in poly.iter().enumerate() {
                if e.is_zero() {
                    continue;
                }
                let power = s as i64 + r as i64;
                if power == 0 {
                    return Err(ZrpError::DivergentTrace(format!("constant term from b+^{a} k^{s} b-^{c}")));
                }
                let den = F::one() - self.q.powi(power);
                total += v.clone() * e.checked_div(&den, "Tr(k^r) with q^r = 1")?;
            }
        }
        Ok(total)
    }
}

/// Normal-ordered product at the given `q`.
pub fn no_multiply<F: Field>(x: &NoElement<F>, y: &NoElement<F>, q: &F) -> NoElement<F> {
    QBoson::new(q.clone()).mul(x, y)
}

/// Exact trace at the given `q`.
pub fn no_trace<F: Field>(x: &NoElement<F>, q: &F) -> Result<F> {
    QBoson::new(q.clone()).trace(x)
}

/// A `D x D` truncation of an operator on the Fock space with basis
/// `|0>, ..., |D-1>`, where `b+|m> = |m+1>`, `b-|m> = (1-q^m)|m-1>`,
/// `k|m> = q^m|m>`.
///
/// Rows `0..window` agree with the untruncated operator. `lower` bounds how
/// far the operator can move a state down, which limits the exact rows of
/// products: for `A B` the window is `min(w_A, w_B - lower_A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix<F> {
    data: Vec<Vec<F>>,
    window: usize,
    lower: usize,
}

impl<F: Field> FockMatrix<F> {
    pub fn cutoff(&self) -> usize {
        self.data.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn get(&self, m: usize, m2: usize) -> &F {
        &self.data[m][m2]
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![vec![F::zero(); d]; d];
        for (i, row) in data.iter_mut().enumerate() {
            row[i] = F::one();
        }
        FockMatrix {
            data,
            window: d,
            lower: 0,
        }
    }

    /// Lower-triangular matrix of `sum_j coeffs[j] b+^j`; exact in every row.
    pub fn raising_series(coeffs: &[F], d: usize) -> Self {
        let mut data = vec![vec![F::zero(); d]; d];
        for (m, row) in data.iter_mut().enumerate() {
            for (m2, x) in row.iter_mut().enumerate().take(m + 1) {
                if let Some(c) = coeffs.get(m - m2) {
                    *x = c.clone();
                }
            }
        }
        FockMatrix {
            data,
            window: d,
            lower: 0,
        }
    }

    pub fn mul(&self, other: &FockMatrix<F>) -> FockMatrix<F> {
        let d = self.cutoff();
        assert_eq!(d, other.cutoff(), "cutoff mismatch");
        let mut data = vec![vec![F::zero(); d]; d];
        for (i, row) in data.iter_mut().enumerate() {
            for (l, a) in self.data[i].iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (j, b) in other.data[l].iter().enumerate() {
                    if !b.is_zero() {
                        row[j] += a.clone() * b;
                    }
                }
            }
        }
        FockMatrix {
            data,
            window: self.window.min(other.window.saturating_sub(self.lower)),
            lower: self.lower + other.lower,
        }
    }

    pub fn add(&self, other: &FockMatrix<F>) -> FockMatrix<F> {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a.clone() + b).collect())
            .collect();
        FockMatrix {
            data,
            window: self.window.min(other.window),
            lower: self.lower.max(other.lower),
        }
    }

    pub fn scale(&self, s: &F) -> FockMatrix<F> {
        FockMatrix {
            data: self
                .data
                .iter()
                .map(|r| r.iter().map(|a| a.clone() * s).collect())
                .collect(),
            window: self.window,
            lower: self.lower,
        }
    }

    /// Exact comparison of the rows where both matrices are exact.
    pub fn compare(&self, other: &FockMatrix<F>) -> Result<Outcome> {
        let w = self.window.min(other.window);
        if w == 0 {
            return Err(ZrpError::EmptyWindow {
                cutoff: self.cutoff(),
                lower: self.lower.max(other.lower),
            });
        }
        for m in 0..w {
            for m2 in 0..self.cutoff() {
                if self.data[m][m2] != other.data[m][m2] {
                    return Ok(Outcome::fail(
                        format!("<{m}|.|{m2}>"),
                        &self.data[m][m2],
                        &other.data[m][m2],
                    ));
                }
            }
        }
        Ok(Outcome::Pass)
    }

    /// Sum of the diagonal over the exact rows.
    pub fn window_trace(&self) -> F {
        (0..self.window).fold(F::zero(), |acc, m| acc + &self.data[m][m])
    }
}

/// Truncated matrix of a normal-ordered element.
pub fn fock_represent<F: Field>(x: &NoElement<F>, q: &F, d: usize) -> FockMatrix<F> {
    let mut data = vec![vec![F::zero(); d]; d];
    for (&(a, s, c), v) in x.terms() {
        for m2 in (c as usize)..d {
            let mut coef = v.clone();
            for i in 0..c as usize {
                coef *= F::one() - q.powi((m2 - i) as i64);
            }
            let mid = m2 - c as usize;
            coef *= q.powi(s as i64 * mid as i64);
            let row = mid + a as usize;
            if row < d {
                data[row][m2] += coef;
            }
        }
    }
    FockMatrix {
        data,
        window: d,
        lower: x.lowering(),
    }
}

/// Series coefficients `c_j = mu^{-j} (mu)_j / (q)_j` of
/// `(b+)_inf / (mu^{-1} b+)_inf = sum_j c_j b+^j`.
pub fn vertex_coeffs<F: Field>(mu: &F, q: &F, count: usize) -> Result<Vec<F>> {
    (0..count)
        .map(|j| {
            (mu.powi(-(j as i64)) * qpoch(mu, j, q)).checked_div(&qpoch(q, j, q), "(q)_j = 0")
        })
        .collect()
}

/// The site operator `Z_alpha(mu) = (b+)_inf/(mu^{-1} b+)_inf k^{alpha_2} b-^{alpha_1}`
/// for two species, and its normalized form `X_alpha(mu) = g_alpha(mu) Z_alpha(mu)`.
#[derive(Debug, Clone)]
pub struct SiteOperator<F> {
    pub alpha: Occupancy,
    pub mu: F,
    pub q: F,
}

impl<F: Field> SiteOperator<F> {
    pub fn new(alpha: Occupancy, mu: F, q: F) -> Result<Self> {
        if alpha.n() != 2 {
            return Err(ZrpError::InvalidParams("site operators are defined for two species".into()));
        }
        if mu.is_zero() {
            return Err(ZrpError::Singular("site operator with mu = 0".into()));
        }
        Ok(SiteOperator { alpha, mu, q })
    }

    /// `k^{alpha_2} b-^{alpha_1}`.
    pub fn tail(&self) -> NoElement<F> {
        let c = self.alpha.counts();
        NoElement::monomial(0, c[1], c[0], F::one())
    }

    pub fn z_fock(&self, d: usize) -> Result<FockMatrix<F>> {
        let series = FockMatrix::raising_series(&vertex_coeffs(&self.mu, &self.q, d)?, d);
        Ok(series.mul(&fock_represent(&self.tail(), &self.q, d)))
    }

    pub fn x_fock(&self, d: usize) -> Result<FockMatrix<F>> {
        Ok(self.z_fock(d)?.scale(&g_weight(&self.alpha, &self.mu, &self.q)?))
    }
}

/// Cache of `X_alpha(mu)` matrices at one cutoff.
struct XCache<F> {
    q: F,
    d: usize,
    mats: HashMap<(Occupancy, String), FockMatrix<F>>,
}

impl<F: Field> XCache<F> {
    fn new(q: &F, d: usize) -> Self {
        XCache {
            q: q.clone(),
            d,
            mats: HashMap::new(),
        }
    }

    fn x(&mut self, alpha: &Occupancy, mu: &F) -> Result<FockMatrix<F>> {
        let key = (alpha.clone(), mu.to_string());
        if let Some(m) = self.mats.get(&key) {
            return Ok(m.clone());
        }
        let m = SiteOperator::new(alpha.clone(), mu.clone(), self.q.clone())?.x_fock(self.d)?;
        self.mats.insert(key, m.clone());
        Ok(m)
    }
}

fn zf_with_cache<F: Field>(
    cache: &mut XCache<F>,
    alpha: &Occupancy,
    beta: &Occupancy,
    lambda: &F,
    mu: &F,
) -> Result<Outcome> {
    let q = cache.q.clone();
    let lhs = cache.x(alpha, mu)?.mul(&cache.x(beta, lambda)?);
    let top = alpha.add(beta);
    let mut rhs: Option<FockMatrix<F>> = None;
    for gamma in alpha.below() {
        let rest = top.checked_sub(&gamma).expect("gamma <= alpha");
        let w = phi_weight(beta, &rest, lambda, mu, &q)?;
        let term = cache.x(&gamma, lambda)?.mul(&cache.x(&rest, mu)?).scale(&w);
        rhs = Some(match rhs {
            None => term,
            Some(acc) => acc.add(&term),
        });
    }
    let rhs = rhs.expect("gamma = 0 always present");
    Ok(lhs
        .compare(&rhs)?
        .context(format!("exchange alpha={alpha:?} beta={beta:?}")))
}

/// `X_alpha(mu) X_beta(lambda) = sum_{gamma <= alpha} Phi(beta | alpha+beta-gamma; lambda, mu)
/// X_gamma(lambda) X_{alpha+beta-gamma}(mu)` on the exact rows of the cutoff-`d` truncation.
pub fn verify_zf_relation<F: Field>(
    alpha: &Occupancy,
    beta: &Occupancy,
    lambda: &F,
    mu: &F,
    q: &F,
    d: usize,
) -> Result<Outcome> {
    zf_with_cache(&mut XCache::new(q, d), alpha, beta, lambda, mu)
}

/// Coefficients `(lambda^{-1})_j / (q)_j` of `X_0(lambda)^{-1}`.
fn inverse_vacuum<F: Field>(lambda: &F, q: &F, d: usize) -> Result<FockMatrix<F>> {
    let li = lambda.inv();
    let coeffs = (0..d)
        .map(|j| qpoch(&li, j, q).checked_div(&qpoch(q, j, q), "(q)_j = 0"))
        .collect::<Result<Vec<_>>>()?;
    Ok(FockMatrix::raising_series(&coeffs, d))
}

fn aux_with_cache<F: Field>(
    cache: &mut XCache<F>,
    inv: &FockMatrix<F>,
    beta: &Occupancy,
    gamma: &Occupancy,
    lambda: &F,
    mu: &F,
) -> Result<Outcome> {
    let q = cache.q.clone();
    let lhs = cache.x(beta, mu)?.mul(inv).mul(&cache.x(gamma, lambda)?);
    let bg = beta.add(gamma);
    let factor = (q.powi(phi_signed(&beta.to_signed(), &gamma.to_signed()))
        * g_weight(beta, mu, &q)?
        * g_weight(gamma, lambda, &q)?)
    .checked_div(&g_weight(&bg, mu, &q)?, "g_{beta+gamma}")?;
    let rhs = cache.x(&bg, mu)?.scale(&factor);
    Ok(lhs
        .compare(&rhs)?
        .context(format!("boundary beta={beta:?} gamma={gamma:?}")))
}

/// `X_beta(mu) X_0(lambda)^{-1} X_gamma(lambda)
///  = q^{phi(beta,gamma)} g_beta(mu) g_gamma(lambda) / g_{beta+gamma}(mu) X_{beta+gamma}(mu)`.
pub fn verify_aux_condition<F: Field>(
    beta: &Occupancy,
    gamma: &Occupancy,
    lambda: &F,
    mu: &F,
    q: &F,
    d: usize,
) -> Result<Outcome> {
    let inv = inverse_vacuum(lambda, q, d)?;
    aux_with_cache(&mut XCache::new(q, d), &inv, beta, gamma, lambda, mu)
}

/// Run the exchange relation and boundary condition over all pairs of
/// two-species occupancies with at most `max_total` particles each.
pub fn verify_zf_and_aux_grid<F: Field>(max_total: u32, lambda: &F, mu: &F, q: &F, d: usize) -> Result<Outcome> {
    verify_fock_grid(max_total, FockCheck::Both, lambda, mu, q, d)
}

/// Which relations `verify_fock_grid` checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FockCheck {
    Zf,
    Aux,
    Both,
}

/// The exchange relation and/or the auxiliary condition for all pairs with
/// `|alpha|, |beta| <= max_total`, on the exact rows of the cutoff-`d` truncation.
pub fn verify_fock_grid<F: Field>(
    max_total: u32,
    check: FockCheck,
    lambda: &F,
    mu: &F,
    q: &F,
    d: usize,
) -> Result<Outcome> {
    let occs: Vec<Occupancy> = (0..=max_total)
        .flat_map(|t| Occupancy::with_total(2, t))
        .collect();
    verify_fock_rows(&occs, max_total, check, lambda, mu, q, d)
}

/// `verify_fock_grid` restricted to the given left occupancies `alphas`.
pub fn verify_fock_rows<F: Field>(
    alphas: &[Occupancy],
    max_total: u32,
    check: FockCheck,
    lambda: &F,
    mu: &F,
    q: &F,
    d: usize,
) -> Result<Outcome> {
    let occs: Vec<Occupancy> = (0..=max_total)
        .flat_map(|t| Occupancy::with_total(2, t))
        .collect();
    let mut cache = XCache::new(q, d);
    let mut out = Vec::new();
    let inv = if check == FockCheck::Zf {
        None
    } else {
        let inv = inverse_vacuum(lambda, q, d)?;
        // The inverse really inverts X_0(lambda) under truncation.
        let vac = cache.x(&Occupancy::zero(2), lambda)?;
        out.push(vac.mul(&inv).compare(&FockMatrix::identity(d))?.context("vacuum inverse"));
        Some(inv)
    };
    for a in alphas {
        for b in &occs {
            if check != FockCheck::Aux {
                out.push(zf_with_cache(&mut cache, a, b, lambda, mu)?);
            }
            if let Some(inv) = &inv {
                out.push(aux_with_cache(&mut cache, inv, a, b, lambda, mu)?);
            }
        }
    }
    Ok(first_failure(out))
}

/// `Tr(k^{m2} b-^{m1} b+^{m1}) = (q)_{m1} (q)_{m2-1} / (q)_{m1+m2}` for `m2 >= 1`.
pub fn trace_closed_form<F: Field>(m1: u32, m2: u32, q: &F) -> Result<F> {
    if m2 == 0 {
        return Err(ZrpError::DivergentTrace("closed trace form needs m2 >= 1".into()));
    }
    let (m1, m2) = (m1 as usize, m2 as usize);
    (qpoch(q, m1, q) * qpoch(q, m2 - 1, q)).checked_div(&qpoch(q, m1 + m2, q), "(q)_{m1+m2} = 0")
}

/// The normal-ordered trace of `k^{m2} b-^{m1} b+^{m1}` against its closed form
/// for all `m1 <= max_m1`, `1 <= m2 <= max_m2`.
pub fn verify_trace_formula<F: Field>(max_m1: u32, max_m2: u32, q: &F) -> Result<Outcome> {
    let alg = QBoson::new(q.clone());
    let mut outcomes = Vec::new();
    for m1 in 0..=max_m1 {
        for m2 in 1..=max_m2 {
            let word = alg.mul(&NoElement::monomial(0, m2, m1, F::one()), &NoElement::monomial(m1, 0, 0, F::one()));
            let lhs = alg.trace(&word)?;
            let rhs = trace_closed_form(m1, m2, q)?;
            outcomes.push(expect_eq(|| format!("Tr(k^{m2} b-^{m1} b+^{m1})"), &lhs, &rhs));
        }
    }
    Ok(first_failure(outcomes))
}

/// `K_alpha K_beta = q^{phi(alpha,beta)} K_{alpha+beta}` with `K_alpha = k^{alpha_2} b-^{alpha_1}`.
pub fn verify_trivial_rep<F: Field>(alpha: &Occupancy, beta: &Occupancy, q: &F) -> Result<Outcome> {
    let alg = QBoson::new(q.clone());
    let tail = |o: &Occupancy| -> Result<NoElement<F>> {
        Ok(SiteOperator::new(o.clone(), F::one(), q.clone())?.tail())
    };
    let lhs = alg.mul(&tail(alpha)?, &tail(beta)?);
    let e = phi_signed(&alpha.to_signed(), &beta.to_signed());
    let rhs = tail(&alpha.add(beta))?.scale(&q.powi(e));
    Ok(if lhs == rhs {
        Outcome::Pass
    } else {
        Outcome::fail(format!("K{alpha:?} K{beta:?}"), lhs, rhs)
    })
}

/// A sum of scaled ordered products of elements.
struct ProductSum<F> {
    terms: Vec<(F, Vec<NoElement<F>>)>,
}

impl<F: Field> ProductSum<F> {
    fn new() -> Self {
        ProductSum { terms: Vec::new() }
    }

    fn push(&mut self, coef: F, factors: Vec<NoElement<F>>) {
        self.terms.push((coef, factors));
    }

    fn normal_ordered(&self, alg: &QBoson<F>) -> NoElement<F> {
        self.terms
            .iter()
            .fold(NoElement::zero(), |acc, (c, fs)| acc.add(&alg.product(fs).scale(c)))
    }

    fn fock(&self, q: &F, d: usize) -> FockMatrix<F> {
        let mut acc: Option<FockMatrix<F>> = None;
        for (c, fs) in &self.terms {
            let prod = fs
                .iter()
                .fold(FockMatrix::identity(d), |m, f| m.mul(&fock_represent(f, q, d)))
                .scale(c);
            acc = Some(match acc {
                None => prod,
                Some(a) => a.add(&prod),
            });
        }
        acc.unwrap_or_else(|| FockMatrix::identity(d).scale(&F::zero()))
    }
}

// Both sides agree as normal-ordered elements, and as products of
// truncated matrices on the exact rows.
fn compare_sides<F: Field>(
    alg: &QBoson<F>,
    lhs: &ProductSum<F>,
    rhs: &ProductSum<F>,
    d: usize,
    label: &str,
) -> Result<Outcome> {
    let (l, r) = (lhs.normal_ordered(alg), rhs.normal_ordered(alg));
    if l != r {
        return Ok(Outcome::fail(format!("{label} (normal order)"), l, r));
    }
    Ok(lhs.fock(alg.q(), d).compare(&rhs.fock(alg.q(), d))?.context(format!("{label} (Fock)")))
}

fn bp_scaled<F: Field>(c: F) -> NoElement<F> {
    NoElement::bp().scale(&c)
}

fn yum_sides<F: Field>(alg: &QBoson<F>, a2: u32, lambda: &F, mu: &F) -> Result<(ProductSum<F>, ProductSum<F>)> {
    let q = alg.q().clone();
    let nu = mu.clone() / lambda;
    let mut lhs = ProductSum::new();
    lhs.push(F::one(), alg.qpoch_factors(&bp_scaled(lambda.inv()), a2));
    let mut rhs = ProductSum::new();
    for g2 in 0..=a2 {
        let coef = (nu.powi(g2 as i64) * qpoch(lambda, g2 as usize, &q) * qpoch(&nu, (a2 - g2) as usize, &q)
            * qbinom(a2 as i64, g2 as i64, &q))
        .checked_div(&qpoch(mu, a2 as usize, &q), "(mu)_a = 0")?;
        let mut fs = alg.qpoch_factors(&bp_scaled(mu.inv()), g2);
        fs.extend(alg.qpoch_factors(&bp_scaled(q.powi(g2 as i64)), a2 - g2));
        rhs.push(coef, fs);
    }
    Ok((lhs, rhs))
}

fn hrk_sides<F: Field>(alg: &QBoson<F>, m: u32, mu: &F) -> (ProductSum<F>, ProductSum<F>) {
    let q = alg.q().clone();
    let mut lhs = ProductSum::new();
    let mut fs = alg.qpoch_factors(&NoElement::bp(), m);
    fs.push(NoElement::monomial(0, 0, m, F::one()));
    lhs.push(F::one(), fs);
    let y = NoElement::bm().add(&NoElement::k());
    let sign = if m % 2 == 0 { F::one() } else { -F::one() };
    let pre = sign * q.powi((m as i64) * (m as i64 - 1) / 2);
    let z = y.scale(&(mu.inv() * q.powi(1 - m as i64)));
    let mut rhs = ProductSum::new();
    for s in 0..=m {
        let coef = pre.clone() * mu.powi((m - s) as i64) * qbinom(m as i64, s as i64, &q) * qpoch(mu, s as usize, &q);
        rhs.push(coef, alg.qpoch_factors(&z, m - s));
    }
    (lhs, rhs)
}

fn cie_sides<F: Field>(
    alg: &QBoson<F>,
    a1: u32,
    a2: u32,
    lambda: &F,
    mu: &F,
) -> Result<(ProductSum<F>, ProductSum<F>)> {
    let q = alg.q().clone();
    let nu = mu.clone() / lambda;
    let sgn = |e: u32| if e % 2 == 0 { F::one() } else { -F::one() };
    let tri = |e: u32| (e as i64) * (e as i64 - 1) / 2;

    let w = NoElement::bm()
        .scale(&q.powi(-(a2 as i64)))
        .add(&NoElement::k().scale(&lambda.inv()));
    let mut lhs = ProductSum::new();
    let mut fs = alg.qpoch_factors(&bp_scaled(lambda.inv()), a2);
    fs.extend(alg.qpoch_factors(&w.scale(&q.powi(1 - a1 as i64)), a1));
    lhs.push(sgn(a1) * q.powi(tri(a1)), fs);

    let alpha_total = (a1 + a2) as usize;
    let mut rhs = ProductSum::new();
    for g1 in 0..=a1 {
        for g2 in 0..=a2 {
            let g = (g1 + g2) as usize;
            let e = (g1 as i64 - a1 as i64) * a2 as i64 + tri(g1);
            let coef = (sgn(g1)
                * q.powi(e)
                * nu.powi(g as i64)
                * qpoch(lambda, g, &q)
                * qpoch(&nu, alpha_total - g, &q)
                * qbinom(a1 as i64, g1 as i64, &q)
                * qbinom(a2 as i64, g2 as i64, &q))
            .checked_div(&qpoch(mu, alpha_total, &q), "(mu)_|alpha| = 0")?;
            let x = NoElement::bm()
                .scale(&q.powi(-(g2 as i64)))
                .add(&NoElement::k().scale(&mu.inv()));
            let mut fs = alg.qpoch_factors(&bp_scaled(mu.inv()), g2);
            fs.extend(alg.qpoch_factors(&bp_scaled(q.powi(g as i64)), (alpha_total - g) as u32));
            fs.extend(alg.qpoch_factors(&x.scale(&q.powi(1 - g1 as i64)), g1));
            fs.push(NoElement::monomial(0, 0, a1 - g1, F::one()));
            rhs.push(coef, fs);
        }
    }
    Ok((lhs, rhs))
}

/// The three operator identities behind the exchange relation: the
/// `alpha_1 = 0` polynomial identity in `b+` at `alpha_2`, the expansion of
/// `(b+)_m b-^m` in `Y = b- + k` at `m = alpha_1`, and the full identity
/// at `(alpha_1, alpha_2)`. Each is checked exactly in normal order and on
/// the exact rows of the cutoff-`d` Fock truncation.
pub fn verify_proof_identities<F: Field>(
    alpha1: u32,
    alpha2: u32,
    lambda: &F,
    mu: &F,
    q: &F,
    d: usize,
) -> Result<Outcome> {
    let alg = QBoson::new(q.clone());
    let (l, r) = yum_sides(&alg, alpha2, lambda, mu)?;
    let o1 = compare_sides(&alg, &l, &r, d, &format!("b+ polynomial at alpha2={alpha2}"))?;
    let (l, r) = hrk_sides(&alg, alpha1, mu);
    let o2 = compare_sides(&alg, &l, &r, d, &format!("Y expansion at m={alpha1}"))?;
    let (l, r) = cie_sides(&alg, alpha1, alpha2, lambda, mu)?;
    let o3 = compare_sides(&alg, &l, &r, d, &format!("full identity at ({alpha1},{alpha2})"))?;
    Ok(first_failure([o1, o2, o3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn occ(a: u32, b: u32) -> Occupancy {
        Occupancy::new(vec![a, b])
    }

    #[test]
    fn defining_relations() {
        let q = r(1, 3);
        let alg = QBoson::new(q.clone());
        let (bp, bm, k) = (NoElement::bp(), NoElement::bm(), NoElement::k());
        let one = NoElement::one();
        assert_eq!(alg.mul(&bm, &bp), one.sub(&k.scale(&q)));
        assert_eq!(alg.mul(&bp, &bm), one.sub(&k));
        assert_eq!(alg.mul(&k, &bp), alg.mul(&bp, &k).scale(&q));
        assert_eq!(alg.mul(&bm, &k), alg.mul(&k, &bm).scale(&q));
        // k b- = q^{-1} b- k.
        assert_eq!(alg.mul(&k, &bm), alg.mul(&bm, &k).scale(&q.inv()));
    }

    #[test]
    fn product_is_associative() {
        let q = r(2, 5);
        let alg = QBoson::new(q.clone());
        let x = NoElement::monomial(1, 2, 2, r(1, 2)).add(&NoElement::monomial(0, 1, 1, r(3, 1)));
        let y = NoElement::monomial(2, 0, 1, r(1, 1)).add(&NoElement::k());
        let z = NoElement::monomial(1, 1, 3, r(-2, 7));
        assert_eq!(alg.mul(&alg.mul(&x, &y), &z), alg.mul(&x, &alg.mul(&y, &z)));
    }

    #[test]
    fn product_matches_truncated_matrices() {
        let q = r(1, 3);
        let alg = QBoson::new(q.clone());
        let x = NoElement::monomial(0, 0, 2, Rational::one());
        let y = NoElement::monomial(2, 0, 0, Rational::one());
        let d = 12;
        let prod = fock_represent(&alg.mul(&x, &y), &q, d);
        let direct = fock_represent(&x, &q, d).mul(&fock_represent(&y, &q, d));
        assert_eq!(direct.window(), 10);
        assert!(prod.compare(&direct).unwrap().is_pass());
    }

    #[test]
    fn fock_examples() {
        let q = r(1, 3);
        let k = fock_represent(&NoElement::<Rational>::k(), &q, 3);
        for m in 0..3 {
            assert_eq!(k.get(m, m), &q.powi(m as i64));
        }
        let alg = QBoson::new(q.clone());
        let bp = fock_represent(&NoElement::bp(), &q, 4);
        let bm = fock_represent(&NoElement::bm(), &q, 4);
        let prod = bm.mul(&bp);
        assert_eq!(prod.window(), 3);
        let exact = fock_represent(&alg.mul(&NoElement::bm(), &NoElement::bp()), &q, 4);
        for m in 0..3 {
            assert_eq!(prod.get(m, m), &(Rational::one() - q.powi(m as i64 + 1)));
        }
        // Last row is outside the window and indeed wrong.
        assert_ne!(prod.get(3, 3), exact.get(3, 3));
        assert!(prod.compare(&exact).unwrap().is_pass());
    }

    #[test]
    fn trace_examples() {
        let q = r(1, 3);
        let alg = QBoson::new(q.clone());
        let one = Rational::one();
        assert_eq!(alg.trace(&NoElement::k()).unwrap(), one.clone() / (one.clone() - &q));
        let bkb = NoElement::monomial(1, 1, 1, one.clone());
        assert_eq!(alg.trace(&bkb).unwrap(), one.clone() / (one.clone() - q.powi(2)));
        // Tr(k^2 b- b+) = (q)_1 (q)_1 / (q)_3.
        let x = alg.mul(&NoElement::monomial(0, 2, 1, one.clone()), &NoElement::bp());
        let expect = qpoch(&q, 1, &q) * qpoch(&q, 1, &q) / qpoch(&q, 3, &q);
        assert_eq!(alg.trace(&x).unwrap(), expect);
        assert!(matches!(alg.trace(&NoElement::one()), Err(ZrpError::DivergentTrace(_))));
        assert!(alg.trace(&NoElement::bp()).unwrap().is_zero());
    }

    #[test]
    fn trace_formula_over_grid() {
        let q = r(2, 7);
        let alg = QBoson::new(q.clone());
        for m1 in 0..=4u32 {
            for m2 in 1..=4u32 {
                let x = alg.mul(
                    &NoElement::monomial(0, m2, m1, Rational::one()),
                    &NoElement::monomial(m1, 0, 0, Rational::one()),
                );
                let expect = qpoch(&q, m1 as usize, &q) * qpoch(&q, (m2 - 1) as usize, &q)
                    / qpoch(&q, (m1 + m2) as usize, &q);
                assert_eq!(alg.trace(&x).unwrap(), expect, "m1={m1} m2={m2}");
            }
        }
    }

    // Reduce b+^a k^s b-^a from the inside out with b+ k^s b- = q^{-s}(k^s - k^{s+1}).
    fn inside_out_trace(a: u32, s: u32, q: &Rational) -> Rational {
        let mut poly: BTreeMap<u32, Rational> = BTreeMap::new();
        poly.insert(s, Rational::one());
        for _ in 0..a {
            let mut next: BTreeMap<u32, Rational> = BTreeMap::new();
            for (p, c) in poly {
                let f = c * q.powi(-(p as i64));
                *next.entry(p).or_insert_with(Rational::zero) += f.clone();
                *next.entry(p + 1).or_insert_with(Rational::zero) -= f;
            }
            poly = next;
        }
        poly.into_iter()
            .map(|(p, c)| c / (Rational::one() - q.powi(p as i64)))
            .sum()
    }

    #[test]
    fn cyclic_and_inside_out_traces_agree() {
        let q = r(3, 8);
        let alg = QBoson::new(q.clone());
        for a in 0..4 {
            for s in 1..4 {
                let x = NoElement::monomial(a, s, a, Rational::one());
                assert_eq!(alg.trace(&x).unwrap(), inside_out_trace(a, s, &q));
            }
        }
    }

    #[test]
    fn trace_invariant_under_boson_rescaling() {
        let q = r(1, 4);
        let alg = QBoson::new(q.clone());
        let x = NoElement::monomial(2, 1, 2, r(3, 2))
            .add(&NoElement::monomial(1, 3, 1, r(-1, 5)))
            .add(&NoElement::monomial(1, 2, 0, r(7, 1)));
        let c = r(5, 3);
        assert_eq!(alg.trace(&x).unwrap(), alg.trace(&x.rescale_bosons(&c)).unwrap());
    }

    #[test]
    fn trace_at_q_zero() {
        let alg = QBoson::new(Rational::zero());
        assert_eq!(alg.trace(&NoElement::k()).unwrap(), Rational::one());
        let x = NoElement::monomial(1, 1, 1, Rational::one());
        assert_eq!(alg.trace(&x).unwrap(), Rational::one());
    }

    #[test]
    fn float_fock_trace_close_to_exact() {
        let q = 0.3;
        let alg = QBoson::new(q);
        let x = NoElement::monomial(1, 1, 1, 1.0).add(&NoElement::monomial(0, 2, 0, 0.5));
        let exact = alg.trace(&x).unwrap();
        let d = 40;
        let approx = fock_represent(&x, &q, d).window_trace();
        assert!((exact - approx).abs() < 1e-15 * 1e3 + q.powi(d as i32 - 2));
    }

    #[test]
    fn site_operator_series_matches_element() {
        let (mu, q) = (r(1, 4), r(1, 3));
        let d = 8;
        let op = SiteOperator::new(occ(1, 1), mu.clone(), q.clone()).unwrap();
        let alg = QBoson::new(q.clone());
        let coeffs = vertex_coeffs(&mu, &q, d).unwrap();
        let series = coeffs
            .iter()
            .enumerate()
            .fold(NoElement::zero(), |acc, (j, c)| acc.add(&NoElement::monomial(j as u32, 0, 0, c.clone())));
        let elem = alg.mul(&series, &op.tail());
        let z = op.z_fock(d).unwrap();
        assert!(z.compare(&fock_represent(&elem, &q, d)).unwrap().is_pass());
    }

    #[test]
    fn exchange_and_boundary_examples() {
        let (l, m, q) = (r(1, 2), r(1, 4), r(1, 3));
        for (a, b) in [(occ(0, 0), occ(0, 0)), (occ(1, 0), occ(0, 1)), (occ(2, 1), occ(1, 1))] {
            let o = verify_zf_relation(&a, &b, &l, &m, &q, 12).unwrap();
            assert!(o.is_pass(), "{o}");
        }
        for (b, g) in [(occ(0, 0), occ(0, 0)), (occ(1, 0), occ(0, 1)), (occ(1, 1), occ(1, 0))] {
            let o = verify_aux_condition(&b, &g, &l, &m, &q, 12).unwrap();
            assert!(o.is_pass(), "{o}");
        }
    }

    #[test]
    fn exchange_fails_with_wrong_weight() {
        // Swapping the spectral parameters on one side must break it.
        let (l, m, q) = (r(1, 2), r(1, 4), r(1, 3));
        let a = occ(1, 0);
        let b = occ(0, 1);
        let mut cache = XCache::new(&q, 12);
        let lhs = cache.x(&a, &m).unwrap().mul(&cache.x(&b, &l).unwrap());
        let rhs = cache.x(&b, &l).unwrap().mul(&cache.x(&a, &m).unwrap());
        assert!(!lhs.compare(&rhs).unwrap().is_pass());
    }

    #[test]
    fn trivial_representation() {
        let q = r(1, 3);
        for (a, b) in [(occ(0, 0), occ(0, 0)), (occ(1, 0), occ(0, 1)), (occ(2, 1), occ(1, 2))] {
            assert!(verify_trivial_rep(&a, &b, &q).unwrap().is_pass());
        }
        let alg = QBoson::new(q.clone());
        let k1 = NoElement::monomial(0, 0, 1, Rational::one());
        let k2 = NoElement::monomial(0, 1, 0, Rational::one());
        assert_eq!(alg.mul(&k1, &k2), NoElement::monomial(0, 1, 1, q.clone()));
    }

    #[test]
    fn proof_identities_small() {
        let (l, m, q) = (r(1, 2), r(1, 4), r(1, 3));
        for (a1, a2) in [(0, 0), (0, 2), (2, 1), (1, 1)] {
            let o = verify_proof_identities(a1, a2, &l, &m, &q, 12).unwrap();
            assert!(o.is_pass(), "{o}");
        }
    }

    #[test]
    fn empty_window_is_an_error() {
        let q = r(1, 3);
        let bm = fock_represent(&NoElement::<Rational>::monomial(0, 0, 3, Rational::one()), &q, 2);
        let p = bm.mul(&bm);
        assert!(matches!(p.compare(&p), Err(ZrpError::EmptyWindow { .. })));
    }

    #[test]
    fn closed_trace_formula() {
        for q in [Rational::new(1, 3), Rational::new(2, 7), Rational::new(0, 1)] {
            let out = verify_trace_formula(4, 4, &q).unwrap();
            assert!(out.is_pass(), "{out}");
        }
    }

}
