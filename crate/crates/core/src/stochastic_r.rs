//! The stochastic R matrix `S(lambda, mu)` and the identities it satisfies.
//!
//! Vertex convention: an element `S^{gamma,delta}_{alpha,beta}` has `alpha`
//! entering from the left, `beta` from below, `gamma` leaving to the right
//! and `delta` leaving upward. It vanishes unless `gamma + delta = alpha + beta`
//! and `gamma <= beta`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Result, ZrpError};
use crate::linalg::SparseMatrix;
use crate::outcome::{expect_eq, first_failure, Outcome};
use crate::qseries::{g_weight, phi_signed, qbinom, qpoch, Field};
use crate::statespace::Occupancy;

/// `Phi_q(gamma | beta; lambda, mu)`, zero unless `gamma <= beta`.
pub fn phi_weight<F: Field>(gamma: &Occupancy, beta: &Occupancy, lambda: &F, mu: &F, q: &F) -> Result<F> {
    if gamma.n() != beta.n() {
        return Err(ZrpError::LengthMismatch {
            left: gamma.n(),
            right: beta.n(),
        });
    }
    let Some(diff) = beta.checked_sub(gamma) else {
        return Ok(F::zero());
    };
    if lambda.is_zero() {
        return Err(ZrpError::Singular("Phi: lambda = 0".into()));
    }
    let (g, b) = (gamma.total() as usize, beta.total() as usize);
    let ratio = mu.clone() / lambda;
    let mut num = q.powi(phi_signed(&diff.to_signed(), &gamma.to_signed()))
        * ratio.powi(g as i64)
        * qpoch(lambda, g, q)
        * qpoch(&ratio, b - g, q);
    for (&bi, &gi) in beta.counts().iter().zip(gamma.counts()) {
        num *= qbinom(bi as i64, gi as i64, q);
    }
    num.checked_div(&qpoch(mu, b, q), "Phi: (mu)_|beta| = 0")
}

/// `S(lambda, mu)^{gamma,delta}_{alpha,beta}`.
pub fn r_element<F: Field>(
    gamma: &Occupancy,
    delta: &Occupancy,
    alpha: &Occupancy,
    beta: &Occupancy,
    lambda: &F,
    mu: &F,
    q: &F,
) -> Result<F> {
    if gamma.add(delta) != alpha.add(beta) {
        return Ok(F::zero());
    }
    phi_weight(gamma, beta, lambda, mu, q)
}

/// `g_alpha(mu) q^{-phi(alpha, alpha)}`.
pub fn g_tilde<F: Field>(alpha: &Occupancy, mu: &F, q: &F) -> Result<F> {
    let a = alpha.to_signed();
    Ok(g_weight(alpha, mu, q)? * q.powi(-phi_signed(&a, &a)))
}

/// Pairs `(alpha, beta)` with `alpha + beta = w`, in lexicographic order of `alpha`.
pub fn pair_basis(w: &Occupancy) -> Vec<(Occupancy, Occupancy)> {
    w.below()
        .into_iter()
        .map(|a| {
            let b = w.checked_sub(&a).expect("a <= w");
            (a, b)
        })
        .collect()
}

/// The restriction of `S(lambda, mu)` to the pairs of total weight `w`.
#[derive(Debug, Clone)]
pub struct RBlock<F> {
    pub weight: Occupancy,
    pub basis: Vec<(Occupancy, Occupancy)>,
    index: HashMap<(Occupancy, Occupancy), usize>,
    pub matrix: SparseMatrix<F>,
}

impl<F: Field> RBlock<F> {
    pub fn index_of(&self, alpha: &Occupancy, beta: &Occupancy) -> Option<usize> {
        self.index.get(&(alpha.clone(), beta.clone())).copied()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Entry `S^{gamma,delta}_{alpha,beta}` read from the block.
    pub fn entry(&self, gamma: &Occupancy, delta: &Occupancy, alpha: &Occupancy, beta: &Occupancy) -> F {
        match (self.index_of(gamma, delta), self.index_of(alpha, beta)) {
            (Some(r), Some(c)) => self.matrix.get(r, c),
            _ => F::zero(),
        }
    }
}

/// Build the weight-`w` block of `S(lambda, mu)`.
pub fn build_r_block<F: Field>(w: &Occupancy, lambda: &F, mu: &F, q: &F) -> Result<RBlock<F>> {
    let basis = pair_basis(w);
    let index: HashMap<_, _> = basis.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut matrix = SparseMatrix::zeros(basis.len(), basis.len());
    for (c, (alpha, beta)) in basis.iter().enumerate() {
        for gamma in beta.below() {
            let delta = w.checked_sub(&gamma).expect("gamma <= beta <= w");
            let v = phi_weight(&gamma, beta, lambda, mu, q)?;
            matrix.add_to(index[&(gamma, delta)], c, v);
        }
        let _ = alpha;
    }
    Ok(RBlock {
        weight: w.clone(),
        basis,
        index,
        matrix,
    })
}

/// `S(lambda, mu)` at fixed parameters with cached weights and blocks.
/// Safe to share between threads.
#[derive(Debug)]
pub struct StochasticR<F> {
    lambda: F,
    mu: F,
    q: F,
    phi_cache: RwLock<HashMap<(Occupancy, Occupancy), F>>,
    blocks: RwLock<HashMap<Occupancy, Arc<RBlock<F>>>>,
}

impl<F: Field> StochasticR<F> {
    pub fn new(lambda: F, mu: F, q: F) -> Result<Self> {
        if lambda.is_zero() || mu.is_zero() {
            return Err(ZrpError::InvalidParams("lambda and mu must be nonzero".into()));
        }
        Ok(StochasticR {
            lambda,
            mu,
            q,
            phi_cache: RwLock::new(HashMap::new()),
            blocks: RwLock::new(HashMap::new()),
        })
    }

    pub fn lambda(&self) -> &F {
        &self.lambda
    }

    pub fn mu(&self) -> &F {
        &self.mu
    }

    pub fn q(&self) -> &F {
        &self.q
    }

    pub fn phi(&self, gamma: &Occupancy, beta: &Occupancy) -> Result<F> {
        let key = (gamma.clone(), beta.clone());
        if let Some(v) = self.phi_cache.read().expect("phi cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let v = phi_weight(gamma, beta, &self.lambda, &self.mu, &self.q)?;
        self.phi_cache
            .write()
            .expect("phi cache poisoned")
            .insert(key, v.clone());
        Ok(v)
    }

    pub fn element(&self, gamma: &Occupancy, delta: &Occupancy, alpha: &Occupancy, beta: &Occupancy) -> Result<F> {
        if gamma.add(delta) != alpha.add(beta) {
            return Ok(F::zero());
        }
        self.phi(gamma, beta)
    }

    pub fn block(&self, w: &Occupancy) -> Result<Arc<RBlock<F>>> {
        if let Some(b) = self.blocks.read().expect("block cache poisoned").get(w) {
            return Ok(b.clone());
        }
        let b = Arc::new(build_r_block(w, &self.lambda, &self.mu, &self.q)?);
        self.blocks
            .write()
            .expect("block cache poisoned")
            .insert(w.clone(), b.clone());
        Ok(b)
    }

    /// Image of `|alpha> (x) |beta>` as a list of `((gamma, delta), coefficient)`.
    pub fn apply(&self, alpha: &Occupancy, beta: &Occupancy) -> Result<Vec<((Occupancy, Occupancy), F)>> {
        let w = alpha.add(beta);
        let mut out = Vec::new();
        for gamma in beta.below() {
            let v = self.phi(&gamma, beta)?;
            if !v.is_zero() {
                let delta = w.checked_sub(&gamma).expect("gamma <= beta");
                out.push(((gamma, delta), v));
            }
        }
        Ok(out)
    }

    /// Image of `|alpha> (x) |beta>` under the transpose `S^T`, whose
    /// `(gamma, delta)` coefficient is `S^{alpha,beta}_{gamma,delta}`.
    pub fn apply_transposed(&self, alpha: &Occupancy, beta: &Occupancy) -> Result<Vec<((Occupancy, Occupancy), F)>> {
        let mut out = Vec::new();
        for e in beta.below() {
            let delta = alpha.add(&e);
            let gamma = beta.checked_sub(&e).expect("e <= beta");
            let v = self.phi(alpha, &delta)?;
            if !v.is_zero() {
                out.push(((gamma, delta), v));
            }
        }
        Ok(out)
    }
}

/// Triples `(x, y, z)` with `x + y + z = w`.
struct TripleSpace {
    basis: Vec<[Occupancy; 3]>,
    index: HashMap<[Occupancy; 3], usize>,
}

impl TripleSpace {
    fn new(w: &Occupancy) -> Self {
        let mut basis = Vec::new();
        for x in w.below() {
            let rest = w.checked_sub(&x).expect("x <= w");
            for y in rest.below() {
                let z = rest.checked_sub(&y).expect("y <= rest");
                basis.push([x.clone(), y, z]);
            }
        }
        let index = basis.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        TripleSpace { basis, index }
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Embed an operator acting on tensor slots `(i, j)`.
    fn embed<F: Field>(
        &self,
        i: usize,
        j: usize,
        local: impl Fn(&Occupancy, &Occupancy) -> Result<Vec<((Occupancy, Occupancy), F)>>,
    ) -> Result<SparseMatrix<F>> {
        let mut m = SparseMatrix::zeros(self.dim(), self.dim());
        for (c, t) in self.basis.iter().enumerate() {
            for ((a, b), v) in local(&t[i], &t[j])? {
                let mut out = t.clone();
                out[i] = a;
                out[j] = b;
                m.add_to(self.index[&out], c, v);
            }
        }
        Ok(m)
    }

    fn label(&self, r: usize, c: usize) -> String {
        format!("{:?} -> {:?}", self.basis[c], self.basis[r])
    }
}

/// Check `S12(v1,v2) S13(v1,v3) S23(v2,v3) = S23 S13 S12` on the weight-`w`
/// subspace of `W (x) W (x) W`, for both `S` and its transpose.
pub fn verify_yang_baxter<F: Field>(w: &Occupancy, nus: [&F; 3], q: &F) -> Result<Outcome> {
    let [n1, n2, n3] = nus;
    let s12 = StochasticR::new(n1.clone(), n2.clone(), q.clone())?;
    let s13 = StochasticR::new(n1.clone(), n3.clone(), q.clone())?;
    let s23 = StochasticR::new(n2.clone(), n3.clone(), q.clone())?;
    let space = TripleSpace::new(w);
    let mut outcomes = Vec::new();
    for transposed in [false, true] {
        let op = |r: &StochasticR<F>, i, j| {
            space.embed(i, j, |a, b| {
                if transposed {
                    r.apply_transposed(a, b)
                } else {
                    r.apply(a, b)
                }
            })
        };
        let (a12, a13, a23) = (op(&s12, 0, 1)?, op(&s13, 0, 2)?, op(&s23, 1, 2)?);
        let lhs = a12.mul(&a13).mul(&a23);
        let rhs = a23.mul(&a13).mul(&a12);
        let tag = if transposed { "transposed" } else { "plain" };
        outcomes.push(lhs.compare(&rhs, |r, c| space.label(r, c)).context(tag));
    }
    Ok(first_failure(outcomes))
}

/// Check `S(lambda, mu)` composed with `S(mu, lambda)` is the identity once
/// the two output slots are swapped after each application.
pub fn verify_inversion<F: Field>(w: &Occupancy, lambda: &F, mu: &F, q: &F) -> Result<Outcome> {
    let swap = |r: &StochasticR<F>| -> Result<(SparseMatrix<F>, Vec<(Occupancy, Occupancy)>)> {
        let block = r.block(w)?;
        let mut m = SparseMatrix::zeros(block.dim(), block.dim());
        for c in 0..block.dim() {
            for (row, v) in block.matrix.column(c) {
                let (g, d) = &block.basis[row];
                let target = block.index_of(d, g).expect("swapped pair has weight w");
                m.add_to(target, c, v.clone());
            }
        }
        Ok((m, block.basis.clone()))
    };
    let (a, basis) = swap(&StochasticR::new(lambda.clone(), mu.clone(), q.clone())?)?;
    let (b, _) = swap(&StochasticR::new(mu.clone(), lambda.clone(), q.clone())?)?;
    let prod = a.mul(&b);
    Ok(prod.compare(&SparseMatrix::identity(basis.len()), |r, c| {
        format!("{:?} -> {:?}", basis[c], basis[r])
    }))
}

/// Column sums of the weight-`w` block, which should all be one.
pub fn verify_column_sums<F: Field>(w: &Occupancy, lambda: &F, mu: &F, q: &F) -> Result<Outcome> {
    let block = build_r_block(w, lambda, mu, q)?;
    let sums = block.matrix.col_sums();
    Ok(first_failure(sums.iter().enumerate().map(|(c, s)| {
        expect_eq(|| format!("column {:?}", block.basis[c]), s, &F::one())
    })))
}

/// `sum_gamma Phi(gamma | beta) = 1`.
pub fn verify_phi_sum<F: Field>(beta: &Occupancy, lambda: &F, mu: &F, q: &F) -> Result<Outcome> {
    let mut s = F::zero();
    for gamma in beta.below() {
        s += phi_weight(&gamma, beta, lambda, mu, q)?;
    }
    Ok(expect_eq(|| format!("sum over gamma <= {beta:?}"), &s, &F::one()))
}

/// Check the gauge-type identities relating `S` to its species-reversed
/// transpose, to the weights `g`, and `Phi` to its reversal, at one
/// quadruple `(alpha, beta, gamma, delta)`.
pub fn verify_gauge_identities<F: Field>(
    alpha: &Occupancy,
    beta: &Occupancy,
    gamma: &Occupancy,
    delta: &Occupancy,
    lambda: &F,
    mu: &F,
    q: &F,
) -> Result<Outcome> {
    let loc = || format!("alpha={alpha:?} beta={beta:?} gamma={gamma:?} delta={delta:?}");
    let mut out = Vec::new();

    // S^{gd}_{ab} against the reversed transpose with gauge factors.
    {
        let lhs = r_element(gamma, delta, alpha, beta, lambda, mu, q)?;
        let rev = r_element(
            &alpha.reversed(),
            &beta.reversed(),
            &gamma.reversed(),
            &delta.reversed(),
            lambda,
            mu,
            q,
        )?;
        let num = g_tilde(gamma, lambda, q)? * g_tilde(delta, mu, q)?;
        let den = g_tilde(alpha, lambda, q)? * g_tilde(beta, mu, q)?;
        let e = phi_signed(&beta.to_signed(), &alpha.to_signed())
            - phi_signed(&gamma.to_signed(), &delta.to_signed());
        let rhs = rev * num.checked_div(&den, "gauge factor")? * q.powi(e);
        out.push(expect_eq(|| format!("reversed transpose at {}", loc()), &lhs, &rhs));
    }

    // Factorisation of the weight through g: requires alpha = delta + beta.
    if alpha == &delta.add(beta) {
        let bg = beta.add(gamma);
        let pre = q.powi(phi_signed(&beta.to_signed(), &gamma.to_signed()))
            * g_weight(beta, mu, q)?
            * g_weight(gamma, lambda, q)?;
        let pre = pre.checked_div(&g_weight(&bg, mu, q)?, "g_{beta+gamma}")?;
        let lhs = pre * r_element(&Occupancy::zero(alpha.n()), alpha, delta, beta, lambda, mu, q)?;
        let rhs = r_element(gamma, alpha, delta, &bg, lambda, mu, q)?;
        out.push(expect_eq(|| format!("g factorisation at {}", loc()), &lhs, &rhs));
    }

    // Exchange relation for Phi at (alpha, beta, gamma) when alpha+beta-gamma >= 0.
    if let Some(top) = alpha.add(beta).checked_sub(gamma) {
        let num = g_weight(gamma, lambda, q)? * g_weight(&top, mu, q)?;
        let den = g_weight(alpha, mu, q)? * g_weight(beta, lambda, q)?;
        let lhs = num.checked_div(&den, "exchange factor")? * phi_weight(beta, &top, lambda, mu, q)?;
        let ag: Vec<i64> = alpha.to_signed().iter().zip(gamma.to_signed()).map(|(a, g)| a - g).collect();
        let bg: Vec<i64> = beta.to_signed().iter().zip(gamma.to_signed()).map(|(b, g)| b - g).collect();
        let rhs = q.powi(phi_signed(&ag, &bg)) * phi_weight(gamma, alpha, lambda, mu, q)?;
        out.push(expect_eq(|| format!("Phi exchange at {}", loc()), &lhs, &rhs));
    }

    // Phi(gamma|alpha) = q^{phi(alpha,gamma) - phi(gamma,alpha)} Phi(gamma'|alpha').
    {
        let lhs = phi_weight(gamma, alpha, lambda, mu, q)?;
        let e = phi_signed(&alpha.to_signed(), &gamma.to_signed())
            - phi_signed(&gamma.to_signed(), &alpha.to_signed());
        let rhs = q.powi(e) * phi_weight(&gamma.reversed(), &alpha.reversed(), lambda, mu, q)?;
        out.push(expect_eq(|| format!("Phi reversal at {}", loc()), &lhs, &rhs));
    }

    Ok(first_failure(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn occ(v: &[u32]) -> Occupancy {
        Occupancy::new(v.to_vec())
    }

    // Direct single-species formula, written independently of the
    // multispecies implementation.
    fn phi_n1(g: u32, b: u32, l: &Rational, m: &Rational, q: &Rational) -> Rational {
        let ratio = m.clone() / l;
        let mut qb = Rational::one();
        for i in 0..g {
            qb = qb * (Rational::one() - q.powi((b - i) as i64)) / (Rational::one() - q.powi((i + 1) as i64));
        }
        ratio.powi(g as i64) * qpoch(l, g as usize, q) * qpoch(&ratio, (b - g) as usize, q) / qpoch(m, b as usize, q) * qb
    }

    #[test]
    fn single_species_matches_direct_formula() {
        let (l, m, q) = (r(1, 2), r(1, 4), r(1, 3));
        for b in 0..5 {
            for g in 0..=b {
                let v = phi_weight(&occ(&[g]), &occ(&[b]), &l, &m, &q).unwrap();
                assert_eq!(v, phi_n1(g, b, &l, &m, &q));
            }
        }
        // (mu/lambda)^1 (lambda)_1 / (mu)_1 at beta = gamma = 1.
        let v = phi_weight(&occ(&[1]), &occ(&[1]), &l, &m, &q).unwrap();
        assert_eq!(v, r(1, 2) * r(1, 2) / r(3, 4));
    }

    #[test]
    fn phi_vanishes_unless_gamma_below_beta() {
        let (l, m, q) = (r(1, 2), r(1, 4), r(1, 3));
        let v = phi_weight(&occ(&[2, 0]), &occ(&[1, 3]), &l, &m, &q).unwrap();
        assert!(v.is_zero());
    }

    #[test]
    fn lambda_one_is_identity_and_lambda_mu_is_swap() {
        let q = r(1, 3);
        let mu = r(1, 5);
        let w = occ(&[2, 1]);
        let id = build_r_block(&w, &Rational::one(), &mu, &q).unwrap();
        for (c, (a, b)) in id.basis.iter().enumerate() {
            // Lambda = 1 keeps the lane empty: gamma = 0, delta = alpha + beta.
            let z = Occupancy::zero(2);
            let row = id.index_of(&z, &a.add(b)).unwrap();
            assert_eq!(id.matrix.get(row, c), Rational::one());
        }
        let sw = build_r_block(&w, &mu, &mu, &q).unwrap();
        for (c, (a, b)) in sw.basis.iter().enumerate() {
            let row = sw.index_of(b, a).unwrap();
            assert_eq!(sw.matrix.get(row, c), Rational::one());
        }
    }

    #[test]
    fn ybe_inversion_sums_small() {
        let q = r(1, 7);
        let nus = [r(1, 2), r(1, 3), r(1, 5)];
        for w in [occ(&[1, 1]), occ(&[2, 1]), occ(&[1, 0, 1])] {
            let o = verify_yang_baxter(&w, [&nus[0], &nus[1], &nus[2]], &q).unwrap();
            assert!(o.is_pass(), "{o}");
            assert!(verify_inversion(&w, &nus[0], &nus[1], &q).unwrap().is_pass());
            assert!(verify_column_sums(&w, &nus[0], &nus[1], &q).unwrap().is_pass());
            assert!(verify_phi_sum(&w, &nus[0], &nus[1], &q).unwrap().is_pass());
        }
    }

    #[test]
    fn ybe_detects_perturbation() {
        // Replacing one parameter in one factor breaks the identity.
        let q = r(1, 7);
        let w = occ(&[1, 1]);
        let space = TripleSpace::new(&w);
        let s12 = StochasticR::new(r(1, 2), r(1, 3), q.clone()).unwrap();
        let s13 = StochasticR::new(r(1, 2), r(1, 5), q.clone()).unwrap();
        let s23 = StochasticR::new(r(1, 3), r(1, 5), q.clone()).unwrap();
        let bad = StochasticR::new(r(1, 3), r(1, 6), q.clone()).unwrap();
        let e = |s: &StochasticR<Rational>, i, j| space.embed(i, j, |a, b| s.apply(a, b)).unwrap();
        let lhs = e(&s12, 0, 1).mul(&e(&s13, 0, 2)).mul(&e(&bad, 1, 2));
        let rhs = e(&s23, 1, 2).mul(&e(&s13, 0, 2)).mul(&e(&s12, 0, 1));
        assert!(!lhs.compare(&rhs, |r, c| space.label(r, c)).is_pass());
    }

    #[test]
    fn no_difference_property() {
        let q = r(1, 3);
        let w = occ(&[1, 1]);
        let a = build_r_block(&w, &r(1, 2), &r(1, 4), &q).unwrap();
        let b = build_r_block(&w, &r(1, 1), &r(1, 2), &q).unwrap();
        assert_ne!(a.matrix, b.matrix);
    }

    #[test]
    fn gauge_identities_hold_on_small_grid() {
        let (l, m, q) = (r(2, 3), r(1, 5), r(1, 7));
        let occs: Vec<Occupancy> = occ(&[2, 1]).below();
        for a in &occs {
            for b in &occs {
                for g in &occs {
                    for d in &occs {
                        let o = verify_gauge_identities(a, b, g, d, &l, &m, &q).unwrap();
                        assert!(o.is_pass(), "{o}");
                    }
                }
            }
        }
    }

    #[test]
    fn cached_and_direct_agree() {
        let s = StochasticR::new(r(1, 2), r(1, 4), r(1, 3)).unwrap();
        let w = occ(&[1, 2]);
        let blk = s.block(&w).unwrap();
        let again = s.block(&w).unwrap();
        assert!(Arc::ptr_eq(&blk, &again));
        let direct = build_r_block(&w, &r(1, 2), &r(1, 4), &r(1, 3)).unwrap();
        assert_eq!(blk.matrix, direct.matrix);
        assert_eq!(
            s.element(&occ(&[0, 1]), &occ(&[1, 1]), &occ(&[1, 0]), &occ(&[0, 2])).unwrap(),
            blk.entry(&occ(&[0, 1]), &occ(&[1, 1]), &occ(&[1, 0]), &occ(&[0, 2]))
        );
    }

    #[test]
    fn float_matches_exact() {
        let w = occ(&[2, 1]);
        let e = build_r_block(&w, &r(1, 2), &r(1, 4), &r(1, 3)).unwrap();
        let f = build_r_block(&w, &0.5, &0.25, &(1.0 / 3.0)).unwrap();
        let ef = e.matrix.map(|v| v.to_f64());
        assert!(ef.compare_approx(&f.matrix, 1e-12, 1e-15, |r, c| format!("{r},{c}")).is_pass());
    }
}
