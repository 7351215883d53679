//! Markov transfer matrices and continuous-time generators on a sector.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, ZrpError};
use crate::linalg::{Kernel, SparseMatrix};
use crate::outcome::{expect_eq, first_failure, Outcome};
use crate::qseries::{phi_signed, qbinom, qpoch, Field, Mode};
use crate::statespace::{Config, Occupancy, Sector};
use crate::stochastic_r::StochasticR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Column stochastic: nonnegative entries, columns sum to one.
    Transfer,
    /// Generator: nonnegative off-diagonal entries, columns sum to zero.
    Hamiltonian,
}

/// A linear operator on one sector, in the sector's configuration basis.
/// Column `j` is the image of configuration `j`.
#[derive(Debug, Clone)]
pub struct SectorOperator<F> {
    pub sector: Arc<Sector>,
    pub kind: OperatorKind,
    pub matrix: SparseMatrix<F>,
}

impl<F: Field> SectorOperator<F> {
    pub fn dim(&self) -> usize {
        self.sector.dim()
    }

    /// Entry `<row|A|col>` addressed by configuration.
    pub fn entry(&self, row: &Config, col: &Config) -> F {
        match (self.sector.index_of(row), self.sector.index_of(col)) {
            (Some(r), Some(c)) => self.matrix.get(r, c),
            _ => F::zero(),
        }
    }

    /// Image of one configuration as `(config, coefficient)` pairs.
    pub fn apply_config(&self, col: &Config) -> Vec<(Config, F)> {
        let Some(c) = self.sector.index_of(col) else {
            return Vec::new();
        };
        self.matrix
            .column(c)
            .map(|(r, v)| (self.sector.config(r).clone(), v.clone()))
            .collect()
    }

    pub fn label(&self, r: usize, c: usize) -> String {
        format!("<{}|.|{}>", self.sector.config(r), self.sector.config(c))
    }

    /// Sign and column-sum conditions for the operator kind.
    pub fn check_markov_properties(&self) -> Outcome {
        let target = match self.kind {
            OperatorKind::Transfer => F::one(),
            OperatorKind::Hamiltonian => F::zero(),
        };
        let mut out = Vec::new();
        for (c, s) in self.matrix.col_sums().iter().enumerate() {
            out.push(expect_eq(|| format!("column sum of {}", self.sector.config(c)), s, &target));
            for (r, v) in self.matrix.column(c) {
                let checked = self.kind == OperatorKind::Transfer || r != c;
                if checked && *v < F::zero() {
                    out.push(Outcome::fail(self.label(r, c), v, ">= 0"));
                }
            }
        }
        first_failure(out)
    }

    pub fn compare(&self, other: &SectorOperator<F>) -> Outcome {
        self.matrix.compare(&other.matrix, |r, c| self.label(r, c))
    }
}

fn check_regime_len<F>(sector: &Sector, mus: &[F]) -> Result<()> {
    if mus.len() != sector.sites() {
        return Err(ZrpError::LengthMismatch {
            left: mus.len(),
            right: sector.sites(),
        });
    }
    Ok(())
}

/// `T(lambda | mu_1, ..., mu_L)` restricted to `sector`.
///
/// Each column `beta` is expanded by summing over the lane value `gamma_0`
/// on the periodic boundary and the lane values between sites; the top
/// output of site `i` is `alpha_i = gamma_{i-1} + beta_i - gamma_i`.
pub fn transfer_matrix<F: Field>(sector: &Arc<Sector>, lambda: &F, mus: &[F], q: &F) -> Result<SectorOperator<F>> {
    check_regime_len(sector, mus)?;
    let rs: Vec<StochasticR<F>> = mus
        .iter()
        .map(|mu| StochasticR::new(lambda.clone(), mu.clone(), q.clone()))
        .collect::<Result<_>>()?;
    let len = sector.sites();
    let dim = sector.dim();
    let mut matrix = SparseMatrix::zeros(dim, dim);
    for (c, beta) in sector.configs().iter().enumerate() {
        // Per-site choices of the outgoing lane with their weights.
        let choices: Vec<Vec<(Occupancy, F)>> = (0..len)
            .map(|i| {
                let b = beta.site(i);
                b.below()
                    .into_iter()
                    .map(|g| rs[i].phi(&g, b).map(|v| (g, v)))
                    .filter(|r| !matches!(r, Ok((_, v)) if v.is_zero()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut column: HashMap<Config, F> = HashMap::new();
        let mut alpha = Vec::with_capacity(len);
        for (g0, w0) in &choices[len - 1] {
            expand_lane(beta, &choices, 0, g0, g0, w0.clone(), &mut alpha, &mut column);
        }
        for (cfg, v) in column {
            let r = sector.index_of(&cfg).expect("weight is conserved");
            matrix.add_to(r, c, v);
        }
    }
    Ok(SectorOperator {
        sector: sector.clone(),
        kind: OperatorKind::Transfer,
        matrix,
    })
}

#[allow(clippy::too_many_arguments)]
fn expand_lane<F: Field>(
    beta: &Config,
    choices: &[Vec<(Occupancy, F)>],
    i: usize,
    lane: &Occupancy,
    g0: &Occupancy,
    acc: F,
    alpha: &mut Vec<Occupancy>,
    column: &mut HashMap<Config, F>,
) {
    let len = beta.len();
    let b = beta.site(i);
    if i + 1 == len {
        let a = lane.add(b).checked_sub(g0).expect("g0 <= beta_L");
        alpha.push(a);
        let entry = column.entry(Config::new(alpha.clone())).or_insert_with(F::zero);
        *entry += acc;
        alpha.pop();
        return;
    }
    for (g, w) in &choices[i] {
        let a = lane.add(b).checked_sub(g).expect("g <= beta_i");
        alpha.push(a);
        expand_lane(beta, choices, i + 1, g, g0, acc.clone() * w, alpha, column);
        alpha.pop();
    }
}

/// Check `[T(lambda1), T(lambda2)] = 0`.
pub fn verify_commuting_family<F: Field>(
    sector: &Arc<Sector>,
    lambda1: &F,
    lambda2: &F,
    mus: &[F],
    q: &F,
) -> Result<Outcome> {
    let a = transfer_matrix(sector, lambda1, mus, q)?;
    let b = transfer_matrix(sector, lambda2, mus, q)?;
    let ab = a.matrix.mul(&b.matrix);
    let ba = b.matrix.mul(&a.matrix);
    Ok(ab.compare(&ba, |r, c| a.label(r, c)))
}

/// Rate at which `gamma` leaves a site holding `alpha` to the right.
/// Requires `|gamma| >= 1`; zero unless `gamma <= alpha`.
pub fn rate_right<F: Field>(gamma: &Occupancy, alpha: &Occupancy, mu: &F, q: &F) -> Result<F> {
    let g = gamma.total() as i64;
    if g == 0 {
        return Err(ZrpError::InvalidParams("hop rate needs |gamma| >= 1".into()));
    }
    let Some(rest) = alpha.checked_sub(gamma) else {
        return Ok(F::zero());
    };
    let a = alpha.total() as i64;
    let mut num = q.powi(phi_signed(&rest.to_signed(), &gamma.to_signed()))
        * mu.powi(g - 1)
        * qpoch(q, (g - 1) as usize, q);
    for (&ai, &gi) in alpha.counts().iter().zip(gamma.counts()) {
        num *= qbinom(ai as i64, gi as i64, q);
    }
    let den = qpoch(&(mu.clone() * q.powi(a - g)), g as usize, q);
    num.checked_div(&den, "right hop rate")
}

/// Rate at which `gamma` leaves a site holding `beta` to the left.
pub fn rate_left<F: Field>(gamma: &Occupancy, beta: &Occupancy, mu: &F, q: &F) -> Result<F> {
    let g = gamma.total() as i64;
    if g == 0 {
        return Err(ZrpError::InvalidParams("hop rate needs |gamma| >= 1".into()));
    }
    let Some(rest) = beta.checked_sub(gamma) else {
        return Ok(F::zero());
    };
    let b = beta.total() as i64;
    let mut num = q.powi(phi_signed(&gamma.to_signed(), &rest.to_signed())) * qpoch(q, (g - 1) as usize, q);
    for (&bi, &gi) in beta.counts().iter().zip(gamma.counts()) {
        num *= qbinom(bi as i64, gi as i64, q);
    }
    let den = qpoch(&(mu.clone() * q.powi(b - g)), g as usize, q);
    num.checked_div(&den, "left hop rate")
}

/// Check the total exit rates against their closed forms
/// `sum_{i<|alpha|} q^i/(1 - mu q^i)` (right) and `sum_{i<|alpha|} 1/(1 - mu q^i)` (left).
pub fn verify_diagonal_closed_form<F: Field>(alpha: &Occupancy, mu: &F, q: &F) -> Result<Outcome> {
    let (mut right, mut left) = (F::zero(), F::zero());
    for gamma in alpha.below().iter().filter(|g| !g.is_zero()) {
        right += rate_right(gamma, alpha, mu, q)?;
        left += rate_left(gamma, alpha, mu, q)?;
    }
    let (mut cr, mut cl) = (F::zero(), F::zero());
    for i in 0..alpha.total() as i64 {
        let d = F::one() - mu.clone() * q.powi(i);
        cr += q.powi(i).checked_div(&d, "closed form")?;
        cl += F::one().checked_div(&d, "closed form")?;
    }
    Ok(expect_eq(|| format!("right exit rate of {alpha:?}"), &right, &cr)
        .and(|| expect_eq(|| format!("left exit rate of {alpha:?}"), &left, &cl)))
}

/// Sign of the regime. The physical regimes are `0 < mu, q < 1` for `Plus`
/// and `mu, q > 1` for `Minus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Plus,
    Minus,
}

/// `H = a H1 + b H2` with right hops (`H1`) and left hops (`H2`) on the ring.
pub fn hamiltonian<F: Field>(sector: &Arc<Sector>, a: &F, b: &F, mu: &F, q: &F) -> Result<SectorOperator<F>> {
    hamiltonian_signed(sector, a, b, Regime::Plus, mu, q)
}

/// `hamiltonian` with the regime sign made explicit; off-diagonal rates are
/// multiplied by the sign and the diagonal restores zero column sums.
pub fn hamiltonian_signed<F: Field>(
    sector: &Arc<Sector>,
    a: &F,
    b: &F,
    regime: Regime,
    mu: &F,
    q: &F,
) -> Result<SectorOperator<F>> {
    let sign = match regime {
        Regime::Plus => F::one(),
        Regime::Minus => -F::one(),
    };
    let (ra, rb) = (sign.clone() * a, sign * b);
    let len = sector.sites();
    let dim = sector.dim();
    let mut matrix = SparseMatrix::zeros(dim, dim);
    let mut right_cache: HashMap<(Occupancy, Occupancy), F> = HashMap::new();
    let mut left_cache: HashMap<(Occupancy, Occupancy), F> = HashMap::new();
    for (c, cfg) in sector.configs().iter().enumerate() {
        for i in 0..len {
            let j = (i + 1) % len;
            if !ra.is_zero() {
                let src = cfg.site(i);
                for gamma in src.below().into_iter().filter(|g| !g.is_zero()) {
                    let key = (gamma.clone(), src.clone());
                    let rate = match right_cache.get(&key) {
                        Some(v) => v.clone(),
                        None => {
                            let v = rate_right(&gamma, src, mu, q)?;
                            right_cache.insert(key, v.clone());
                            v
                        }
                    };
                    add_hop(&mut matrix, sector, c, cfg, i, j, &gamma, ra.clone() * &rate);
                }
            }
            if !rb.is_zero() {
                let src = cfg.site(j);
                for gamma in src.below().into_iter().filter(|g| !g.is_zero()) {
                    let key = (gamma.clone(), src.clone());
                    let rate = match left_cache.get(&key) {
                        Some(v) => v.clone(),
                        None => {
                            let v = rate_left(&gamma, src, mu, q)?;
                            left_cache.insert(key, v.clone());
                            v
                        }
                    };
                    add_hop(&mut matrix, sector, c, cfg, j, i, &gamma, rb.clone() * &rate);
                }
            }
        }
    }
    Ok(SectorOperator {
        sector: sector.clone(),
        kind: OperatorKind::Hamiltonian,
        matrix,
    })
}

#[allow(clippy::too_many_arguments)]
fn add_hop<F: Field>(
    matrix: &mut SparseMatrix<F>,
    sector: &Sector,
    c: usize,
    cfg: &Config,
    from: usize,
    to: usize,
    gamma: &Occupancy,
    rate: F,
) {
    if rate.is_zero() {
        return;
    }
    let left = cfg.site(from).checked_sub(gamma).expect("gamma <= site");
    let moved = cfg.with_site(from, left);
    let target = moved.with_site(to, moved.site(to).add(gamma));
    let r = sector.index_of(&target).expect("hop stays in sector");
    matrix.add_to(r, c, rate.clone());
    matrix.add_to(c, c, -rate);
}

/// Derivative `dT/dlambda` at `lambda0` for homogeneous `mu`.
///
/// `lambda^{|m|} T(lambda)` is a polynomial in `lambda` of degree at most
/// `|m|`; it is interpolated exactly through `|m| L + 2` points, and the
/// interpolant is checked at one further point before it is differentiated.
pub fn transfer_derivative<F: Field>(sector: &Arc<Sector>, lambda0: &F, mus: &[F], q: &F) -> Result<SparseMatrix<F>> {
    let d = sector.m().total() as i64;
    let npts = (d as usize) * sector.sites() + 2;
    let xs: Vec<F> = (0..npts).map(|k| F::from_i64(k as i64 + 2)).collect();
    let polys: Vec<SparseMatrix<F>> = xs
        .iter()
        .map(|x| Ok(transfer_matrix(sector, x, mus, q)?.matrix.scale(&x.powi(d))))
        .collect::<Result<_>>()?;

    let probe = F::from_ratio(1, 3);
    let interp = combine(&polys, &lagrange_values(&xs, &probe));
    let direct = transfer_matrix(sector, &probe, mus, q)?.matrix.scale(&probe.powi(d));
    let agrees = match F::MODE {
        Mode::Exact => interp.compare(&direct, |_, _| String::new()),
        Mode::Float => interp.compare_approx(&direct, 1e-9, 1e-12, |_, _| String::new()),
    };
    if agrees != Outcome::Pass {
        return Err(ZrpError::Singular("transfer matrix interpolation is inconsistent".into()));
    }

    let p = transfer_matrix(sector, lambda0, mus, q)?.matrix;
    let dp = combine(&polys, &lagrange_derivatives(&xs, lambda0));
    // T = lambda^{-d} P, so T' = lambda^{-d} P' - d lambda^{-1} T.
    let t1 = dp.scale(&lambda0.powi(-d));
    let t2 = p.scale(&(F::from_i64(d) * lambda0.inv()));
    Ok(t1.sub(&t2))
}

fn combine<F: Field>(mats: &[SparseMatrix<F>], weights: &[F]) -> SparseMatrix<F> {
    let mut acc = SparseMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, w) in mats.iter().zip(weights) {
        acc = acc.add(&m.scale(w));
    }
    acc
}

fn lagrange_values<F: Field>(xs: &[F], x: &F) -> Vec<F> {
    (0..xs.len())
        .map(|k| {
            let mut num = F::one();
            let mut den = F::one();
            for (j, xj) in xs.iter().enumerate() {
                if j != k {
                    num *= x.clone() - xj;
                    den *= xs[k].clone() - xj;
                }
            }
            num / den
        })
        .collect()
}

fn lagrange_derivatives<F: Field>(xs: &[F], x: &F) -> Vec<F> {
    let n = xs.len();
    (0..n)
        .map(|k| {
            let mut den = F::one();
            for (j, xj) in xs.iter().enumerate() {
                if j != k {
                    den *= xs[k].clone() - xj;
                }
            }
            let mut num = F::zero();
            for i in (0..n).filter(|&i| i != k) {
                let mut prod = F::one();
                for (j, xj) in xs.iter().enumerate() {
                    if j != k && j != i {
                        prod *= x.clone() - xj;
                    }
                }
                num += prod;
            }
            num / den
        })
        .collect()
}

/// Check that the right and left hop generators are the logarithmic
/// derivatives of the homogeneous transfer matrix at `lambda = 1` and
/// `lambda = mu`: `T(1) H1 = -mu^{-1} T'(1)` and `T(mu) H2 = mu T'(mu)`.
pub fn verify_baxter<F: Field>(sector: &Arc<Sector>, mu: &F, q: &F) -> Result<Outcome> {
    let mus = vec![mu.clone(); sector.sites()];
    let zero = F::zero();
    let one = F::one();
    let h1 = hamiltonian(sector, &one, &zero, mu, q)?;
    let h2 = hamiltonian(sector, &zero, &one, mu, q)?;

    let t1 = transfer_matrix(sector, &one, &mus, q)?;
    let d1 = transfer_derivative(sector, &one, &mus, q)?;
    let lhs1 = t1.matrix.mul(&h1.matrix);
    let rhs1 = d1.scale(&(-mu.inv()));

    let tm = transfer_matrix(sector, mu, &mus, q)?;
    let dm = transfer_derivative(sector, mu, &mus, q)?;
    let lhs2 = tm.matrix.mul(&h2.matrix);
    let rhs2 = dm.scale(mu);

    Ok(lhs1
        .compare(&rhs1, |r, c| t1.label(r, c))
        .context("right hops at lambda = 1")
        .and(|| lhs2.compare(&rhs2, |r, c| t1.label(r, c)).context("left hops at lambda = mu")))
}

/// Site-reversal permutation on a sector.
pub fn parity<F: Field>(sector: &Sector) -> SparseMatrix<F> {
    let perm: Vec<usize> = sector
        .configs()
        .iter()
        .map(|c| sector.index_of(&c.reversed()).expect("reversal preserves the sector"))
        .collect();
    SparseMatrix::permutation(&perm)
}

/// Check `H(a, b, -, 1/q, 1/mu) = P H(mu b, mu a, +, q, mu) P` with `P`
/// the site reversal.
pub fn verify_duality<F: Field>(sector: &Arc<Sector>, a: &F, b: &F, mu: &F, q: &F) -> Result<Outcome> {
    let lhs = hamiltonian_signed(sector, a, b, Regime::Minus, &mu.inv(), &q.inv())?;
    let inner = hamiltonian_signed(
        sector,
        &(mu.clone() * b),
        &(mu.clone() * a),
        Regime::Plus,
        mu,
        q,
    )?;
    let p = parity::<F>(sector);
    let rhs = p.mul(&inner.matrix).mul(&p);
    Ok(lhs.matrix.compare(&rhs, |r, c| lhs.label(r, c)))
}

/// Normalized stationary distribution of a sector operator.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState<F> {
    #[serde(skip)]
    pub sector: Arc<Sector>,
    pub probs: Vec<F>,
}

impl<F: Field> SteadyState<F> {
    pub fn prob(&self, c: &Config) -> Option<&F> {
        self.sector.index_of(c).map(|i| &self.probs[i])
    }
}

/// Unique stationary vector of `op`, normalized to unit sum.
pub fn steady_state<F: Kernel>(op: &SectorOperator<F>) -> Result<SteadyState<F>> {
    let m = match op.kind {
        OperatorKind::Transfer => op.matrix.sub(&SparseMatrix::identity(op.dim())),
        OperatorKind::Hamiltonian => op.matrix.clone(),
    };
    let ker = F::null_space(&m.to_dense_rows(), op.dim());
    if ker.len() != 1 {
        return Err(ZrpError::NullSpaceDimension(ker.len()));
    }
    let v = ker.into_iter().next().expect("one vector");
    let total = v.iter().fold(F::zero(), |acc, x| acc + x);
    let probs = v
        .into_iter()
        .map(|x| x.checked_div(&total, "steady state normalization"))
        .collect::<Result<_>>()?;
    Ok(SteadyState {
        sector: op.sector.clone(),
        probs,
    })
}
