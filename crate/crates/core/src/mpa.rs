//! Matrix-product steady-state probabilities for two species.
//!
//! `P(sigma) = prefactor * Tr(Z_{sigma_1} ... Z_{sigma_L})` where each site
//! operator is a power series in `b+` followed by `k^{sigma_{i,2}} b-^{sigma_{i,1}}`.
//! The trace only sees words with as many `b+` as `b-`, so the series are
//! expanded over compositions of `m_1` and every word is traced exactly.

use std::sync::Arc;

use serde_json::json;

use crate::error::{Result, ZrpError};
use crate::linalg::Kernel;
use crate::markov::{hamiltonian_signed, steady_state, transfer_matrix, Regime, SteadyState};
use crate::outcome::Outcome;
use crate::qboson::{vertex_coeffs, FockMatrix, NoElement, QBoson, SiteOperator};
use crate::qseries::{g_weight, qpoch, Field, Mode};
use crate::statespace::{Config, Occupancy, Sector};

/// Which matrix product formula to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum MpaFormula<F> {
    /// Site-dependent `mu_i`; series `sum_j mu_i^{-j} (mu_i)_j/(q)_j b+^j`
    /// and prefactor `prod_i g_{sigma_i}(mu_i)`.
    Inhomogeneous(Vec<F>),
    /// Common `mu`; series `(mu b+)_inf/(b+)_inf` and prefactor
    /// `prod_i (mu)_{|sigma_i|}/((q)_{sigma_i1} (q)_{sigma_i2})`.
    Homogeneous(F),
    /// The `q = mu = 0` point: series `sum_{j>=0} b+^j`, no prefactor.
    /// The `q` of the query is ignored.
    Tazrp,
}

#[derive(Debug, Clone)]
pub struct MpaQuery<F> {
    pub config: Config,
    pub q: F,
    pub formula: MpaFormula<F>,
}

/// Evaluates the formula for many configurations of one system size,
/// reusing the algebra and the series coefficients.
pub struct MpaEvaluator<F: Field> {
    alg: QBoson<F>,
    formula: MpaFormula<F>,
    len: usize,
    /// `coeffs[i][j]` multiplies `b+^j` at site `i`.
    coeffs: Vec<Vec<F>>,
}

impl<F: Field> MpaEvaluator<F> {
    /// `max_raise` bounds the `b+` degree needed, i.e. the largest `m_1`.
    pub fn new(formula: MpaFormula<F>, q: &F, len: usize, max_raise: u32) -> Result<Self> {
        let count = max_raise as usize + 1;
        let q = match formula {
            MpaFormula::Tazrp => F::zero(),
            _ => q.clone(),
        };
        let coeffs = match &formula {
            MpaFormula::Inhomogeneous(mus) => {
                if mus.len() != len {
                    return Err(ZrpError::LengthMismatch {
                        left: len,
                        right: mus.len(),
                    });
                }
                mus.iter().map(|mu| vertex_coeffs(mu, &q, count)).collect::<Result<_>>()?
            }
            MpaFormula::Homogeneous(mu) => {
                let c = (0..count)
                    .map(|j| qpoch(mu, j, &q).checked_div(&qpoch(&q, j, &q), "(q)_j = 0"))
                    .collect::<Result<Vec<F>>>()?;
                vec![c; len]
            }
            MpaFormula::Tazrp => vec![vec![F::one(); count]; len],
        };
        Ok(MpaEvaluator {
            alg: QBoson::new(q),
            formula,
            len,
            coeffs,
        })
    }

    pub fn q(&self) -> &F {
        self.alg.q()
    }

    fn prefactor(&self, config: &Config) -> Result<F> {
        let q = self.alg.q();
        let mut p = F::one();
        for (i, s) in config.sites().iter().enumerate() {
            match &self.formula {
                MpaFormula::Inhomogeneous(mus) => p *= g_weight(s, &mus[i], q)?,
                MpaFormula::Homogeneous(mu) => {
                    let c = s.counts();
                    let den = qpoch(q, c[0] as usize, q) * qpoch(q, c[1] as usize, q);
                    p *= qpoch(mu, s.total() as usize, q).checked_div(&den, "(q)_a = 0")?;
                }
                MpaFormula::Tazrp => {}
            }
        }
        Ok(p)
    }

    /// Trace of the operator product without the prefactor.
    pub fn trace(&self, config: &Config) -> Result<F> {
        self.check(config)?;
        let m1 = config.weight().counts()[0];
        let tails: Vec<(u32, u32)> = config
            .sites()
            .iter()
            .map(|s| (s.counts()[1], s.counts()[0]))
            .collect();
        let word = self.expand(0, m1, &NoElement::one(), &tails);
        self.alg.trace(&word)
    }

    /// Sum over compositions of the remaining `b+` budget, one site at a time.
    fn expand(&self, site: usize, budget: u32, partial: &NoElement<F>, tails: &[(u32, u32)]) -> NoElement<F> {
        let (s, c) = tails[site];
        let range = if site + 1 == self.len { budget..=budget } else { 0..=budget };
        let mut acc = NoElement::zero();
        for j in range {
            let coef = &self.coeffs[site][j as usize];
            if coef.is_zero() {
                continue;
            }
            let next = self.alg.mul(partial, &NoElement::monomial(j, s, c, coef.clone()));
            if next.is_zero() {
                continue;
            }
            let term = if site + 1 == self.len {
                next
            } else {
                self.expand(site + 1, budget - j, &next, tails)
            };
            acc = acc.add(&term);
        }
        acc
    }

    fn check(&self, config: &Config) -> Result<()> {
        if config.n() != 2 {
            return Err(ZrpError::InvalidParams("matrix product formula needs two species".into()));
        }
        if config.len() != self.len {
            return Err(ZrpError::LengthMismatch {
                left: self.len,
                right: config.len(),
            });
        }
        let m = config.weight();
        if m.counts()[1] == 0 {
            return Err(ZrpError::DivergentTrace(format!(
                "no species-2 particle in {config}, the trace has no k"
            )));
        }
        if m.counts()[0] as usize >= self.coeffs[0].len() {
            return Err(ZrpError::InvalidParams(format!(
                "evaluator built for m1 <= {}, got {}",
                self.coeffs[0].len() - 1,
                m.counts()[0]
            )));
        }
        Ok(())
    }

    /// Unnormalized probability: prefactor times trace.
    pub fn probability(&self, config: &Config) -> Result<F> {
        let t = self.trace(config)?;
        Ok(self.prefactor(config)? * t)
    }
}

pub fn mpa_probability<F: Field>(query: &MpaQuery<F>) -> Result<F> {
    let m1 = query.config.weight().counts().first().copied().unwrap_or(0);
    MpaEvaluator::new(query.formula.clone(), &query.q, query.config.len(), m1)?.probability(&query.config)
}

/// `P(m at site i, empty elsewhere)` in closed form:
/// `mu_i^{-|m|} (mu_i)_{|m|} / ((q)_{|m|} (1 - q^{m_2})) sum_{|r| = m_1} prod_j (mu_j)_{r_j} mu_j^{-r_j} / (q)_{r_j}`.
pub fn condensed_closed_form<F: Field>(site: usize, m: &Occupancy, mus: &[F], q: &F) -> Result<F> {
    let (m1, m2) = (m.counts()[0] as usize, m.counts()[1] as i64);
    let total = m.total() as usize;
    let mu = &mus[site];
    let den = qpoch(q, total, q) * (F::one() - q.powi(m2));
    let lead = (mu.powi(-(total as i64)) * qpoch(mu, total, q)).checked_div(&den, "condensed form")?;
    let series: Vec<Vec<F>> = mus.iter().map(|mu| vertex_coeffs(mu, q, m1 + 1)).collect::<Result<_>>()?;
    // Convolution of the per-site series up to degree m_1.
    let mut conv = vec![F::zero(); m1 + 1];
    conv[0] = F::one();
    for s in &series {
        let mut next = vec![F::zero(); m1 + 1];
        for (a, x) in conv.iter().enumerate() {
            for (b, y) in s.iter().enumerate().take(m1 + 1 - a) {
                next[a + b] += x.clone() * y;
            }
        }
        conv = next;
    }
    Ok(lead * &conv[m1])
}

/// The same probability via truncated Fock matrices, for cross-checking the
/// exact trace. Accurate when `q^{m_2 d}` is negligible.
pub fn mpa_probability_fock(config: &Config, mus: &[f64], q: f64, d: usize) -> Result<f64> {
    let mut prod = FockMatrix::identity(d);
    for (s, mu) in config.sites().iter().zip(mus) {
        prod = prod.mul(&SiteOperator::new(s.clone(), *mu, q)?.x_fock(d)?);
    }
    if prod.window() == 0 {
        return Err(ZrpError::EmptyWindow {
            cutoff: d,
            lower: prod.lower(),
        });
    }
    Ok(prod.window_trace())
}

/// MPA values over a sector next to the stationary vector of the dynamics.
#[derive(Debug, Clone)]
pub struct CrosscheckReport<F> {
    pub sector: Arc<Sector>,
    pub normalization: String,
    pub entries: Vec<(Config, F)>,
    /// Sum of the MPA values, i.e. MPA divided by the unit-sum steady state.
    pub ratio_to_direct: F,
    pub outcome: Outcome,
}

impl<F: Field> CrosscheckReport<F> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "sector": {
                "L": self.sector.sites(),
                "m": self.sector.m().counts(),
            },
            "normalization": self.normalization,
            "entries": self.entries.iter().map(|(c, v)| json!({
                "config": serde_json::from_str::<serde_json::Value>(&c.to_json()).expect("config json"),
                "value": v.to_string(),
            })).collect::<Vec<_>>(),
            "ratio_to_direct": self.ratio_to_direct.to_string(),
            "outcome": self.outcome,
        })
    }
}

fn close<F: Field>(a: &F, b: &F) -> bool {
    match F::MODE {
        Mode::Exact => a == b,
        Mode::Float => {
            let (x, y) = (a.to_f64(), b.to_f64());
            (x - y).abs() <= 1e-9 * x.abs().max(y.abs()) + 1e-300
        }
    }
}

/// MPA values for every configuration of `sector`.
pub fn mpa_values<F: Field>(sector: &Sector, formula: MpaFormula<F>, q: &F) -> Result<Vec<F>> {
    let eval = MpaEvaluator::new(formula, q, sector.sites(), sector.m().counts()[0])?;
    let configs = sector.configs();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len().max(1));
    let chunk = configs.len().div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .chunks(chunk)
            .map(|part| {
                let eval = &eval;
                scope.spawn(move || part.iter().map(|c| eval.probability(c)).collect::<Result<Vec<F>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(configs.len());
        for h in handles {
            out.extend(h.join().expect("mpa worker panicked")?);
        }
        Ok(out)
    })
}

/// Compare MPA values against a unit-sum steady state: they must be
/// proportional with one ratio across the sector.
pub fn compare_with_steady<F: Field>(values: Vec<F>, steady: &SteadyState<F>, normalization: &str) -> CrosscheckReport<F> {
    let sector = steady.sector.clone();
    let ratio = values.iter().fold(F::zero(), |acc, v| acc + v);
    let mut outcome = Outcome::Pass;
    for (i, (v, p)) in values.iter().zip(&steady.probs).enumerate() {
        let scaled = ratio.clone() * p;
        if !close(v, &scaled) {
            outcome = Outcome::fail(format!("config {}", sector.config(i)), v, scaled);
            break;
        }
    }
    CrosscheckReport {
        entries: sector.configs().iter().cloned().zip(values).collect(),
        sector,
        normalization: normalization.to_string(),
        ratio_to_direct: ratio,
        outcome,
    }
}

/// Inhomogeneous MPA against the stationary vector of `T(lambda)`.
pub fn crosscheck_steady<F: Kernel>(sector: &Arc<Sector>, lambda: &F, mus: &[F], q: &F) -> Result<CrosscheckReport<F>> {
    let t = transfer_matrix(sector, lambda, mus, q)?;
    let ss = steady_state(&t)?;
    let values = mpa_values(sector, MpaFormula::Inhomogeneous(mus.to_vec()), q)?;
    Ok(compare_with_steady(values, &ss, "trace gauge, inhomogeneous"))
}

/// Homogeneous MPA against the stationary vector of `a H1 + b H2`.
pub fn crosscheck_homogeneous<F: Kernel>(sector: &Arc<Sector>, a: &F, b: &F, mu: &F, q: &F) -> Result<CrosscheckReport<F>> {
    let h = hamiltonian_signed(sector, a, b, Regime::Plus, mu, q)?;
    let ss = steady_state(&h)?;
    let values = mpa_values(sector, MpaFormula::Homogeneous(mu.clone()), q)?;
    Ok(compare_with_steady(values, &ss, "trace gauge, homogeneous"))
}

/// The `q = mu = 0` formula against the stationary vector of `H2` at `q = mu = 0`.
pub fn crosscheck_tazrp<F: Kernel>(sector: &Arc<Sector>) -> Result<CrosscheckReport<F>> {
    let h = hamiltonian_signed(sector, &F::zero(), &F::one(), Regime::Plus, &F::zero(), &F::zero())?;
    let ss = steady_state(&h)?;
    let values = mpa_values(sector, MpaFormula::Tazrp, &F::zero())?;
    Ok(compare_with_steady(values, &ss, "trace gauge, q = mu = 0"))
}

/// One evaluation of the separation identity
/// `P(m,0,..,0)^{-1} sum_{|l|=r, l<=m} P(m-l,0,..,l at j,..,0) = f_{|m|-r} f_r / f_{|m|}`,
/// `f_s = (mu)_s/(q)_s`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LdmaRow<F> {
    pub m: Vec<u32>,
    pub len: usize,
    pub j: usize,
    pub r: u32,
    pub lhs: F,
    pub rhs: F,
    pub equal: bool,
}

/// `j` is the 1-based site receiving the separated particles.
pub fn conjecture_ldma<F: Field>(m: &Occupancy, len: usize, j: usize, r: u32, mu: &F, q: &F) -> Result<LdmaRow<F>> {
    if !(2..=len).contains(&j) || r > m.total() {
        return Err(ZrpError::InvalidParams(format!("need 2 <= j <= L and r <= |m|, got j={j}, r={r}")));
    }
    let eval = MpaEvaluator::new(MpaFormula::Homogeneous(mu.clone()), q, len, m.counts()[0])?;
    let empty = Occupancy::zero(2);
    let mut sites = vec![empty.clone(); len];
    sites[0] = m.clone();
    let base = eval.probability(&Config::new(sites))?;
    let mut sum = F::zero();
    for l in Occupancy::with_total(2, r) {
        let Some(rest) = m.checked_sub(&l) else { continue };
        let mut sites = vec![empty.clone(); len];
        sites[0] = rest;
        sites[j - 1] = l;
        sum += eval.probability(&Config::new(sites))?;
    }
    let lhs = sum.checked_div(&base, "P(m,0,...,0) = 0")?;
    let f = |s: u32| qpoch(mu, s as usize, q).checked_div(&qpoch(q, s as usize, q), "(q)_s = 0");
    let rhs = (f(m.total() - r)? * f(r)?).checked_div(&f(m.total())?, "f_|m| = 0")?;
    Ok(LdmaRow {
        m: m.counts().to_vec(),
        len,
        j,
        r,
        equal: close(&lhs, &rhs),
        lhs,
        rhs,
    })
}

/// All rows with `L <= max_len`, `|m| <= max_total` (basic `m`), every `j` and `r`.
pub fn conjecture_grid<F: Field>(max_len: usize, max_total: u32, mu: &F, q: &F) -> Result<Vec<LdmaRow<F>>> {
    let mut rows = Vec::new();
    for total in 2..=max_total {
        for m in Occupancy::with_total(2, total) {
            if m.counts().contains(&0) {
                continue;
            }
            for len in 2..=max_len {
                for j in 2..=len {
                    for r in 0..=total {
                        rows.push(conjecture_ldma(&m, len, j, r, mu, q)?);
                    }
                }
            }
        }
    }
    Ok(rows)
}
