//! Built-in parameter grids for the identity checks, shared by the command
//! line tool and the acceptance tests. All checks run in exact arithmetic.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::Result;
use crate::markov::{hamiltonian, verify_baxter, verify_commuting_family, verify_duality};
use crate::outcome::{first_failure, Outcome};
use crate::qboson::{verify_fock_rows, verify_proof_identities, verify_trace_formula, verify_trivial_rep, FockCheck};
use crate::qseries::Rational;
use crate::statespace::{Occupancy, Sector};
use crate::stochastic_r::{
    pair_basis, verify_column_sums, verify_gauge_identities, verify_inversion, verify_phi_sum, verify_yang_baxter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Ybe,
    Inversion,
    Gauge,
    Commute,
    Baxter,
    Duality,
    Zf,
    Aux,
    Lemmas,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Ybe,
        Suite::Inversion,
        Suite::Gauge,
        Suite::Commute,
        Suite::Baxter,
        Suite::Duality,
        Suite::Zf,
        Suite::Aux,
        Suite::Lemmas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Ybe => "ybe",
            Suite::Inversion => "inversion",
            Suite::Gauge => "gauge",
            Suite::Commute => "commute",
            Suite::Baxter => "baxter",
            Suite::Duality => "duality",
            Suite::Zf => "zf",
            Suite::Aux => "aux",
            Suite::Lemmas => "lemmas",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Grid bounds. `weights` replaces the default weight list of the vertex suites.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub weights: Option<Vec<Occupancy>>,
    pub max_species: usize,
    pub max_weight: u32,
    pub max_sites: usize,
    pub fock_cutoff: usize,
    pub fock_max_total: u32,
    pub lemma_max: u32,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            weights: None,
            max_species: 3,
            max_weight: 4,
            max_sites: 3,
            fock_cutoff: 12,
            fock_max_total: 3,
            lemma_max: 3,
        }
    }
}

/// Result of one check at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub case: String,
    pub outcome: Outcome,
}

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// `(lambda, mu, q)` points for the vertex identities.
pub fn vertex_points() -> Vec<[Rational; 3]> {
    vec![
        [r(1, 2), r(1, 4), r(1, 3)],
        [r(2, 3), r(1, 5), r(1, 7)],
        [r(3, 4), r(2, 7), r(2, 5)],
    ]
}

/// `(nu1, nu2, nu3, q)` points for the Yang-Baxter equation.
pub fn ybe_points() -> Vec<[Rational; 4]> {
    vec![
        [r(1, 2), r(1, 3), r(1, 5), r(1, 7)],
        [r(2, 3), r(1, 4), r(1, 6), r(1, 3)],
        [r(3, 5), r(2, 7), r(1, 9), r(2, 5)],
    ]
}

/// `(mu, q)` points for the continuous-time generators.
pub fn hamiltonian_points() -> Vec<[Rational; 2]> {
    vec![[r(1, 5), r(1, 3)], [r(1, 4), r(2, 7)], [r(2, 9), r(3, 5)]]
}

/// All nonzero weights with `n <= max_species` species and `|w| <= max_weight`.
pub fn weights(max_species: usize, max_weight: u32) -> Vec<Occupancy> {
    (1..=max_species)
        .flat_map(|n| (1..=max_weight).flat_map(move |t| Occupancy::with_total(n, t)))
        .collect()
}

fn sectors(max_species: usize, max_sites: usize, max_total: u32, min_sites: usize) -> Vec<Arc<Sector>> {
    let mut out = Vec::new();
    for n in 1..=max_species {
        for len in min_sites..=max_sites {
            for t in 1..=max_total {
                for m in Occupancy::with_total(n, t) {
                    out.push(Arc::new(Sector::enumerate(n, len, &m).expect("small sector")));
                }
            }
        }
    }
    out
}

type Job = Box<dyn Fn() -> Result<Outcome> + Send + Sync>;

fn job(f: impl Fn() -> Result<Outcome> + Send + Sync + 'static) -> Job {
    Box::new(f)
}

fn jobs_for(suite: Suite, opts: &SuiteOptions) -> Vec<(String, Job)> {
    let ws = opts.weights.clone().unwrap_or_else(|| weights(opts.max_species, opts.max_weight));
    let mut jobs: Vec<(String, Job)> = Vec::new();
    match suite {
        Suite::Ybe => {
            for w in &ws {
                for p in ybe_points() {
                    let w = w.clone();
                    let case = format!("w={:?} nu=({},{},{}) q={}", w.counts(), p[0], p[1], p[2], p[3]);
                    jobs.push((case, job(move || verify_yang_baxter(&w, [&p[0], &p[1], &p[2]], &p[3]))));
                }
            }
        }
        Suite::Inversion => {
            for w in &ws {
                for [l, m, q] in vertex_points() {
                    let w = w.clone();
                    let case = format!("w={:?} lambda={l} mu={m} q={q}", w.counts());
                    jobs.push((case, job(move || verify_inversion(&w, &l, &m, &q))));
                }
            }
        }
        Suite::Gauge => {
            for w in &ws {
                for [l, m, q] in vertex_points() {
                    let w = w.clone();
                    let case = format!("w={:?} lambda={l} mu={m} q={q}", w.counts());
                    jobs.push((
                        case,
                        job(move || {
                            let mut out = vec![verify_column_sums(&w, &l, &m, &q)?, verify_phi_sum(&w, &l, &m, &q)?];
                            let basis = pair_basis(&w);
                            for (a, b) in &basis {
                                for (g, d) in &basis {
                                    out.push(verify_gauge_identities(a, b, g, d, &l, &m, &q)?);
                                }
                            }
                            Ok(first_failure(out))
                        }),
                    ));
                }
            }
        }
        Suite::Commute => {
            for s in sectors(opts.max_species.min(2), opts.max_sites, opts.max_weight, 2) {
                for [mu, q] in hamiltonian_points() {
                    let s = s.clone();
                    let case = format!("L={} m={:?} mu={mu} q={q}", s.sites(), s.m().counts());
                    jobs.push((
                        case,
                        job(move || {
                            let (one, zero) = (r(1, 1), r(0, 1));
                            let h1 = hamiltonian(&s, &one, &zero, &mu, &q)?;
                            let h2 = hamiltonian(&s, &zero, &one, &mu, &q)?;
                            let comm = h1.matrix.mul(&h2.matrix).compare(&h2.matrix.mul(&h1.matrix), |a, b| h1.label(a, b));
                            let mus: Vec<Rational> = (0..s.sites()).map(|i| r(1, 4 + i as i64)).collect();
                            Ok(comm
                                .context("[H1, H2]")
                                .and(|| {
                                    verify_commuting_family(&s, &r(1, 2), &r(2, 3), &mus, &q)
                                        .unwrap_or_else(|e| Outcome::fail("transfer matrices", e, ""))
                                        .context("[T(1/2), T(2/3)]")
                                }))
                        }),
                    ));
                }
            }
        }
        Suite::Baxter => {
            for n in 1..=opts.max_species.min(2) {
                for t in 1..=3 {
                    for m in Occupancy::with_total(n, t) {
                        for [mu, q] in hamiltonian_points() {
                            let s = Arc::new(Sector::enumerate(n, 2, &m).expect("small sector"));
                            let case = format!("L=2 m={:?} mu={mu} q={q}", m.counts());
                            jobs.push((case, job(move || verify_baxter(&s, &mu, &q))));
                        }
                    }
                }
            }
        }
        Suite::Duality => {
            let params = [[r(1, 1), r(1, 1), r(1, 5), r(1, 3)], [r(2, 3), r(3, 4), r(2, 7), r(2, 5)]];
            for len in 2..=opts.max_sites {
                for m in [vec![1, 1], vec![2, 1], vec![1, 2]] {
                    for [a, b, mu, q] in params.clone() {
                        let s = Arc::new(Sector::enumerate(2, len, &Occupancy::new(m.clone())).expect("small sector"));
                        let case = format!("L={len} m={m:?} a={a} b={b} mu={mu} q={q}");
                        jobs.push((case, job(move || verify_duality(&s, &a, &b, &mu, &q))));
                    }
                }
            }
        }
        Suite::Zf | Suite::Aux => {
            let check = if suite == Suite::Zf { FockCheck::Zf } else { FockCheck::Aux };
            let (d, total) = (opts.fock_cutoff, opts.fock_max_total);
            for [l, m, q] in vertex_points() {
                for alpha in (0..=total).flat_map(|t| Occupancy::with_total(2, t)) {
                    let (l, m, q) = (l.clone(), m.clone(), q.clone());
                    let case = format!("alpha={:?} |beta| <= {total} D={d} lambda={l} mu={m} q={q}", alpha.counts());
                    jobs.push((case, job(move || verify_fock_rows(&[alpha.clone()], total, check, &l, &m, &q, d))));
                }
            }
        }
        Suite::Lemmas => {
            let d = opts.fock_cutoff;
            for [l, m, q] in vertex_points() {
                for a1 in 0..=opts.lemma_max {
                    for a2 in 0..=opts.lemma_max {
                        let (l, m, q) = (l.clone(), m.clone(), q.clone());
                        let case = format!("alpha=({a1},{a2}) D={d} lambda={l} mu={m} q={q}");
                        jobs.push((case, job(move || verify_proof_identities(a1, a2, &l, &m, &q, d))));
                    }
                }
                let qq = q.clone();
                jobs.push((format!("trace formula m1,m2 <= 4 q={q}"), job(move || verify_trace_formula(4, 4, &qq))));
                jobs.push((
                    format!("trivial representation |alpha|,|beta| <= 3 q={q}"),
                    job(move || {
                        let occs: Vec<Occupancy> = (0..=3).flat_map(|t| Occupancy::with_total(2, t)).collect();
                        let mut out = Vec::new();
                        for a in &occs {
                            for b in &occs {
                                out.push(verify_trivial_rep(a, b, &q)?);
                            }
                        }
                        Ok(first_failure(out))
                    }),
                ));
            }
        }
    }
    jobs
}

/// Run one suite over its grid. Checks run in parallel; the result order
/// follows the grid.
pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Vec<Check> {
    let jobs = jobs_for(suite, opts);
    let results: Vec<Mutex<Option<Outcome>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, f)) = jobs.get(i) else { break };
                let outcome = f().unwrap_or_else(|e| Outcome::fail("evaluation error", e, ""));
                *results[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    jobs.into_iter()
        .zip(results)
        .map(|((case, _), slot)| Check {
            suite: suite.name(),
            case,
            outcome: slot.into_inner().expect("result slot").expect("job ran"),
        })
        .collect()
}

/// Run several suites in order.
pub fn run_suites(suites: &[Suite], opts: &SuiteOptions) -> Vec<Check> {
    suites.iter().flat_map(|&s| run_suite(s, opts)).collect()
}
