//! Monte Carlo for the continuous-time process (Gillespie) and the
//! discrete-time chain generated by a transfer matrix.
//!
//! Rates and transition probabilities are computed exactly once and then
//! converted to `f64`. Randomness comes from ChaCha8 seeded with a 64-bit
//! seed; parallel replica `k` uses word stream `k` of the same seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, ZrpError};
use crate::linalg::SparseMatrix;
use crate::markov::{rate_left, rate_right, OperatorKind, SectorOperator};
use crate::outcome::Outcome;
use crate::qseries::Field;
use crate::statespace::{Config, Occupancy, Sector};

/// Recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3), stream = replica index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Left,
}

/// One possible jump out of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub site: usize,
    pub gamma: Vec<u32>,
    pub direction: Direction,
    pub target: usize,
    pub rate: f64,
}

/// All jumps of `a H1 + b H2` for every configuration of a sector.
#[derive(Debug, Clone)]
pub struct RateTable {
    sector: Arc<Sector>,
    events: Vec<Vec<Event>>,
    totals: Vec<f64>,
}

impl RateTable {
    /// Right hops are scaled by `a`, left hops by `b`. Rates must be non-negative.
    pub fn new<F: Field>(sector: &Arc<Sector>, a: &F, b: &F, mu: &F, q: &F) -> Result<Self> {
        let len = sector.sites();
        let mut events = Vec::with_capacity(sector.dim());
        let mut totals = Vec::with_capacity(sector.dim());
        for cfg in sector.configs() {
            let mut list = Vec::new();
            for i in 0..len {
                let src = cfg.site(i);
                for gamma in src.below().into_iter().filter(|g| !g.is_zero()) {
                    for (direction, scale) in [(Direction::Right, a), (Direction::Left, b)] {
                        if scale.is_zero() {
                            continue;
                        }
                        let (rate, to) = match direction {
                            Direction::Right => (rate_right(&gamma, src, mu, q)?, (i + 1) % len),
                            Direction::Left => (rate_left(&gamma, src, mu, q)?, (i + len - 1) % len),
                        };
                        let rate = (rate * scale).to_f64();
                        if rate < 0.0 || !rate.is_finite() {
                            return Err(ZrpError::InvalidParams(format!(
                                "hop rate {rate} of {gamma:?} from site {i} in {cfg} is not a valid rate"
                            )));
                        }
                        if rate == 0.0 {
                            continue;
                        }
                        let target = hop(cfg, i, to, &gamma);
                        list.push(Event {
                            site: i,
                            gamma: gamma.counts().to_vec(),
                            direction,
                            target: sector.index_of(&target).expect("hop stays in sector"),
                            rate,
                        });
                    }
                }
            }
            totals.push(list.iter().map(|e| e.rate).sum());
            events.push(list);
        }
        Ok(RateTable {
            sector: sector.clone(),
            events,
            totals,
        })
    }

    pub fn sector(&self) -> &Arc<Sector> {
        &self.sector
    }

    pub fn events(&self, config: usize) -> &[Event] {
        &self.events[config]
    }

    /// The generator these rates define, column `c` holding the jumps out of `c`.
    pub fn generator(&self) -> SparseMatrix<f64> {
        let dim = self.sector.dim();
        let mut m = SparseMatrix::zeros(dim, dim);
        for (c, list) in self.events.iter().enumerate() {
            for e in list {
                m.add_to(e.target, c, e.rate);
                m.add_to(c, c, -e.rate);
            }
        }
        m
    }

    /// Entry-by-entry comparison with a Hamiltonian built by the exact solver.
    pub fn audit<F: Field>(&self, h: &SectorOperator<F>) -> Outcome {
        let exact = h.matrix.map(|v| v.to_f64());
        self.generator()
            .compare_approx(&exact, 1e-12, 1e-12, |r, c| h.label(r, c))
    }
}

fn hop(cfg: &Config, from: usize, to: usize, gamma: &Occupancy) -> Config {
    let left = cfg.site(from).checked_sub(gamma).expect("gamma <= site");
    let moved = cfg.with_site(from, left);
    moved.with_site(to, moved.site(to).add(gamma))
}

/// Current configuration, clock and random stream of one trajectory.
#[derive(Debug, Clone)]
pub struct SimState {
    pub config: Config,
    index: usize,
    pub time: f64,
    pub steps: u64,
    pub seed: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(sector: &Sector, config: Config, seed: u64) -> Result<Self> {
        Self::with_stream(sector, config, seed, 0)
    }

    pub fn with_stream(sector: &Sector, config: Config, seed: u64, stream: u64) -> Result<Self> {
        let index = sector.index_of(&config).ok_or_else(|| {
            ZrpError::InvalidParams(format!("{config} is not in the sector m={:?}", sector.m().counts()))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(SimState {
            config,
            index,
            time: 0.0,
            steps: 0,
            seed,
            stream,
            rng,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn jump(&mut self, sector: &Sector, target: usize) {
        self.index = target;
        self.config = sector.config(target).clone();
        self.steps += 1;
    }
}

/// Advance by one event; returns the holding time spent in the old configuration.
pub fn gillespie_step(state: &mut SimState, rates: &RateTable) -> Result<f64> {
    let total = rates.totals[state.index];
    if total <= 0.0 {
        return Err(ZrpError::Absorbing);
    }
    let u: f64 = 1.0 - state.rng.gen::<f64>();
    let wait = -u.ln() / total;
    let mut pick = state.rng.gen::<f64>() * total;
    let events = &rates.events[state.index];
    let mut chosen = events.len() - 1;
    for (k, e) in events.iter().enumerate() {
        if pick < e.rate {
            chosen = k;
            break;
        }
        pick -= e.rate;
    }
    state.time += wait;
    let target = events[chosen].target;
    state.jump(&rates.sector, target);
    Ok(wait)
}

/// Cumulative column distributions of a transfer matrix.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    sector: Arc<Sector>,
    columns: Vec<Vec<(usize, f64)>>,
}

impl DiscreteKernel {
    pub fn new<F: Field>(t: &SectorOperator<F>) -> Result<Self> {
        if t.kind != OperatorKind::Transfer {
            return Err(ZrpError::InvalidParams("discrete sampling needs a transfer matrix".into()));
        }
        let mut columns = Vec::with_capacity(t.dim());
        for c in 0..t.dim() {
            let mut acc = 0.0;
            let mut col = Vec::new();
            for (r, v) in t.matrix.column(c) {
                let p = v.to_f64();
                if p < 0.0 {
                    return Err(ZrpError::InvalidParams(format!(
                        "negative transition probability {p} at {}",
                        t.label(r, c)
                    )));
                }
                if p > 0.0 {
                    acc += p;
                    col.push((r, acc));
                }
            }
            if (acc - 1.0).abs() > 1e-12 {
                return Err(ZrpError::NotStochastic { column: c, sum: acc });
            }
            columns.push(col);
        }
        Ok(DiscreteKernel {
            sector: t.sector.clone(),
            columns,
        })
    }

    pub fn probabilities(&self, column: usize) -> Vec<(usize, f64)> {
        let mut prev = 0.0;
        self.columns[column]
            .iter()
            .map(|&(r, acc)| {
                let p = acc - prev;
                prev = acc;
                (r, p)
            })
            .collect()
    }
}

/// Sample the next configuration from the column of the current one.
pub fn discrete_step(state: &mut SimState, kernel: &DiscreteKernel) {
    let col = &kernel.columns[state.index];
    let total = col.last().map_or(1.0, |&(_, a)| a);
    let u = state.rng.gen::<f64>() * total;
    let k = col.partition_point(|&(_, acc)| acc <= u).min(col.len() - 1);
    let target = col[k].0;
    state.jump(&kernel.sector, target);
}

/// Occupation weights over a sector: time for the continuous process,
/// visit counts for the discrete chain.
#[derive(Debug, Clone)]
pub struct EmpiricalDist {
    pub sector: Arc<Sector>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl EmpiricalDist {
    pub fn new(sector: &Arc<Sector>) -> Self {
        EmpiricalDist {
            sector: sector.clone(),
            weights: vec![0.0; sector.dim()],
            total: 0.0,
        }
    }

    pub fn record(&mut self, index: usize, weight: f64) {
        self.weights[index] += weight;
        self.total += weight;
    }

    pub fn probs(&self) -> Vec<f64> {
        if self.total == 0.0 {
            return self.weights.clone();
        }
        self.weights.iter().map(|w| w / self.total).collect()
    }

    pub fn merge(&mut self, other: &EmpiricalDist) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            *w += o;
        }
        self.total += other.total;
    }

    /// Total variation distance `1/2 sum |p - p'|` to a distribution on the same sector.
    pub fn tv_distance(&self, exact: &[f64]) -> f64 {
        0.5 * self.probs().iter().zip(exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Time-weighted occupation of the continuous process over `horizon`
/// events, discarding the first `burn_in` of them.
pub fn estimate_stationary(state: &mut SimState, rates: &RateTable, horizon: u64, burn_in: u64) -> Result<EmpiricalDist> {
    let mut dist = EmpiricalDist::new(&rates.sector);
    if rates.sector.dim() == 1 {
        dist.record(0, 1.0);
        return Ok(dist);
    }
    for step in 0..horizon {
        let here = state.index;
        let wait = gillespie_step(state, rates)?;
        if step >= burn_in {
            dist.record(here, wait);
        }
    }
    Ok(dist)
}

/// Visit counts of the discrete chain over `horizon` steps after `burn_in`.
pub fn estimate_stationary_discrete(state: &mut SimState, kernel: &DiscreteKernel, horizon: u64, burn_in: u64) -> EmpiricalDist {
    let mut dist = EmpiricalDist::new(&kernel.sector);
    for step in 0..horizon {
        discrete_step(state, kernel);
        if step >= burn_in {
            dist.record(state.index, 1.0);
        }
    }
    dist
}

/// Independent replicas of the continuous process run in parallel, one
/// stream each, merged into a single distribution.
pub fn estimate_replicas(
    rates: &RateTable,
    initial: &Config,
    seed: u64,
    replicas: u64,
    horizon: u64,
    burn_in: u64,
) -> Result<EmpiricalDist> {
    let results: Vec<Result<EmpiricalDist>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..replicas)
            .map(|k| {
                scope.spawn(move || {
                    let mut s = SimState::with_stream(&rates.sector, initial.clone(), seed, k)?;
                    estimate_stationary(&mut s, rates, horizon, burn_in)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replica panicked")).collect()
    });
    let mut dist = EmpiricalDist::new(&rates.sector);
    for r in results {
        dist.merge(&r?);
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{hamiltonian, steady_state, transfer_matrix};
    use crate::qseries::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn sector(len: usize, m: &[u32]) -> Arc<Sector> {
        Arc::new(Sector::enumerate(m.len(), len, &Occupancy::new(m.to_vec())).unwrap())
    }

    #[test]
    fn single_particle_hop_rate() {
        let s = sector(2, &[1]);
        let mu = r(1, 5);
        let table = RateTable::new(&s, &r(1, 1), &r(0, 1), &mu, &r(1, 3)).unwrap();
        let ev = table.events(0);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].rate - 1.0 / (1.0 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn event_count_matches_enumeration() {
        let s = sector(2, &[1, 1]);
        let table = RateTable::new(&s, &r(1, 1), &r(1, 1), &r(1, 5), &r(1, 3)).unwrap();
        for (c, cfg) in s.configs().iter().enumerate() {
            let expect: usize = cfg.sites().iter().map(|o| 2 * (o.below().len() - 1)).sum();
            assert_eq!(table.events(c).len(), expect, "{cfg}");
        }
    }

    #[test]
    fn empty_sector_is_absorbing() {
        let s = sector(3, &[0, 0]);
        let table = RateTable::new(&s, &r(1, 1), &r(1, 1), &r(1, 5), &r(1, 3)).unwrap();
        let mut st = SimState::new(&s, s.config(0).clone(), 1).unwrap();
        assert!(matches!(gillespie_step(&mut st, &table), Err(ZrpError::Absorbing)));
    }

    #[test]
    fn rates_reproduce_the_generator() {
        for (len, m) in [(2, vec![2, 1]), (3, vec![1, 1]), (3, vec![1, 1, 1])] {
            let s = sector(len, &m);
            let (a, b, mu, q) = (r(2, 3), r(3, 4), r(1, 5), r(2, 7));
            let table = RateTable::new(&s, &a, &b, &mu, &q).unwrap();
            let h = hamiltonian(&s, &a, &b, &mu, &q).unwrap();
            let out = table.audit(&h);
            assert!(out.is_pass(), "{out}");
        }
    }

    #[test]
    fn trajectories_stay_in_sector_and_are_reproducible() {
        let s = sector(3, &[2, 1]);
        let table = RateTable::new(&s, &r(1, 1), &r(1, 2), &r(1, 5), &r(3, 10)).unwrap();
        let run = |seed| {
            let mut st = SimState::new(&s, s.config(0).clone(), seed).unwrap();
            let mut path = Vec::new();
            for _ in 0..200 {
                gillespie_step(&mut st, &table).unwrap();
                assert_eq!(st.config.weight(), *s.m());
                path.push((st.index(), st.time));
            }
            path
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn continuous_estimate_is_close() {
        let s = sector(2, &[1, 1]);
        let (a, b, mu, q) = (r(1, 1), r(1, 1), r(1, 5), r(3, 10));
        let exact: Vec<f64> = steady_state(&hamiltonian(&s, &a, &b, &mu, &q).unwrap())
            .unwrap()
            .probs
            .iter()
            .map(|p| p.to_f64())
            .collect();
        let table = RateTable::new(&s, &a, &b, &mu, &q).unwrap();
        let dist = estimate_replicas(&table, s.config(0), 11, 2, 100_000, 10_000).unwrap();
        assert!(dist.tv_distance(&exact) < 0.02);
    }

    #[test]
    fn discrete_chain_on_single_config_stays() {
        let s = sector(1, &[2, 1]);
        let t = transfer_matrix(&s, &r(1, 2), &[r(1, 5)], &r(1, 3)).unwrap();
        let k = DiscreteKernel::new(&t).unwrap();
        let mut st = SimState::new(&s, s.config(0).clone(), 3).unwrap();
        for _ in 0..10 {
            discrete_step(&mut st, &k);
            assert_eq!(st.index(), 0);
        }
    }
}
