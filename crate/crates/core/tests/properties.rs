//! Randomized checks of the structural properties of each module.

use std::sync::Arc;

use proptest::prelude::*;
use zrp_core::linalg::{null_space_bareiss, Kernel};
use zrp_core::markov::{hamiltonian, steady_state, transfer_matrix};
use zrp_core::mpa::{mpa_probability, MpaFormula, MpaQuery};
use zrp_core::qboson::{fock_represent, NoElement, QBoson};
use zrp_core::qseries::{g_weight, phi_exp, qbinom, qpoch};
use zrp_core::simulator::{gillespie_step, RateTable, SimState};
use zrp_core::statespace::sector_dim;
use zrp_core::stochastic_r::StochasticR;
use zrp_core::{Config, Field, Occupancy, Rational, Sector};

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// A rational strictly inside (0, 1).
fn unit() -> impl Strategy<Value = Rational> {
    (2i64..=15).prop_flat_map(|d| (1..d).prop_map(move |n| rat(n, d)))
}

/// `(mu, lambda)` with `0 < mu < lambda < 1`.
fn mu_below_lambda() -> impl Strategy<Value = (Rational, Rational)> {
    (3i64..=20).prop_flat_map(|d| {
        (1..d - 1).prop_flat_map(move |x| (x + 1..d).prop_map(move |y| (rat(x, d), rat(y, d))))
    })
}

fn occupancy(n: usize, max: u32) -> impl Strategy<Value = Occupancy> {
    prop::collection::vec(0..=max, n).prop_map(Occupancy::new)
}

/// A small sector: species count, sites and particle numbers.
fn small_sector(max_dim: u128) -> impl Strategy<Value = Arc<Sector>> {
    (1usize..=3, 2usize..=4)
        .prop_flat_map(|(n, len)| (Just(len), occupancy(n, 3)))
        .prop_filter("sector too large", move |(len, m)| sector_dim(*len, m) <= max_dim)
        .prop_map(|(len, m)| Arc::new(Sector::enumerate(m.n(), len, &m).unwrap()))
}

fn no_element() -> impl Strategy<Value = NoElement<Rational>> {
    prop::collection::vec((0u32..=2, 0u32..=2, 0u32..=2, -5i64..=5), 1..=4).prop_map(|terms| {
        terms.into_iter().fold(NoElement::zero(), |acc, (a, s, c, v)| {
            acc.add(&NoElement::monomial(a, s, c, rat(v, 1)))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn qpoch_recurrence(z in unit(), q in unit(), m in 0usize..=12) {
        prop_assert_eq!(qpoch(&z, m + 1, &q), qpoch(&z, m, &q) * (Rational::one() - z.clone() * q.powi(m as i64)));
    }

    #[test]
    fn qbinom_symmetry_and_pascal(q in unit(), m in 1i64..=12, k in 0i64..=12) {
        prop_assume!(k <= m);
        prop_assert_eq!(qbinom(m, k, &q), qbinom(m, m - k, &q));
        let pascal = qbinom(m - 1, k - 1, &q) + q.powi(k) * qbinom(m - 1, k, &q);
        prop_assert_eq!(qbinom(m, k, &q), pascal);
    }

    #[test]
    fn phi_exponent_reversal(n in 1usize..=4, seed in prop::collection::vec(0u32..=3, 8)) {
        let alpha = Occupancy::new(seed[..n].to_vec());
        let beta = Occupancy::new(seed[4..4 + n].to_vec());
        prop_assert_eq!(phi_exp(&alpha, &beta).unwrap(), phi_exp(&beta.reversed(), &alpha.reversed()).unwrap());
    }

    #[test]
    fn exact_and_float_agree(mu in unit(), q in unit(), alpha in occupancy(3, 3)) {
        let exact = g_weight(&alpha, &mu, &q).unwrap().to_f64();
        let float = g_weight(&alpha, &mu.to_f64(), &q.to_f64()).unwrap();
        prop_assert!((exact - float).abs() <= 1e-9 * exact.abs().max(1e-300));
    }

    #[test]
    fn sector_index_is_a_bijection(s in small_sector(2000)) {
        for (i, c) in s.configs().iter().enumerate() {
            prop_assert_eq!(s.index_of(c), Some(i));
            prop_assert_eq!(&c.weight(), s.m());
        }
    }

    #[test]
    fn r_columns_are_distributions(
        (mu, lambda) in mu_below_lambda(),
        q in unit(),
        n in 1usize..=3,
        seed in prop::collection::vec(0u32..=3, 6),
    ) {
        let alpha = Occupancy::new(seed[..n].to_vec());
        let beta = Occupancy::new(seed[3..3 + n].to_vec());
        prop_assume!(alpha.total() + beta.total() <= 6);
        let r = StochasticR::new(lambda, mu, q).unwrap();
        let mut sum = Rational::zero();
        for ((gamma, delta), v) in r.apply(&alpha, &beta).unwrap() {
            prop_assert!(gamma.le(&beta) && alpha.le(&delta));
            prop_assert!(!v.is_negative(), "negative entry {} at {:?}", v, (gamma, delta));
            sum += v;
        }
        prop_assert_eq!(sum, Rational::one());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn markov_properties_in_regime(s in small_sector(300), (mu, lambda) in mu_below_lambda(), q in unit()) {
        let mus = vec![mu.clone(); s.sites()];
        let t = transfer_matrix(&s, &lambda, &mus, &q).unwrap();
        prop_assert!(t.check_markov_properties().is_pass());
        let h = hamiltonian(&s, &rat(1, 1), &rat(2, 3), &mu, &q).unwrap();
        prop_assert!(h.check_markov_properties().is_pass());
    }

    #[test]
    fn steady_state_is_shared_and_lambda_free(
        len in 2usize..=3,
        m in occupancy(2, 2),
        q in unit(),
        mu_num in prop::collection::vec(1i64..=9, 3),
        l in 0i64..=4,
    ) {
        let s = Arc::new(Sector::enumerate(2, len, &m).unwrap());
        let mus: Vec<Rational> = mu_num[..len].iter().map(|&k| rat(k, 20)).collect();
        let (l1, l2) = (rat(10 + l, 20), rat(15 + l, 20));
        let p1 = steady_state(&transfer_matrix(&s, &l1, &mus, &q).unwrap()).unwrap();
        let p2 = steady_state(&transfer_matrix(&s, &l2, &mus, &q).unwrap()).unwrap();
        prop_assert_eq!(&p1.probs, &p2.probs);

        // every site parameter equal: the generators share it
        let mu = &mus[0];
        let flat = vec![mu.clone(); len];
        let p = steady_state(&transfer_matrix(&s, &l2, &flat, &q).unwrap()).unwrap();
        for (a, b) in [(1, 0), (0, 1), (2, 5)] {
            let h = hamiltonian(&s, &rat(a, 1), &rat(b, 1), mu, &q).unwrap();
            prop_assert!(h.matrix.mul_vec(&p.probs).iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn cyclic_covariance(len in 2usize..=3, m in occupancy(2, 2), q in unit(), mu_num in prop::collection::vec(1i64..=9, 3)) {
        let s = Arc::new(Sector::enumerate(2, len, &m).unwrap());
        let mus: Vec<Rational> = mu_num[..len].iter().map(|&k| rat(k, 20)).collect();
        let mut rotated = mus.clone();
        rotated.rotate_left(1);
        let lambda = rat(1, 2);
        let p = steady_state(&transfer_matrix(&s, &lambda, &mus, &q).unwrap()).unwrap();
        let pr = steady_state(&transfer_matrix(&s, &lambda, &rotated, &q).unwrap()).unwrap();
        for c in s.configs() {
            prop_assert_eq!(p.prob(c), pr.prob(&c.rotate(1)));
        }
    }

    #[test]
    fn mpa_trace_is_cyclic(len in 2usize..=4, m1 in 0u32..=2, m2 in 1u32..=2, q in unit(), pick in any::<prop::sample::Index>()) {
        let s = Sector::enumerate(2, len, &Occupancy::new(vec![m1, m2])).unwrap();
        let c = s.config(pick.index(s.dim())).clone();
        let mus: Vec<Rational> = (0..len as i64).map(|i| rat(1, 3 + i)).collect();
        let mut rotated = mus.clone();
        rotated.rotate_left(1);
        let p = |config: Config, mus: &[Rational]| {
            mpa_probability(&MpaQuery { config, q: q.clone(), formula: MpaFormula::Inhomogeneous(mus.to_vec()) }).unwrap()
        };
        prop_assert_eq!(p(c.clone(), &mus), p(c.rotate(1), &rotated));
    }

    #[test]
    fn fock_matrices_multiply_like_the_algebra(x in no_element(), y in no_element(), q in unit()) {
        let d = 14;
        let alg = QBoson::new(q.clone());
        let xy = fock_represent(&alg.mul(&x, &y), &q, d);
        let prod = fock_represent(&x, &q, d).mul(&fock_represent(&y, &q, d));
        prop_assert!(prod.compare(&xy).unwrap().is_pass());
    }

    #[test]
    fn trace_ignores_boson_rescaling(x in no_element(), q in unit(), c in unit()) {
        let alg = QBoson::new(q);
        // only terms with a k factor have a finite trace
        let x = alg.mul(&x, &NoElement::k());
        prop_assert_eq!(alg.trace(&x).unwrap(), alg.trace(&x.rescale_bosons(&c)).unwrap());
    }

    #[test]
    fn modular_and_fraction_free_kernels_agree(
        rows in 1usize..=6,
        cols in 2usize..=7,
        entries in prop::collection::vec(-4i64..=4, 42),
        dup in any::<bool>(),
    ) {
        let mut a: Vec<Vec<Rational>> = (0..rows)
            .map(|i| (0..cols).map(|j| rat(entries[i * cols + j], 1 + (i + j) as i64 % 3)).collect())
            .collect();
        if dup {
            let extra: Vec<Rational> = a[0].iter().zip(&a[rows - 1]).map(|(x, y)| x.clone() * rat(2, 1) - y).collect();
            a.push(extra);
        }
        let modular = Rational::null_space(&a, cols);
        let bareiss = null_space_bareiss(&a, cols);
        prop_assert_eq!(modular.len(), bareiss.len());
        for v in &modular {
            for row in &a {
                let dot = row.iter().zip(v).fold(Rational::zero(), |acc, (x, y)| acc + x.clone() * y);
                prop_assert!(dot.is_zero());
            }
        }
    }

    #[test]
    fn simulator_rates_match_generator(s in small_sector(300), mu in unit(), q in unit()) {
        let (a, b) = (rat(1, 1), rat(1, 2));
        let rates = RateTable::new(&s, &a, &b, &mu, &q).unwrap();
        let h = hamiltonian(&s, &a, &b, &mu, &q).unwrap();
        prop_assert!(rates.audit(&h).is_pass());
    }

    #[test]
    fn trajectories_are_reproducible_and_conserve_weight(s in small_sector(300), seed in any::<u64>()) {
        prop_assume!(s.dim() > 1 && !s.m().is_zero());
        let rates = RateTable::new(&s, &rat(1, 1), &rat(1, 1), &rat(1, 5), &rat(3, 10)).unwrap();
        let run = || {
            let mut st = SimState::new(&s, s.config(0).clone(), seed).unwrap();
            let mut path = Vec::new();
            for _ in 0..200 {
                gillespie_step(&mut st, &rates).unwrap();
                path.push((st.config.clone(), st.time));
            }
            path
        };
        let first = run();
        for (c, _) in &first {
            prop_assert_eq!(&c.weight(), s.m());
            prop_assert!(s.index_of(c).is_some());
        }
        prop_assert_eq!(first, run());
    }
}
