//! Worked examples with closed-form answers, shared by the example tests and
//! the acceptance run. Each `check_*` function panics on the first mismatch.

#![allow(dead_code)]

use std::sync::Arc;

use zrp_core::markov::{hamiltonian, steady_state, transfer_matrix};
use zrp_core::{Config, Field, Occupancy, Rational, Sector};

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn sector(len: usize, m: &[u32]) -> Arc<Sector> {
    Arc::new(Sector::enumerate(m.len(), len, &Occupancy::new(m.to_vec())).unwrap())
}

/// Parse a two-species multiset label such as "112"; "" is the empty site.
pub fn site(label: &str) -> Occupancy {
    let mut c = vec![0u32; 2];
    for ch in label.chars() {
        match ch {
            '1' => c[0] += 1,
            '2' => c[1] += 1,
            _ => {}
        }
    }
    Occupancy::new(c)
}

pub fn cfg(labels: &[&str]) -> Config {
    Config::new(labels.iter().map(|l| site(l)).collect())
}

/// The six nonzero entries of T(l | m1, m2) in the column |1, 12>.
pub fn check_transfer_column(l: &Rational, m1: &Rational, m2: &Rational, q: &Rational) {
    let s = sector(2, &[2, 1]);
    let t = transfer_matrix(&s, l, &[m1.clone(), m2.clone()], q).unwrap();
    let den = (m1.clone() - one()) * (m2.clone() - one()) * l.powi(3) * (q.clone() * m2 - one());
    let lm1 = l.clone() - one();
    let expect = vec![
        (cfg(&["2", "11"]), -(q.clone() * m1 * m2 * lm1.powi(2) * (l.clone() - m2))),
        (
            cfg(&["", "112"]),
            m1.clone() * &lm1 * (l.clone() - m2) * (l.clone() - q.clone() * m2),
        ),
        (cfg(&["11", "2"]), m2.clone() * &lm1 * (l.clone() - m1) * (l.clone() - m2)),
        (
            cfg(&["112", ""]),
            -(m2.powi(2) * &lm1 * (q.clone() * l - one()) * (l.clone() - m1)),
        ),
        (
            cfg(&["12", "1"]),
            m2.clone()
                * &lm1
                * (q.clone() * m1 * m2 * l.powi(2) - q.clone() * m1 * l - q.clone() * m2 * l
                    - q.clone() * m1 * m2 * l
                    + q.clone() * m1 * m2
                    + q.clone() * l.powi(2)
                    - m1.clone() * m2 * l
                    + m1.clone() * m2),
        ),
        (
            cfg(&["1", "12"]),
            -((l.clone() - m2)
                * (-(q.clone() * m2 * l) + q.clone() * m1 * m2 + m1.clone() * m2 * l.powi(2)
                    - m1.clone() * l
                    - r(2, 1) * m1 * m2 * l
                    + m1.clone() * m2
                    + l.powi(2))),
        ),
    ];
    let col = cfg(&["1", "12"]);
    assert_eq!(t.apply_config(&col).len(), 6);
    for (target, num) in expect {
        assert_eq!(t.entry(&target, &col), num / &den, "coefficient of {target}");
    }
}

/// The columns |1, 12> of both generators.
pub fn check_generator_columns(mu: &Rational, q: &Rational) {
    let s = sector(2, &[2, 1]);
    let (z, o) = (Rational::zero(), one());
    let h1 = hamiltonian(&s, &o, &z, mu, q).unwrap();
    let h2 = hamiltonian(&s, &z, &o, mu, q).unwrap();
    let a = one() - mu;
    let b = one() - q.clone() * mu;
    let col = cfg(&["1", "12"]);

    let e1 = [
        (cfg(&["1", "12"]), -(r(2, 1) + q - r(3, 1) * q * mu) / (a.clone() * &b)),
        (cfg(&["12", "1"]), q.clone() / &b),
        (cfg(&["11", "2"]), one() / &b),
        (cfg(&["112", ""]), (one() - q) * mu / (a.clone() * &b)),
        (cfg(&["", "112"]), one() / &a),
    ];
    for (target, v) in e1 {
        assert_eq!(h1.entry(&target, &col), v, "right hops into {target}");
    }
    assert_eq!(h1.apply_config(&col).len(), 5);

    let e2 = [
        (cfg(&["1", "12"]), -(r(3, 1) - mu - r(2, 1) * q * mu) / (a.clone() * &b)),
        (cfg(&["12", "1"]), one() / &b),
        (cfg(&["11", "2"]), q.clone() / &b),
        (cfg(&["112", ""]), (one() - q) / (a.clone() * &b)),
        (cfg(&["", "112"]), one() / &a),
    ];
    for (target, v) in e2 {
        assert_eq!(h2.entry(&target, &col), v, "left hops into {target}");
    }
    assert_eq!(h2.apply_config(&col).len(), 5);
}

/// Assert `probs` is proportional to `expect` over the whole sector.
pub fn assert_proportional(s: &Sector, probs: &[Rational], expect: &[(Config, Rational)]) {
    assert_eq!(expect.len(), s.dim(), "every configuration listed once");
    let (c0, v0) = &expect[0];
    let ratio = probs[s.index_of(c0).unwrap()].clone() / v0;
    for (c, v) in expect {
        let p = &probs[s.index_of(c).unwrap()];
        assert_eq!(p.clone(), ratio.clone() * v, "probability of {c}");
    }
}

pub type Weight = fn(&[Rational], &Rational) -> Rational;

/// Terms of a cyclic sum: the configuration shifted by `i` gets the weight
/// evaluated at `mu_j -> mu_{j+i*dir}`.
pub fn cyclic_terms(base: &[(Config, Weight)], mus: &[Rational], q: &Rational, dir: isize) -> Vec<(Config, Rational)> {
    let len = mus.len() as isize;
    let mut out = Vec::new();
    for i in 0..len {
        let shifted: Vec<Rational> = (0..len)
            .map(|j| mus[(j + dir * i).rem_euclid(len) as usize].clone())
            .collect();
        for (c, f) in base {
            out.push((c.rotate(i), f(&shifted, q)));
        }
    }
    out
}

pub fn ring_two_empty_12(m: &[Rational], q: &Rational) -> Rational {
    let (m1, m2) = (&m[0], &m[1]);
    m1.powi(2) * (one() - m2) * (one() - q.clone() * m2) * (m1.clone() + m2 - r(2, 1) * m1 * m2)
}

pub fn ring_two_1_2(m: &[Rational], q: &Rational) -> Rational {
    let (m1, m2) = (&m[0], &m[1]);
    m1.clone() * m2 * (one() - m1) * (one() - m2) * (m1.clone() + q.clone() * m2 - m1.clone() * m2 - q.clone() * m1 * m2)
}

/// Closed-form stationary weights of L = 2, m = (1, 1), indexed like the sector.
pub fn ring_two_weights(mus: &[Rational], q: &Rational) -> Vec<(Config, Rational)> {
    let base: Vec<(Config, Weight)> = vec![(cfg(&["", "12"]), ring_two_empty_12), (cfg(&["1", "2"]), ring_two_1_2)];
    cyclic_terms(&base, mus, q, 1)
}

pub fn check_stationary_two_sites(lambda: &Rational, mus: &[Rational], q: &Rational) {
    let s = sector(2, &[1, 1]);
    let t = transfer_matrix(&s, lambda, mus, q).unwrap();
    let ss = steady_state(&t).unwrap();
    assert_proportional(&s, &ss.probs, &ring_two_weights(mus, q));
}

pub fn ring_three_a(m: &[Rational], q: &Rational) -> Rational {
    let (m1, m2, m3) = (&m[0], &m[1], &m[2]);
    m1.powi(2) * m2.powi(2) * (one() - m3) * (one() - q.clone() * m3)
        * (m1.clone() * m2 + m1.clone() * m3 + m2.clone() * m3 - r(3, 1) * m1 * m3 * m2)
}

pub fn ring_three_b(m: &[Rational], q: &Rational) -> Rational {
    let (m1, m2, m3) = (&m[0], &m[1], &m[2]);
    m1.powi(2) * m2 * m3 * (one() - m2) * (one() - m3)
        * (q.clone() * m1 * m2 + m1.clone() * m3 + m2.clone() * m3
            - r(2, 1) * m1 * m2 * m3
            - q.clone() * m1 * m2 * m3)
}

pub fn ring_three_c(m: &[Rational], q: &Rational) -> Rational {
    let (m1, m2, m3) = (&m[0], &m[1], &m[2]);
    m1.powi(2) * m2 * m3 * (one() - m2) * (one() - m3)
        * (m1.clone() * m2 + q.clone() * m1 * m3 + q.clone() * m2 * m3
            - m1.clone() * m2 * m3
            - r(2, 1) * q * m1 * m2 * m3)
}

pub fn ring_three_base() -> Vec<(Config, Weight)> {
    vec![
        (cfg(&["", "", "12"]), ring_three_a),
        (cfg(&["", "2", "1"]), ring_three_b),
        (cfg(&["", "1", "2"]), ring_three_c),
    ]
}

pub fn check_stationary_three_sites(lambda: &Rational, mus: &[Rational], q: &Rational) {
    let s = sector(3, &[1, 1]);
    let t = transfer_matrix(&s, lambda, mus, q).unwrap();
    let ss = steady_state(&t).unwrap();
    // Rotating the configuration left by i pairs with mu_j -> mu_{j-i}.
    assert_proportional(&s, &ss.probs, &cyclic_terms(&ring_three_base(), mus, q, -1));
}

fn homogeneous_expect(s: &Sector, base: &[(Config, Rational)]) -> Vec<(Config, Rational)> {
    let mut out = Vec::new();
    for i in 0..s.sites() as isize {
        for (c, v) in base {
            out.push((c.rotate(i), v.clone()));
        }
    }
    out
}

/// Homogeneous m = (2, 1) on two sites (right hops) and three sites (left hops).
pub fn check_stationary_homogeneous(mu: &Rational, q: &Rational) {
    let (z, o) = (Rational::zero(), one());
    let qq = |k: i64| q.powi(k);
    let p = |c: i64, d: i64| r(c, 1) + r(d, 1) * q;

    let s2 = sector(2, &[2, 1]);
    let h = hamiltonian(&s2, &o, &z, mu, q).unwrap();
    let ss = steady_state(&h).unwrap();
    let base = vec![
        (
            cfg(&["", "112"]),
            (one() - qq(2) * mu) * (r(3, 1) + q - mu.clone() - r(3, 1) * q * mu),
        ),
        (
            cfg(&["2", "11"]),
            (one() - mu) * (one() + q + r(2, 1) * qq(2) - r(2, 1) * q * mu - qq(2) * mu - qq(3) * mu),
        ),
        (
            cfg(&["1", "12"]),
            p(1, 1) * (one() - mu) * (r(2, 1) + q + qq(2) - mu.clone() - q.clone() * mu - r(2, 1) * qq(2) * mu),
        ),
    ];
    assert_proportional(&s2, &ss.probs, &homogeneous_expect(&s2, &base));

    let s3 = sector(3, &[2, 1]);
    let h = hamiltonian(&s3, &z, &o, mu, q).unwrap();
    let ss = steady_state(&h).unwrap();
    let (a, b) = (one() - mu, one() - q.clone() * mu);
    let q3 = |c0: i64, c1: i64, c2: i64| r(c0, 1) + r(c1, 1) * q + r(c2, 1) * qq(2);
    let base = vec![
        (cfg(&["", "", "112"]), r(3, 1) * &b * (one() - qq(2) * mu) * (p(2, 1) - p(1, 2) * mu)),
        (cfg(&["", "2", "11"]), a.clone() * &b * (q3(3, 3, 3) - (q3(1, 5, 2) + qq(3)) * mu)),
        (cfg(&["", "1", "12"]), p(1, 1) * &a * &b * (q3(3, 3, 3) - q3(2, 2, 5) * mu)),
        (cfg(&["", "12", "1"]), p(1, 1) * &a * &b * (q3(5, 2, 2) - q3(3, 3, 3) * mu)),
        (
            cfg(&["", "11", "2"]),
            a.clone() * &b * (q3(1, 2, 5) + qq(3) - (q3(0, 3, 3) + r(3, 1) * qq(3)) * mu),
        ),
        (cfg(&["1", "1", "2"]), p(1, 1) * q3(1, 1, 1) * a.powi(2) * (p(2, 1) - p(1, 2) * mu)),
    ];
    assert_proportional(&s3, &ss.probs, &homogeneous_expect(&s3, &base));
}
