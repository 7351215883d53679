//! Worked examples with closed-form answers: one column of the transfer
//! matrix, one column of each generator, and stationary distributions of
//! small sectors.

mod common;

use common::*;
use zrp_core::markov::transfer_matrix;
use zrp_core::{Field, Rational};

#[test]
fn transfer_column_two_sites() {
    check_transfer_column(&r(1, 2), &r(1, 4), &r(1, 5), &r(1, 3));
    check_transfer_column(&r(3, 4), &r(2, 7), &r(1, 9), &r(2, 5));
}

#[test]
fn generator_columns_two_sites() {
    check_generator_columns(&r(1, 4), &r(1, 3));
}

#[test]
fn stationary_two_sites_inhomogeneous() {
    check_stationary_two_sites(&r(1, 2), &[r(1, 4), r(1, 5)], &r(1, 3));
}

#[test]
fn stationary_three_sites_inhomogeneous() {
    check_stationary_three_sites(&r(1, 2), &[r(1, 4), r(1, 5), r(1, 7)], &r(1, 3));
}

#[test]
fn stationary_three_sites_forward_shift_is_not_stationary() {
    // The opposite pairing, mu_j -> mu_{j+i}, does not give the stationary
    // vector once the mu_j are distinct.
    let s = sector(3, &[1, 1]);
    let q = r(1, 3);
    let mus = vec![r(1, 4), r(1, 5), r(1, 7)];
    let t = transfer_matrix(&s, &r(1, 2), &mus, &q).unwrap();
    let terms = cyclic_terms(&ring_three_base(), &mus, &q, 1);
    let mut v = vec![Rational::zero(); s.dim()];
    for (c, x) in terms {
        v[s.index_of(&c).unwrap()] = x;
    }
    assert_ne!(t.matrix.mul_vec(&v), v);
}

#[test]
fn stationary_homogeneous_two_and_three_sites() {
    check_stationary_homogeneous(&r(1, 4), &r(1, 3));
    check_stationary_homogeneous(&r(2, 7), &r(3, 5));
}
