//! The numbered acceptance criteria. Each test writes one PASS/FAIL line to
//! stderr directly, so the lines show up even when test output is captured.

use std::io::Write;

use sigspace::suite::run_criterion;

const SEED: u64 = 7;

fn criterion(id: u8) {
    let outcome = run_criterion(id, SEED).unwrap();
    let _ = writeln!(std::io::stderr(), "{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn c01_closed_form_density_n1() {
    criterion(1);
}

#[test]
fn c02_closed_form_density_n2() {
    criterion(2);
}

#[test]
fn c03_q_signature_law() {
    criterion(3);
}

#[test]
fn c04_invariance_suite() {
    criterion(4);
}

#[test]
fn c05_alpha_contraction() {
    criterion(5);
}

#[test]
fn c06_deformed_signature_jump() {
    criterion(6);
}

#[test]
fn c07_monte_carlo_invariance() {
    criterion(7);
}

#[test]
fn c08_unimodularity() {
    criterion(8);
}

#[test]
fn c09_projective_suite() {
    criterion(9);
}

#[test]
fn c10_measure_field_suite() {
    criterion(10);
}

#[test]
fn c11_constructive_deformation() {
    criterion(11);
}
