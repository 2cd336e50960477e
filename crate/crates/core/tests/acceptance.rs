//! The acceptance checklist as a dedicated test target: one test per
//! criterion, each printing a single pass/fail line.  Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use quadric_core::verify::{self, CriterionResult};

fn check(result: CriterionResult) {
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_gauss_cancellation() {
    check(verify::criterion_1());
}

#[test]
fn criterion_02_count_growth() {
    check(verify::criterion_2());
}

#[test]
fn criterion_03_delta_identity() {
    check(verify::criterion_3());
}

#[test]
fn criterion_04_partition_reconstruction() {
    check(verify::criterion_4());
}

#[test]
fn criterion_05_shift_averaging() {
    check(verify::criterion_5());
}

#[test]
fn criterion_06_dual_sum() {
    check(verify::criterion_6());
}

#[test]
fn criterion_07_flow_conjugation() {
    check(verify::criterion_7());
}

#[test]
fn criterion_08_second_moment() {
    check(verify::criterion_8());
}

#[test]
fn criterion_09_lattice_ceiling() {
    check(verify::criterion_9());
}

#[test]
fn criterion_10_orbit_average_trend() {
    check(verify::criterion_10());
}

#[test]
fn criterion_11_arc_cover() {
    check(verify::criterion_11());
}
