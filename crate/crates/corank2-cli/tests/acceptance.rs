//! Acceptance battery: one test per exit criterion, each a single
//! pass/fail line under `cargo test --test acceptance`.
//!
//! The first thirteen criteria are the named items of
//! `corank2::checklist::run_all`, evaluated once and shared across the
//! tests; every tolerance is pinned inside the library battery. The last
//! criterion additionally runs the installed binary twice and compares
//! raw bytes.

use std::process::Command;
use std::sync::OnceLock;

use corank2::checklist::{run_all, Checklist};
use corank2::sample::DEFAULT_SEED;

fn battery() -> &'static Checklist {
    static BATTERY: OnceLock<Checklist> = OnceLock::new();
    BATTERY.get_or_init(|| run_all(DEFAULT_SEED))
}

fn assert_item(name: &str) {
    let item = battery()
        .items
        .iter()
        .find(|i| i.name == name)
        .unwrap_or_else(|| panic!("battery has no item named {name:?}"));
    assert!(
        item.pass,
        "{name} failed (residual {:?}): {}",
        item.residual, item.detail
    );
}

#[test]
fn a01_elliptic_band() {
    assert_item("elliptic-band");
}

#[test]
fn a02_pairing_closed_form() {
    assert_item("pairing-closed-form");
}

#[test]
fn a03_transverse_pairs() {
    assert_item("transverse-pairs");
}

#[test]
fn a04_root_closed_form() {
    assert_item("root-closed-form");
}

#[test]
fn a05_factorization() {
    assert_item("factorization");
}

#[test]
fn a06_flat_vanishing() {
    assert_item("flat-vanishing");
}

#[test]
fn a07_witness_first_component() {
    assert_item("witness-first-component");
}

#[test]
fn a08_witness_second_component() {
    assert_item("witness-second-component");
}

#[test]
fn a09_structure_conditions() {
    assert_item("structure-conditions");
}

#[test]
fn a10_conjugation_invariance() {
    assert_item("conjugation-invariance");
}

#[test]
fn a11_globalization() {
    assert_item("globalization");
}

#[test]
fn a12_perturbed_family() {
    assert_item("perturbed-family");
}

#[test]
fn a13_numeric_oracle() {
    assert_item("numeric-oracle");
}

#[test]
fn a14_deterministic_reports() {
    assert_item("determinism");

    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_corank2"))
            .args(["verify", "--format", "json"])
            .output()
            .expect("run verify");
        assert!(
            out.status.success(),
            "verify exited with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let first = run();
    let second = run();
    assert!(!first.is_empty());
    assert_eq!(first, second, "verify --format json must be byte-identical across runs");
}
