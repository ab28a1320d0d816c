//! Acceptance checks for the workspace live in `tests/acceptance.rs`; run
//! them with `cargo test -p usagegraph-verify --test acceptance`.
//!
//! This package sorts after every other workspace member, so a failing
//! criterion is reported without hiding the other suites' results.
