//! Host crate for the acceptance suite in `tests/acceptance.rs`.
