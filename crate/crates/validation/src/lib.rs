//! Acceptance suite for `uavsec-core`; everything lives in `tests/acceptance.rs`.
