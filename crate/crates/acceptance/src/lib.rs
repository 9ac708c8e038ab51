//! Acceptance suite for `hjb-planner`; see `tests/acceptance.rs`.
