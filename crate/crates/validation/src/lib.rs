//! Acceptance criteria for `polycgo`; the checks live in `tests/acceptance.rs`.
