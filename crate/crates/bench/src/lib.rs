//! Shared helpers for the benchmark suite live in the bench targets
//! themselves; this crate exists to anchor them in the workspace.
