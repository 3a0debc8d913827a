//! Benchmark-only crate; see `benches/simulation.rs` for the criterion
//! targets covering the hot paths of the `lambda-shelve` library.
