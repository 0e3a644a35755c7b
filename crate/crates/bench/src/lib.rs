//! Criterion benchmarks for the simulation, fitting and planning hot paths.
//! See `benches/hot_paths.rs`; this library is intentionally empty.
