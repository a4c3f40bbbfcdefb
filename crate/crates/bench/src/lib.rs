//! Benchmarks for the equilibrium solvers live in `benches/`.
