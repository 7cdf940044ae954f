//! Benchmarks live in `benches/`; run `cargo bench -p vmet-bench`.
