//! Benchmark-only crate; see `benches/protocol.rs`. Run with `cargo bench`.
