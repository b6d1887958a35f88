// SPDX-License-Identifier: MIT OR Apache-2.0

//! Criterion benchmarks live in `benches/`.
