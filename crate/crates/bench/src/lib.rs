//! Input builders shared by the benchmarks.

use tradevar_core::synthetic::{generate, GeneratedData, GeneratorSpec};

/// Generator spec with moderate targets for `securities` × `buckets` data.
pub fn spec(securities: usize, buckets: usize) -> GeneratorSpec {
    GeneratorSpec::new(17, securities, buckets, 0.4, 0.3, Some(0.25))
}

/// Generated data for benchmarking; panics only on a broken fixed spec.
pub fn dataset(securities: usize, buckets: usize) -> GeneratedData {
    generate(&spec(securities, buckets)).expect("fixed spec generates")
}
