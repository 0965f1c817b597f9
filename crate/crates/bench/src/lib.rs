//! Shared fixtures for the criterion benchmarks.

use hyperbench::synthetic::low_rank_scene;
use hyperbench::HsiCube;

/// A deterministic low-rank scene of the given size.
pub fn scene(side: usize, bands: usize) -> HsiCube {
    low_rank_scene(side, side, bands, 5, 42).expect("valid scene shape")
}
