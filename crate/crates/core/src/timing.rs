//! Wall-clock measurement that degrades to zero where no clock exists.

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

/// Elapsed seconds since construction. Always `0.0` on `wasm32`, where
/// `std::time::Instant` is unavailable.
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: Instant::now(),
        }
    }

    pub fn elapsed_secs(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
