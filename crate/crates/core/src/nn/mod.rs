//! Minimal deterministic neural-network engine at double precision.

mod adam;
pub mod checkpoint;
mod graph;
pub mod kernels;
mod lstm;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use graph::{BnRunning, Graph, Padding, Var};
pub use tensor::{Param, Tensor};

/// Smallest and largest values the logistic output may take.
pub const SIGMOID_FLOOR: f64 = f64::MIN_POSITIVE;
pub const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function in the overflow-free branch form, clamped to
/// `[SIGMOID_FLOOR, SIGMOID_CEIL]` so the result is strictly inside (0, 1).
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_FLOOR, SIGMOID_CEIL)
}
