//! Single-letter optimizations: capacity, the rate-distortion function and
//! the bounds built from them.

mod bounds;
mod capacity;
mod rate_distortion;

pub use self::bounds::{f_epsilon, separation_frontier};
pub use self::capacity::{
    ba_capacity, ba_capacity_cost, ba_capacity_with, BaOptions, CapacityResult, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
pub use self::rate_distortion::{
    ba_rate_distortion, distortion_range, DistortionMeasure, RdResult, DISTORTION_SLACK,
};
