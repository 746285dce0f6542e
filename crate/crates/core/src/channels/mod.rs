//! Channel models: discrete memoryless channels, Gaussian links, the
//! quantizer ladder that turns a Gaussian link into a DMC, and the seeded
//! random streams every randomized routine draws from.

mod awgn;
mod dmc;
mod rng;

pub use self::awgn::{
    awgn_capacity, awgn_transmit, check_power, discretize_awgn, level_costs, max_position_power,
    quantize, AwgnSpec, Quantizer,
};
pub use self::dmc::{dmc_transmit, Dmc};
pub use self::rng::{Domain, RngStream, StreamPath};
