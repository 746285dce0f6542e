//! Networks of independent point-to-point links and the engine that runs
//! codes on them: stacking, unraveling and distortion accounting.

mod adapters;
mod distortion;
mod engine;
mod network;

pub use self::adapters::{
    from_bits, pipe_budgets, stack, to_bits, unravel, Bits, MessageCode, PipeCode, Replicated,
    UncodedCode, Unraveled,
};
pub use self::distortion::{measure_distortion, DistortionEntry, DistortionMatrix};
pub(crate) use self::engine::{links, Link};
pub use self::engine::{
    run_network, run_network_with_sources, write_trace_csv, NetworkCode, OutputView, PathRemap,
    PipeSchedule, RunConfig, RunOutput, TraceRow,
};
pub use self::network::{
    bit_pipe_equivalent, point_to_point, two_sources_one_sink, ChannelModel, Demand, Edge, Node,
    NetworkSpec, Target,
};
