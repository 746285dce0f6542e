//! End-to-end pipelines, scenarios, manifests and the command line.

mod cli;
mod codes;
mod manifest;
mod patch;
mod scenarios;
mod separated;
mod stack;
mod sweeps;

pub use self::codes::{SwPairCode, TypicalSetCode, VqCode};
pub use self::scenarios::{PointToPoint, SlepianWolfPair};
pub use self::separated::{
    run_separated, EdgePlan, EdgeReport, SeparatedReport, SeparatedScheme, SeparatedTrial, SeparationPlan,
};
pub use self::sweeps::{run_awgn_sweep, run_emulation_probe, AwgnCell, ProbeRow, AWGN_MAX_ITER, AWGN_TOL};
pub use self::patch::{
    plan_lossless_patch, run_lossless_patch, LosslessPatchPlan, PairPlan, PatchParams, PatchReport, PatchScheme,
    PatchTrial,
};
pub use self::cli::{cli_main, cli_run, execute, exit_code, write_outcome, Outcome, OUTPUT_ENV};
pub use self::manifest::{pair_network, ChannelRecord, Manifest, MeasureRecord, PatchBase, Scenario, SeparateNetwork};
pub use self::stack::{stack_check, StackCheckRow};
