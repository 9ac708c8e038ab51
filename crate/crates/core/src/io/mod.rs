//! Files in and out: slice dumps, manifests, trajectories, frames, and the
//! drivers behind the command-line tool.

mod dump;
mod render;
mod run;

pub use dump::{
    decode_slice, encode_slice, read_value_function, sha256_hex, slice_csv, write_value_function, Manifest,
    SliceEntry, MANIFEST,
};
pub use render::{render_frame, Image, PlotSpec, Rgb};
pub use run::{
    check_lower_bound, load_or_solve, oracle_starts, read_trajectory_csv, render_frames, run_solve, run_trace,
    run_verify, stationarity_gap, CheckResult, RunConfig, TraceOutcome, TracerOverrides, VerifyReport,
};
