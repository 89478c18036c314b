//! Decode traces: file format, synthetic generation and replay.

mod format;
mod plant;
mod replay;

pub use format::{
    read_ground_truth, read_trace, write_ground_truth, write_trace, GroundTruth, TokenKind, Trace,
    TraceError, TraceHeader, TraceToken, FLAG_PROMPT_IN_CACHE, FORMAT_VERSION,
    GROUND_TRUTH_MAGIC, HEADER_LEN, TRACE_MAGIC,
};
pub use plant::{gen_planted_trace, random_trace, PlantSpec};
pub use replay::{replay, replay_with, ReplayStep, Replayer, TokenRecord};
