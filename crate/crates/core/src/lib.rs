//! Temporal-logic compliance debriefing for emergency-call transcripts.

pub mod signal;
pub mod speclang;
pub mod oracle;
pub mod monitor;
pub mod pipeline;
pub mod emulation;
pub mod sample;
