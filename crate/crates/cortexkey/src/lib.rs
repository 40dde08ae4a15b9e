//! Command-line pipeline and prediction service for EEG keystroke decoding.

pub mod config;
pub mod pipeline;
pub mod protocol;
pub mod server;
pub mod stub;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const NUMERIC: u8 = 3;
}

/// Map a failure to an exit code: numeric failures anywhere in the chain
/// give 3, everything else is treated as bad input.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<cortexkey_core::Error>())
        .any(|e| !e.is_data_error());
    if numeric {
        exit::NUMERIC
    } else {
        exit::DATA
    }
}
