//! Configuration, presets, sweeps and writers behind the `mechsqueeze` binary.

pub mod config;
pub mod mcval;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{emit, parse_config, parse_with_overrides, ConfigError, RunConfig};
pub use presets::{preset, PresetName};
pub use run::{run_sweep, ResultRow};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const VALIDATION: i32 = 4;
}
