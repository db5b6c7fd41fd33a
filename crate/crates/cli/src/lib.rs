//! Pieces of the command-line tool that are useful on their own: the
//! synthetic dirty-data generator, plain-text table rendering and TOML
//! workload parsing. The binary wires these to clap.

pub mod gen;
pub mod render;
pub mod workload;
