pub mod cli;
pub mod data;
pub mod ddgan;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod synth;
