//! One module per subcommand.

pub mod fetch;
pub mod learn;
pub mod quality;
pub mod rf;
pub mod simstudy;
