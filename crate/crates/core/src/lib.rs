pub mod automaton;
pub mod cltl;
pub mod config;
pub mod dualtree;
pub mod error;
pub mod guards;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod run;
pub mod synthesis;

pub use error::{Error, Result};
