pub mod bench;
pub mod builtin;
pub mod config;
pub mod replay;
pub mod run;
