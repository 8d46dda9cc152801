//! Configuration, orchestration, archiving and reporting for `cnumlab`.
//!
//! A run goes config file, then flag overrides, then validation, then
//! [`run::run`], then one appended [`archive::ArchiveEntry`], then the files
//! written by [`report::write_all`].

pub mod archive;
pub mod config;
pub mod report;
pub mod run;
