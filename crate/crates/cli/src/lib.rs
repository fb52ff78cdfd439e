//! File interchange, configuration layering and report output for the
//! `hifid` command line tool.

pub mod app;
pub mod config;
pub mod csvio;
pub mod report;
