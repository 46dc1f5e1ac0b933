//! Argument definitions, report types and command implementations behind the `obspart`
//! binary.

pub mod args;
pub mod report;
pub mod run;
