pub mod bounds;
pub mod cli;
pub mod decision;
pub mod error;
pub mod io;
pub mod num;
pub mod oracle;
pub mod sim;
pub mod strata;
pub mod study;
pub mod tables;
