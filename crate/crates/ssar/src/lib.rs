//! File formats, parallel drivers and report types around `ssar_core`.

pub mod caseformat;
pub mod parallel;
pub mod report;
pub mod scenarios;
pub mod study;
pub mod svg;
