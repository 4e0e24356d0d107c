//! Support library for the `billiards` binary: artifact writers, the
//! JSON-schema subset checker, and planar SVG rendering. Split from the
//! binary so integration tests can drive the same validation code.

pub mod artifacts;
pub mod schema;
pub mod svg;
