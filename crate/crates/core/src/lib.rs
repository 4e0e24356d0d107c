pub mod action;
pub mod billiard;
pub mod continuation;
pub mod extract;
pub mod geometry;
pub mod linalg;
pub mod penalty;
pub mod solve;
