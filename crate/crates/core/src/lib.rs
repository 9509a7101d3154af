pub mod candidates;
pub mod datasets;
pub mod evalharness;
pub mod oracles;
pub mod ranking;
pub mod testlang;
