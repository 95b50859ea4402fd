pub mod cli;
pub mod condlinalg;
pub mod corpus;
pub mod ergodic;
pub mod error;
pub mod finsys;
pub mod hilbert;
pub mod linalg;
pub mod relprod;
pub mod skew;
pub mod structure;
