pub mod decoder;
pub mod enumerate;
pub mod error;
pub mod harness;
pub mod kappa;
pub mod mutang;
pub mod oracles;
pub mod peptide;
pub mod pogs;
pub mod rng;
pub mod stats;
pub mod surrogate;
pub mod walk;
