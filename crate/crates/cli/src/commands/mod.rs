pub mod bma;
pub mod clump;
pub mod mediate;
pub mod mr;
pub mod pqtl;
pub mod simulate;
pub mod twmr;
