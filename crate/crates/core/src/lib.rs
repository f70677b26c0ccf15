pub mod error;
pub mod fft;
pub mod geometry;
pub mod grid_io;
pub mod morphology;
pub mod solver;
pub mod spec;
pub mod stochastic;
pub mod sweep;
pub mod validate;
