use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::InclusionKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid {what}: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("placement exhausted: {kind} {index} not placed after {attempts} attempts ({placed} inclusions in the cell)")]
    PlacementExhausted {
        kind: InclusionKind,
        index: usize,
        attempts: u64,
        placed: usize,
    },
    #[error("malformed geometry text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphologyError {
    #[error("defect fraction {requested} exceeds inclusion fraction {available}")]
    DefectFractionTooLarge { requested: f64, available: f64 },
    #[error("defect fraction {requested} requested with zero defect count")]
    NoDefects { requested: f64 },
    #[error("defect radius calibration failed: target {target}, closest reached {reached} after {iterations} bisection steps")]
    CalibrationFailed {
        target: f64,
        reached: f64,
        iterations: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid contrast {0}: must be finite and > 0")]
    InvalidContrast(f64),
    #[error("invalid tolerance {0}: must be finite and > 0")]
    InvalidTolerance(f64),
    #[error("macroscopic gradient must be non-zero")]
    ZeroGradient,
    #[error("no convergence after {iterations} iterations (compatibility residual {comp_residual:e}, equilibrium residual {eq_residual:e})")]
    NonConvergence {
        iterations: usize,
        comp_residual: f64,
        eq_residual: f64,
    },
    #[error("direction {direction}: {source}")]
    Direction {
        direction: usize,
        #[source]
        source: Box<SolverError>,
    },
}

#[derive(Debug, Error)]
pub enum GridFormatError {
    #[error("bad magic {0:?}, expected \"RVEG\"")]
    BadMagic([u8; 4]),
    #[error("unsupported grid format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported phase count {0}")]
    UnsupportedPhaseCount(u32),
    #[error("invalid resolution {0}")]
    InvalidResolution(u32),
    #[error("truncated grid file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("voxel {index} has label {label}, outside the phase range")]
    BadLabel { index: usize, label: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("a batch needs at least one run")]
    NoRuns,
    #[error("empty tensor list")]
    Empty,
    #[error("confidence band needs at least 2 runs, got {0}")]
    InsufficientRuns(usize),
    #[error("{failed} of {total} runs failed (limit 20%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("unknown sweep parameter {0:?}")]
    UnknownAxis(String),
    #[error("axis {name:?}: {msg}")]
    BadAxis { name: String, msg: String },
    #[error("setting {name}: {msg}")]
    Setting { name: String, msg: String },
    #[error("sweep has {points} points, above the cap of {cap}")]
    TooManyPoints { points: usize, cap: usize },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failure of one realization in the generate, voxelize, carve, homogenize pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
