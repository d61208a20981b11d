use std::path::PathBuf;

use crate::lattice::Site;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("law `{law}` is not symmetric; only real characteristic functions are supported")]
    NotSymmetric { law: String },

    #[error("law `{law}` is not strongly aperiodic (margin {margin:.3e}); the spectral kernel integrand has poles off the origin")]
    NotAperiodic { law: String, margin: f64 },

    #[error("law `{law}` is not a product of two identical symmetric one-dimensional laws with unit variance: {reason}")]
    NotProductLaw { law: String, reason: String },

    #[error("transition grid box {side}x{side} exceeds the {limit}x{limit} limit (would need about {bytes} bytes)")]
    BoxTooLarge { side: usize, limit: usize, bytes: u128 },

    #[error("kernel cache has only {found} points in the ring {r_min} <= |x| <= {r_max}; at least {needed} required")]
    InsufficientRing { found: usize, needed: usize, r_min: f64, r_max: f64 },

    #[error("missing sub-counter for offsets {missing:?}")]
    MissingCounter { missing: Vec<Site> },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("mollifier width {tau} too small for n = {n}: tau*sqrt(n) = {resolution:.3} lattice units, need >= {required}")]
    MollifierUnresolved { tau: f64, n: usize, resolution: f64, required: f64 },

    #[error("time grid too coarse for tau = {tau}: tau/sqrt(step) = {ratio:.3}, need >= {required}")]
    GridTooCoarse { tau: f64, ratio: f64, required: f64 },

    #[error("memory budget exceeded: {what} needs {needed} samples, limit {limit}")]
    MemoryBudget { what: String, needed: u128, limit: u128 },

    #[error("experiment `{id}`: n = {n} has {found} replicas, needs {needed}")]
    NotEnoughReplicas { id: String, n: usize, found: usize, needed: usize },

    #[error("invalid configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("bad kernel cache file {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
