//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{quantity} = {value} outside valid range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("degenerate densities: rho_l = {rho_l} must exceed rho_g = {rho_g}")]
    DegenerateDensities { rho_l: f64, rho_g: f64 },

    #[error(
        "monotone flux condition 1.53*a1 <= a2*Ku*C0(a2) violated: \
         1.53*{a1} = {lhs} > {rhs} (a2 = {a2}, Ku = {ku}, C0(a2) = {c0_a2})"
    )]
    FluxMonotonicity {
        a1: f64,
        a2: f64,
        ku: f64,
        c0_a2: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("frictionless momentum equation has no finite mixture velocity (f_q = 0 and mu = 0)")]
    FrictionlessMomentum,

    #[error("well geometry: {0}")]
    Geometry(String),

    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("numerical failure at node {node}: {what}")]
    Numerical { node: usize, what: String },

    #[error("linear solve failed: {0}")]
    Linear(String),

    #[error("time step underflow: dt = {dt} s below floor {floor} s at t = {t} s")]
    TimeStepUnderflow { dt: f64, floor: f64, t: f64 },

    #[error("nonlinear solver failed: {0}")]
    Solver(String),

    #[error("model assumption violated: {0}")]
    ModelAssumption(String),

    #[error("no root of {what} in [{lo}, {hi}]")]
    NoRoot { what: &'static str, lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
