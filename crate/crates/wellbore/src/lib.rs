//! Transient simulator for non-isothermal, two-phase, compositional flow in
//! multi-branch geothermal wells: drift-flux hydrodynamics with a monotone
//! two-point flux, natural-variable thermodynamics with phase switching,
//! fully implicit staggered finite volumes, and active-set well monitoring.
//!
//! A cell-centered Buckley-Leverett solver and a single-implicit-unknown well
//! model provide independent cross-validation paths.

pub mod ad;
pub mod assembly;
pub mod bl;
pub mod checks;
pub mod dfm;
pub mod error;
pub mod feed;
pub mod fluid;
pub mod linear;
pub mod mesh;
pub mod output;
pub mod scenario;
pub mod siu;
pub mod solver;
