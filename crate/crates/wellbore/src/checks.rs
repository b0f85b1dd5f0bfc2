//! Randomized property samplers for the numerical flux and the momentum
//! elimination, shared by the `flux-check` subcommand and the acceptance
//! suite. Deterministic for a given seed.

use crate::dfm::{
    gas_flux, mixture_velocity, momentum_residual, profile_parameter, DfmParams,
};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, Default)]
pub struct FluxCheckReport {
    pub samples: usize,
    /// max |F(s,s) - f(s)| over the consistency grid.
    pub consistency_max: f64,
    pub monotonicity_violations: usize,
    pub worst_monotonicity: f64,
    pub sign_violations: usize,
    pub sc0_violations: usize,
}

impl FluxCheckReport {
    pub fn passed(&self) -> bool {
        self.consistency_max <= 1e-12
            && self.monotonicity_violations == 0
            && self.sign_violations == 0
            && self.sc0_violations == 0
    }
}

struct SampledEdge {
    rho_l: f64,
    rho_g: f64,
    sigma: f64,
    u_m: f64,
    orientation: f64,
}

fn sample_edge(rng: &mut ChaCha8Rng) -> SampledEdge {
    let theta = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
    let eps = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    SampledEdge {
        rho_l: rng.gen_range(500.0..1100.0),
        rho_g: rng.gen_range(0.05..100.0),
        sigma: rng.gen_range(0.01..0.1),
        u_m: rng.gen_range(-8.0..8.0),
        orientation: crate::mesh::edge_orientation(eps, theta),
    }
}

/// Run the randomized monotone-flux property suite.
pub fn run_flux_checks(samples: usize, seed: u64, params: &DfmParams) -> Result<FluxCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FluxCheckReport {
        samples,
        ..Default::default()
    };

    // consistency on a fixed grid for a handful of sampled edge states
    for _ in 0..16 {
        let e = sample_edge(&mut rng);
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            let two_point =
                gas_flux(s, s, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
            let c0 = profile_parameter(s, e.u_m, e.rho_l, e.rho_g, e.sigma, params)?;
            let drift = crate::dfm::drift_term(s, e.u_m, e.rho_l, e.rho_g, e.sigma, params)?;
            let single = s * c0 * e.u_m + drift * e.orientation;
            report.consistency_max = report.consistency_max.max((two_point - single).abs());
        }
    }

    let step = 1e-3;
    for _ in 0..samples {
        let e = sample_edge(&mut rng);
        let u: f64 = rng.gen_range(0.0..1.0);
        let v: f64 = rng.gen_range(0.0..1.0);
        let f = gas_flux(u, v, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;

        // monotonicity by pairwise perturbation
        let up = (u + step).min(1.0);
        let f_up = gas_flux(up, v, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        if f_up - f < -1e-12 {
            report.monotonicity_violations += 1;
            report.worst_monotonicity = report.worst_monotonicity.max(f - f_up);
        }
        let vp = (v + step).min(1.0);
        let f_vp = gas_flux(u, vp, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        if f_vp - f > 1e-12 {
            report.monotonicity_violations += 1;
            report.worst_monotonicity = report.worst_monotonicity.max(f_vp - f);
        }

        // the four sign properties, exact
        let f0v = gas_flux(0.0, v, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        let fu0 = gas_flux(u, 0.0, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        let f1v = gas_flux(1.0, v, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        let fu1 = gas_flux(u, 1.0, e.rho_l, e.rho_g, e.sigma, e.u_m, e.orientation, params)?;
        if f0v > 0.0 || fu0 < 0.0 || e.u_m - f1v > 0.0 || e.u_m - fu1 < 0.0 {
            report.sign_violations += 1;
        }

        // s C0 in [0, 1] and non-decreasing
        let c0_u = profile_parameter(u, e.u_m, e.rho_l, e.rho_g, e.sigma, params)?;
        let c0_up = profile_parameter(up, e.u_m, e.rho_l, e.rho_g, e.sigma, params)?;
        let sc0 = u * c0_u;
        let sc0_up = up * c0_up;
        if !(-1e-12..=1.0 + 1e-12).contains(&sc0) || sc0_up - sc0 < -1e-12 {
            report.sc0_violations += 1;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Default)]
pub struct MomentumCheckReport {
    pub samples: usize,
    /// max |residual| / max(|dPhi|, alpha_b |u|, alpha_a u^2).
    pub worst_relative: f64,
}

impl MomentumCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_relative <= 1e-9
    }
}

/// Verify that the closed-form mixture velocity satisfies the discrete
/// momentum balance on randomized edge states.
pub fn run_momentum_checks(samples: usize, seed: u64) -> Result<MomentumCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x6d6f6d));
    let mut report = MomentumCheckReport {
        samples,
        ..Default::default()
    };
    for k in 0..samples {
        let d_phi = rng.gen_range(-2e6..2e6);
        let rho = rng.gen_range(0.5..1100.0);
        let mu = rng.gen_range(1e-6..1e-2);
        let len = rng.gen_range(0.5..200.0);
        let r = rng.gen_range(0.02..0.25);
        let f_q = if k % 7 == 0 { 0.0 } else { rng.gen_range(1e-4..0.1) };
        let u = mixture_velocity(d_phi, rho, mu, len, r, f_q)?;
        let res = momentum_residual(d_phi, u, rho, mu, len, r, f_q);
        let alpha_a = len * f_q * rho / (4.0 * r);
        let alpha_b = 8.0 * len * mu / (r * r);
        let scale = d_phi
            .abs()
            .max(alpha_b * u.abs())
            .max(alpha_a * u * u)
            .max(1e-30);
        report.worst_relative = report.worst_relative.max(res.abs() / scale);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_pass_a_small_sweep() {
        let report = run_flux_checks(2000, 7, &DfmParams::default()).unwrap();
        assert!(report.passed(), "{report:?}");
        let momentum = run_momentum_checks(2000, 7).unwrap();
        assert!(momentum.passed(), "{momentum:?}");
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run_flux_checks(500, 3, &DfmParams::default()).unwrap();
        let b = run_flux_checks(500, 3, &DfmParams::default()).unwrap();
        assert_eq!(a.consistency_max, b.consistency_max);
        assert_eq!(a.monotonicity_violations, b.monotonicity_violations);
    }
}
