//! Drift-flux slip closures, the monotone two-point gas flux, wall friction
//! and the closed-form mixture-velocity solve.
//!
//! All kernels are generic over [`Scalar`] so the same code yields values on
//! `f64` and exact partial derivatives on [`Dual`].

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::fluid::G_ACCEL;
use serde::{Deserialize, Serialize};

/// Slip-law constants of the Shi et al. closure.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DfmParams {
    pub a: f64,
    pub b: f64,
    pub a1: f64,
    pub a2: f64,
    pub ku: f64,
    pub f_nu: f64,
    pub sigma_gl_n_per_m: f64,
}

impl Default for DfmParams {
    fn default() -> Self {
        Self {
            a: 1.2,
            b: 0.3,
            a1: 0.2,
            a2: 0.4,
            ku: 1.5,
            f_nu: 1.0,
            sigma_gl_n_per_m: 71.97e-3,
        }
    }
}

impl DfmParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.b < (2.0 - self.a) / self.a) {
            errs.push(format!(
                "dfm: B = {} must be < (2-A)/A = {}",
                self.b,
                (2.0 - self.a) / self.a
            ));
        }
        if !(0.0 < self.a1 && self.a1 < self.a2 && self.a2 < 1.0) {
            errs.push(format!("dfm: need 0 < a1 < a2 < 1, got a1 = {}, a2 = {}", self.a1, self.a2));
        }
        if !(0.0..=3.5).contains(&self.ku) {
            errs.push(format!("dfm: Ku = {} outside [0, 3.5]", self.ku));
        }
        if !(self.sigma_gl_n_per_m > 0.0) {
            errs.push(format!("dfm: sigma_gl = {} must be positive", self.sigma_gl_n_per_m));
        }
        errs
    }
}

/// Darcy-Forchheimer wall friction coefficient.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrictionParams {
    pub f_q: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self { f_q: 0.06 }
    }
}

/// Characteristic bubble-rise velocity U_c = (sigma g (rho_l - rho_g) / rho_l^2)^(1/4).
pub fn characteristic_velocity<S: Scalar>(rho_l: S, rho_g: S, sigma: S) -> Result<S> {
    if !(rho_l.value() > rho_g.value() && rho_g.value() > 0.0) {
        return Err(Error::DegenerateDensities {
            rho_l: rho_l.value(),
            rho_g: rho_g.value(),
        });
    }
    Ok((sigma * S::c(G_ACCEL) * (rho_l - rho_g) / (rho_l * rho_l)).powf(0.25))
}

/// Profile parameter C0(s, u_m, rho_l, rho_g) of the slip law.
pub fn profile_parameter<S: Scalar>(
    s_g: S,
    u_m: S,
    rho_l: S,
    rho_g: S,
    sigma: S,
    p: &DfmParams,
) -> Result<S> {
    let u_c = characteristic_velocity(rho_l, rho_g, sigma)?;
    let v_sgf = S::c(p.ku) * (rho_l / rho_g).sqrt() * u_c;
    let beta = s_g.max_s(S::c(p.f_nu) * s_g * u_m.abs() / v_sgf);
    let gamma = ((beta - S::c(p.b)) / S::c(1.0 - p.b)).clamp01();
    Ok(S::c(p.a) / (S::c(1.0) + S::c(p.a - 1.0) * gamma * gamma))
}

/// Value and partials of C0 w.r.t. (s_g, u_m, rho_l, rho_g).
pub fn profile_parameter_with_partials(
    s_g: f64,
    u_m: f64,
    rho_l: f64,
    rho_g: f64,
    sigma: f64,
    p: &DfmParams,
) -> Result<(f64, [f64; 4])> {
    let out = profile_parameter(
        Dual::<4>::var(s_g, 0),
        Dual::<4>::var(u_m, 1),
        Dual::<4>::var(rho_l, 2),
        Dual::<4>::var(rho_g, 3),
        Dual::<4>::constant(sigma),
        p,
    )?;
    Ok((out.v, out.d))
}

/// Holdup factor G(s) = (1 - s C0) / (s C0 sqrt(rho_g/rho_l) + 1 - s C0).
fn holdup_factor<S: Scalar>(s_c0: S, rho_l: S, rho_g: S) -> S {
    let one = S::c(1.0);
    (one - s_c0) / (s_c0 * (rho_g / rho_l).sqrt() + one - s_c0)
}

/// Three-piece bubble-rise law K~(s); the middle piece interpolates linearly,
/// which preserves flux monotonicity provided 1.53 a1 <= a2 Ku C0(a2).
fn k_tilde<S: Scalar>(
    s_g: S,
    u_m: S,
    rho_l: S,
    rho_g: S,
    sigma: S,
    p: &DfmParams,
) -> Result<S> {
    let s = s_g.value();
    if s <= p.a1 {
        Ok(S::c(1.53) * s_g)
    } else if s >= p.a2 {
        let c0 = profile_parameter(s_g, u_m, rho_l, rho_g, sigma, p)?;
        Ok(S::c(p.ku) * c0 * s_g)
    } else {
        let c0_a2 = profile_parameter(S::c(p.a2), u_m, rho_l, rho_g, sigma, p)?;
        let lo = S::c(1.53 * p.a1) * (s_g - S::c(p.a2)) / S::c(p.a1 - p.a2);
        let hi = S::c(p.ku * p.a2) * c0_a2 * (s_g - S::c(p.a1)) / S::c(p.a2 - p.a1);
        Ok(lo + hi)
    }
}

/// Drift term s U_d = G(s) K~(s) U_c.
pub fn drift_term<S: Scalar>(
    s_g: S,
    u_m: S,
    rho_l: S,
    rho_g: S,
    sigma: S,
    p: &DfmParams,
) -> Result<S> {
    let u_c = characteristic_velocity(rho_l, rho_g, sigma)?;
    let c0 = profile_parameter(s_g, u_m, rho_l, rho_g, sigma, p)?;
    let g = holdup_factor(s_g * c0, rho_l, rho_g);
    Ok(g * k_tilde(s_g, u_m, rho_l, rho_g, sigma, p)? * u_c)
}

/// Value and partials of s U_d w.r.t. (s_g, u_m, rho_l, rho_g, sigma).
pub fn drift_term_with_partials(
    s_g: f64,
    u_m: f64,
    rho_l: f64,
    rho_g: f64,
    sigma: f64,
    p: &DfmParams,
) -> Result<(f64, [f64; 5])> {
    let out = drift_term(
        Dual::<5>::var(s_g, 0),
        Dual::<5>::var(u_m, 1),
        Dual::<5>::var(rho_l, 2),
        Dual::<5>::var(rho_g, 3),
        Dual::<5>::var(sigma, 4),
        p,
    )?;
    Ok((out.v, out.d))
}

/// Continuous gas flux f(s) = s U_d o + s C0 u_m at edge data `(u_m, o)`.
pub fn continuous_gas_flux<S: Scalar>(
    s_g: S,
    u_m: S,
    rho_l: S,
    rho_g: S,
    sigma: S,
    orientation: f64,
    p: &DfmParams,
) -> Result<S> {
    let c0 = profile_parameter(s_g, u_m, rho_l, rho_g, sigma, p)?;
    let drift = drift_term(s_g, u_m, rho_l, rho_g, sigma, p)?;
    Ok(drift * S::c(orientation) + s_g * c0 * u_m)
}

/// Monotone two-point gas flux. `u` is the gas saturation at the child node
/// (upstream for positive flux), `v` at the parent node:
///
/// F(u, v) = u C0(u) (u_m)+ + v C0(v) (u_m)- + G(v) K~(u) (U_c o)+ + G(u) K~(v) (U_c o)-.
///
/// The monotonicity condition 1.53 a1 <= a2 Ku C0(a2) is verified at each
/// call; a violation is a hard error.
pub fn gas_flux<S: Scalar>(
    u: S,
    v: S,
    rho_l: S,
    rho_g: S,
    sigma: S,
    u_m: S,
    orientation: f64,
    p: &DfmParams,
) -> Result<S> {
    let c0_a2 = profile_parameter(S::c(p.a2), u_m, rho_l, rho_g, sigma, p)?;
    let lhs = 1.53 * p.a1;
    let rhs = p.a2 * p.ku * c0_a2.value();
    if lhs > rhs {
        return Err(Error::FluxMonotonicity {
            a1: p.a1,
            a2: p.a2,
            ku: p.ku,
            c0_a2: c0_a2.value(),
            lhs,
            rhs,
        });
    }
    let u_c = characteristic_velocity(rho_l, rho_g, sigma)?;
    let drift_vel = u_c * S::c(orientation);

    let c0_u = profile_parameter(u, u_m, rho_l, rho_g, sigma, p)?;
    let c0_v = profile_parameter(v, u_m, rho_l, rho_g, sigma, p)?;
    let g_u = holdup_factor(u * c0_u, rho_l, rho_g);
    let g_v = holdup_factor(v * c0_v, rho_l, rho_g);
    let k_u = k_tilde(u, u_m, rho_l, rho_g, sigma, p)?;
    let k_v = k_tilde(v, u_m, rho_l, rho_g, sigma, p)?;

    Ok(u * c0_u * u_m.pos()
        + v * c0_v * u_m.neg_p()
        + g_v * k_u * drift_vel.pos()
        + g_u * k_v * drift_vel.neg_p())
}

/// Value of the gas flux plus partials w.r.t. its six entries
/// (s_child, s_parent, rho_l, rho_g, sigma, u_m).
pub fn gas_flux_with_partials(
    u: f64,
    v: f64,
    rho_l: f64,
    rho_g: f64,
    sigma: f64,
    u_m: f64,
    orientation: f64,
    p: &DfmParams,
) -> Result<(f64, [f64; 6])> {
    let out = gas_flux(
        Dual::<6>::var(u, 0),
        Dual::<6>::var(v, 1),
        Dual::<6>::var(rho_l, 2),
        Dual::<6>::var(rho_g, 3),
        Dual::<6>::var(sigma, 4),
        Dual::<6>::var(u_m, 5),
        orientation,
        p,
    )?;
    Ok((out.v, out.d))
}

/// Darcy-Forchheimer wall friction T^f = -(8 mu / r^2 + f_q rho |u| / (4 r)) u, Pa/m.
pub fn wall_friction<S: Scalar>(u_m: S, rho_m: S, mu_m: S, radius: f64, f_q: f64) -> S {
    -(S::c(8.0 / (radius * radius)) * mu_m
        + S::c(f_q / (4.0 * radius)) * rho_m * u_m.abs())
        * u_m
}

/// Solve the static momentum balance for the mixture velocity:
/// dPhi + (alpha_b + alpha_a |u|) u = 0, written in the cancellation-free form
/// u = -2 dPhi / (alpha_b + sqrt(alpha_b^2 + 4 |dPhi| alpha_a)).
pub fn mixture_velocity<S: Scalar>(
    d_phi: S,
    rho_m: S,
    mu_m: S,
    length: f64,
    radius: f64,
    f_q: f64,
) -> Result<S> {
    let alpha_a = S::c(length * f_q / (4.0 * radius)) * rho_m;
    let alpha_b = S::c(8.0 * length / (radius * radius)) * mu_m;
    if alpha_a.value() == 0.0 && alpha_b.value() == 0.0 {
        return Err(Error::FrictionlessMomentum);
    }
    let alpha_c = (alpha_b * alpha_b + S::c(4.0) * d_phi.abs() * alpha_a).sqrt();
    Ok(-(S::c(2.0) * d_phi) / (alpha_b + alpha_c))
}

/// Value of the mixture velocity plus partials w.r.t. (dPhi, rho_m, mu_m).
pub fn mixture_velocity_with_partials(
    d_phi: f64,
    rho_m: f64,
    mu_m: f64,
    length: f64,
    radius: f64,
    f_q: f64,
) -> Result<(f64, [f64; 3])> {
    let out = mixture_velocity(
        Dual::<3>::var(d_phi, 0),
        Dual::<3>::var(rho_m, 1),
        Dual::<3>::var(mu_m, 2),
        length,
        radius,
        f_q,
    )?;
    Ok((out.v, out.d))
}

/// Residual of the discrete momentum equation for a given mixture velocity,
/// used as the elimination-consistency oracle.
pub fn momentum_residual(d_phi: f64, u_m: f64, rho_m: f64, mu_m: f64, length: f64, radius: f64, f_q: f64) -> f64 {
    d_phi - wall_friction(u_m, rho_m, mu_m, radius, f_q) * length
}

#[cfg(test)]
mod tests {
    use super::*;

    const BL_RHO_L: f64 = 1000.0;
    const BL_RHO_G: f64 = 4.0;
    const SIGMA: f64 = 71.97e-3;

    fn params() -> DfmParams {
        DfmParams::default()
    }

    #[test]
    fn characteristic_velocity_hand_value() {
        let u_c = characteristic_velocity(BL_RHO_L, BL_RHO_G, SIGMA).unwrap();
        let expect = (SIGMA * G_ACCEL * (BL_RHO_L - BL_RHO_G) / (BL_RHO_L * BL_RHO_L)).powf(0.25);
        assert_eq!(u_c, expect);
        assert!((u_c - 0.16284).abs() < 1e-4, "U_c = {u_c}");
        // limits
        assert!(characteristic_velocity(BL_RHO_L, BL_RHO_G, 1e-30).unwrap() < 1e-7);
        assert!(characteristic_velocity(1000.0, 999.9999, SIGMA).unwrap() < 0.01);
        assert!(characteristic_velocity(4.0, 1000.0, SIGMA).is_err());
    }

    #[test]
    fn profile_parameter_hand_values() {
        let p = params();
        // gamma = (0.5 - 0.3)/0.7 = 2/7
        let c0 = profile_parameter(0.5, 0.0, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert!((c0 - 1.18072).abs() < 1e-4, "C0 = {c0}");
        // below B with small velocity: projection floor, C0 = A
        let c0 = profile_parameter(0.25, 1e-3, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert_eq!(c0, 1.2);
        // s = 1 forces C0 = 1
        let c0 = profile_parameter(1.0, 3.7, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert_eq!(c0, 1.0);
    }

    #[test]
    fn drift_term_hand_values() {
        let p = params();
        // s = 0.1 <= a1: K~ = 0.153, G ~ 0.9915
        let d = drift_term(0.1, 0.0, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert!((d - 0.02470).abs() < 2e-5, "sUd = {d}");
        // s = 0.5 >= a2 with u_m = 0.5
        let d = drift_term(0.5, 0.5, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert!((d - 0.13215).abs() < 2e-5, "sUd = {d}");
        // s = 1: G vanishes
        let d = drift_term(1.0, 0.5, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn flux_consistency_on_the_diagonal() {
        let p = params();
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            for (u_m, o) in [(0.5, 1.0), (-0.8, 1.0), (0.3, -1.0), (0.0, 1.0)] {
                let f2 =
                    gas_flux(s, s, BL_RHO_L, BL_RHO_G, SIGMA, u_m, o, &p).unwrap();
                let f1 = continuous_gas_flux(s, u_m, BL_RHO_L, BL_RHO_G, SIGMA, o, &p)
                    .unwrap()
                    .value();
                let _ = f1;
                let direct = {
                    let c0 = profile_parameter(s, u_m, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
                    let d = drift_term(s, u_m, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
                    s * c0 * u_m + d * o
                };
                assert!(
                    (f2 - direct).abs() <= 1e-12,
                    "consistency violated at s={s}, um={u_m}, o={o}: {f2} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn flux_hand_value_at_half() {
        // u = v = 0.5, u_m = 0.5, o = 1: s C0 u + s U_d = 0.29518 + 0.13215
        let f = gas_flux(0.5, 0.5, BL_RHO_L, BL_RHO_G, SIGMA, 0.5, 1.0, &params()).unwrap();
        assert!((f - 0.42733).abs() < 5e-5, "F = {f}");
    }

    #[test]
    fn flux_sign_properties() {
        let p = params();
        let mut s = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            s = s.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as f64 / u64::MAX as f64
        };
        for _ in 0..2000 {
            let v = next();
            let u = next();
            let u_m = 8.0 * (next() - 0.5);
            let o = 2.0 * (next() - 0.5);
            let f0v = gas_flux(0.0, v, BL_RHO_L, BL_RHO_G, SIGMA, u_m, o, &p).unwrap();
            assert!(f0v <= 0.0);
            let fu0 = gas_flux(u, 0.0, BL_RHO_L, BL_RHO_G, SIGMA, u_m, o, &p).unwrap();
            assert!(fu0 >= 0.0);
            let f1v = gas_flux(1.0, v, BL_RHO_L, BL_RHO_G, SIGMA, u_m, o, &p).unwrap();
            assert!(u_m - f1v <= 0.0);
            let fu1 = gas_flux(u, 1.0, BL_RHO_L, BL_RHO_G, SIGMA, u_m, o, &p).unwrap();
            assert!(u_m - fu1 >= 0.0);
        }
    }

    #[test]
    fn flux_partials_match_finite_differences() {
        let p = params();
        let cases = [
            (0.35, 0.62, 950.0, 6.0, 0.06, 0.7, 1.0),
            (0.75, 0.1, 1000.0, 4.0, SIGMA, -1.2, 0.5),
            (0.15, 0.9, 800.0, 20.0, 0.04, 2.0, -1.0),
        ];
        for (u, v, rl, rg, sg, um, o) in cases {
            let (_, grad) = gas_flux_with_partials(u, v, rl, rg, sg, um, o, &p).unwrap();
            let xs = [u, v, rl, rg, sg, um];
            for k in 0..6 {
                let h = 1e-6 * xs[k].abs().max(1e-3);
                let mut hi = xs;
                hi[k] += h;
                let mut lo = xs;
                lo[k] -= h;
                let f_hi =
                    gas_flux(hi[0], hi[1], hi[2], hi[3], hi[4], hi[5], o, &p).unwrap();
                let f_lo =
                    gas_flux(lo[0], lo[1], lo[2], lo[3], lo[4], lo[5], o, &p).unwrap();
                let fd = (f_hi - f_lo) / (2.0 * h);
                let scale = grad[k].abs().max(fd.abs()).max(1e-9);
                assert!(
                    (grad[k] - fd).abs() <= 1e-5 * scale,
                    "entry {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn monotonicity_condition_violation_is_reported() {
        let mut p = params();
        p.ku = 0.3; // 1.53*0.2 = 0.306 > 0.4*0.3*C0(a2) <= 0.144
        let err = gas_flux(0.5, 0.5, BL_RHO_L, BL_RHO_G, SIGMA, 0.5, 1.0, &p).unwrap_err();
        assert!(err.to_string().contains("monotone flux condition"));
    }

    #[test]
    fn wall_friction_values_and_oddness() {
        assert_eq!(wall_friction(0.0, 1000.0, 1e-3, 0.05, 0.06), 0.0);
        let t = wall_friction(1.0, 1000.0, 0.0, 0.05, 0.06);
        assert!((t + 300.0).abs() < 1e-10, "T^f = {t}");
        for u in [0.3, 1.7, 4.0] {
            let a = wall_friction(u, 900.0, 2e-4, 0.05, 0.06);
            let b = wall_friction(-u, 900.0, 2e-4, 0.05, 0.06);
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_velocity_hand_value_and_residual() {
        // mu = 0, f_q = 0.06, rho = 1000, r = 0.05, |a| = 10, dPhi = -3000
        let u = mixture_velocity(-3000.0, 1000.0, 0.0, 10.0, 0.05, 0.06).unwrap();
        assert!((u - 1.0).abs() < 1e-12, "u = {u}");
        let res = momentum_residual(-3000.0, u, 1000.0, 0.0, 10.0, 0.05, 0.06);
        assert!(res.abs() <= 1e-9 * 3000.0);
        // dPhi = 0
        assert_eq!(mixture_velocity(0.0, 1000.0, 1e-3, 10.0, 0.05, 0.06).unwrap(), 0.0);
        // linear limit f_q = 0
        let u = mixture_velocity(-500.0, 1000.0, 1e-3, 10.0, 0.05, 0.0).unwrap();
        let alpha_b = 8.0 * 10.0 * 1e-3 / (0.05 * 0.05);
        assert!((u - 500.0 / alpha_b).abs() <= 1e-12 * u.abs());
        // fully frictionless is an error
        assert!(mixture_velocity(-500.0, 1000.0, 0.0, 10.0, 0.05, 0.0).is_err());
    }

    #[test]
    fn mixture_velocity_small_dphi_is_linear() {
        let (rho, mu, len, r, fq) = (900.0, 5e-4, 10.0, 0.05, 0.06);
        let alpha_b = 8.0 * len * mu / (r * r);
        for d_phi in [1e-9, -1e-9, 1e-12] {
            let u = mixture_velocity(d_phi, rho, mu, len, r, fq).unwrap();
            assert!((u + d_phi / alpha_b).abs() <= 1e-5 * (d_phi / alpha_b).abs());
        }
    }

    #[test]
    fn mixture_velocity_partials_match_finite_differences() {
        let (len, r, fq) = (25.0, 0.05, 0.06);
        for (d_phi, rho, mu) in [(-3.2e4, 950.0, 3e-4), (1.7e3, 400.0, 1e-5), (-10.0, 1000.0, 1e-3)] {
            let (_, grad) = mixture_velocity_with_partials(d_phi, rho, mu, len, r, fq).unwrap();
            let xs = [d_phi, rho, mu];
            for k in 0..3 {
                let h = 1e-6 * xs[k].abs().max(1e-9);
                let mut hi = xs;
                hi[k] += h;
                let mut lo = xs;
                lo[k] -= h;
                let f_hi = mixture_velocity(hi[0], hi[1], hi[2], len, r, fq).unwrap();
                let f_lo = mixture_velocity(lo[0], lo[1], lo[2], len, r, fq).unwrap();
                let fd = (f_hi - f_lo) / (2.0 * h);
                let scale = grad[k].abs().max(fd.abs()).max(1e-12);
                assert!(
                    (grad[k] - fd).abs() <= 1e-5 * scale,
                    "entry {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn momentum_residual_oracle_random_states() {
        let mut s = 42u64;
        let mut next = move || {
            s = s.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as f64 / u64::MAX as f64
        };
        for _ in 0..5000 {
            let d_phi = (next() - 0.5) * 2e6;
            let rho = 1.0 + next() * 1100.0;
            let mu = 1e-6 + next() * 1e-2;
            let len = 1.0 + next() * 100.0;
            let r = 0.02 + next() * 0.2;
            let fq = next() * 0.1;
            let u = mixture_velocity(d_phi, rho, mu, len, r, fq).unwrap();
            let res = momentum_residual(d_phi, u, rho, mu, len, r, fq);
            let scale = d_phi.abs().max(1.0);
            assert!(res.abs() <= 1e-9 * scale, "residual {res} at scale {scale}");
        }
    }

    #[test]
    fn s_c0_bounded_and_monotone() {
        let p = params();
        for u_m in [0.0, 0.4, -2.0, 8.0] {
            let mut prev = 0.0;
            for k in 0..=1000 {
                let s = k as f64 / 1000.0;
                let c0 = profile_parameter(s, u_m, BL_RHO_L, BL_RHO_G, SIGMA, &p).unwrap();
                let sc0 = s * c0;
                assert!((0.0..=1.0 + 1e-12).contains(&sc0));
                assert!(sc0 >= prev - 1e-12);
                prev = sc0;
            }
        }
    }
}
