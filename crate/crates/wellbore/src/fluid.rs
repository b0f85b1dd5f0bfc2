//! Phase properties, saturation-pressure laws, Coats-style node states and the
//! flash that updates the set of present phases.
//!
//! Two fluid families are wired in: single-component water present in both
//! phases (non-isothermal), and a two-component immiscible system with one
//! component per phase (isothermal). Both have trivial phase compositions, so
//! the molar fractions are maintained at their normalized values and the
//! composition partials of the properties vanish.

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Universal gas constant, J/(mol K).
pub const R_GAS: f64 = 8.314_462_618;
/// Gravity, m/s^2.
pub const G_ACCEL: f64 = 9.81;
/// Maximum number of components supported by the fixed-size state arrays.
pub const MAX_COMP: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Liquid = 0,
    Gas = 1,
}

pub const PHASES: [Phase; 2] = [Phase::Liquid, Phase::Gas];

impl Phase {
    pub fn idx(self) -> usize {
        self as usize
    }
    pub fn other(self) -> Phase {
        match self {
            Phase::Liquid => Phase::Gas,
            Phase::Gas => Phase::Liquid,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Phase::Liquid => "liquid",
            Phase::Gas => "gas",
        }
    }
}

/// Subset of {liquid, gas}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0b00);
    pub const LIQUID: PhaseSet = PhaseSet(0b01);
    pub const GAS: PhaseSet = PhaseSet(0b10);
    pub const BOTH: PhaseSet = PhaseSet(0b11);

    pub fn single(phase: Phase) -> PhaseSet {
        PhaseSet(1 << phase.idx())
    }
    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.idx()) != 0
    }
    pub fn insert(&mut self, phase: Phase) {
        self.0 |= 1 << phase.idx();
    }
    pub fn remove(&mut self, phase: Phase) {
        self.0 &= !(1 << phase.idx());
    }
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn union(self, o: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 | o.0)
    }
    pub fn intersect(self, o: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & o.0)
    }
    /// The unique phase if this is a singleton set.
    pub fn only(self) -> Option<Phase> {
        match self.0 {
            0b01 => Some(Phase::Liquid),
            0b10 => Some(Phase::Gas),
            _ => None,
        }
    }
    pub fn iter(self) -> impl Iterator<Item = Phase> {
        PHASES.into_iter().filter(move |a| self.contains(*a))
    }
}

/// Component list with per-phase membership.
#[derive(Clone, Debug)]
pub struct ComponentModel {
    pub n_comp: usize,
    /// Phases containing component `i`.
    pub phases_of: [PhaseSet; MAX_COMP],
    /// Molar mass per component, kg/mol.
    pub molar_mass: [f64; MAX_COMP],
}

impl ComponentModel {
    pub fn new(phases_of: &[PhaseSet], molar_mass: &[f64]) -> Result<Self> {
        let n = phases_of.len();
        assert!(n >= 1 && n <= MAX_COMP && molar_mass.len() == n);
        let mut po = [PhaseSet::EMPTY; MAX_COMP];
        let mut mm = [0.0; MAX_COMP];
        for i in 0..n {
            if phases_of[i].is_empty() {
                return Err(Error::Geometry(format!(
                    "component {i} belongs to no phase"
                )));
            }
            po[i] = phases_of[i];
            mm[i] = molar_mass[i];
        }
        Ok(Self {
            n_comp: n,
            phases_of: po,
            molar_mass: mm,
        })
    }

    pub fn components(&self) -> impl Iterator<Item = usize> {
        0..self.n_comp
    }

    /// Components residing in `phase`.
    pub fn comps_in(&self, phase: Phase) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_comp).filter(move |&i| self.phases_of[i].contains(phase))
    }

    /// Components absent from every phase of `q`.
    pub fn absent_components(&self, q: PhaseSet) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_comp).filter(move |&i| self.phases_of[i].intersect(q).is_empty())
    }

    /// Normalized molar fractions; the built-in models carry exactly one
    /// component per phase so every present fraction is 1.
    pub fn canonical_fractions(&self) -> [[f64; MAX_COMP]; 2] {
        let mut c = [[0.0; MAX_COMP]; 2];
        for phase in PHASES {
            let members: Vec<usize> = self.comps_in(phase).collect();
            assert_eq!(
                members.len(),
                1,
                "supported models carry exactly one component per phase"
            );
            c[phase.idx()][members[0]] = 1.0;
        }
        c
    }
}

/// Molar density, specific density, viscosity, internal energy, enthalpy.
#[derive(Clone, Copy, Debug)]
pub struct PhaseProps<S> {
    /// mol/m^3
    pub zeta: S,
    /// kg/m^3
    pub rho: S,
    /// Pa s
    pub mu: S,
    /// J/mol
    pub e: S,
    /// J/mol
    pub h: S,
}

impl<S: Scalar> PhaseProps<S> {
    fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> PhaseProps<T> {
        PhaseProps {
            zeta: f(self.zeta),
            rho: f(self.rho),
            mu: f(self.mu),
            e: f(self.e),
            h: f(self.h),
        }
    }
}

impl<const N: usize> PhaseProps<Dual<N>> {
    pub fn embed<const M: usize>(&self, offset: usize) -> PhaseProps<Dual<M>> {
        self.map(|x| x.embed(offset))
    }
}

/// Properties plus analytic partials, the public evaluation output.
#[derive(Clone, Debug)]
pub struct PropertyBundle {
    pub value: PhaseProps<f64>,
    pub d_p: PhaseProps<f64>,
    pub d_t: PhaseProps<f64>,
    /// Per-component composition partials; identically zero for the built-in
    /// trivial-composition models.
    pub d_c: Vec<PhaseProps<f64>>,
}

/// Saturation-pressure law selection.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum SaturationLaw {
    /// p_sat(T) = 1e-3 (T - 273)^4 Pa, valid for T > 273 K.
    Quartic,
    /// p_sat(T) = 100 exp(46.784 - 6435/T - 3.868 log T) Pa. `log10` switches
    /// the log term base from e to 10.
    ClausiusClapeyron { log10: bool },
    /// Piecewise-linear table of strictly increasing (T, p) pairs.
    Table(Vec<(f64, f64)>),
}

impl SaturationLaw {
    pub fn p_sat<S: Scalar>(&self, t: S) -> Result<S> {
        match self {
            SaturationLaw::Quartic => {
                if t.value() <= 273.0 {
                    return Err(Error::OutOfRange {
                        quantity: "quartic saturation law temperature",
                        value: t.value(),
                        min: 273.0,
                        max: f64::INFINITY,
                    });
                }
                Ok(S::c(1e-3) * (t - S::c(273.0)).powi(4))
            }
            SaturationLaw::ClausiusClapeyron { log10 } => {
                if t.value() <= 0.0 {
                    return Err(Error::OutOfRange {
                        quantity: "saturation law temperature",
                        value: t.value(),
                        min: 0.0,
                        max: f64::INFINITY,
                    });
                }
                let a = if *log10 {
                    3.868 / std::f64::consts::LN_10
                } else {
                    3.868
                };
                Ok(S::c(100.0)
                    * (S::c(46.784) - S::c(6435.0) / t - S::c(a) * t.ln()).exp())
            }
            SaturationLaw::Table(rows) => {
                let tv = t.value();
                let (lo, hi) = (rows[0].0, rows[rows.len() - 1].0);
                if tv < lo || tv > hi {
                    return Err(Error::OutOfRange {
                        quantity: "saturation table temperature",
                        value: tv,
                        min: lo,
                        max: hi,
                    });
                }
                let k = rows.partition_point(|r| r.0 <= tv).clamp(1, rows.len() - 1);
                let (t0, p0) = rows[k - 1];
                let (t1, p1) = rows[k];
                let slope = (p1 - p0) / (t1 - t0);
                Ok(S::c(p0) + (t - S::c(t0)) * S::c(slope))
            }
        }
    }

    /// Inverse of `p_sat`; exact for the quartic law, Newton-safeguarded for
    /// Clausius-Clapeyron, linear inversion for tables.
    pub fn t_sat<S: Scalar>(&self, p: S) -> Result<S> {
        match self {
            SaturationLaw::Quartic => {
                if p.value() < 0.0 {
                    return Err(Error::OutOfRange {
                        quantity: "saturation pressure",
                        value: p.value(),
                        min: 0.0,
                        max: f64::INFINITY,
                    });
                }
                Ok(S::c(273.0) + (S::c(1e3) * p).powf(0.25))
            }
            SaturationLaw::ClausiusClapeyron { .. } => {
                let t0 = self.t_sat_value_cc(p.value())?;
                // lift through the implicit function: dT/dp = 1 / p_sat'(T)
                let dpdt = self.dp_sat_dt(t0)?;
                let p0 = self.p_sat(t0)?;
                Ok(S::c(t0) + (p - S::c(p0)) / S::c(dpdt))
            }
            SaturationLaw::Table(rows) => {
                let pv = p.value();
                let (lo, hi) = (rows[0].1, rows[rows.len() - 1].1);
                if pv < lo || pv > hi {
                    return Err(Error::OutOfRange {
                        quantity: "saturation table pressure",
                        value: pv,
                        min: lo,
                        max: hi,
                    });
                }
                let k = rows.partition_point(|r| r.1 <= pv).clamp(1, rows.len() - 1);
                let (t0, p0) = rows[k - 1];
                let (t1, p1) = rows[k];
                let slope = (t1 - t0) / (p1 - p0);
                Ok(S::c(t0) + (p - S::c(p0)) * S::c(slope))
            }
        }
    }

    pub fn dp_sat_dt(&self, t: f64) -> Result<f64> {
        Ok(self.p_sat(Dual::<1>::var(t, 0))?.d[0])
    }

    fn t_sat_value_cc(&self, p: f64) -> Result<f64> {
        if p <= 0.0 {
            return Err(Error::OutOfRange {
                quantity: "saturation pressure",
                value: p,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        // ln p_sat is strictly increasing in T below ~1600 K; bracketed Newton.
        let (mut lo, mut hi) = (200.0, 1500.0);
        let target = p.ln();
        let mut t = 450.0;
        for _ in 0..100 {
            let ps = self.p_sat(Dual::<1>::var(t, 0))?;
            let g = ps.v.ln() - target;
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let dg = ps.d[0] / ps.v;
            let mut t_new = t - g / dg;
            if !(t_new > lo && t_new < hi) {
                t_new = 0.5 * (lo + hi);
            }
            if (t_new - t).abs() <= 1e-13 * t {
                return Ok(t_new);
            }
            t = t_new;
        }
        Ok(t)
    }
}

/// Coefficients of the default water correlations. All fields are plain data
/// so a scenario can override any of them.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WaterProps {
    pub molar_mass_kg_per_mol: f64,
    pub rho_l_ref_kg_per_m3: f64,
    pub rho_l_t_ref_k: f64,
    pub rho_l_t_slope_per_k: f64,
    pub rho_l_p_ref_pa: f64,
    pub rho_l_compressibility_per_pa: f64,
    pub cp_l_j_per_kg_k: f64,
    pub h_t_ref_k: f64,
    pub mu_l_prefactor_pa_s: f64,
    pub mu_l_exp_k: f64,
    pub mu_l_offset_k: f64,
    pub h_g_ref_j_per_kg: f64,
    pub cp_g_j_per_kg_k: f64,
    pub mu_g_pa_s: f64,
    pub t_valid_k: (f64, f64),
    pub p_valid_pa: (f64, f64),
}

impl Default for WaterProps {
    fn default() -> Self {
        Self {
            molar_mass_kg_per_mol: 0.018,
            rho_l_ref_kg_per_m3: 1000.0,
            rho_l_t_ref_k: 293.0,
            rho_l_t_slope_per_k: 3e-4,
            rho_l_p_ref_pa: 1e5,
            rho_l_compressibility_per_pa: 4.5e-10,
            cp_l_j_per_kg_k: 4180.0,
            h_t_ref_k: 273.0,
            mu_l_prefactor_pa_s: 2.414e-5,
            mu_l_exp_k: 247.8,
            mu_l_offset_k: 140.0,
            h_g_ref_j_per_kg: 2.5e6,
            cp_g_j_per_kg_k: 1900.0,
            mu_g_pa_s: 1.2e-5,
            t_valid_k: (273.16, 645.0),
            p_valid_pa: (1.0, 1e8),
        }
    }
}

/// Constant-property immiscible two-component fluid (component 0 in the
/// liquid phase, component 1 in the gas phase).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ImmiscibleProps {
    pub rho_l_kg_per_m3: f64,
    pub rho_g_kg_per_m3: f64,
    pub molar_mass_kg_per_mol: [f64; 2],
    pub mu_l_pa_s: f64,
    pub mu_g_pa_s: f64,
}

impl Default for ImmiscibleProps {
    fn default() -> Self {
        Self {
            rho_l_kg_per_m3: 1000.0,
            rho_g_kg_per_m3: 4.0,
            molar_mass_kg_per_mol: [1.0, 1.0],
            mu_l_pa_s: 1e-3,
            mu_g_pa_s: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub enum FluidKind {
    Water(WaterProps),
    Immiscible(ImmiscibleProps),
}

/// Fluid model: property evaluators, saturation law, component bookkeeping.
/// Immutable after construction and freely shareable.
#[derive(Clone, Debug)]
pub struct FluidModel {
    pub components: ComponentModel,
    pub isothermal: bool,
    pub kind: FluidKind,
    pub saturation: Option<SaturationLaw>,
}

impl FluidModel {
    pub fn water(props: WaterProps, saturation: SaturationLaw) -> Result<Self> {
        let components = ComponentModel::new(&[PhaseSet::BOTH], &[props.molar_mass_kg_per_mol])?;
        Ok(Self {
            components,
            isothermal: false,
            kind: FluidKind::Water(props),
            saturation: Some(saturation),
        })
    }

    pub fn immiscible(props: ImmiscibleProps) -> Result<Self> {
        let components = ComponentModel::new(
            &[PhaseSet::LIQUID, PhaseSet::GAS],
            &props.molar_mass_kg_per_mol,
        )?;
        Ok(Self {
            components,
            isothermal: true,
            kind: FluidKind::Immiscible(props),
            saturation: None,
        })
    }

    pub fn n_comp(&self) -> usize {
        self.components.n_comp
    }

    /// Number of conservation equations (and primary unknowns) per node.
    pub fn n_primary(&self) -> usize {
        self.n_comp() + if self.isothermal { 0 } else { 1 }
    }

    fn check_range(&self, p: f64, t: f64) -> Result<()> {
        if let FluidKind::Water(w) = &self.kind {
            if !(t >= w.t_valid_k.0 && t <= w.t_valid_k.1) {
                return Err(Error::OutOfRange {
                    quantity: "temperature",
                    value: t,
                    min: w.t_valid_k.0,
                    max: w.t_valid_k.1,
                });
            }
            if !(p >= w.p_valid_pa.0 && p <= w.p_valid_pa.1) {
                return Err(Error::OutOfRange {
                    quantity: "pressure",
                    value: p,
                    min: w.p_valid_pa.0,
                    max: w.p_valid_pa.1,
                });
            }
        } else if !(p > 0.0) {
            return Err(Error::OutOfRange {
                quantity: "pressure",
                value: p,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// Evaluate all five properties of one phase. The composition argument of
    /// the general contract is dropped: both built-in models have exactly one
    /// component per phase, so fractions are identically 1.
    pub fn props<S: Scalar>(&self, phase: Phase, p: S, t: S) -> Result<PhaseProps<S>> {
        self.check_range(p.value(), t.value())?;
        match &self.kind {
            FluidKind::Water(w) => {
                let m = w.molar_mass_kg_per_mol;
                match phase {
                    Phase::Liquid => {
                        let rho = S::c(w.rho_l_ref_kg_per_m3)
                            * (S::c(1.0) - S::c(w.rho_l_t_slope_per_k) * (t - S::c(w.rho_l_t_ref_k)))
                            * (S::c(1.0)
                                + S::c(w.rho_l_compressibility_per_pa)
                                    * (p - S::c(w.rho_l_p_ref_pa)));
                        let zeta = rho / S::c(m);
                        let h = S::c(m * w.cp_l_j_per_kg_k) * (t - S::c(w.h_t_ref_k));
                        let e = h - p / zeta;
                        // 10^(b/(T-c)) written as exp
                        let mu = S::c(w.mu_l_prefactor_pa_s)
                            * (S::c(w.mu_l_exp_k * std::f64::consts::LN_10)
                                / (t - S::c(w.mu_l_offset_k)))
                            .exp();
                        Ok(PhaseProps { zeta, rho, mu, e, h })
                    }
                    Phase::Gas => {
                        let zeta = p / (S::c(R_GAS) * t);
                        let rho = zeta * S::c(m);
                        let h = S::c(m)
                            * (S::c(w.h_g_ref_j_per_kg)
                                + S::c(w.cp_g_j_per_kg_k) * (t - S::c(w.h_t_ref_k)));
                        let e = h - p / zeta;
                        let mu = S::c(w.mu_g_pa_s);
                        Ok(PhaseProps { zeta, rho, mu, e, h })
                    }
                }
            }
            FluidKind::Immiscible(im) => {
                let (rho_v, mu_v, m) = match phase {
                    Phase::Liquid => (im.rho_l_kg_per_m3, im.mu_l_pa_s, im.molar_mass_kg_per_mol[0]),
                    Phase::Gas => (im.rho_g_kg_per_m3, im.mu_g_pa_s, im.molar_mass_kg_per_mol[1]),
                };
                let rho = S::c(rho_v);
                let zeta = rho / S::c(m);
                let h = S::c(0.0);
                let e = h - p / zeta;
                Ok(PhaseProps {
                    zeta,
                    rho,
                    mu: S::c(mu_v),
                    e,
                    h,
                })
            }
        }
    }

    /// Property bundle with analytic (p, T) partials and (vanishing)
    /// composition partials.
    pub fn eval_properties(
        &self,
        phase: Phase,
        p: f64,
        t: f64,
        _c: &[f64],
    ) -> Result<PropertyBundle> {
        let out = self.props::<Dual<2>>(phase, Dual::var(p, 0), Dual::var(t, 1))?;
        let zero = PhaseProps {
            zeta: 0.0,
            rho: 0.0,
            mu: 0.0,
            e: 0.0,
            h: 0.0,
        };
        Ok(PropertyBundle {
            value: out.map(|x| x.v),
            d_p: out.map(|x| x.d[0]),
            d_t: out.map(|x| x.d[1]),
            d_c: vec![zero; self.n_comp()],
        })
    }

    pub fn p_sat<S: Scalar>(&self, t: S) -> Result<S> {
        self.saturation
            .as_ref()
            .expect("fluid has no saturation law")
            .p_sat(t)
    }

    pub fn t_sat<S: Scalar>(&self, p: S) -> Result<S> {
        self.saturation
            .as_ref()
            .expect("fluid has no saturation law")
            .t_sat(p)
    }

    pub fn molar_mass(&self, comp: usize) -> f64 {
        self.components.molar_mass[comp]
    }
}

/// Natural-variable unknowns at a well node together with the present-phase set.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub phases: PhaseSet,
    /// Pa
    pub p: f64,
    /// K
    pub t: f64,
    /// Saturation per phase; zero for absent phases.
    pub s: [f64; 2],
    /// Molar fractions per phase (phase-major).
    pub c: [[f64; MAX_COMP]; 2],
    /// Mole counts of components absent from every present phase.
    pub n_extra: [f64; MAX_COMP],
}

impl NodeState {
    pub fn single_phase(fluid: &FluidModel, phase: Phase, p: f64, t: f64) -> Self {
        let mut s = [0.0; 2];
        s[phase.idx()] = 1.0;
        Self {
            phases: PhaseSet::single(phase),
            p,
            t,
            s,
            c: fluid.components.canonical_fractions(),
            n_extra: [0.0; MAX_COMP],
        }
    }

    pub fn two_phase(fluid: &FluidModel, p: f64, t: f64, s_g: f64) -> Self {
        Self {
            phases: PhaseSet::BOTH,
            p,
            t,
            s: [1.0 - s_g, s_g],
            c: fluid.components.canonical_fractions(),
            n_extra: [0.0; MAX_COMP],
        }
    }

    /// Mixture specific density at the node.
    pub fn mixture_density(&self, fluid: &FluidModel) -> Result<f64> {
        let mut rho = 0.0;
        for phase in self.phases.iter() {
            rho += self.s[phase.idx()] * fluid.props::<f64>(phase, self.p, self.t)?.rho;
        }
        Ok(rho)
    }
}

/// Identification of the two primary unknowns at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimaryVars {
    /// (p, T) for a single-phase node of the water model.
    PressureTemperature,
    /// (p, s_g); T is secondary through p = p_sat(T) for the water model.
    PressureGasSaturation,
    /// (p, n_extra[comp]) for a single-phase node of the immiscible model.
    PressureAbsentMoles(usize),
}

pub fn primary_vars(fluid: &FluidModel, q: PhaseSet) -> PrimaryVars {
    match &fluid.kind {
        FluidKind::Water(_) => {
            if q.len() == 2 {
                PrimaryVars::PressureGasSaturation
            } else {
                PrimaryVars::PressureTemperature
            }
        }
        FluidKind::Immiscible(_) => match q.only() {
            None => PrimaryVars::PressureGasSaturation,
            Some(phase) => {
                let absent = fluid
                    .components
                    .absent_components(PhaseSet::single(phase))
                    .next()
                    .expect("immiscible single-phase node has one absent component");
                PrimaryVars::PressureAbsentMoles(absent)
            }
        },
    }
}

/// Current primary values of a node.
pub fn get_primaries(state: &NodeState, fluid: &FluidModel) -> [f64; 2] {
    match primary_vars(fluid, state.phases) {
        PrimaryVars::PressureTemperature => [state.p, state.t],
        PrimaryVars::PressureGasSaturation => [state.p, state.s[Phase::Gas.idx()]],
        PrimaryVars::PressureAbsentMoles(i) => [state.p, state.n_extra[i]],
    }
}

/// Write primaries back and restore the thermodynamic closure exactly
/// (secondary unknowns recomputed from the primaries).
pub fn set_primaries(state: &mut NodeState, fluid: &FluidModel, x: [f64; 2]) -> Result<()> {
    state.c = fluid.components.canonical_fractions();
    match primary_vars(fluid, state.phases) {
        PrimaryVars::PressureTemperature => {
            state.p = x[0];
            state.t = x[1];
            let phase = state.phases.only().expect("single-phase node");
            state.s = [0.0; 2];
            state.s[phase.idx()] = 1.0;
        }
        PrimaryVars::PressureGasSaturation => {
            state.p = x[0];
            state.s[Phase::Gas.idx()] = x[1];
            state.s[Phase::Liquid.idx()] = 1.0 - x[1];
            if !fluid.isothermal {
                state.t = fluid.t_sat(x[0])?;
            }
        }
        PrimaryVars::PressureAbsentMoles(i) => {
            state.p = x[0];
            state.n_extra[i] = x[1];
            let phase = state.phases.only().expect("single-phase node");
            state.s = [0.0; 2];
            state.s[phase.idx()] = 1.0;
        }
    }
    Ok(())
}

/// Node state lifted onto a generic scalar: the secondary unknowns carry the
/// chain-rule sensitivities with respect to the two seeded primaries.
#[derive(Clone, Debug)]
pub struct NodeEval<S: Scalar> {
    pub phases: PhaseSet,
    pub p: S,
    pub t: S,
    pub s: [S; 2],
    /// Fractions are constants in the built-in models.
    pub c: [[f64; MAX_COMP]; 2],
    pub n_extra: [S; MAX_COMP],
    pub props: [Option<PhaseProps<S>>; 2],
}

/// Lift a node given pre-seeded primary values `x` (e.g. `Dual::var`).
pub fn lift_node<S: Scalar>(state: &NodeState, fluid: &FluidModel, x: [S; 2]) -> Result<NodeEval<S>> {
    let zero = S::c(0.0);
    let one = S::c(1.0);
    let (p, t, s, n_extra) = match primary_vars(fluid, state.phases) {
        PrimaryVars::PressureTemperature => {
            let phase = state.phases.only().expect("single-phase node");
            let mut s = [zero; 2];
            s[phase.idx()] = one;
            (x[0], x[1], s, [zero; MAX_COMP])
        }
        PrimaryVars::PressureGasSaturation => {
            let t = if fluid.isothermal {
                S::c(state.t)
            } else {
                fluid.t_sat(x[0])?
            };
            (x[0], t, [one - x[1], x[1]], [zero; MAX_COMP])
        }
        PrimaryVars::PressureAbsentMoles(i) => {
            let phase = state.phases.only().expect("single-phase node");
            let mut s = [zero; 2];
            s[phase.idx()] = one;
            let mut n_extra = [zero; MAX_COMP];
            n_extra[i] = x[1];
            (x[0], S::c(state.t), s, n_extra)
        }
    };
    let mut props = [None, None];
    for phase in state.phases.iter() {
        props[phase.idx()] = Some(fluid.props(phase, p, t)?);
    }
    Ok(NodeEval {
        phases: state.phases,
        p,
        t,
        s,
        c: state.c,
        n_extra,
        props,
    })
}

/// Stacked thermodynamic closure residuals: phase-equilibrium rows, molar
/// fraction normalizations, the saturation sum, and zero-saturation rows for
/// absent phases. Row count equals the number of secondary unknowns.
pub fn closure_residual(state: &NodeState, fluid: &FluidModel) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    // equilibrium rows, concretized as p = p_sat(T) for single-component water
    for i in fluid.components.components() {
        if state.phases.intersect(fluid.components.phases_of[i]) == PhaseSet::BOTH {
            rows.push(state.p - fluid.p_sat(state.t)?);
        }
    }
    for phase in state.phases.iter() {
        let sum: f64 = fluid
            .components
            .comps_in(phase)
            .map(|i| state.c[phase.idx()][i])
            .sum();
        rows.push(sum - 1.0);
    }
    let s_sum: f64 = state.phases.iter().map(|a| state.s[a.idx()]).sum();
    rows.push(s_sum - 1.0);
    for phase in PHASES {
        if !state.phases.contains(phase) {
            rows.push(state.s[phase.idx()]);
        }
    }
    Ok(rows)
}

/// Outcome of a flash update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlashOutcome {
    pub changed: bool,
    pub appeared: Option<Phase>,
    pub disappeared: Option<Phase>,
}

impl FlashOutcome {
    fn unchanged() -> Self {
        Self {
            changed: false,
            appeared: None,
            disappeared: None,
        }
    }
}

/// Update the present-phase set after a Newton update. An appearing phase is
/// seeded with zero saturation; a phase whose saturation went negative is
/// removed and the remaining saturation renormalized.
pub fn flash_update(state: &mut NodeState, fluid: &FluidModel) -> Result<FlashOutcome> {
    match &fluid.kind {
        FluidKind::Water(_) => flash_water(state, fluid),
        FluidKind::Immiscible(_) => flash_immiscible(state, fluid),
    }
}

fn appear(state: &mut NodeState, fluid: &FluidModel, phase: Phase) -> Result<FlashOutcome> {
    state.phases = PhaseSet::BOTH;
    state.s = [0.0; 2];
    state.s[phase.other().idx()] = 1.0;
    state.c = fluid.components.canonical_fractions();
    if !fluid.isothermal {
        state.t = fluid.t_sat(state.p)?;
    }
    // absent-component moles are converted into the zero-saturation seed
    state.n_extra = [0.0; MAX_COMP];
    Ok(FlashOutcome {
        changed: true,
        appeared: Some(phase),
        disappeared: None,
    })
}

fn disappear(state: &mut NodeState, phase: Phase) -> FlashOutcome {
    state.phases = PhaseSet::single(phase.other());
    state.s = [0.0; 2];
    state.s[phase.other().idx()] = 1.0;
    state.n_extra = [0.0; MAX_COMP];
    FlashOutcome {
        changed: true,
        appeared: None,
        disappeared: Some(phase),
    }
}

fn flash_water(state: &mut NodeState, fluid: &FluidModel) -> Result<FlashOutcome> {
    let p_sat = fluid.p_sat(state.t)?;
    match state.phases.only() {
        Some(Phase::Liquid) if state.p < p_sat => appear(state, fluid, Phase::Gas),
        Some(Phase::Gas) if state.p > p_sat => appear(state, fluid, Phase::Liquid),
        None => {
            if state.s[Phase::Gas.idx()] < 0.0 {
                Ok(disappear(state, Phase::Gas))
            } else if state.s[Phase::Liquid.idx()] < 0.0 {
                Ok(disappear(state, Phase::Liquid))
            } else {
                Ok(FlashOutcome::unchanged())
            }
        }
        _ => Ok(FlashOutcome::unchanged()),
    }
}

fn flash_immiscible(state: &mut NodeState, fluid: &FluidModel) -> Result<FlashOutcome> {
    match state.phases.only() {
        None => {
            if state.s[Phase::Gas.idx()] < 0.0 {
                Ok(disappear(state, Phase::Gas))
            } else if state.s[Phase::Liquid.idx()] < 0.0 {
                Ok(disappear(state, Phase::Liquid))
            } else {
                Ok(FlashOutcome::unchanged())
            }
        }
        Some(phase) => {
            let absent = fluid
                .components
                .absent_components(PhaseSet::single(phase))
                .next()
                .expect("one absent component");
            if state.n_extra[absent] > 0.0 {
                appear(state, fluid, phase.other())
            } else {
                Ok(FlashOutcome::unchanged())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn water() -> FluidModel {
        FluidModel::water(WaterProps::default(), SaturationLaw::Quartic).unwrap()
    }

    fn immiscible() -> FluidModel {
        FluidModel::immiscible(ImmiscibleProps::default()).unwrap()
    }

    #[test]
    fn liquid_density_at_reference_conditions() {
        let f = water();
        let props = f.props::<f64>(Phase::Liquid, 1e5, 293.0).unwrap();
        assert_eq!(props.rho, 1000.0);
    }

    #[test]
    fn ideal_gas_density_hand_value() {
        let f = water();
        let props = f.props::<f64>(Phase::Gas, 1e5, 373.15).unwrap();
        let expect = 1e5 * 0.018 / (R_GAS * 373.15);
        assert!((props.rho - expect).abs() < 1e-12);
        assert!((props.rho - 0.5801).abs() < 1e-4);
    }

    #[test]
    fn internal_energy_identity() {
        let f = water();
        for (p, t) in [(1e5, 300.0), (2e6, 450.0), (1e7, 600.0)] {
            for phase in PHASES {
                let pr = f.props::<f64>(phase, p, t).unwrap();
                let lhs = pr.e;
                let rhs = pr.h - p / pr.zeta;
                assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn property_derivatives_match_finite_differences() {
        let f = water();
        let mut rng = 987_654_321u64;
        let mut next = move || {
            // splitmix64
            rng = rng.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = rng;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            (z ^ (z >> 31)) as f64 / u64::MAX as f64
        };
        for _ in 0..1000 {
            let p = 1e5 + next() * 1e7;
            let t = 280.0 + next() * 350.0;
            for phase in PHASES {
                let d = f
                    .props::<Dual<2>>(phase, Dual::var(p, 0), Dual::var(t, 1))
                    .unwrap();
                let hp = 1e-6 * p;
                let ht = 1e-6 * t;
                let pp = f.props::<f64>(phase, p + hp, t).unwrap();
                let pm = f.props::<f64>(phase, p - hp, t).unwrap();
                let tp = f.props::<f64>(phase, p, t + ht).unwrap();
                let tm = f.props::<f64>(phase, p, t - ht).unwrap();
                let checks = [
                    ("zeta", d.zeta, (pp.zeta - pm.zeta) / (2.0 * hp), (tp.zeta - tm.zeta) / (2.0 * ht), pp.zeta.abs()),
                    ("rho", d.rho, (pp.rho - pm.rho) / (2.0 * hp), (tp.rho - tm.rho) / (2.0 * ht), pp.rho.abs()),
                    ("mu", d.mu, (pp.mu - pm.mu) / (2.0 * hp), (tp.mu - tm.mu) / (2.0 * ht), pp.mu.abs()),
                    ("e", d.e, (pp.e - pm.e) / (2.0 * hp), (tp.e - tm.e) / (2.0 * ht), pp.e.abs()),
                    ("h", d.h, (pp.h - pm.h) / (2.0 * hp), (tp.h - tm.h) / (2.0 * ht), pp.h.abs()),
                ];
                for (name, dual, fd_p, fd_t, mag) in checks {
                    // allowance: relative on the derivative scale plus the
                    // cancellation noise floor of the centered difference
                    let tol_p = 1e-5 * dual.d[0].abs().max(fd_p.abs()) + 1e-13 * mag / hp;
                    let tol_t = 1e-5 * dual.d[1].abs().max(fd_t.abs()) + 1e-13 * mag / ht;
                    assert!(
                        (dual.d[0] - fd_p).abs() <= tol_p,
                        "{name} dp mismatch at p={p} t={t}: {} vs {fd_p}",
                        dual.d[0]
                    );
                    assert!(
                        (dual.d[1] - fd_t).abs() <= tol_t,
                        "{name} dt mismatch at p={p} t={t}: {} vs {fd_t}",
                        dual.d[1]
                    );
                }
            }
        }
    }

    #[test]
    fn out_of_range_names_the_bound() {
        let f = water();
        let err = f.props::<f64>(Phase::Liquid, 1e5, 100.0).unwrap_err();
        assert!(err.to_string().contains("temperature"));
    }

    #[test]
    fn quartic_saturation_values() {
        let law = SaturationLaw::Quartic;
        assert!((law.p_sat(373.0f64).unwrap() - 1e5).abs() <= 1e-10 * 1e5);
        assert!(law.p_sat(273.0f64).is_err());
        assert_eq!(law.p_sat(273.0000001f64).unwrap().min(1.0), law.p_sat(273.0000001f64).unwrap());
    }

    #[test]
    fn clausius_clapeyron_hand_value() {
        let law = SaturationLaw::ClausiusClapeyron { log10: false };
        let p = law.p_sat(523.15f64).unwrap();
        assert!((p - 2.884e6).abs() < 0.01e6, "p_sat(523.15) = {p}");
    }

    #[test]
    fn saturation_inverse_round_trip() {
        for law in [
            SaturationLaw::Quartic,
            SaturationLaw::ClausiusClapeyron { log10: false },
            SaturationLaw::ClausiusClapeyron { log10: true },
        ] {
            for t in [300.0, 373.0, 450.0, 523.15, 600.0] {
                let p = law.p_sat(t).unwrap();
                let back = law.p_sat(law.t_sat(p).unwrap()).unwrap();
                assert!(
                    (back - p).abs() <= 1e-10 * p,
                    "{law:?} round trip at T={t}: {back} vs {p}"
                );
            }
        }
        let table = SaturationLaw::Table(vec![(300.0, 3.5e3), (400.0, 2.5e5), (500.0, 2.6e6)]);
        for p in [5e3, 1e5, 1e6] {
            let back = table.p_sat(table.t_sat(p).unwrap()).unwrap();
            assert!((back - p).abs() <= 1e-10 * p);
        }
    }

    #[test]
    fn saturation_law_strictly_increasing() {
        for law in [
            SaturationLaw::Quartic,
            SaturationLaw::ClausiusClapeyron { log10: false },
        ] {
            let mut prev = 0.0;
            for k in 0..200 {
                let t = 280.0 + k as f64 * 1.5;
                let p = law.p_sat(t).unwrap();
                assert!(p > prev);
                prev = p;
            }
        }
    }

    #[test]
    fn closure_rows_match_secondary_count() {
        let f = water();
        // two-phase water on the saturation line: residual vanishes
        let t = 423.0;
        let p = f.p_sat(t).unwrap();
        let st = NodeState::two_phase(&f, p, t, 0.3);
        let rows = closure_residual(&st, &f).unwrap();
        assert_eq!(rows.len(), 4); // equilibrium + 2 normalizations + saturation sum
        assert!(rows.iter().all(|r| r.abs() < 1e-12));

        // single-phase water: only trivial constraints remain
        let st = NodeState::single_phase(&f, Phase::Liquid, 1e6, 350.0);
        let rows = closure_residual(&st, &f).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.abs() < 1e-12));

        // immiscible two-phase: no equilibrium row
        let im = immiscible();
        let st = NodeState::two_phase(&im, 1e5, 300.0, 0.5);
        let rows = closure_residual(&st, &im).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn flash_examples() {
        let f = water();
        // stays liquid: p_sat(350) = 35153 Pa < 5e5 Pa
        let mut st = NodeState::single_phase(&f, Phase::Liquid, 5e5, 350.0);
        let out = flash_update(&mut st, &f).unwrap();
        assert!(!out.changed);
        assert_eq!(st.phases, PhaseSet::LIQUID);

        // flashes: p_sat(423) = 5.0625e5 > 5e5
        let mut st = NodeState::single_phase(&f, Phase::Liquid, 5e5, 423.0);
        let out = flash_update(&mut st, &f).unwrap();
        assert_eq!(out.appeared, Some(Phase::Gas));
        assert_eq!(st.phases, PhaseSet::BOTH);
        assert_eq!(st.s[Phase::Gas.idx()], 0.0);
        // temperature moved onto the saturation line
        assert!((f.p_sat(st.t).unwrap() - st.p).abs() <= 1e-8 * st.p);

        // disappearance
        let t = 423.0;
        let p = f.p_sat(t).unwrap();
        let mut st = NodeState::two_phase(&f, p, t, -0.01);
        let out = flash_update(&mut st, &f).unwrap();
        assert_eq!(out.disappeared, Some(Phase::Gas));
        assert_eq!(st.phases, PhaseSet::LIQUID);
        assert_eq!(st.s[Phase::Liquid.idx()], 1.0);
    }

    #[test]
    fn flash_is_idempotent() {
        let f = water();
        let cases = [
            NodeState::single_phase(&f, Phase::Liquid, 5e5, 423.0),
            NodeState::single_phase(&f, Phase::Liquid, 5e5, 350.0),
            NodeState::single_phase(&f, Phase::Gas, 5e5, 500.0),
            NodeState::two_phase(&f, f.p_sat(460.0).unwrap(), 460.0, -0.2),
            NodeState::two_phase(&f, f.p_sat(460.0).unwrap(), 460.0, 1.3),
            NodeState::two_phase(&f, f.p_sat(460.0).unwrap(), 460.0, 0.4),
        ];
        for st0 in cases {
            let mut st = st0.clone();
            flash_update(&mut st, &f).unwrap();
            let q1 = st.phases;
            let out = flash_update(&mut st, &f).unwrap();
            assert!(!out.changed, "flash not idempotent from {st0:?}");
            assert_eq!(st.phases, q1);
        }
    }

    #[test]
    fn primary_lift_round_trip() {
        let f = water();
        let mut st = NodeState::two_phase(&f, f.p_sat(430.0).unwrap(), 430.0, 0.25);
        let x = get_primaries(&st, &f);
        set_primaries(&mut st, &f, x).unwrap();
        assert!((st.t - 430.0).abs() < 1e-9);
        assert_eq!(st.s[0] + st.s[1], 1.0);

        // lifted sensitivities: dT/dp = 1/p_sat'(T)
        let lifted = lift_node(&st, &f, [Dual::<2>::var(x[0], 0), Dual::<2>::var(x[1], 1)]).unwrap();
        let dpdt = f.saturation.as_ref().unwrap().dp_sat_dt(430.0).unwrap();
        assert!((lifted.t.d[0] - 1.0 / dpdt).abs() <= 1e-9 * (1.0 / dpdt).abs());
        assert_eq!(lifted.s[Phase::Liquid.idx()].d[1], -1.0);
    }
}
