//! Feed-zone exchange terms between a fixed-state reservoir and well nodes,
//! two-point Darcy/Fourier fluxes with phase-potential upwinded mobilities.

use crate::ad::Scalar;
use crate::error::Result;
use crate::fluid::{FluidModel, NodeEval, PhaseProps, MAX_COMP, PHASES};
use serde::{Deserialize, Serialize};

/// Relative permeability law.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum KrLaw {
    /// k_r(s) = s^2
    #[default]
    Quadratic,
    /// k_r(s) = s
    Linear,
}

impl KrLaw {
    pub fn eval<S: Scalar>(self, s: S) -> S {
        match self {
            KrLaw::Quadratic => s * s,
            KrLaw::Linear => s,
        }
    }
}

/// Fixed reservoir state attached to one well node, with Darcy and Fourier
/// well indexes.
#[derive(Clone, Debug)]
pub struct FeedZone {
    pub node: usize,
    /// Reservoir pressure, Pa (identical for both phases; no capillarity).
    pub p_res: f64,
    /// Reservoir temperature, K.
    pub t_res: f64,
    /// Reservoir saturations.
    pub s_res: [f64; 2],
    /// Darcy well index, m^3.
    pub wi_d: f64,
    /// Fourier well index, W/K.
    pub wi_f: f64,
    pub kr: KrLaw,
    /// Reservoir-side properties, cached at construction (the reservoir state
    /// is fixed in standalone mode).
    res_props: [Option<PhaseProps<f64>>; 2],
}

impl FeedZone {
    pub fn new(
        node: usize,
        p_res: f64,
        t_res: f64,
        s_res: [f64; 2],
        wi_d: f64,
        wi_f: f64,
        kr: KrLaw,
        fluid: &FluidModel,
    ) -> Result<Self> {
        let mut res_props = [None, None];
        for phase in PHASES {
            if s_res[phase.idx()] > 0.0 {
                res_props[phase.idx()] = Some(fluid.props::<f64>(phase, p_res, t_res)?);
            }
        }
        Ok(Self {
            node,
            p_res,
            t_res,
            s_res,
            wi_d,
            wi_f,
            kr,
            res_props,
        })
    }
}

/// Molar and energy exchange rates (positive into the well) and the per-phase
/// molar rates needed by the energy upwinding.
#[derive(Clone, Copy, Debug)]
pub struct SourceEval<S> {
    pub comp: [S; MAX_COMP],
    pub per_phase: [S; 2],
    pub energy: S,
}

/// Evaluate the feed-zone source terms at the current well state. The phase
/// potential V = WI_D (p_res - p_well) selects reservoir quantities on inflow
/// and well quantities on outflow.
pub fn reservoir_source<S: Scalar>(
    zone: &FeedZone,
    well: &NodeEval<S>,
    fluid: &FluidModel,
) -> Result<SourceEval<S>> {
    let zero = S::c(0.0);
    let v = S::c(zone.wi_d) * (S::c(zone.p_res) - well.p);
    let v_in = v.pos();
    let v_out = v.neg_p();

    let mut comp = [zero; MAX_COMP];
    let mut per_phase = [zero; 2];
    let mut energy = zero;

    for phase in PHASES {
        let mut q_phase = zero;
        // outflow: well-side mobility and fractions
        if well.phases.contains(phase) && v_out.value() != 0.0 {
            let props = well.props[phase.idx()].as_ref().expect("present phase");
            let mob = props.zeta / props.mu * zone.kr.eval(well.s[phase.idx()]);
            let q_out = mob * v_out;
            q_phase = q_phase + q_out;
            for i in fluid.components.comps_in(phase) {
                comp[i] = comp[i] + S::c(well.c[phase.idx()][i]) * q_out;
            }
            energy = energy + props.h * q_out;
        }
        // inflow: reservoir-side mobility and fractions
        if let Some(res) = &zone.res_props[phase.idx()] {
            let mob = res.zeta / res.mu * zone.kr.eval(zone.s_res[phase.idx()]).value();
            let q_in = v_in * S::c(mob);
            q_phase = q_phase + q_in;
            for i in fluid.components.comps_in(phase) {
                // reservoir fractions are canonical for the built-in models
                comp[i] = comp[i] + q_in;
            }
            energy = energy + q_in * S::c(res.h);
        }
        per_phase[phase.idx()] = q_phase;
    }

    energy = energy + S::c(zone.wi_f) * (S::c(zone.t_res) - well.t);

    Ok(SourceEval {
        comp,
        per_phase,
        energy,
    })
}
