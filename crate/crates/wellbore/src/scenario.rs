//! Scenario configuration: TOML schema with explicit unit suffixes, strict
//! validation, and construction of the runnable well case.

use crate::assembly::{LeafInflow, MonitorSpec, ThermalParams, WellCase, WellState};
use crate::dfm::{DfmParams, FrictionParams};
use crate::error::{Error, Result};
use crate::feed::{FeedZone, KrLaw};
use crate::fluid::{
    FluidModel, ImmiscibleProps, Phase, PhaseSet, SaturationLaw, WaterProps,
};
use crate::mesh::{build_well_mesh, BranchSpec, Point, WellMesh};
use crate::solver::{hydrostatic_state, SolverConfig, TimeStepConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fluid: FluidConfig,
    pub well: WellConfig,
    #[serde(default)]
    pub dfm: DfmParams,
    #[serde(default)]
    pub friction: FrictionParams,
    #[serde(default)]
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub feed: Vec<FeedConfig>,
    #[serde(default)]
    pub leaf_inflow: Vec<LeafInflowConfig>,
    pub monitoring: MonitoringConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverTolerances,
    pub output: OutputConfig,
    #[serde(default)]
    pub bl_oracle: Option<BlOracleConfig>,
    #[serde(default)]
    pub siu: Option<SiuScenarioConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum FluidModelKind {
    Water,
    ImmiscibleTwoComponent,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum SaturationLawKind {
    Quartic,
    ClausiusClapeyron,
    Table,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub model: FluidModelKind,
    #[serde(default)]
    pub isothermal: bool,
    #[serde(default)]
    pub saturation_law: Option<SaturationLawKind>,
    /// Interpret the log term of the Clausius-Clapeyron law in base 10
    /// instead of base e.
    #[serde(default)]
    pub clausius_log10: bool,
    /// Rows (T_k, p_pa) for the table law.
    #[serde(default)]
    pub saturation_table: Vec<(f64, f64)>,
    #[serde(default)]
    pub water: WaterProps,
    #[serde(default)]
    pub immiscible: ImmiscibleProps,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub radius_m: f64,
    pub root: [f64; 3],
    pub branch: Vec<BranchConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub segments: usize,
    #[serde(default)]
    pub radius_m: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub lambda_l_w_per_m_k: f64,
    pub lambda_g_w_per_m_k: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self {
            lambda_l_w_per_m_k: 2.0,
            lambda_g_w_per_m_k: 2.0,
        }
    }
}

/// Node selector: the end node of a branch or the node nearest an arc length.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeSelector {
    pub branch: usize,
    #[serde(default)]
    pub leaf: bool,
    #[serde(default)]
    pub arc_m: Option<f64>,
}

impl NodeSelector {
    fn resolve(&self, mesh: &WellMesh, errs: &mut Vec<String>, what: &str) -> Option<usize> {
        if self.leaf == self.arc_m.is_some() {
            errs.push(format!(
                "{what}: selector needs exactly one of leaf = true or arc_m"
            ));
            return None;
        }
        let node = if self.leaf {
            mesh.branch_end(self.branch)
        } else {
            mesh.node_at_arc(self.branch, self.arc_m.unwrap())
        };
        if node.is_none() {
            errs.push(format!("{what}: branch {} has no nodes", self.branch));
        }
        node
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub at: NodeSelector,
    pub reservoir_pressure_pa: f64,
    pub reservoir_temperature_k: f64,
    #[serde(default = "default_one")]
    pub reservoir_liquid_saturation: f64,
    pub wi_d_m3: f64,
    pub wi_f_w_per_k: f64,
    #[serde(default)]
    pub kr: KrLaw,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LeafInflowConfig {
    pub at: NodeSelector,
    pub u_g_m_per_s: f64,
    pub u_l_m_per_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MonitoringConfig {
    pub min_head_pressure_pa: f64,
    /// Maximum total mass rate; single-component fluids only.
    #[serde(default)]
    pub max_rate_kg_per_s: Option<f64>,
    /// Maximum total molar rate; any fluid.
    #[serde(default)]
    pub max_rate_mol_per_s: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum InitialPhase {
    Liquid,
    Gas,
    TwoPhase,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub temperature_k: f64,
    /// Hydrostatic anchor at the head node.
    pub head_pressure_pa: f64,
    pub phase: InitialPhase,
    #[serde(default)]
    pub gas_saturation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final_s: f64,
    pub dt_initial_s: f64,
    pub dt_max_s: f64,
    #[serde(default = "default_growth")]
    pub dt_growth: f64,
    #[serde(default = "default_newton_cap")]
    pub max_newton_iter: usize,
    #[serde(default = "default_dt_floor")]
    pub dt_floor_s: f64,
}

fn default_growth() -> f64 {
    1.1
}
fn default_newton_cap() -> usize {
    50
}
fn default_dt_floor() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverTolerances {
    pub rel_residual_tol: f64,
    pub increment_tol: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            rel_residual_tol: 1e-8,
            increment_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    #[serde(default)]
    pub profile_times_s: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BlOracleConfig {
    pub cells: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiuScenarioConfig {
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_true")]
    pub use_slip: bool,
}

fn default_sweeps() -> usize {
    200
}
fn default_true() -> bool {
    true
}

const REQUIRED_BLOCKS: [&str; 6] = ["fluid", "well", "monitoring", "initial", "time", "output"];

/// Parse and statically validate a scenario. Syntax errors carry the TOML
/// line reference; semantic problems are collected into one error list.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
    let missing: Vec<String> = REQUIRED_BLOCKS
        .iter()
        .filter(|b| !table.contains_key(**b))
        .map(|b| format!("missing required block [{b}]"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }
    let config: ScenarioConfig = toml::from_str(text)
        .map_err(|e| Error::Config(vec![e.to_string()]))?;
    let errs = validate_static(&config);
    if errs.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(errs))
    }
}

fn validate_static(c: &ScenarioConfig) -> Vec<String> {
    let mut errs = Vec::new();
    match c.fluid.model {
        FluidModelKind::Water => {
            if c.fluid.isothermal {
                errs.push("fluid: the water model is non-isothermal".into());
            }
            if c.fluid.saturation_law.is_none() {
                errs.push("fluid: the water model needs a saturation_law".into());
            }
        }
        FluidModelKind::ImmiscibleTwoComponent => {
            if !c.fluid.isothermal {
                errs.push("fluid: the immiscible two-component model is isothermal".into());
            }
            if c.fluid.saturation_law.is_some() {
                errs.push("fluid: the immiscible model takes no saturation law".into());
            }
        }
    }
    if c.fluid.saturation_law == Some(SaturationLawKind::Table) {
        if c.fluid.saturation_table.len() < 2 {
            errs.push("fluid: table law needs at least two (T, p) rows".into());
        }
        for w in c.fluid.saturation_table.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                errs.push("fluid: saturation table must be strictly increasing in T and p".into());
            }
        }
    }
    if !(c.well.radius_m > 0.0) {
        errs.push(format!("well: radius {} must be positive", c.well.radius_m));
    }
    if c.well.branch.is_empty() {
        errs.push("well: at least one branch is required".into());
    }
    for (k, b) in c.well.branch.iter().enumerate() {
        if b.segments == 0 {
            errs.push(format!("well: branch {k} needs at least one segment"));
        }
        if let Some(r) = b.radius_m {
            if !(r > 0.0) {
                errs.push(format!("well: branch {k} radius {r} must be positive"));
            }
        }
    }
    errs.extend(c.dfm.validate());
    if c.friction.f_q < 0.0 {
        errs.push(format!("friction: f_q = {} must be non-negative", c.friction.f_q));
    }
    if !(c.monitoring.min_head_pressure_pa > 0.0) {
        errs.push("monitoring: min_head_pressure_pa must be positive".into());
    }
    match (c.monitoring.max_rate_kg_per_s, c.monitoring.max_rate_mol_per_s) {
        (Some(_), Some(_)) => {
            errs.push("monitoring: give at most one of max_rate_kg_per_s / max_rate_mol_per_s".into())
        }
        (Some(_), None) if c.fluid.model == FluidModelKind::ImmiscibleTwoComponent => errs.push(
            "monitoring: mass rates are ambiguous for multi-component fluids, use max_rate_mol_per_s"
                .into(),
        ),
        _ => {}
    }
    for r in [
        c.monitoring.max_rate_kg_per_s,
        c.monitoring.max_rate_mol_per_s,
    ]
    .into_iter()
    .flatten()
    {
        if !(r > 0.0) {
            errs.push(format!("monitoring: rate bound {r} must be positive"));
        }
    }
    if !(c.time.dt_initial_s > 0.0 && c.time.dt_initial_s <= c.time.dt_max_s) {
        errs.push(format!(
            "time: need 0 < dt_initial_s <= dt_max_s, got {} and {}",
            c.time.dt_initial_s, c.time.dt_max_s
        ));
    }
    if !(c.time.dt_growth > 1.0) {
        errs.push(format!("time: dt_growth = {} must exceed 1", c.time.dt_growth));
    }
    if !(c.time.t_final_s > 0.0) {
        errs.push("time: t_final_s must be positive".into());
    }
    if !(c.solver.rel_residual_tol > 0.0 && c.solver.increment_tol > 0.0) {
        errs.push("solver: tolerances must be positive".into());
    }
    if !c.leaf_inflow.is_empty() && !c.fluid.isothermal {
        errs.push("leaf_inflow: prescribed velocities are supported for isothermal fluids only".into());
    }
    for t in &c.output.profile_times_s {
        if !(*t > 0.0 && *t <= c.time.t_final_s) {
            errs.push(format!("output: profile time {t} outside (0, t_final]"));
        }
    }
    for (k, f) in c.feed.iter().enumerate() {
        if f.wi_d_m3 < 0.0 || f.wi_f_w_per_k < 0.0 {
            errs.push(format!("feed {k}: well indexes must be non-negative"));
        }
        if !(0.0..=1.0).contains(&f.reservoir_liquid_saturation) {
            errs.push(format!("feed {k}: reservoir saturation outside [0, 1]"));
        }
    }
    if matches!(c.initial.phase, InitialPhase::TwoPhase)
        && !(0.0..=1.0).contains(&c.initial.gas_saturation)
    {
        errs.push("initial: gas_saturation outside [0, 1]".into());
    }
    errs
}

/// Everything needed to run a scenario.
pub struct BuiltScenario {
    pub config: ScenarioConfig,
    pub case: WellCase,
    pub initial: WellState,
    pub timestep: TimeStepConfig,
    pub solver: SolverConfig,
    pub warnings: Vec<String>,
}

/// Build the runnable problem from a validated config.
pub fn build_scenario(config: ScenarioConfig) -> Result<BuiltScenario> {
    let mut errs = Vec::new();
    let mut warnings = Vec::new();

    let fluid = match config.fluid.model {
        FluidModelKind::Water => {
            let law = match config.fluid.saturation_law.as_ref().unwrap() {
                SaturationLawKind::Quartic => SaturationLaw::Quartic,
                SaturationLawKind::ClausiusClapeyron => SaturationLaw::ClausiusClapeyron {
                    log10: config.fluid.clausius_log10,
                },
                SaturationLawKind::Table => {
                    SaturationLaw::Table(config.fluid.saturation_table.clone())
                }
            };
            FluidModel::water(config.fluid.water.clone(), law)?
        }
        FluidModelKind::ImmiscibleTwoComponent => {
            FluidModel::immiscible(config.fluid.immiscible.clone())?
        }
    };

    let branches: Vec<BranchSpec> = config
        .well
        .branch
        .iter()
        .map(|b| BranchSpec {
            from: Point::new(b.from[0], b.from[1], b.from[2]),
            to: Point::new(b.to[0], b.to[1], b.to[2]),
            segments: b.segments,
            radius: b.radius_m.unwrap_or(config.well.radius_m),
        })
        .collect();
    let mesh = build_well_mesh(
        Point::new(config.well.root[0], config.well.root[1], config.well.root[2]),
        &branches,
    )?;

    let mut feeds = Vec::new();
    for (k, f) in config.feed.iter().enumerate() {
        if let Some(node) = f.at.resolve(&mesh, &mut errs, &format!("feed {k}")) {
            feeds.push(FeedZone::new(
                node,
                f.reservoir_pressure_pa,
                f.reservoir_temperature_k,
                [
                    f.reservoir_liquid_saturation,
                    1.0 - f.reservoir_liquid_saturation,
                ],
                f.wi_d_m3,
                f.wi_f_w_per_k,
                f.kr,
                &fluid,
            )?);
        }
    }
    let mut leaf_inflows = Vec::new();
    for (k, l) in config.leaf_inflow.iter().enumerate() {
        if let Some(node) = l.at.resolve(&mesh, &mut errs, &format!("leaf_inflow {k}")) {
            if node == mesh.root() {
                errs.push(format!("leaf_inflow {k}: selector resolves to the head node"));
            } else {
                leaf_inflows.push(LeafInflow {
                    node,
                    u: [l.u_l_m_per_s, l.u_g_m_per_s],
                });
            }
        }
    }

    let max_molar_rate = match (
        config.monitoring.max_rate_kg_per_s,
        config.monitoring.max_rate_mol_per_s,
    ) {
        (Some(kg), None) => kg / fluid.molar_mass(0),
        (None, Some(mol)) => mol,
        (None, None) => f64::INFINITY,
        (Some(_), Some(_)) => unreachable!("rejected by validation"),
    };

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let case = WellCase {
        mesh,
        fluid,
        dfm: config.dfm,
        friction: config.friction,
        thermal: ThermalParams {
            lambda: [
                config.thermal.lambda_l_w_per_m_k,
                config.thermal.lambda_g_w_per_m_k,
            ],
        },
        feeds,
        leaf_inflows,
        monitor: MonitorSpec {
            min_head_pressure: config.monitoring.min_head_pressure_pa,
            max_molar_rate,
        },
    };

    let phases = match config.initial.phase {
        InitialPhase::Liquid => PhaseSet::single(Phase::Liquid),
        InitialPhase::Gas => PhaseSet::single(Phase::Gas),
        InitialPhase::TwoPhase => PhaseSet::BOTH,
    };
    let mut initial = hydrostatic_state(
        &case,
        config.initial.head_pressure_pa,
        config.initial.temperature_k,
        phases,
        config.initial.gas_saturation,
    )?;
    // the initial state must be consistent with the flash
    let mut flashed = 0usize;
    for st in &mut initial.nodes {
        if crate::fluid::flash_update(st, &case.fluid)?.changed {
            flashed += 1;
        }
    }
    if flashed > 0 {
        warnings.push(format!(
            "initial state not at phase equilibrium: flash switched {flashed} node(s)"
        ));
    }

    let timestep = TimeStepConfig {
        dt_init: config.time.dt_initial_s,
        dt_max: config.time.dt_max_s,
        growth: config.time.dt_growth,
        max_newton_iter: config.time.max_newton_iter,
        t_final: config.time.t_final_s,
        dt_floor: config.time.dt_floor_s,
    };
    let solver = SolverConfig {
        rel_residual_tol: config.solver.rel_residual_tol,
        increment_tol: config.solver.increment_tol,
        ..Default::default()
    };

    Ok(BuiltScenario {
        config,
        case,
        initial,
        timestep,
        solver,
        warnings,
    })
}

/// Parse, validate and build in one go.
pub fn load_scenario(text: &str) -> Result<BuiltScenario> {
    build_scenario(parse_scenario(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[fluid]
model = "water"
saturation_law = "quartic"

[well]
radius_m = 0.05
root = [0.0, 0.0, 0.0]

[[well.branch]]
from = [0.0, 0.0, 0.0]
to = [0.0, 0.0, -100.0]
segments = 10

[monitoring]
min_head_pressure_pa = 5e5
max_rate_kg_per_s = 15.0

[initial]
temperature_k = 350.0
head_pressure_pa = 5e5
phase = "liquid"

[time]
t_final_s = 100.0
dt_initial_s = 5.0
dt_max_s = 20.0

[output]
directory = "out/minimal"
"#;

    #[test]
    fn minimal_scenario_parses_and_builds() {
        let built = load_scenario(MINIMAL).unwrap();
        assert_eq!(built.case.mesh.nodes.len(), 11);
        assert!((built.case.monitor.max_molar_rate - 15.0 / 0.018).abs() < 1e-9);
        assert!(built.warnings.is_empty());
    }

    #[test]
    fn empty_file_lists_all_required_blocks() {
        let err = parse_scenario("").unwrap_err();
        let msg = err.to_string();
        for block in REQUIRED_BLOCKS {
            assert!(msg.contains(block), "missing {block} in: {msg}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[output]", "unknown_key = 1\n[output]");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("unknown"), "{err}");
    }

    #[test]
    fn config_round_trips_through_serialization() {
        let config = parse_scenario(MINIMAL).unwrap();
        let text = toml::to_string(&config).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn invariant_violations_are_collected() {
        let text = MINIMAL
            .replace("radius_m = 0.05", "radius_m = -1.0")
            .replace("dt_initial_s = 5.0", "dt_initial_s = 50.0");
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("radius"));
        assert!(msg.contains("dt_initial_s"));
    }

    #[test]
    fn mass_rate_rejected_for_two_component_fluid() {
        let text = MINIMAL
            .replace(
                "model = \"water\"\nsaturation_law = \"quartic\"",
                "model = \"immiscible-two-component\"\nisothermal = true",
            );
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("max_rate_mol_per_s"), "{err}");
    }
}
