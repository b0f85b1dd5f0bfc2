//! Fully implicit time stepping: semi-smooth Newton with active sets for the
//! present phases and the head-node monitoring, plus the adaptive time-step
//! controller.

use crate::assembly::{
    assemble, global_balance, Accumulation, ActiveConstraint, ConservationReport, WellCase,
    WellState,
};
use crate::error::{Error, Result};
use crate::fluid::{flash_update, primary_vars, NodeState, Phase, PhaseSet, PrimaryVars, G_ACCEL};

/// Controller parameters.
#[derive(Clone, Copy, Debug)]
pub struct TimeStepConfig {
    pub dt_init: f64,
    pub dt_max: f64,
    /// Multiplicative growth after a successful step (> 1).
    pub growth: f64,
    pub max_newton_iter: usize,
    pub t_final: f64,
    /// Abort threshold for the halving cascade, s.
    pub dt_floor: f64,
}

impl Default for TimeStepConfig {
    fn default() -> Self {
        Self {
            dt_init: 1.0,
            dt_max: 40.0,
            growth: 1.1,
            max_newton_iter: 50,
            t_final: 100.0,
            dt_floor: 1e-6,
        }
    }
}

/// Nonlinear convergence tolerances and update limits.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// l1 residual reduction relative to the first iterate.
    pub rel_residual_tol: f64,
    /// l-inf over nodes of |ds_g| + |dp|/1e5 + |dT|/1e2.
    pub increment_tol: f64,
    pub weight_pressure: f64,
    pub weight_temperature: f64,
    /// Per-iteration bound on saturation changes; the whole Newton step is
    /// scaled down when any node exceeds a bound, preserving the direction.
    pub max_saturation_step: f64,
    /// Per-iteration bound on temperature changes, K.
    pub max_temperature_step: f64,
    /// Per-iteration bound on pressure changes relative to max(p, 1e5 Pa).
    pub max_pressure_step_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_residual_tol: 1e-8,
            increment_tol: 1e-10,
            weight_pressure: 1e-5,
            weight_temperature: 1e-2,
            max_saturation_step: 0.5,
            max_temperature_step: 25.0,
            max_pressure_step_rel: 0.5,
        }
    }
}

/// Global scaling of the Newton step from the worst per-node bound violation.
fn damping_factor(case: &WellCase, state: &WellState, dx: &[f64], cfg: &SolverConfig) -> f64 {
    let mut theta = 1.0f64;
    for (v, st) in state.nodes.iter().enumerate() {
        let dp = dx[2 * v].abs();
        let lim_p = cfg.max_pressure_step_rel * st.p.max(1e5);
        if dp > lim_p {
            theta = theta.min(lim_p / dp);
        }
        let dx1 = dx[2 * v + 1].abs();
        let lim_1 = match primary_vars(&case.fluid, st.phases) {
            PrimaryVars::PressureTemperature => cfg.max_temperature_step,
            PrimaryVars::PressureGasSaturation => cfg.max_saturation_step,
            PrimaryVars::PressureAbsentMoles(_) => f64::INFINITY,
        };
        if dx1 > lim_1 {
            theta = theta.min(lim_1 / dx1);
        }
    }
    theta
}

/// Outcome of one converged Newton solve.
pub struct StepStats {
    pub iterations: usize,
    pub mode: ActiveConstraint,
    pub monitor_switches: usize,
    pub phase_appeared: bool,
    pub phase_disappeared: bool,
    pub sys: crate::assembly::AssembledSystem,
}

fn weighted_increment(case: &WellCase, state: &WellState, dx: &[f64], cfg: &SolverConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for (v, st) in state.nodes.iter().enumerate() {
        let dp = dx[2 * v].abs() * cfg.weight_pressure;
        let second = match primary_vars(&case.fluid, st.phases) {
            PrimaryVars::PressureTemperature => dx[2 * v + 1].abs() * cfg.weight_temperature,
            PrimaryVars::PressureGasSaturation => dx[2 * v + 1].abs(),
            // absent-component moles scaled by the control volume's molar content
            PrimaryVars::PressureAbsentMoles(_) => dx[2 * v + 1].abs(),
        };
        worst = worst.max(dp + second);
    }
    worst
}

fn flash_all(state: &mut WellState, case: &WellCase) -> Result<(bool, bool, bool)> {
    let trace = std::env::var_os("WELLBORE_TRACE_FLASH").is_some();
    let mut changed = false;
    let mut appeared = false;
    let mut disappeared = false;
    for (v, st) in state.nodes.iter_mut().enumerate() {
        let before = (st.p, st.t, st.s);
        let out = flash_update(st, &case.fluid)?;
        if trace && out.changed {
            eprintln!(
                "    flash node {v}: {:?} p={:.6e} t={:.4} s={:?} -> s={:?}",
                out, before.0, before.1, before.2, st.s
            );
        }
        changed |= out.changed;
        appeared |= out.appeared.is_some();
        disappeared |= out.disappeared.is_some();
    }
    Ok((changed, appeared, disappeared))
}

/// One fully implicit step: Newton iterations with per-iterate flash and
/// monitoring updates. Returns the converged state or a failure signal for
/// the controller.
pub fn newton_solve_timestep(
    case: &WellCase,
    prev: &WellState,
    prev_acc: &[Accumulation],
    dt: f64,
    mode_in: ActiveConstraint,
    ts: &TimeStepConfig,
    cfg: &SolverConfig,
) -> Result<(WellState, StepStats)> {
    let mut state = prev.clone();
    let mut mode = mode_in;
    let mut iters = 0usize;
    let mut switches = 0usize;
    let mut appeared = false;
    let mut disappeared = false;
    let mut r0_norm: Option<f64> = None;
    let mut last_inc: Option<f64> = None;
    let mut flash_changed_last = false;
    let q_max = case.monitor.max_molar_rate;
    let p_min = case.monitor.min_head_pressure;

    let trace = std::env::var_os("WELLBORE_TRACE_NEWTON").is_some();
    loop {
        let sys = assemble(case, &state, prev_acc, dt, mode)?;
        if trace {
            let rnorm: f64 = sys.residual.iter().map(|r| r.abs()).sum();
            let (worst, val) = sys
                .residual
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, v)| (i, *v))
                .unwrap();
            eprintln!(
                "  newton it={iters} mode={} |R|={rnorm:.4e} worst[{worst}]={val:.3e} inc={:?} flash_last={flash_changed_last}",
                mode.name(),
                last_inc
            );
        }

        // monitoring active-set update from the freshly evaluated state
        let violated = match mode {
            ActiveConstraint::Pressure => sys.q_head_molar > q_max * (1.0 + 1e-12),
            ActiveConstraint::Rate => sys.p_head < p_min * (1.0 - 1e-12),
        };
        if violated {
            if switches > 2 * ts.max_newton_iter {
                return Err(Error::Solver(
                    "monitoring constraint oscillates without settling".into(),
                ));
            }
            mode = match mode {
                ActiveConstraint::Pressure => ActiveConstraint::Rate,
                ActiveConstraint::Rate => ActiveConstraint::Pressure,
            };
            switches += 1;
            flash_changed_last = true;
            continue;
        }

        let rnorm: f64 = sys.residual.iter().map(|r| r.abs()).sum();
        if !rnorm.is_finite() {
            return Err(Error::Solver(format!("non-finite residual at iteration {iters}")));
        }
        let scale = *r0_norm.get_or_insert(rnorm.max(1e-300));
        let res_converged = rnorm <= cfg.rel_residual_tol * scale;
        let inc_converged = last_inc.is_some_and(|i| i <= cfg.increment_tol);
        if (res_converged || inc_converged) && !flash_changed_last {
            return Ok((
                state,
                StepStats {
                    iterations: iters,
                    mode,
                    monitor_switches: switches,
                    phase_appeared: appeared,
                    phase_disappeared: disappeared,
                    sys,
                },
            ));
        }
        if iters >= ts.max_newton_iter {
            return Err(Error::Solver(format!(
                "no convergence in {} Newton iterations (|R| = {rnorm:.3e}, |R0| = {scale:.3e})",
                ts.max_newton_iter
            )));
        }

        let mut rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let lu = sys.jac.factor()?;
        lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver("non-finite Newton increment".into()));
        }
        let theta = damping_factor(case, &state, &rhs, cfg);
        if theta < 1.0 {
            for x in &mut rhs {
                *x *= theta;
            }
        }
        state.apply_increment(&case.fluid, &rhs)?;
        iters += 1;
        last_inc = Some(weighted_increment(case, &state, &rhs, cfg));

        let (changed, app, dis) = flash_all(&mut state, case)?;
        appeared |= app;
        disappeared |= dis;
        flash_changed_last = changed;
    }
}

/// One accepted-step record of the transient run.
#[derive(Clone, Debug)]
pub struct HistoryRow {
    pub t: f64,
    pub dt: f64,
    pub p_head: f64,
    pub q_molar: f64,
    pub q_mass: f64,
    pub mode: ActiveConstraint,
    pub leaf_pressures: Vec<f64>,
    pub gas_volume: f64,
    pub newton_iterations: usize,
    pub restarts: usize,
    pub monitor_switches: usize,
    pub phase_appeared: bool,
    /// min((q_max - q)/max(q_max, 1), (p - p_min)/p_min), dimensionless.
    pub complementarity: f64,
    pub conservation: ConservationReport,
}

/// Aggregate run report.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub steps: usize,
    pub restarts: usize,
    pub newton_total: usize,
    pub first_gas: Option<(usize, Vec<usize>)>,
    pub warnings: Vec<String>,
}

pub struct RunResult {
    pub history: Vec<HistoryRow>,
    /// States captured at the requested profile times plus the final time.
    pub snapshots: Vec<(f64, WellState)>,
    /// Edge velocities (u_g, u_l, u_m) alongside each snapshot.
    pub snapshot_velocities: Vec<Vec<[f64; 3]>>,
    pub final_state: WellState,
    pub report: RunReport,
    /// Set when the halving cascade hit the floor; the partial history is
    /// preserved.
    pub aborted: Option<String>,
}

/// Discrete hydrostatic equilibrium built edge by edge from the head anchor:
/// each child pressure solves p_c = p_p + rho_m(p_p, p_c) g dz to machine
/// precision.
pub fn hydrostatic_state(
    case: &WellCase,
    p_head: f64,
    t: f64,
    phases: PhaseSet,
    s_g: f64,
) -> Result<WellState> {
    let make = |p: f64| -> NodeState {
        match phases.only() {
            Some(phase) => NodeState::single_phase(&case.fluid, phase, p, t),
            None => NodeState::two_phase(&case.fluid, p, t, s_g),
        }
    };
    let mesh = &case.mesh;
    let mut nodes = vec![make(p_head); mesh.nodes.len()];
    for e in &mesh.edges {
        let dz = mesh.nodes[e.parent].pos.z - mesh.nodes[e.child].pos.z;
        let rho_p = nodes[e.parent].mixture_density(&case.fluid)?;
        let mut p = nodes[e.parent].p + rho_p * G_ACCEL * dz;
        for _ in 0..100 {
            let rho_c = make(p).mixture_density(&case.fluid)?;
            let p_new = nodes[e.parent].p + 0.5 * (rho_p + rho_c) * G_ACCEL * dz;
            if (p_new - p).abs() <= f64::EPSILON * p_new.abs() {
                p = p_new;
                break;
            }
            p = p_new;
        }
        nodes[e.child] = make(p);
    }
    Ok(WellState { nodes })
}

/// Run the transient: adaptive time stepping with halving on Newton failure
/// and 1.1x growth on success, capped at `dt_max` and clipped to land on the
/// requested profile times and the final time exactly.
pub fn run_transient(
    case: &WellCase,
    initial: WellState,
    ts: &TimeStepConfig,
    cfg: &SolverConfig,
    profile_times: &[f64],
) -> Result<RunResult> {
    let mut state = initial;
    let mut mode = ActiveConstraint::Pressure;
    let mut dt_nominal = ts.dt_init;
    let mut t = 0.0;
    let mut history = Vec::new();
    let mut report = RunReport::default();
    let mut snapshots = Vec::new();
    let mut snapshot_velocities = Vec::new();
    let mut pending_restarts = 0usize;
    let mut had_gas = state.any_gas();
    let mut targets: Vec<f64> = profile_times
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x < ts.t_final)
        .collect();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.push(ts.t_final);
    let mut next_target = 0usize;
    let mut aborted = None;
    let leaves = case.mesh.leaves();

    while t < ts.t_final * (1.0 - 1e-12) {
        let mut dt = dt_nominal.min(ts.dt_max);
        while next_target < targets.len() && targets[next_target] <= t * (1.0 + 1e-12) {
            next_target += 1;
        }
        if next_target < targets.len() {
            dt = dt.min(targets[next_target] - t);
        }
        let prev_acc = state.accumulations(case)?;
        let trace = std::env::var_os("WELLBORE_TRACE").is_some();
        match newton_solve_timestep(case, &state, &prev_acc, dt, mode, ts, cfg) {
            Ok((new_state, stats)) => {
                if trace {
                    eprintln!(
                        "step {} t={:.3} dt={:.4} iters={} mode={} q={:.2} p={:.4e} gasvol={:.3e}",
                        report.steps,
                        t + dt,
                        dt,
                        stats.iterations,
                        stats.mode.name(),
                        stats.sys.q_head_molar,
                        stats.sys.p_head,
                        new_state.gas_volume(&case.mesh)
                    );
                }
                t += dt;
                let balance = global_balance(case, &new_state, &prev_acc, dt, &stats.sys)?;
                let q_max = case.monitor.max_molar_rate;
                let p_min = case.monitor.min_head_pressure;
                let complementarity = ((q_max - stats.sys.q_head_molar) / q_max.max(1.0))
                    .min((stats.sys.p_head - p_min) / p_min.max(1.0));
                history.push(HistoryRow {
                    t,
                    dt,
                    p_head: stats.sys.p_head,
                    q_molar: stats.sys.q_head_molar,
                    q_mass: stats.sys.q_head_mass,
                    mode: stats.mode,
                    leaf_pressures: leaves.iter().map(|&v| new_state.nodes[v].p).collect(),
                    gas_volume: new_state.gas_volume(&case.mesh),
                    newton_iterations: stats.iterations,
                    restarts: pending_restarts,
                    monitor_switches: stats.monitor_switches,
                    phase_appeared: stats.phase_appeared,
                    complementarity,
                    conservation: balance,
                });
                report.steps += 1;
                report.newton_total += stats.iterations;
                if !had_gas && new_state.any_gas() {
                    had_gas = true;
                    let gas_nodes: Vec<usize> = new_state
                        .nodes
                        .iter()
                        .enumerate()
                        .filter(|(_, st)| st.phases.contains(Phase::Gas))
                        .map(|(v, _)| v)
                        .collect();
                    report.first_gas = Some((report.steps - 1, gas_nodes));
                }
                if next_target < targets.len() && (t - targets[next_target]).abs() <= 1e-9 * t.max(1.0)
                {
                    snapshots.push((t, new_state.clone()));
                    snapshot_velocities.push(stats.sys.edge_velocities.clone());
                    next_target += 1;
                }
                mode = stats.mode;
                state = new_state;
                pending_restarts = 0;
                dt_nominal = (dt_nominal * ts.growth).min(ts.dt_max);
            }
            Err(err) => {
                if trace {
                    eprintln!("step FAIL t={t:.3} dt={dt:.4}: {err}");
                }
                report.restarts += 1;
                pending_restarts += 1;
                dt_nominal = dt * 0.5;
                report
                    .warnings
                    .push(format!("t = {t:.6} s: step of {dt:.6} s failed ({err}); halving"));
                if dt_nominal < ts.dt_floor {
                    let what = Error::TimeStepUnderflow {
                        dt: dt_nominal,
                        floor: ts.dt_floor,
                        t,
                    };
                    aborted = Some(what.to_string());
                    break;
                }
            }
        }
    }

    if snapshots.last().map_or(true, |(ts_, _)| (*ts_ - t).abs() > 1e-9) {
        // capture the final state even if the last target landed inexactly
        let prev_acc = state.accumulations(case)?;
        let sys = assemble(case, &state, &prev_acc, ts.dt_max.max(1.0), mode)?;
        snapshots.push((t, state.clone()));
        snapshot_velocities.push(sys.edge_velocities);
    }

    Ok(RunResult {
        history,
        snapshots,
        snapshot_velocities,
        final_state: state.clone(),
        report,
        aborted,
    })
}

/// Full reduced Jacobian (dense copy) by finite differences of the assembled
/// residual, used by verification tests.
pub fn finite_difference_jacobian(
    case: &WellCase,
    state: &WellState,
    prev_acc: &[Accumulation],
    dt: f64,
    mode: ActiveConstraint,
) -> Result<Vec<Vec<f64>>> {
    let x0 = state.primaries(&case.fluid);
    let n = x0.len();
    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let scale = x0[j].abs().max(1.0);
        let h = 1e-7 * scale;
        let mut xp = x0.clone();
        xp[j] += h;
        let mut xm = x0.clone();
        xm[j] -= h;
        let mut sp = state.clone();
        sp.set_primaries(&case.fluid, &xp)?;
        let mut sm = state.clone();
        sm.set_primaries(&case.fluid, &xm)?;
        let rp = assemble(case, &sp, prev_acc, dt, mode)?.residual;
        let rm = assemble(case, &sm, prev_acc, dt, mode)?.residual;
        for i in 0..n {
            jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}
