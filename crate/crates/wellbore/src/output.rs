//! Result serialization: delimiter-separated tables with fixed headers and a
//! machine-readable run summary. Numbers are printed at full round-trip
//! precision and the writers are deterministic, so a rerun produces
//! byte-identical files.

use crate::assembly::WellCase;
use crate::error::Result;
use crate::fluid::{Phase, PHASES};
use crate::scenario::BuiltScenario;
use crate::solver::RunResult;
use std::fmt::Write as _;
use std::path::Path;

fn join(fields: &[String]) -> String {
    fields.join(",")
}

/// History table: one row per accepted time step.
pub fn history_csv(result: &RunResult, case: &WellCase) -> String {
    let leaves = case.mesh.leaves();
    let mut header = vec![
        "t_s".to_string(),
        "dt_s".to_string(),
        "p_head_pa".to_string(),
        "q_mol_per_s".to_string(),
        "q_kg_per_s".to_string(),
        "active_constraint".to_string(),
    ];
    for v in &leaves {
        header.push(format!("leaf{v}_p_pa"));
    }
    header.extend(
        [
            "gas_volume_m3",
            "newton_iterations",
            "restarts",
            "complementarity",
            "balance_worst_rel",
        ]
        .map(String::from),
    );
    let mut out = join(&header);
    out.push('\n');
    for row in &result.history {
        let mut fields = vec![
            format!("{}", row.t),
            format!("{}", row.dt),
            format!("{}", row.p_head),
            format!("{}", row.q_molar),
            format!("{}", row.q_mass),
            row.mode.name().to_string(),
        ];
        for p in &row.leaf_pressures {
            fields.push(format!("{p}"));
        }
        fields.push(format!("{}", row.gas_volume));
        fields.push(format!("{}", row.newton_iterations));
        fields.push(format!("{}", row.restarts));
        fields.push(format!("{}", row.complementarity));
        fields.push(format!("{}", row.conservation.worst_relative()));
        out.push_str(&join(&fields));
        out.push('\n');
    }
    out
}

/// Node profile table at one snapshot.
pub fn profile_csv(case: &WellCase, state: &crate::assembly::WellState) -> Result<String> {
    let mut out = String::from(
        "node,branch,arc_m,z_m,volume_m3,p_pa,t_k,s_g,zeta_l_mol_per_m3,zeta_g_mol_per_m3,h_l_j_per_mol,h_g_j_per_mol\n",
    );
    for (v, st) in state.nodes.iter().enumerate() {
        let node = &case.mesh.nodes[v];
        let mut zeta = [0.0; 2];
        let mut h = [0.0; 2];
        for phase in PHASES {
            if st.phases.contains(phase) {
                let props = case.fluid.props::<f64>(phase, st.p, st.t)?;
                zeta[phase.idx()] = props.zeta;
                h[phase.idx()] = props.h;
            }
        }
        writeln!(
            out,
            "{v},{},{},{},{},{},{},{},{},{},{},{}",
            node.branch,
            node.arc,
            node.pos.z,
            case.mesh.volume[v],
            st.p,
            st.t,
            st.s[Phase::Gas.idx()],
            zeta[0],
            zeta[1],
            h[0],
            h[1]
        )
        .expect("string write");
    }
    Ok(out)
}

/// Edge velocity table at one snapshot.
pub fn edges_csv(case: &WellCase, velocities: &[[f64; 3]]) -> String {
    let mut out = String::from("edge,parent,child,u_g_m_per_s,u_l_m_per_s,u_m_m_per_s\n");
    for (a, e) in case.mesh.edges.iter().enumerate() {
        let [u_g, u_l, u_m] = velocities[a];
        writeln!(out, "{a},{},{},{u_g},{u_l},{u_m}", e.parent, e.child).expect("string write");
    }
    out
}

/// Machine-readable run summary.
pub fn summary_text(result: &RunResult) -> String {
    let r = &result.report;
    let mean = if r.steps > 0 {
        r.newton_total as f64 / r.steps as f64
    } else {
        0.0
    };
    let mut out = String::new();
    writeln!(out, "steps = {}", r.steps).unwrap();
    writeln!(out, "restarts = {}", r.restarts).unwrap();
    writeln!(out, "newton_total = {}", r.newton_total).unwrap();
    writeln!(out, "newton_mean = {mean}").unwrap();
    if let Some(last) = result.history.last() {
        writeln!(out, "t_final_s = {}", last.t).unwrap();
        writeln!(out, "p_head_pa = {}", last.p_head).unwrap();
        writeln!(out, "q_kg_per_s = {}", last.q_mass).unwrap();
        writeln!(out, "active_constraint = {}", last.mode.name()).unwrap();
        writeln!(out, "gas_volume_m3 = {}", last.gas_volume).unwrap();
    }
    match &r.first_gas {
        Some((step, nodes)) => {
            writeln!(out, "first_gas_step = {step}").unwrap();
            let list: Vec<String> = nodes.iter().map(|v| v.to_string()).collect();
            writeln!(out, "first_gas_nodes = {}", list.join(";")).unwrap();
        }
        None => writeln!(out, "first_gas_step = none").unwrap(),
    }
    writeln!(out, "warnings = {}", r.warnings.len()).unwrap();
    for w in &r.warnings {
        writeln!(out, "# {w}").unwrap();
    }
    out
}

/// Write the full output set for a completed (or partially completed) run.
pub fn write_outputs(result: &RunResult, built: &BuiltScenario) -> Result<()> {
    let dir = Path::new(&built.config.output.directory);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("history.csv"), history_csv(result, &built.case))?;
    for ((t, state), velocities) in result.snapshots.iter().zip(&result.snapshot_velocities) {
        let tag = format!("{t:.3}");
        std::fs::write(
            dir.join(format!("profile_t{tag}s.csv")),
            profile_csv(&built.case, state)?,
        )?;
        std::fs::write(
            dir.join(format!("edges_t{tag}s.csv")),
            edges_csv(&built.case, velocities),
        )?;
    }
    std::fs::write(dir.join("summary.txt"), summary_text(result))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_round_trip() {
        // shortest round-trip formatting keeps full precision
        let x = 0.1 + 0.2;
        let s = format!("{x}");
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }
}
