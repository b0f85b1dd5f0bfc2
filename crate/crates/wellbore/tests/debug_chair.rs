use wellbore::assembly::{assemble, ActiveConstraint};
use wellbore::scenario::load_scenario;

#[test]
#[ignore]
fn debug_first_chair_step() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/chair.cfg"
    ))
    .unwrap();
    let built = load_scenario(&text).unwrap();
    let case = &built.case;
    let mut state = built.initial.clone();
    let prev_acc = state.accumulations(case).unwrap();
    let dt = 10.0;
    let mut mode = ActiveConstraint::Pressure;
    for it in 0..30 {
        let sys = match assemble(case, &state, &prev_acc, dt, mode) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("iter {it}: assemble failed: {e}");
                return;
            }
        };
        let rnorm: f64 = sys.residual.iter().map(|r| r.abs()).sum();
        let rmax_idx = sys
            .residual
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        eprintln!(
            "iter {it}: |R|_1 = {rnorm:.6e}, worst row {} = {:.3e}, q14 = {:.3}, p_head = {:.4e}",
            rmax_idx.0, rmax_idx.1, sys.q_head_molar, sys.p_head
        );
        if mode == ActiveConstraint::Pressure && sys.q_head_molar > case.monitor.max_molar_rate {
            eprintln!("  switch to rate");
            mode = ActiveConstraint::Rate;
            continue;
        }
        let mut rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let lu = match sys.jac.factor() {
            Ok(l) => l,
            Err(e) => {
                eprintln!("  factor failed: {e}");
                return;
            }
        };
        lu.solve_in_place(&mut rhs);
        let dmax = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        eprintln!("  |dx|_inf = {dmax:.4e}");
        if let Err(e) = state.apply_increment(&case.fluid, &rhs) {
            eprintln!("  apply failed: {e}");
            return;
        }
        let mut changed = 0;
        for st in &mut state.nodes {
            if wellbore::fluid::flash_update(st, &case.fluid).unwrap().changed {
                changed += 1;
            }
        }
        if changed > 0 {
            eprintln!("  flash changed {changed} nodes");
        }
    }
}
