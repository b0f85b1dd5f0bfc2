use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wellbore::error::Error;
use wellbore::{bl, checks, output, scenario, siu, solver};

/// Transient two-phase geothermal wellbore simulator.
#[derive(Parser)]
#[command(name = "wellbore", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the output tables.
    Run { config: PathBuf },
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
    /// Sample the monotone-flux and momentum-elimination properties.
    FluxCheck {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 20_240_901)]
        seed: u64,
    },
    /// Run the compositional model against the scalar saturation solver.
    BlCompare { config: PathBuf },
    /// Run the transient model against the single-implicit-unknown model.
    SiuCompare { config: PathBuf },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Geometry(_) => EXIT_VALIDATION,
        _ => EXIT_SOLVER,
    }
}

fn load(path: &PathBuf) -> Result<scenario::BuiltScenario, Error> {
    let text = std::fs::read_to_string(path)?;
    scenario::load_scenario(&text)
}

fn cmd_run(path: &PathBuf) -> Result<u8, Error> {
    let built = load(path)?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let result = solver::run_transient(
        &built.case,
        built.initial.clone(),
        &built.timestep,
        &built.solver,
        &built.config.output.profile_times_s,
    )?;
    output::write_outputs(&result, &built)?;
    println!(
        "{} steps, {} restarts, {} Newton iterations; outputs in {}",
        result.report.steps,
        result.report.restarts,
        result.report.newton_total,
        built.config.output.directory
    );
    if let Some(last) = result.history.last() {
        println!(
            "final: t = {} s, p_head = {:.6e} Pa, q = {:.6} kg/s ({} constraint active)",
            last.t,
            last.p_head,
            last.q_mass,
            last.mode.name()
        );
    }
    if let Some(why) = &result.aborted {
        eprintln!("solver failure: {why}");
        return Ok(EXIT_SOLVER);
    }
    Ok(0)
}

fn cmd_validate(path: &PathBuf) -> Result<u8, Error> {
    let built = load(path)?;
    println!(
        "ok: {} nodes, {} edges, {} feed zone(s), {} primary unknowns",
        built.case.mesh.nodes.len(),
        built.case.mesh.edges.len(),
        built.case.feeds.len(),
        built.case.mesh.nodes.len() * built.case.n_primary(),
    );
    for w in &built.warnings {
        println!("warning: {w}");
    }
    Ok(0)
}

fn cmd_flux_check(samples: usize, seed: u64) -> Result<u8, Error> {
    let params = wellbore::dfm::DfmParams::default();
    let flux = checks::run_flux_checks(samples, seed, &params)?;
    let momentum = checks::run_momentum_checks(samples.min(10_000), seed)?;
    println!("flux property sampler: {} samples, seed {}", flux.samples, seed);
    println!("  consistency max |F(s,s) - f(s)|: {:.3e}", flux.consistency_max);
    println!("  monotonicity violations: {}", flux.monotonicity_violations);
    println!("  sign-property violations: {}", flux.sign_violations);
    println!("  s*C0 bound/monotonicity violations: {}", flux.sc0_violations);
    println!("momentum elimination: {} samples", momentum.samples);
    println!("  worst relative residual: {:.3e}", momentum.worst_relative);
    if flux.passed() && momentum.passed() {
        println!("all checks passed");
        Ok(0)
    } else {
        println!("checks FAILED");
        Ok(EXIT_SOLVER)
    }
}

fn cmd_bl_compare(path: &PathBuf) -> Result<u8, Error> {
    let built = load(path)?;
    let cmp = bl::compare_with_compositional(&built)?;
    println!("scalar oracle vs compositional model at the final time:");
    println!("  L1 saturation difference (normalized): {:.6e}", cmp.l1);
    println!("  Linf saturation difference: {:.6e}", cmp.linf);
    println!(
        "  front positions: compositional {:.3} m, oracle {:.3} m (cell width {} m)",
        cmp.front_compositional, cmp.front_oracle, cmp.cell_width
    );
    println!(
        "  mixture volumetric flux spread along the well: {:.3e}",
        cmp.mixture_flux_spread
    );
    Ok(0)
}

fn cmd_siu_compare(path: &PathBuf) -> Result<u8, Error> {
    let built = load(path)?;
    let cmp = siu::compare_with_transient(&built)?;
    println!("multi-segment transient vs single-implicit-unknown model:");
    println!(
        "  head pressure: {:.6e} Pa vs {:.6e} Pa ({:.4}% relative)",
        cmp.ms_p_head,
        cmp.siu_p_head,
        100.0 * cmp.p_head_rel_diff
    );
    println!(
        "  mass rate: {:.6} kg/s vs {:.6} kg/s ({:.4}% relative)",
        cmp.ms_q_mass,
        cmp.siu_q_mass,
        100.0 * cmp.q_rel_diff
    );
    println!(
        "  active constraints: {} vs {}",
        cmp.ms_mode.name(),
        cmp.siu_mode.name()
    );
    println!(
        "  profile spread: max |dT| = {:.3} K, max |ds_g| = {:.4}",
        cmp.max_t_diff, cmp.max_s_g_diff
    );
    for w in &cmp.siu.warnings {
        eprintln!("warning: {w}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Validate { config } => cmd_validate(config),
        Command::FluxCheck { samples, seed } => cmd_flux_check(*samples, *seed),
        Command::BlCompare { config } => cmd_bl_compare(config),
        Command::SiuCompare { config } => cmd_siu_compare(config),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
