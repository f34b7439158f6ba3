//! Action execution and report writing.
//!
//! Every JSON report embeds the tool version and the fully resolved config,
//! so a report file is enough to reproduce the run exactly. No timestamps or
//! host details: identical configs must produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rbsde_core::analysis::{
    check_comparison, check_skorokhod, convergence_metrics, norms, ComparisonReport, NormReport,
    SkorokhodReport,
};
use rbsde_core::driver::{probe_cond_a, probe_cond_z, probe_h2, probe_h3, ProbeOptions, SolveOptions};
use rbsde_core::report::{csv_table, fmt_f64, solution_csv, to_json};
use rbsde_core::scenarios::{DivergenceKind, GrowthTable, ScenarioSpec};
use rbsde_core::{
    penalization_sweep, snell_solution, solve_penalized, solve_plain, solve_reflected, Instance,
    PathPlan, Solution,
};

use crate::config::{
    build_instance, Action, MethodChoice, OutputFormat, RunConfig, ScenarioConfig,
};
use crate::error::CliError;

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

fn tool_info() -> ToolInfo {
    ToolInfo {
        name: "rbsde",
        version: env!("CARGO_PKG_VERSION"),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: ToolInfo,
    config: &'a RunConfig,
    report: T,
}

#[derive(Serialize)]
struct SolveSummary {
    label: String,
    method: String,
    price: f64,
    expected_terminal_k: f64,
    root_tol: f64,
    skorokhod: Option<SkorokhodReport>,
}

#[derive(Serialize)]
struct CompareSummary {
    method: String,
    tol: f64,
    report: ComparisonReport,
}

#[derive(Serialize)]
struct ProbeSummary {
    reports: Vec<rbsde_core::driver::ViolationReport>,
    all_passed: bool,
}

pub struct Written {
    pub files: Vec<PathBuf>,
}

fn wants(config: &RunConfig, format: OutputFormat) -> bool {
    config.output.formats.contains(&format)
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Writes a machine-readable error report next to the regular outputs.
pub fn write_error_report(dir: &Path, config: Option<&RunConfig>, err: &CliError) {
    #[derive(Serialize)]
    struct ErrorReport<'a> {
        tool: ToolInfo,
        error: ErrorBody,
        config: Option<&'a RunConfig>,
    }
    #[derive(Serialize)]
    struct ErrorBody {
        exit_code: i32,
        message: String,
    }
    let report = ErrorReport {
        tool: tool_info(),
        error: ErrorBody {
            exit_code: err.exit_code(),
            message: err.to_string(),
        },
        config,
    };
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("error.json"), to_json(&report));
    }
}

fn solve_options(config: &RunConfig) -> SolveOptions {
    SolveOptions {
        root_tol: config.root_tol,
        ..SolveOptions::default()
    }
}

fn path_plan(config: &RunConfig, steps: usize) -> Result<PathPlan, CliError> {
    if steps <= config.enumeration_cap {
        Ok(PathPlan {
            mode: rbsde_core::PathMode::Exact,
            enumeration_cap: config.enumeration_cap,
        })
    } else {
        let seed = config.seed.ok_or_else(|| {
            CliError::Parse("sampling requires 'seed' in the config".into())
        })?;
        Ok(PathPlan {
            mode: rbsde_core::PathMode::Sampled {
                count: config.path_samples,
                seed,
            },
            enumeration_cap: config.enumeration_cap,
        })
    }
}

fn run_method(
    inst: &Instance,
    config: &RunConfig,
    opts: &SolveOptions,
) -> Result<Solution, CliError> {
    let choice = config.method.unwrap_or(if inst.has_barrier() {
        MethodChoice::Reflected
    } else {
        MethodChoice::Plain
    });
    let sol = match choice {
        MethodChoice::Plain => solve_plain(inst, opts)?,
        MethodChoice::Reflected => solve_reflected(inst, opts)?,
        MethodChoice::Penalized => {
            let level = config
                .penalty
                .ok_or_else(|| CliError::Parse("method 'penalized' requires 'penalty'".into()))?;
            solve_penalized(inst, level, opts)?
        }
        MethodChoice::Snell => {
            if !inst.has_barrier() {
                return Err(CliError::Precondition(
                    "snell method needs a barrier".into(),
                ));
            }
            snell_solution(
                inst.lattice(),
                |t, b| inst.barrier_at(t, b).expect("barrier checked above"),
                |b| inst.terminal_at(b),
            )?
        }
    };
    Ok(sol)
}

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<Written, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    match config.action {
        Action::Solve => {
            let inst = build_instance(&config.scenario)?;
            let opts = solve_options(config);
            let sol = run_method(&inst, config, &opts)?;
            let summary = SolveSummary {
                label: inst.label().to_string(),
                method: sol.method.to_string(),
                price: sol.price(),
                expected_terminal_k: sol.expected_terminal_k(),
                root_tol: sol.root_tol,
                skorokhod: sol.barrier.is_some().then(|| check_skorokhod(&sol)).transpose()?,
            };
            if wants(config, OutputFormat::Csv) {
                write_file(out_dir, "solution.csv", &solution_csv(&sol), &mut files)?;
            }
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "solve.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: summary,
                    }),
                    &mut files,
                )?;
            }
        }
        Action::PenalizeSweep => {
            let inst = build_instance(&config.scenario)?;
            let opts = solve_options(config);
            let schedule = config
                .penalty_schedule
                .as_ref()
                .expect("validated: schedule present");
            let sweep = penalization_sweep(&inst, schedule, &opts)?;
            let plan = path_plan(config, inst.lattice().steps())?;
            let report = convergence_metrics(&sweep, config.order.unwrap_or(2.0), &plan)?;
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "sweep.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: &report,
                    }),
                    &mut files,
                )?;
            }
            if wants(config, OutputFormat::Csv) {
                let rows: Vec<Vec<String>> = report
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            fmt_f64(r.penalty),
                            fmt_f64(r.max_node_y_gap),
                            fmt_f64(r.sup_y_gap),
                            fmt_f64(r.z_gap),
                            fmt_f64(r.k_gap),
                        ]
                    })
                    .collect();
                write_file(
                    out_dir,
                    "sweep.csv",
                    &csv_table(
                        &["penalty", "max_node_y_gap", "sup_y_gap", "z_gap", "k_gap"],
                        &rows,
                    ),
                    &mut files,
                )?;
            }
        }
        Action::Compare => {
            let lo = build_instance(&config.scenario)?;
            let hi = build_instance(config.compare_with.as_ref().expect("validated"))?;
            let opts = solve_options(config);
            let sol_lo = run_method(&lo, config, &opts)?;
            let sol_hi = run_method(&hi, config, &opts)?;
            let tol = config.comparison_tol.unwrap_or(config.probe_tol);
            let report = check_comparison(&sol_lo, &sol_hi, tol)?;
            let passed = report.passed();
            let summary = CompareSummary {
                method: sol_lo.method.to_string(),
                tol,
                report,
            };
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "compare.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: summary,
                    }),
                    &mut files,
                )?;
            }
            if !passed {
                return Err(CliError::CheckFailed(
                    "comparison found node-wise order violations; see compare.json".into(),
                ));
            }
        }
        Action::ProbeHypotheses => {
            let inst = build_instance(&config.scenario)?;
            let driver = inst.driver();
            let probe = ProbeOptions {
                samples: config.probe_samples,
                domain: config.probe_domain.unwrap_or_default(),
                seed: config.seed.expect("validated: seed present"),
                tol: config.probe_tol,
            };
            let mut reports = vec![probe_h2(driver, &probe)?, probe_h3(driver, &probe)?];
            if driver.cond_z().is_some() {
                reports.push(probe_cond_z(driver, &probe)?);
            }
            if driver.cond_a().is_some() {
                reports.push(probe_cond_a(driver, &probe)?);
            }
            let all_passed = reports.iter().all(|r| r.passed());
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "probes.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: ProbeSummary {
                            reports,
                            all_passed,
                        },
                    }),
                    &mut files,
                )?;
            }
            if !all_passed {
                return Err(CliError::CheckFailed(
                    "hypothesis probes found violations; see probes.json".into(),
                ));
            }
        }
        Action::DivergenceProbe => {
            let (kind, default_order) = match &config.scenario {
                ScenarioConfig::Builtin(ScenarioSpec::Counterexample5 { .. }) => {
                    (DivergenceKind::Counterexample5, 1.0)
                }
                ScenarioConfig::Builtin(ScenarioSpec::Counterexample7 { .. }) => {
                    (DivergenceKind::Counterexample7, 0.5)
                }
                _ => unreachable!("validated: divergence scenario"),
            };
            let schedule = config.n_schedule.as_ref().expect("validated");
            let table: GrowthTable = rbsde_core::divergence_probe(
                kind,
                schedule,
                config.order.unwrap_or(default_order),
                config.path_samples,
                config.seed.unwrap_or(0),
                &solve_options(config),
            )?;
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "divergence.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: &table,
                    }),
                    &mut files,
                )?;
            }
            if wants(config, OutputFormat::Csv) {
                let rows: Vec<Vec<String>> = table
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.steps.to_string(),
                            fmt_f64(r.log10_estimate),
                            r.value.map(fmt_f64).unwrap_or_default(),
                            r.log10_ratio_to_prev.map(fmt_f64).unwrap_or_default(),
                        ]
                    })
                    .collect();
                write_file(
                    out_dir,
                    "divergence.csv",
                    &csv_table(
                        &["steps", "log10_estimate", "value", "log10_ratio_to_prev"],
                        &rows,
                    ),
                    &mut files,
                )?;
            }
        }
        Action::Norms => {
            let inst = build_instance(&config.scenario)?;
            let opts = solve_options(config);
            let sol = run_method(&inst, config, &opts)?;
            let plan = path_plan(config, inst.lattice().steps())?;
            let report: NormReport = norms(&sol, config.order.unwrap_or(2.0), &plan)?;
            if wants(config, OutputFormat::Json) {
                write_file(
                    out_dir,
                    "norms.json",
                    &to_json(&Envelope {
                        tool: tool_info(),
                        config,
                        report: &report,
                    }),
                    &mut files,
                )?;
            }
        }
    }
    Ok(Written { files })
}

/// Re-parse guard: every JSON document we emit must parse back.
pub fn verify_round_trip(files: &[PathBuf]) -> Result<(), CliError> {
    for path in files {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<serde_json::Value>(&text)
                .map_err(|e| CliError::Solver(format!("emitted invalid JSON {path:?}: {e}")))?;
        }
    }
    Ok(())
}

pub fn print_scenarios() {
    println!("built-in scenarios (scenario.kind):");
    println!("  american_put     rate, sigma, strike, spot, horizon, steps");
    println!("                   put on exp(sigma*B + (rate - sigma^2/2)t), driver -rate*y");
    println!("  linear_bsde      a, b, c, floor (<= 0, default 0), horizon, steps");
    println!("                   driver a*y + b*z + c, terminal B_T^2, constant floor barrier");
    println!("  counterexample5  horizon, steps");
    println!("                   barrier T - t, terminal 0, driver -(y-(T-t))^+ exp(b^4)");
    println!("  counterexample7  horizon, steps");
    println!("                   barrier 1, terminal 1, driver -y^+ exp(b^4)");
    println!("  custom           driver, xi, barrier (optional), horizon, steps");
    println!("                   driver: linear(a,b,c) | put_discount(r) | counterexample5");
    println!("                           | counterexample7 | powerz(g,c,q)");
    println!("                   xi/barrier: expressions over t and b, e.g. \"max(1-t, b)\"");
    println!();
    println!("actions: solve | penalize-sweep | compare | probe-hypotheses");
    println!("         | divergence-probe | norms");
}

