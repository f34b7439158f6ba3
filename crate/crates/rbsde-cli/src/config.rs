//! Run configuration: a single JSON document describing the scenario, the
//! action and every numeric knob. Flags only point at the file and override
//! the output directory, so a config is a complete, reproducible record of a
//! run.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rbsde_core::driver::DomainBox;
use rbsde_core::scenarios::ScenarioSpec;
use rbsde_core::{build_lattice, Driver, Instance, LatticeSpec};

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Solve,
    PenalizeSweep,
    Compare,
    ProbeHypotheses,
    DivergenceProbe,
    Norms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Plain,
    Penalized,
    Reflected,
    Snell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioConfig {
    Builtin(ScenarioSpec),
    Custom(CustomScenario),
}

/// Inline instance: a catalogue driver plus expressions over `(t, b)` for
/// the barrier and the terminal condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub kind: CustomTag,
    /// Catalogue driver name: `linear(a,b,c)`, `put_discount(r)`,
    /// `counterexample5`, `counterexample7` or `powerz(g,c,q)`.
    pub driver: String,
    /// Barrier expression over `t` and `b`; omit for an unconstrained run.
    #[serde(default)]
    pub barrier: Option<String>,
    /// Terminal-condition expression over `b` (`t` is fixed at the horizon).
    pub xi: String,
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomTag {
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

fn default_root_tol() -> f64 {
    1e-12
}

fn default_probe_tol() -> f64 {
    1e-9
}

fn default_enumeration_cap() -> usize {
    20
}

fn default_path_samples() -> usize {
    100_000
}

fn default_probe_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub action: Action,
    pub scenario: ScenarioConfig,
    /// Second scenario for `compare`.
    #[serde(default)]
    pub compare_with: Option<ScenarioConfig>,
    /// Solver for `solve`, `compare` and `norms`; defaults to `reflected`
    /// when the scenario has a barrier and `plain` otherwise.
    #[serde(default)]
    pub method: Option<MethodChoice>,
    /// Penalty level when `method` is `penalized`.
    #[serde(default)]
    pub penalty: Option<f64>,
    #[serde(default)]
    pub penalty_schedule: Option<Vec<f64>>,
    /// Refinement schedule for `divergence-probe`.
    #[serde(default)]
    pub n_schedule: Option<Vec<usize>>,
    /// Norm or moment order (`p` for norms and sweeps, `q` for divergence).
    #[serde(default)]
    pub order: Option<f64>,
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
    #[serde(default = "default_probe_tol")]
    pub probe_tol: f64,
    #[serde(default = "default_enumeration_cap")]
    pub enumeration_cap: usize,
    #[serde(default = "default_path_samples")]
    pub path_samples: usize,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
    #[serde(default)]
    pub probe_domain: Option<DomainBox>,
    /// Mandatory whenever the action samples anything.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Comparison tolerance for `compare`; defaults to `probe_tol`.
    #[serde(default)]
    pub comparison_tol: Option<f64>,
    /// Worker threads for the data-parallel loops; defaults to all cores.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Cross-field validation that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let needs = |cond: bool, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(CliError::Parse(msg.into()))
            }
        };
        match self.action {
            Action::Solve => {
                if self.method == Some(MethodChoice::Penalized) {
                    needs(self.penalty.is_some(), "method 'penalized' requires 'penalty'")?;
                }
            }
            Action::PenalizeSweep => {
                needs(
                    self.penalty_schedule.is_some(),
                    "action 'penalize-sweep' requires 'penalty_schedule'",
                )?;
                if self.scenario_steps() > self.enumeration_cap {
                    needs(
                        self.seed.is_some(),
                        "path sampling is active (steps exceed enumeration_cap): 'seed' is required",
                    )?;
                }
            }
            Action::Compare => {
                needs(self.compare_with.is_some(), "action 'compare' requires 'compare_with'")?;
            }
            Action::ProbeHypotheses => {
                needs(self.seed.is_some(), "action 'probe-hypotheses' samples: 'seed' is required")?;
            }
            Action::DivergenceProbe => {
                needs(
                    self.n_schedule.is_some(),
                    "action 'divergence-probe' requires 'n_schedule'",
                )?;
                let beyond_cap = self
                    .n_schedule
                    .as_ref()
                    .is_some_and(|s| s.iter().any(|n| *n > self.enumeration_cap));
                if beyond_cap {
                    needs(
                        self.seed.is_some(),
                        "path sampling is active (n_schedule exceeds enumeration_cap): 'seed' is required",
                    )?;
                }
                match &self.scenario {
                    ScenarioConfig::Builtin(
                        ScenarioSpec::Counterexample5 { .. } | ScenarioSpec::Counterexample7 { .. },
                    ) => {}
                    _ => {
                        return Err(CliError::Parse(
                            "divergence-probe needs a counterexample5 or counterexample7 scenario"
                                .into(),
                        ))
                    }
                }
            }
            Action::Norms => {
                if self.scenario_steps() > self.enumeration_cap {
                    needs(
                        self.seed.is_some(),
                        "path sampling is active (steps exceed enumeration_cap): 'seed' is required",
                    )?;
                }
                if self.method == Some(MethodChoice::Penalized) {
                    needs(self.penalty.is_some(), "method 'penalized' requires 'penalty'")?;
                }
            }
        }
        if let Some(schedule) = &self.penalty_schedule {
            needs(
                schedule.windows(2).all(|w| w[0] < w[1]) && schedule.first().is_none_or(|f| *f >= 0.0),
                "'penalty_schedule' must be nonnegative and strictly increasing",
            )?;
        }
        Ok(())
    }

    fn scenario_steps(&self) -> usize {
        match &self.scenario {
            ScenarioConfig::Builtin(spec) => spec.steps(),
            ScenarioConfig::Custom(c) => c.steps,
        }
    }
}

/// Catalogue driver names with positional numeric arguments.
fn parse_driver(name: &str, horizon: f64) -> Result<Driver, CliError> {
    let (head, args) = match name.find('(') {
        None => (name.trim(), Vec::new()),
        Some(open) => {
            let inner = name[open..]
                .strip_prefix('(')
                .and_then(|rest| rest.strip_suffix(')'))
                .ok_or_else(|| {
                    CliError::Parse(format!("driver '{name}': expected 'name(a,b,...)'"))
                })?;
            let args: Result<Vec<f64>, _> = inner
                .split(',')
                .map(|a| a.trim().parse::<f64>())
                .collect();
            (
                name[..open].trim(),
                args.map_err(|_| {
                    CliError::Parse(format!("driver '{name}': arguments must be numbers"))
                })?,
            )
        }
    };
    let want = |n: usize| -> Result<(), CliError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(CliError::Parse(format!(
                "driver '{head}' takes {n} argument(s), got {}",
                args.len()
            )))
        }
    };
    let driver = match head {
        "linear" => {
            want(3)?;
            Driver::linear(args[0], args[1], args[2])
        }
        "put_discount" => {
            want(1)?;
            Driver::put_discount(args[0])
        }
        "counterexample5" => {
            want(0)?;
            Driver::counterexample5(horizon)
        }
        "counterexample7" => {
            want(0)?;
            Driver::counterexample7()
        }
        "powerz" => {
            want(3)?;
            Driver::powerz(args[0], args[1], args[2])
        }
        other => {
            return Err(CliError::Parse(format!(
                "unknown driver '{other}'; available: linear(a,b,c), put_discount(r), \
                 counterexample5, counterexample7, powerz(g,c,q)"
            )))
        }
    };
    driver.map_err(CliError::from)
}

pub fn build_instance(scenario: &ScenarioConfig) -> Result<Instance, CliError> {
    match scenario {
        ScenarioConfig::Builtin(spec) => Ok(rbsde_core::make_instance(spec)?),
        ScenarioConfig::Custom(custom) => {
            let driver = parse_driver(&custom.driver, custom.horizon)?;
            let xi = Expr::parse(&custom.xi)
                .map_err(|e| CliError::Parse(format!("xi expression: {e}")))?;
            let barrier = custom
                .barrier
                .as_ref()
                .map(|src| Expr::parse(src))
                .transpose()
                .map_err(|e| CliError::Parse(format!("barrier expression: {e}")))?;
            let lattice = build_lattice(LatticeSpec::new(custom.horizon, custom.steps)?)?;
            let horizon = custom.horizon;
            Ok(Instance::new(
                format!("custom({})", custom.driver),
                lattice,
                driver,
                move |b| xi.eval(horizon, b),
                barrier.map(|l| {
                    Arc::new(move |t: f64, b: f64| l.eval(t, b)) as rbsde_core::bsde::BarrierFn
                }),
            )?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_config_parses() {
        let cfg = RunConfig::parse(
            r#"{
                "action": "solve",
                "scenario": {"kind": "counterexample5", "horizon": 1.0, "steps": 8}
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.action, Action::Solve);
        assert_eq!(cfg.root_tol, 1e-12);
        assert_eq!(cfg.output.dir, "out");
    }

    #[test]
    fn missing_action_names_the_field() {
        let err = RunConfig::parse(r#"{"scenario": {"kind": "counterexample7", "horizon": 1.0, "steps": 4}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("action"), "{err}");
    }

    #[test]
    fn custom_scenario_builds() {
        let cfg = RunConfig::parse(
            r#"{
                "action": "solve",
                "scenario": {
                    "kind": "custom",
                    "driver": "linear(-0.5, 0.25, 0.0)",
                    "barrier": "max(1 - t, b) - 3",
                    "xi": "abs(b)",
                    "horizon": 1.0,
                    "steps": 12
                }
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let inst = build_instance(&cfg.scenario).unwrap();
        assert!(inst.has_barrier());
        assert_eq!(inst.lattice().steps(), 12);
        assert_eq!(inst.terminal_at(-2.0), 2.0);
    }

    #[test]
    fn sweep_without_schedule_rejected() {
        let cfg = RunConfig::parse(
            r#"{
                "action": "penalize-sweep",
                "scenario": {"kind": "counterexample7", "horizon": 1.0, "steps": 8}
            }"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sampling_requires_seed() {
        let cfg = RunConfig::parse(
            r#"{
                "action": "norms",
                "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                             "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 100}
            }"#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_driver_rejected() {
        assert!(parse_driver("mystery(1)", 1.0).is_err());
        assert!(parse_driver("linear(1)", 1.0).is_err());
        assert!(parse_driver("put_discount(0.05)", 1.0).is_ok());
        assert!(parse_driver("counterexample5", 2.0).is_ok());
    }
}
