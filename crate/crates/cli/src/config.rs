//! Run configuration: a TOML tree, flag overrides on dotted paths, and the
//! conversion of a scenario into a model, a ray profile and relations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use spreadspeed::environment::{check_hypotheses, ray_limit, HypothesisReport};
use spreadspeed::hj::HjParams;
use spreadspeed::simulate::{InitialData, ModelSpec, SimParams, F1, F2};
use spreadspeed::{
    Decay, DelayKernel, DispersionRelation, KernelSpec, Profile, RayProfile, ShiftTerm, ShiftedEnvironment,
    StepFunction,
};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPREADSPEED_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Constant rates: instantaneous growth `r1`, delayed growth `r2`.
    Homogeneous {
        r1: f64,
        #[serde(default)]
        r2: f64,
        #[serde(default)]
        kernel: KernelSpec,
    },
    /// One shift at speed `c1` from `minus = [r1, r2]` to `plus = [r1, r2]`.
    SingleShift {
        c1: f64,
        minus: [f64; 2],
        plus: [f64; 2],
        #[serde(default)]
        kernel: KernelSpec,
        #[serde(default = "default_ramp")]
        ramp_width: f64,
    },
    /// Fisher-KPP with growth `r1` behind `c2 t`, `r2` up to `c1 t` and `1` beyond.
    TwoShift {
        r1: f64,
        r2: f64,
        c1: f64,
        c2: f64,
        #[serde(default = "default_ramp")]
        ramp_width: f64,
    },
    /// An explicit model; the regime is detected from its ray limit.
    Model { model: ModelSpec },
}

fn default_ramp() -> f64 {
    2.0
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::Homogeneous { r1: 1.0, r2: 0.0, kernel: KernelSpec::None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Defaults to `ic_mu` with amplitude 1 for finite `μ`, else a bump of width 10.
    pub initial: Option<InitialData>,
    /// Fit window as fractions of the run length.
    pub fit_window: [f64; 2],
    /// Widen the domain to the expected front position plus a margin.
    pub auto_domain: bool,
    pub grid: SimParams,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { initial: None, fit_window: [2.0 / 3.0, 1.0], auto_domain: true, grid: SimParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Largest `|ŝ_HJ − ŝ_analytic|`.
    pub hj_abs: f64,
    /// Largest relative gap between the simulated speed and either other route.
    pub sim_rel: f64,
    /// Replaces the analytic speed; a negative control for the comparison.
    pub force_s_hat: Option<f64>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { hj_abs: 0.02, sim_rel: 0.10, force_s_hat: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCommand {
    #[default]
    Speed,
    Hj,
    Simulate,
    Validate,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub command: SweepCommand,
    /// Dotted path of the swept value, e.g. `scenario.c1`.
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Also write `lambda.csv` for every regime.
    pub lambda_table: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub mu: Decay,
    pub hj: HjParams,
    pub sim: SimSection,
    pub validate: ValidateSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::default(),
            mu: Decay::Infinite,
            hj: HjParams::default(),
            sim: SimSection::default(),
            validate: ValidateSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Parses `text` and applies `key=value` overrides, leaving the raw tree.
pub fn load_tree(text: &str, overrides: &[String]) -> Result<toml::Table, CliError> {
    let mut tree: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    Ok(tree)
}

pub fn from_tree(tree: toml::Table) -> Result<RunConfig, CliError> {
    tree.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))
}

#[cfg(test)]
pub fn load(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    from_tree(load_tree(text, overrides)?)
}

pub fn read_text(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(String::new()),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value`, creating tables on the way.
pub fn apply_override(tree: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{assignment}' is not key=value")))?;
    set_path(tree, key.trim(), parse_value(raw.trim()))
}

pub fn set_path(tree: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad key '{key}'")));
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("'{part}' in '{key}' is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Output directory: flag, then config, then the environment variable, then `out`.
pub fn output_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.output.dir {
        return p.clone();
    }
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

/// Analytic relations available for a scenario.
pub enum Regime {
    Homogeneous(DispersionRelation),
    SingleShift { minus: DispersionRelation, plus: DispersionRelation, c1: f64 },
    TwoShift { r1: f64, r2: f64, c1: f64, c2: f64 },
    /// A profile without a closed form.
    Unsupported(String),
}

/// Everything the routes need, derived from a scenario.
pub struct Resolved {
    pub model: ModelSpec,
    pub profile: RayProfile,
    pub kernel: Arc<DelayKernel>,
    pub regime: Regime,
}

fn relation(r1: f64, r2: f64, kernel: &Arc<DelayKernel>) -> spreadspeed::Result<DispersionRelation> {
    let k = if r2 == 0.0 { Arc::new(DelayKernel::absent()) } else { Arc::clone(kernel) };
    DispersionRelation::new(r1, r2, k)
}

fn instantaneous(env: ShiftedEnvironment, constant_rate: Option<f64>) -> F1 {
    match constant_rate {
        Some(r) if r < 0.0 => F1::LinearDeath { d: -r },
        _ => F1::Fisher { env },
    }
}

fn delayed(env: ShiftedEnvironment, active: bool) -> F2 {
    if active {
        F2::Ricker { env }
    } else {
        F2::None
    }
}

impl Scenario {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        match self {
            Scenario::Homogeneous { r1, r2, kernel } => {
                let k = Arc::new(DelayKernel::from_spec(kernel)?);
                let model = ModelSpec {
                    f1: instantaneous(ShiftedEnvironment::constant(*r1), Some(*r1)),
                    f2: delayed(ShiftedEnvironment::constant(*r2), *r2 != 0.0),
                    kernel: kernel.clone(),
                    l0: None,
                };
                let rel = relation(*r1, *r2, &k)?;
                Ok(Resolved { model, profile: RayProfile::constant(*r1, *r2), kernel: k, regime: Regime::Homogeneous(rel) })
            }
            Scenario::SingleShift { c1, minus, plus, kernel, ramp_width } => {
                let k = Arc::new(DelayKernel::from_spec(kernel)?);
                let ramp = |lo: f64, hi: f64| {
                    ShiftedEnvironment::single(*c1, Profile::Tanh { lo, hi, width: *ramp_width })
                };
                let has_delay = minus[1] != 0.0 || plus[1] != 0.0;
                let model = ModelSpec {
                    f1: F1::Fisher { env: ramp(minus[0], plus[0]) },
                    f2: delayed(ramp(minus[1], plus[1]), has_delay),
                    kernel: kernel.clone(),
                    l0: None,
                };
                let profile = RayProfile::single_shift(*c1, (minus[0], minus[1]), (plus[0], plus[1]))?;
                let regime = Regime::SingleShift {
                    minus: relation(minus[0], minus[1], &k)?,
                    plus: relation(plus[0], plus[1], &k)?,
                    c1: *c1,
                };
                Ok(Resolved { model, profile, kernel: k, regime })
            }
            Scenario::TwoShift { r1, r2, c1, c2, ramp_width } => {
                // blend of two unit ramps whose levels add up to r1, r2 and 1
                let (a, b) = ((1.0 - r2) / (1.0 - r1), (r2 - r1) / (1.0 - r1));
                let env = ShiftedEnvironment {
                    base: 0.0,
                    terms: vec![
                        ShiftTerm { c: *c1, profile: Profile::Tanh { lo: a * r1, hi: a, width: *ramp_width } },
                        ShiftTerm { c: *c2, profile: Profile::Tanh { lo: b * r1, hi: b, width: *ramp_width } },
                    ],
                };
                let profile = RayProfile::from_parts(
                    StepFunction::piecewise(vec![*c2, *c1], vec![*r1, *r2, 1.0])?,
                    StepFunction::constant(0.0),
                );
                Ok(Resolved {
                    model: ModelSpec::fisher(env),
                    profile,
                    kernel: Arc::new(DelayKernel::absent()),
                    regime: Regime::TwoShift { r1: *r1, r2: *r2, c1: *c1, c2: *c2 },
                })
            }
            Scenario::Model { model } => {
                model.validate()?;
                let k = Arc::new(DelayKernel::from_spec(&model.kernel)?);
                let r1 = match &model.f1 {
                    F1::Fisher { env } => ray_limit(env)?,
                    F1::LinearDeath { d } => StepFunction::constant(-d),
                };
                let r2 = match &model.f2 {
                    F2::None => StepFunction::constant(0.0),
                    F2::Ricker { env } => ray_limit(env)?,
                };
                let profile = RayProfile::from_parts(r1, r2);
                let regime = detect(&profile, &k)?;
                Ok(Resolved { model: model.clone(), profile, kernel: k, regime })
            }
        }
    }
}

/// Closed-form regime of a piecewise-constant profile, when one exists.
fn detect(profile: &RayProfile, kernel: &Arc<DelayKernel>) -> Result<Regime, CliError> {
    let regimes = profile.regimes();
    let breaks = profile.breaks();
    Ok(match (breaks.as_slice(), regimes.as_slice()) {
        ([], [(r1, r2)]) => Regime::Homogeneous(relation(*r1, *r2, kernel)?),
        ([c1], [m, p]) if *c1 > 0.0 => Regime::SingleShift {
            minus: relation(m.0, m.1, kernel)?,
            plus: relation(p.0, p.1, kernel)?,
            c1: *c1,
        },
        ([c2, c1], [a, b, c]) if a.1 == 0.0 && b.1 == 0.0 && c.1 == 0.0 && c.0 == 1.0 => {
            Regime::TwoShift { r1: a.0, r2: b.0, c1: *c1, c2: *c2 }
        }
        _ => Regime::Unsupported(format!("no closed form for breakpoints {breaks:?} with rates {regimes:?}")),
    })
}

impl Resolved {
    pub fn hypotheses(&self) -> HypothesisReport {
        check_hypotheses(&self.profile, &self.kernel)
    }

    /// Fails with the first required clause that does not hold.
    pub fn require_hypotheses(&self) -> Result<HypothesisReport, CliError> {
        let report = self.hypotheses();
        if let Some(c) = report.first_failure() {
            return Err(CliError::Hypothesis { clause: c.name.to_string(), detail: c.detail.clone() });
        }
        Ok(report)
    }
}

impl RunConfig {
    pub fn initial_data(&self) -> InitialData {
        self.sim.initial.clone().unwrap_or(match self.mu {
            Decay::Finite(mu) => InitialData::IcMu { mu, amplitude: 1.0 },
            Decay::Infinite => InitialData::IcInf { width: 10.0, height: 1.0 },
        })
    }
}
