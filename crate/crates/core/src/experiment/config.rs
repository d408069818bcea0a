//! Scenario and experiment files.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelStats, LinkStats, Scenario};
use crate::error::{Error, Result};
use crate::irs::{IrsKind, IrsModel, IrsParameters, ParameterBox, VaractorCircuit};
use crate::oracle::OracleBudget;
use crate::optimizer::{BudgetSchedule, ErrorProbe, MoreauSettings, OptimizerConfig, Smoothing, StepSize};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            ScalarOrList::Scalar(v) => vec![*v; n],
            ScalarOrList::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub tx_antennas: usize,
    pub users: usize,
    pub irs_elements: usize,
    pub power_budget_watts: f64,
    pub noise_var_watts: ScalarOrList,
    #[serde(default = "default_weights")]
    pub weights: ScalarOrList,
}

fn default_weights() -> ScalarOrList {
    ScalarOrList::Scalar(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub path_gain_linear: f64,
    pub rician_factor_linear: f64,
}

impl From<LinkSection> for LinkStats {
    fn from(l: LinkSection) -> Self {
        LinkStats {
            gain: l.path_gain_linear,
            rician_factor: l.rician_factor_linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub irs_correlation: f64,
    #[serde(default)]
    pub geometry_seed: u64,
    pub direct: LinkSection,
    pub tx_irs: LinkSection,
    pub irs_user: LinkSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    /// Uniform draw in the box.
    #[default]
    Uniform,
    Center,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaractorSection {
    pub frequency_hz: f64,
    pub series_resistance_ohm: f64,
    pub series_inductance_h: f64,
    pub patch_inductance_h: f64,
    pub free_space_impedance_ohm: f64,
}

impl Default for VaractorSection {
    fn default() -> Self {
        let c = VaractorCircuit::default();
        Self {
            frequency_hz: c.frequency_hz,
            series_resistance_ohm: c.series_resistance_ohm,
            series_inductance_h: c.series_inductance_h,
            patch_inductance_h: c.patch_inductance_h,
            free_space_impedance_ohm: c.free_space_impedance_ohm,
        }
    }
}

impl From<&VaractorSection> for VaractorCircuit {
    fn from(v: &VaractorSection) -> Self {
        VaractorCircuit {
            frequency_hz: v.frequency_hz,
            series_resistance_ohm: v.series_resistance_ohm,
            series_inductance_h: v.series_inductance_h,
            patch_inductance_h: v.patch_inductance_h,
            free_space_impedance_ohm: v.free_space_impedance_ohm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrsSection {
    #[serde(default = "default_kind")]
    pub kind: IrsKind,
    #[serde(default)]
    pub amplitude_min: f64,
    #[serde(default = "one")]
    pub amplitude_max: f64,
    #[serde(default = "neg_two_pi")]
    pub phase_min_rad: f64,
    #[serde(default = "two_pi")]
    pub phase_max_rad: f64,
    #[serde(default = "cap_min")]
    pub capacitance_min_pf: f64,
    #[serde(default = "cap_max")]
    pub capacitance_max_pf: f64,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub varactor: VaractorSection,
}

fn default_kind() -> IrsKind {
    IrsKind::Ideal
}
fn one() -> f64 {
    1.0
}
fn two_pi() -> f64 {
    2.0 * PI
}
fn neg_two_pi() -> f64 {
    -2.0 * PI
}
fn cap_min() -> f64 {
    0.2
}
fn cap_max() -> f64 {
    2.0
}

impl Default for IrsSection {
    fn default() -> Self {
        toml::from_str("").expect("all irs fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemSection,
    pub channel: ChannelSection,
    #[serde(default)]
    pub irs: IrsSection,
}

/// A validated scenario with every default materialized.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub irs: IrsModel,
    pub bounds: ParameterBox,
    pub initial: IrsParameters,
    pub init: InitPolicy,
    /// SHA-256 of the scenario file bytes, hex encoded.
    pub fingerprint: String,
    pub file: ScenarioFile,
}

impl LoadedScenario {
    /// The materialized configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }

    /// Same system with a different surface model.
    pub fn with_kind(&self, kind: IrsKind) -> Result<Self> {
        let mut file = self.file.clone();
        file.irs.kind = kind;
        build(file, self.fingerprint.clone())
    }

    /// Initial parameters for one run, following the init policy.
    pub fn initial_theta(&self, seed: u64) -> Vec<f64> {
        match self.init {
            InitPolicy::Uniform => self.bounds.sample_uniform(&mut stream(seed)),
            InitPolicy::Center => self.bounds.center(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let text = read(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    build(file, fingerprint(text.as_bytes()))
}

fn build(file: ScenarioFile, fingerprint: String) -> Result<LoadedScenario> {
    let sys = &file.system;
    let ch = &file.channel;
    let irs = &file.irs;
    let scenario = Scenario {
        tx_antennas: sys.tx_antennas,
        users: sys.users,
        irs_elements: sys.irs_elements,
        power_budget: sys.power_budget_watts,
        noise_vars: sys.noise_var_watts.expand(sys.users),
        weights: sys.weights.expand(sys.users),
        channel: ChannelStats {
            direct: ch.direct.into(),
            tx_irs: ch.tx_irs.into(),
            irs_user: ch.irs_user.into(),
            irs_correlation: ch.irs_correlation,
            geometry_seed: ch.geometry_seed,
        },
    };
    let mut problems = scenario.validate();
    let (model, lower, upper) = match irs.kind {
        IrsKind::Ideal => {
            if !(0.0 <= irs.amplitude_min && irs.amplitude_min <= irs.amplitude_max && irs.amplitude_max <= 1.0) {
                problems.push(format!(
                    "irs.amplitude_min/irs.amplitude_max must satisfy 0 <= min <= max <= 1 (got {}, {})",
                    irs.amplitude_min, irs.amplitude_max
                ));
            }
            if !(-2.0 * PI <= irs.phase_min_rad && irs.phase_min_rad <= irs.phase_max_rad && irs.phase_max_rad <= 2.0 * PI) {
                problems.push(format!(
                    "irs.phase_min_rad/irs.phase_max_rad must satisfy -2pi <= min <= max <= 2pi (got {}, {})",
                    irs.phase_min_rad, irs.phase_max_rad
                ));
            }
            let s = sys.irs_elements;
            let mut lower = vec![irs.amplitude_min; s];
            lower.extend(vec![irs.phase_min_rad; s]);
            let mut upper = vec![irs.amplitude_max; s];
            upper.extend(vec![irs.phase_max_rad; s]);
            (IrsModel::Ideal, lower, upper)
        }
        IrsKind::Varactor => {
            if !(0.0 < irs.capacitance_min_pf && irs.capacitance_min_pf <= irs.capacitance_max_pf && irs.capacitance_max_pf.is_finite()) {
                problems.push(format!(
                    "irs.capacitance_min_pf/irs.capacitance_max_pf must satisfy 0 < min <= max (got {}, {})",
                    irs.capacitance_min_pf, irs.capacitance_max_pf
                ));
            }
            let circuit = VaractorCircuit::from(&irs.varactor);
            problems.extend(circuit.validate().into_iter().map(|p| format!("irs.varactor.{p}")));
            let s = sys.irs_elements;
            (
                IrsModel::Varactor(circuit),
                vec![irs.capacitance_min_pf; s],
                vec![irs.capacitance_max_pf; s],
            )
        }
    };
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let bounds = ParameterBox::new(lower, upper)?;
    let init = irs.init;
    let values = match init {
        InitPolicy::Uniform => bounds.sample_uniform(&mut stream(irs.init_seed)),
        InitPolicy::Center => bounds.center(),
    };
    Ok(LoadedScenario {
        scenario,
        initial: IrsParameters { kind: irs.kind, values },
        irs: model,
        bounds,
        init,
        fingerprint,
        file,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn indices(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }

    /// `"10"` or `"3,5,8"`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = |_| Error::Config(format!("seeds must be a count or a comma-separated list, got '{text}'"));
        if text.contains(',') {
            text.split(',').map(|s| s.trim().parse::<u64>().map_err(bad)).collect::<Result<Vec<_>>>().map(SeedSpec::List)
        } else {
            text.parse::<u64>().map(SeedSpec::Count).map_err(bad)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleOrValue {
    Value(f64),
    Rule(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Section {
    pub delta_f: f64,
    pub c2: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoreauSection {
    pub rho_bar: f64,
    pub samples: usize,
    pub inner_steps: usize,
    pub oracle_iterations: u32,
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub iterations: usize,
    pub step_size: RuleOrValue,
    pub smoothing: RuleOrValue,
    #[serde(default = "one")]
    pub smoothing_constant: f64,
    pub theorem3: Option<Theorem3Section>,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "one_usize")]
    pub batch: usize,
    #[serde(default = "default_window")]
    pub final_window_fraction: f64,
    pub error_reference_iterations: Option<u32>,
    #[serde(default = "default_error_stride")]
    pub error_stride: usize,
    pub snapshot_stride: Option<usize>,
    pub moreau: Option<MoreauSection>,
}

fn yes() -> bool {
    true
}
fn one_usize() -> usize {
    1
}
fn default_window() -> f64 {
    0.05
}
fn default_error_stride() -> usize {
    100
}

impl OptimizerSection {
    pub fn config(&self, schedule: BudgetSchedule, seed: u64) -> Result<OptimizerConfig> {
        let step_size = match &self.step_size {
            RuleOrValue::Value(v) => StepSize::Constant(*v),
            RuleOrValue::Rule(r) if r == "theorem3" => {
                let t = self.theorem3.as_ref().ok_or_else(|| {
                    Error::Config("optimizer.step_size = \"theorem3\" needs an [optimizer.theorem3] section".into())
                })?;
                StepSize::Theorem3 {
                    delta_f: t.delta_f,
                    c2: t.c2,
                    rho: t.rho,
                }
            }
            RuleOrValue::Rule(r) => {
                return Err(Error::Config(format!(
                    "optimizer.step_size must be a number or \"theorem3\", got \"{r}\""
                )))
            }
        };
        let smoothing = match &self.smoothing {
            RuleOrValue::Value(v) => Smoothing::Constant(*v),
            RuleOrValue::Rule(r) if r == "inverse-sqrt-MT" => Smoothing::InverseSqrt {
                constant: self.smoothing_constant,
            },
            RuleOrValue::Rule(r) => {
                return Err(Error::Config(format!(
                    "optimizer.smoothing must be a number or \"inverse-sqrt-MT\", got \"{r}\""
                )))
            }
        };
        Ok(OptimizerConfig {
            iterations: self.iterations,
            step_size,
            smoothing,
            schedule,
            warm_start: self.warm_start,
            seed,
            batch: self.batch,
            error_probe: self.error_reference_iterations.map(|reference_iterations| ErrorProbe {
                reference_iterations,
                stride: self.error_stride,
            }),
            snapshot_stride: self.snapshot_stride,
            moreau: self.moreau.as_ref().map(|m| MoreauSettings {
                rho_bar: m.rho_bar,
                samples: m.samples,
                inner_steps: m.inner_steps,
                oracle_iterations: m.oracle_iterations,
                stride: m.stride,
                seed: m.seed,
            }),
        })
    }

    fn validate(&self, problems: &mut Vec<String>) {
        if self.iterations == 0 {
            problems.push("optimizer.iterations must be a positive integer".into());
        }
        if let RuleOrValue::Value(v) = self.step_size {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("optimizer.step_size must be > 0 (got {v})"));
            }
        }
        if let RuleOrValue::Value(v) = self.smoothing {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("optimizer.smoothing must be > 0 (got {v})"));
            }
        }
        if self.batch == 0 {
            problems.push("optimizer.batch must be >= 1".into());
        }
        if !(self.final_window_fraction > 0.0 && self.final_window_fraction <= 1.0) {
            problems.push(format!(
                "optimizer.final_window_fraction must lie in (0, 1] (got {})",
                self.final_window_fraction
            ));
        }
        if self.error_stride == 0 {
            problems.push("optimizer.error_stride must be >= 1".into());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Sweep,
    Schedule,
    TrainDeploy,
    Physical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub budgets: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub marks: Vec<usize>,
    pub schedules: Vec<Vec<u32>>,
    #[serde(default)]
    pub constant_budgets: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointIterate {
    /// `θ_T`, the parameters at the end of training.
    #[default]
    Final,
    /// `θ_{t*}`, the uniformly drawn iterate.
    Returned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDeploySection {
    pub train_budget: u32,
    pub deploy_budgets: Vec<u32>,
    pub deploy_samples: usize,
    #[serde(default)]
    pub checkpoint_iterate: CheckpointIterate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    pub scenario: PathBuf,
    pub recipe: Recipe,
    pub irs_kind: Option<IrsKind>,
    pub seed: u64,
    pub seeds: SeedSpec,
    pub output_dir: PathBuf,
    pub optimizer: OptimizerSection,
    pub sweep: Option<SweepSection>,
    pub schedule: Option<ScheduleSection>,
    pub train_deploy: Option<TrainDeploySection>,
}

/// A resolved experiment: the parsed file plus its scenario.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub file: ExperimentFile,
    pub scenario: LoadedScenario,
    pub config_path: PathBuf,
}

impl ExperimentSpec {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.file.seeds.indices()
    }

    pub fn output_dir(&self) -> &Path {
        &self.file.output_dir
    }

    pub fn set_seeds(&mut self, seeds: SeedSpec) -> Result<()> {
        if seeds.indices().is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        self.file.seeds = seeds;
        Ok(())
    }

    pub fn set_output_dir(&mut self, dir: impl Into<PathBuf>) {
        self.file.output_dir = dir.into();
    }

    pub fn budgets(&self) -> Vec<u32> {
        self.file.sweep.as_ref().map(|s| s.budgets.clone()).unwrap_or_default()
    }
}

/// Loads an experiment file; the scenario path is resolved relative to it.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = read(path)?;
    let file: ExperimentFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let scenario_path = path.parent().unwrap_or(Path::new(".")).join(&file.scenario);
    let mut scenario = load_scenario(&scenario_path)?;
    let kind = match file.recipe {
        Recipe::Physical => Some(IrsKind::Varactor),
        _ => file.irs_kind,
    };
    if let Some(kind) = kind {
        if kind != scenario.initial.kind {
            scenario = scenario.with_kind(kind)?;
        }
    }
    validate_experiment(&file)?;
    Ok(ExperimentSpec {
        file,
        scenario,
        config_path: path.to_path_buf(),
    })
}

fn check_budgets(what: &str, budgets: &[u32], problems: &mut Vec<String>) {
    if budgets.is_empty() {
        problems.push(format!("{what} must be nonempty"));
    }
    if budgets.contains(&0) {
        problems.push(format!("{what} entries must be >= 1"));
    }
}

fn validate_experiment(file: &ExperimentFile) -> Result<()> {
    let mut problems = Vec::new();
    if file.seeds.indices().is_empty() {
        problems.push("seeds must be nonempty".into());
    }
    file.optimizer.validate(&mut problems);
    match file.recipe {
        Recipe::Sweep | Recipe::Physical => match &file.sweep {
            Some(s) => check_budgets("sweep.budgets", &s.budgets, &mut problems),
            None => problems.push("recipe needs a [sweep] section with budgets".into()),
        },
        Recipe::Schedule => match &file.schedule {
            Some(s) => {
                if s.schedules.is_empty() {
                    problems.push("schedule.schedules must be nonempty".into());
                }
                for (i, sched) in s.schedules.iter().enumerate() {
                    if sched.len() != s.marks.len() {
                        problems.push(format!(
                            "schedule.schedules[{i}] has {} budgets for {} marks",
                            sched.len(),
                            s.marks.len()
                        ));
                    }
                    check_budgets(&format!("schedule.schedules[{i}]"), sched, &mut problems);
                }
                if let Err(e) = BudgetSchedule::new(s.marks.iter().map(|&m| (m, OracleBudget::iterations(1))).collect()) {
                    problems.push(format!("schedule.marks: {e}"));
                }
            }
            None => problems.push("recipe \"schedule\" needs a [schedule] section".into()),
        },
        Recipe::TrainDeploy => match &file.train_deploy {
            Some(td) => {
                if td.train_budget == 0 {
                    problems.push("train_deploy.train_budget must be >= 1".into());
                }
                check_budgets("train_deploy.deploy_budgets", &td.deploy_budgets, &mut problems);
                if td.deploy_samples == 0 {
                    problems.push("train_deploy.deploy_samples must be >= 1".into());
                }
            }
            None => problems.push("recipe \"train-deploy\" needs a [train_deploy] section".into()),
        },
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}
