//! Experiment configuration: a TOML tree, dotted-path overrides, and recovery of
//! a configuration from the metadata of emitted result files.
//!
//! All quantities are in the units of `[constants]` (natural units `hbar = m = 1`
//! unless set otherwise).

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::dimension::{PathSource, ResolutionSchedule, DEFAULT_RESIDUAL_THRESHOLD};
use crate::error::{Error, Result};
use crate::gaussian_state::{Constants, GaussianState};
use crate::oracle_grid::DEFAULT_POINTS;
use crate::selective::{FeedbackConfig, MAX_STABLE_STEP_RATIO};

/// Relative tolerance for `D = sigma tau` and `D = 2 hbar t_c^2 / m` checks.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonselectiveDimension,
    SelectiveDimension,
    FeedbackRelaxation,
    OracleValidation,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::NonselectiveDimension => "nonselective-dimension",
            Mode::SelectiveDimension => "selective-dimension",
            Mode::FeedbackRelaxation => "feedback-relaxation",
            Mode::OracleValidation => "oracle-validation",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Measurement strength `D`; `inf` (written `"inf"` or `inf`) means no measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strength(pub f64);

impl Serialize for Strength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Strength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Strength(v)),
            Raw::Int(v) => Ok(Strength(v as f64)),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "unmeasured" => Ok(Strength(f64::INFINITY)),
                other => other.parse::<f64>().map(Strength).map_err(|_| {
                    de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))
                }),
            },
        }
    }
}

/// One strength or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Strengths(pub Vec<Strength>);

impl<'de> Deserialize<'de> for Strengths {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Many(Vec<Strength>),
            One(Strength),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Many(v) => Strengths(v),
            Raw::One(s) => Strengths(vec![s]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    #[serde(default)]
    pub a: f64,
    /// Mean momentum; the drift `p_av` of the dimension sweeps.
    #[serde(default)]
    pub b_mom: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub eps: f64,
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            a: 0.0,
            b_mom: 0.0,
            delta: 1.0,
            eps: 0.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DxRange {
    pub max: f64,
    pub min: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx_range: Option<DxRange>,
    pub b_scale: f64,
    /// Total observation time `T`.
    #[serde(default, alias = "T", skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Strengths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// selective-dimension only: meter variance `sigma = 2 * ratio * dx^2` at each resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    /// Defaults to `true` in the feedback modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    /// Control time; derived from `D` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_c: Option<f64>,
    #[serde(default)]
    pub allow_mismatch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// feedback-relaxation: steps per trajectory. selective-dimension: recorded
    /// steps at the coarsest resolution when `schedule.total_time` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

fn default_n_traj() -> usize {
    1000
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_traj: default_n_traj(),
            master_seed: 0,
            n_steps: None,
            burn_in_steps: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_threshold")]
    pub residual_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_RESIDUAL_THRESHOLD
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            residual_threshold: DEFAULT_RESIDUAL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_scenarios() -> usize {
    100
}
fn default_grid_points() -> usize {
    DEFAULT_POINTS
}
fn default_tolerance() -> f64 {
    1e-6
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            scenarios: default_scenarios(),
            grid_points: default_grid_points(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub path_source: PathSource,
}

fn default_dir() -> String {
    "results".to_string()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            formats: default_formats(),
            path_source: PathSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= CONSISTENCY_TOL * x.abs().max(y.abs())
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!(
            "{key} = {v}: must be a positive finite number"
        )))
    }
}

fn check_loop(fb: &FeedbackConfig, tau: f64, context: &str) -> Result<()> {
    if fb.is_stable_for(tau) {
        return Ok(());
    }
    Err(config_err(format!(
        "{context}: tau = {tau} with t_c = {} gives tau/t_c = {:.4}; the feedback loop diverges for tau/t_c >= {MAX_STABLE_STEP_RATIO:.4}. \
         Use a smaller tau (or b_scale / dx) or a larger D",
        fb.t_c,
        tau / fb.t_c
    )))
}

/// Sets `key` (dotted path) in `table`. `raw` is read as a TOML value, falling
/// back to a plain string, so `D=inf`, `schedule.dx=[1,2]` and `mode=oracle-validation`
/// all work.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!(
            "override key {key:?} has an empty path segment"
        )));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("nonempty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => {
                return Err(config_err(format!(
                    "override {key:?}: {p:?} is not a table"
                )))
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`.
pub fn parse_override(spec: &str) -> Result<(String, String)> {
    match spec.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(config_err(format!(
            "override {spec:?} is not of the form key=value"
        ))),
    }
}

/// Line prefix under which CSV outputs carry the configuration echo.
pub const CONFIG_LINE_PREFIX: &str = "# config: ";

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| config_err(format!("invalid TOML: {e}")))?;
        Self::from_table(table, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[(String, String)]) -> Result<Self> {
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                config_err(format!("invalid configuration: {}", e.message()))
            })
    }

    fn from_json_value(value: serde_json::Value, overrides: &[(String, String)]) -> Result<Self> {
        let value = match value.get("metadata").and_then(|m| m.get("config")) {
            Some(inner) => inner.clone(),
            None => value,
        };
        let table = match toml::Value::try_from(value) {
            Ok(toml::Value::Table(t)) => t,
            Ok(_) => return Err(config_err("configuration JSON must be an object")),
            Err(e) => return Err(config_err(format!("invalid configuration JSON: {e}"))),
        };
        Self::from_table(table, overrides)
    }

    /// Parses a configuration from TOML, from a result JSON (`metadata.config`)
    /// or from a result CSV (the `# config:` line). The format is chosen by the
    /// leading non-blank character: `{` for JSON, `#` for CSV, TOML otherwise.
    pub fn parse_any(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(trimmed)
                .map_err(|e| config_err(format!("invalid JSON: {e}")))?;
            return Self::from_json_value(v, overrides);
        }
        if let Some(line) = text
            .lines()
            .find_map(|l| l.strip_prefix(CONFIG_LINE_PREFIX))
        {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| config_err(format!("invalid config line in result file: {e}")))?;
            return Self::from_json_value(v, overrides);
        }
        Self::from_toml_with_overrides(text, overrides)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_any(&text, overrides)
    }

    /// Compact JSON echo; parsing it back yields an equal configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn initial_state(&self) -> Result<GaussianState> {
        GaussianState::new(
            self.state.a,
            self.state.b_mom,
            self.state.delta,
            self.state.eps,
        )
        .map_err(|e| config_err(format!("[state]: {e}")))
    }

    fn schedule_section(&self) -> Result<&ScheduleSection> {
        self.schedule.as_ref().ok_or_else(|| {
            config_err(format!(
                "mode {} needs a [schedule] table with b_scale and either dx = [..] or dx_range = {{ max, min, points }}",
                self.mode
            ))
        })
    }

    /// Resolution schedule; `total_time` overrides the section's `T`.
    pub fn resolution_schedule(&self, total_time: Option<f64>) -> Result<ResolutionSchedule> {
        let s = self.schedule_section()?;
        let t = total_time.or(s.total_time);
        let built = match (&s.dx, &s.dx_range) {
            (Some(_), Some(_)) => {
                return Err(config_err("schedule: give either dx or dx_range, not both"));
            }
            (None, None) => return Err(config_err("schedule: one of dx or dx_range is required")),
            (Some(dx), None) => {
                if dx.len() < 3 {
                    return Err(config_err(
                        "schedule.dx: at least 3 resolutions are needed for a fit",
                    ));
                }
                ResolutionSchedule::new(dx.clone(), s.b_scale, t, &self.constants)
            }
            (None, Some(r)) => {
                if r.points < 3 {
                    return Err(config_err(
                        "schedule.dx_range.points: at least 3 are needed for a fit",
                    ));
                }
                if r.max == r.min {
                    return Err(config_err(
                        "schedule.dx_range: max and min are equal, all dx would coincide",
                    ));
                }
                ResolutionSchedule::log_range(r.max, r.min, r.points, s.b_scale, t, &self.constants)
            }
        };
        built.map_err(|e| config_err(format!("[schedule]: {e}")))
    }

    /// Strengths listed under `measurement.D`, or `sigma * tau` when only those are given.
    pub fn strengths(&self) -> Result<Vec<f64>> {
        let m = &self.measurement;
        let product = match (m.sigma, m.tau) {
            (Some(s), Some(t)) => {
                positive("measurement.sigma", s)?;
                positive("measurement.tau", t)?;
                Some(s * t)
            }
            _ => None,
        };
        match (&m.diffusion, product) {
            (Some(list), product) => {
                if list.0.is_empty() {
                    return Err(config_err("measurement.D: list is empty"));
                }
                for d in &list.0 {
                    if !(d.0 > 0.0) {
                        return Err(config_err(format!("measurement.D = {}: must be positive or \"inf\"", d.0)));
                    }
                }
                if let Some(p) = product {
                    if list.0.len() != 1 || !close(list.0[0].0, p) {
                        return Err(config_err(format!(
                            "measurement: D = {:?} is inconsistent with sigma * tau = {p}; drop one of them or make D = sigma * tau",
                            list.0.iter().map(|d| d.0).collect::<Vec<_>>()
                        )));
                    }
                }
                Ok(list.0.iter().map(|d| d.0).collect())
            }
            (None, Some(p)) => Ok(vec![p]),
            (None, None) => Err(config_err(format!(
                "mode {} needs measurement.D (number or \"inf\"), or both measurement.sigma and measurement.tau",
                self.mode
            ))),
        }
    }

    /// Checks `t_c` against `D` unless `allow_mismatch` is set; `None` derives `t_c` from `D`.
    pub fn feedback_for(&self, diffusion: f64) -> Result<FeedbackConfig> {
        let c = &self.constants;
        match self.feedback.t_c {
            None => FeedbackConfig::matched_to(diffusion, c)
                .map_err(|e| config_err(format!("feedback: {e}"))),
            Some(t_c) => {
                positive("feedback.t_c", t_c)?;
                let fb = FeedbackConfig::new(t_c)?;
                if !self.feedback.allow_mismatch && !fb.is_matched(diffusion, c, CONSISTENCY_TOL) {
                    return Err(config_err(format!(
                        "feedback.t_c = {t_c} requires D = 2 hbar t_c^2 / m = {}, but D = {diffusion}; \
                         remove t_c to derive it from D, or set feedback.allow_mismatch = true",
                        fb.matched_diffusion(c)
                    )));
                }
                Ok(fb)
            }
        }
    }

    pub fn feedback_enabled(&self) -> bool {
        self.feedback.enabled.unwrap_or(true)
    }

    /// Full validation, including the mode-specific requirements.
    pub fn validate(&self) -> Result<()> {
        self.constants
            .validate()
            .map_err(|e| config_err(format!("[constants]: {e}")))?;
        self.initial_state()?;
        positive("fit.residual_threshold", self.fit.residual_threshold)?;
        if self.output.formats.is_empty() {
            return Err(config_err(
                "output.formats: list at least one of \"csv\", \"json\"",
            ));
        }
        let m = &self.measurement;
        if m.sigma.is_some() != m.tau.is_some()
            && m.diffusion.is_none()
            && self.mode != Mode::FeedbackRelaxation
        {
            return Err(config_err(
                "measurement: sigma and tau must be given together (or give D)",
            ));
        }
        match self.mode {
            Mode::NonselectiveDimension => {
                self.resolution_schedule(None)?;
                self.strengths()?;
                if m.resolution_ratio.is_some() {
                    return Err(config_err(
                        "measurement.resolution_ratio only applies to selective-dimension",
                    ));
                }
            }
            Mode::SelectiveDimension => {
                if self.ensemble.n_traj == 0 {
                    return Err(config_err("ensemble.n_traj must be >= 1"));
                }
                if m.sigma.is_some() || m.tau.is_some() {
                    return Err(config_err(
                        "selective-dimension sets tau from the schedule; give measurement.D or measurement.resolution_ratio instead of sigma/tau",
                    ));
                }
                match (&m.diffusion, m.resolution_ratio) {
                    (Some(_), Some(_)) => {
                        return Err(config_err(
                            "measurement: give either D or resolution_ratio, not both",
                        ));
                    }
                    (Some(_), None) => {
                        for d in self.strengths()? {
                            if !d.is_finite() && self.feedback_enabled() {
                                return Err(config_err(
                                    "measurement.D = inf with feedback enabled: feedback kicks diverge; use a finite D or feedback.enabled = false",
                                ));
                            }
                            if self.feedback_enabled() {
                                let fb = self.feedback_for(d)?;
                                let schedule = self.resolution_schedule(None)?;
                                let tau =
                                    schedule.interval(schedule.dx_values()[0], &self.constants);
                                check_loop(
                                    &fb,
                                    tau,
                                    &format!("D = {d}, dx = {}", schedule.dx_values()[0]),
                                )?;
                            }
                        }
                    }
                    (None, Some(r)) => positive("measurement.resolution_ratio", r)?,
                    (None, None) => {}
                }
                if m.diffusion.is_none() && self.feedback_enabled() {
                    // tau / t_c = sqrt(2 b_scale / ratio) at every resolution
                    let ratio = m.resolution_ratio.unwrap_or(1.0);
                    let b = self.schedule_section()?.b_scale;
                    let r = (2.0 * b / ratio).sqrt();
                    if r.is_finite() && r >= MAX_STABLE_STEP_RATIO {
                        return Err(config_err(format!(
                            "resolution-scaled meter: tau/t_c = sqrt(2 b_scale / resolution_ratio) = {r:.4} >= {MAX_STABLE_STEP_RATIO:.4}, \
                             the feedback loop diverges; lower b_scale or raise resolution_ratio"
                        )));
                    }
                }
                if m.diffusion.is_none() && self.feedback.t_c.is_some() {
                    return Err(config_err(
                        "feedback.t_c cannot be fixed with a resolution-scaled meter; it is matched at each resolution",
                    ));
                }
                if matches!(self.ensemble.n_steps, Some(n) if n < 2) {
                    return Err(config_err("ensemble.n_steps must be >= 2"));
                }
                self.resolution_schedule(None)?;
            }
            Mode::FeedbackRelaxation => {
                if self.ensemble.n_traj == 0 {
                    return Err(config_err("ensemble.n_traj must be >= 1"));
                }
                match self.ensemble.n_steps {
                    None | Some(0) => {
                        return Err(config_err(
                            "feedback-relaxation needs ensemble.n_steps >= 1",
                        ));
                    }
                    _ => {}
                }
                if self.ensemble.checkpoint_every == Some(0) {
                    return Err(config_err("ensemble.checkpoint_every must be >= 1"));
                }
                self.relaxation_meter()?;
            }
            Mode::OracleValidation => {
                if self.oracle.scenarios == 0 {
                    return Err(config_err("oracle.scenarios must be >= 1"));
                }
                if self.oracle.grid_points < 64 {
                    return Err(config_err("oracle.grid_points must be >= 64"));
                }
                positive("oracle.tolerance", self.oracle.tolerance)?;
            }
        }
        Ok(())
    }

    /// `(D, sigma, tau, feedback)` for feedback-relaxation.
    pub fn relaxation_meter(&self) -> Result<(f64, f64, f64, Option<FeedbackConfig>)> {
        let m = &self.measurement;
        let tau = m.tau.ok_or_else(|| {
            config_err("feedback-relaxation needs measurement.tau (interval between readouts)")
        })?;
        positive("measurement.tau", tau)?;
        let diffusion = match (&m.diffusion, m.sigma) {
            (Some(_), _) => {
                let list = self.strengths()?;
                if list.len() != 1 {
                    return Err(config_err(
                        "feedback-relaxation takes a single measurement.D",
                    ));
                }
                list[0]
            }
            (None, Some(s)) => {
                positive("measurement.sigma", s)?;
                s * tau
            }
            (None, None) => {
                return Err(config_err(
                    "feedback-relaxation needs measurement.D or measurement.sigma",
                ));
            }
        };
        if !diffusion.is_finite() {
            if self.feedback_enabled() {
                return Err(config_err(
                    "measurement.D = inf with feedback enabled: feedback kicks diverge; use a finite D or feedback.enabled = false",
                ));
            }
            return Ok((diffusion, f64::INFINITY, tau, None));
        }
        let fb = if self.feedback_enabled() {
            let fb = self.feedback_for(diffusion)?;
            check_loop(&fb, tau, "measurement")?;
            Some(fb)
        } else {
            None
        };
        Ok((diffusion, diffusion / tau, tau, fb))
    }
}
