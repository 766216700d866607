//! Experiment configuration files.
//!
//! A config is a TOML document whose numbers are in units of the two-photon
//! loss rate. Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kerrcat::analysis::GridSpec;
use kerrcat::fock::{cat_state, coherent_state};
use kerrcat::{Parity, StateVector, SystemParams, C64};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Steady,
    Evolve,
    Trajectory,
    Ensemble,
    Feedback,
    Wigner,
    Sweep,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Steady => "steady",
            Scenario::Evolve => "evolve",
            Scenario::Trajectory => "trajectory",
            Scenario::Ensemble => "ensemble",
            Scenario::Feedback => "feedback",
            Scenario::Wigner => "wigner",
            Scenario::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParityName {
    Even,
    #[default]
    Odd,
}

impl From<ParityName> for Parity {
    fn from(p: ParityName) -> Parity {
        match p {
            ParityName::Even => Parity::Even,
            ParityName::Odd => Parity::Odd,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub detuning: f64,
    pub kerr: f64,
    /// `|G|`
    pub pump: f64,
    /// `arg G` in radians.
    #[serde(default)]
    pub pump_phase: f64,
    pub gamma: f64,
    pub eta: f64,
    #[serde(default)]
    pub feedback_rate: f64,
    #[serde(default)]
    pub feedback_suppress: ParityName,
}

impl ParamsConfig {
    pub fn to_params(&self) -> SystemParams {
        SystemParams::new(self.detuning, self.kerr, C64::from_polar(self.pump, self.pump_phase), self.gamma, self.eta)
            .with_feedback(self.feedback_rate, self.feedback_suppress.into())
    }

    fn validate(&self, section: &str) -> CliResult<()> {
        let fields = [
            ("detuning", self.detuning),
            ("kerr", self.kerr),
            ("pump", self.pump),
            ("pump_phase", self.pump_phase),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("feedback_rate", self.feedback_rate),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(CliError::config(format!("{section}.{name} must be finite, got {v}")));
            }
        }
        for (name, v) in
            [("pump", self.pump), ("gamma", self.gamma), ("eta", self.eta), ("feedback_rate", self.feedback_rate)]
        {
            if v < 0.0 {
                return Err(CliError::config(format!("{section}.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `"auto"` or a fixed number of Fock levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CutoffSpec {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for CutoffSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CutoffSpec::Auto => s.serialize_str("auto"),
            CutoffSpec::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for CutoffSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = CutoffSpec;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"auto\" or an integer >= 2")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<CutoffSpec, E> {
                if v == "auto" {
                    Ok(CutoffSpec::Auto)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<CutoffSpec, E> {
                if v >= 2 {
                    Ok(CutoffSpec::Fixed(v as usize))
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Signed(v), &self))
                }
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<CutoffSpec, E> {
                self.visit_i64(v as i64)
            }
        }
        d.deserialize_any(Visitor)
    }
}

/// Initial state: `vacuum`, `fock:n`, `coherent:re,im`, `cat:+:re,im`,
/// `cat:-:re,im`, or `fit:scale,phase`, a coherent state at
/// `scale · α_fit · e^{i phase}` where `α_fit` is the cat fitted to the
/// dominant steady-state eigenvector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialState {
    Vacuum,
    Fock(usize),
    Coherent(C64),
    Cat(Parity, C64),
    FitRelative { scale: f64, phase: f64 },
}

fn parse_complex(s: &str) -> Option<C64> {
    let (re, im) = s.split_once(',')?;
    let re = re.trim().parse::<f64>().ok()?;
    let im = im.trim().parse::<f64>().ok()?;
    (re.is_finite() && im.is_finite()).then_some(C64::new(re, im))
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("invalid initial state {s:?}");
        let s = s.trim();
        if s == "vacuum" {
            return Ok(InitialState::Vacuum);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "fock" => rest.trim().parse().map(InitialState::Fock).map_err(|_| bad()),
            "coherent" => parse_complex(rest).map(InitialState::Coherent).ok_or_else(bad),
            "cat" => {
                let (sign, amp) = rest.split_once(':').ok_or_else(bad)?;
                let parity = match sign {
                    "+" => Parity::Even,
                    "-" => Parity::Odd,
                    _ => return Err(bad()),
                };
                parse_complex(amp).map(|a| InitialState::Cat(parity, a)).ok_or_else(bad)
            }
            "fit" => {
                parse_complex(rest).map(|z| InitialState::FitRelative { scale: z.re, phase: z.im }).ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Vacuum => write!(f, "vacuum"),
            InitialState::Fock(n) => write!(f, "fock:{n}"),
            InitialState::Coherent(a) => write!(f, "coherent:{},{}", a.re, a.im),
            InitialState::Cat(p, a) => {
                write!(f, "cat:{}:{},{}", if *p == Parity::Even { "+" } else { "-" }, a.re, a.im)
            }
            InitialState::FitRelative { scale, phase } => write!(f, "fit:{scale},{phase}"),
        }
    }
}

impl InitialState {
    pub fn needs_fit(&self) -> bool {
        matches!(self, InitialState::FitRelative { .. })
    }

    /// `fit` must be given for `fit:` states.
    pub fn build(&self, cutoff: usize, fit: Option<C64>) -> kerrcat::Result<StateVector> {
        match *self {
            InitialState::Vacuum => StateVector::vacuum(cutoff),
            InitialState::Fock(n) => StateVector::fock(n, cutoff),
            InitialState::Coherent(a) => coherent_state(a, cutoff),
            InitialState::Cat(p, a) => cat_state(a, p, cutoff),
            InitialState::FitRelative { scale, phase } => {
                let alpha =
                    fit.ok_or_else(|| kerrcat::Error::InvalidArgument("no fitted amplitude available".into()))?;
                coherent_state(alpha * C64::from_polar(scale, phase), cutoff)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Adaptive Runge–Kutta.
    #[default]
    Rk,
    /// Exact sector propagators, for spans of many decades.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Explicit output times; excludes `t_max`/`points`.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub t_max: Option<f64>,
    /// First time of a log grid.
    #[serde(default)]
    pub t_min: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    #[serde(default)]
    pub method: Method,
    /// Also report when the fidelity to the steady state first reaches this.
    #[serde(default)]
    pub passage_threshold: Option<f64>,
    #[serde(default = "default_passage_step")]
    pub passage_step: f64,
}

fn default_points() -> usize {
    101
}

fn default_passage_step() -> f64 {
    1e-2
}

impl TimeConfig {
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        if let Some(times) = &self.times {
            if self.t_max.is_some() || self.t_min.is_some() {
                return Err(CliError::config("time.times excludes time.t_max and time.t_min"));
            }
            if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CliError::config("time.times must be non-empty, >= 0 and strictly increasing"));
            }
            return Ok(times.clone());
        }
        let t_max = self.t_max.ok_or_else(|| CliError::config("time needs either times or t_max"))?;
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(CliError::config(format!("time.t_max must be > 0, got {t_max}")));
        }
        if self.points < 2 {
            return Err(CliError::config(format!("time.points must be >= 2, got {}", self.points)));
        }
        let last = (self.points - 1) as f64;
        match self.spacing {
            Spacing::Linear => {
                if self.t_min.is_some() {
                    return Err(CliError::config("time.t_min is only used with spacing = \"log\""));
                }
                Ok((0..self.points).map(|k| t_max * k as f64 / last).collect())
            }
            Spacing::Log => {
                let t_min = self.t_min.ok_or_else(|| CliError::config("log spacing needs time.t_min"))?;
                if !(t_min > 0.0 && t_min < t_max) {
                    return Err(CliError::config(format!("time.t_min must be in (0, t_max), got {t_min}")));
                }
                let ratio = (t_max / t_min).ln();
                Ok((0..self.points).map(|k| t_min * (ratio * k as f64 / last).exp()).collect())
            }
        }
    }

    fn validate(&self) -> CliResult<()> {
        self.grid()?;
        if let Some(th) = self.passage_threshold {
            if !(th > 0.0 && th <= 1.0) {
                return Err(CliError::config(format!("time.passage_threshold must be in (0, 1], got {th}")));
            }
        }
        if !(self.passage_step > 0.0) || !self.passage_step.is_finite() {
            return Err(CliError::config(format!("time.passage_step must be > 0, got {}", self.passage_step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Add the master-equation curves to ensemble output.
    #[serde(default = "default_true")]
    pub compare: bool,
}

fn default_count() -> usize {
    100
}

fn default_dt() -> f64 {
    kerrcat::trajectory::DEFAULT_DT
}

fn default_true() -> bool {
    true
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { count: default_count(), seed: 0, dt: default_dt(), compare: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_series_tol")]
    pub series_tol: f64,
}

fn default_rtol() -> f64 {
    1e-8
}

fn default_atol() -> f64 {
    1e-10
}

fn default_series_tol() -> f64 {
    kerrcat::exact::DEFAULT_SERIES_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: default_rtol(), atol: default_atol(), series_tol: default_series_tol() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WignerSource {
    /// Displaced-parity trace of the steady-state matrix.
    #[default]
    Steady,
    /// Closed-form steady-state Wigner function.
    Analytic,
    /// The first initial state.
    Initial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    #[serde(default = "default_re_min")]
    pub re_min: f64,
    #[serde(default = "default_re_max")]
    pub re_max: f64,
    #[serde(default = "default_re_min")]
    pub im_min: f64,
    #[serde(default = "default_re_max")]
    pub im_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub source: WignerSource,
}

fn default_re_min() -> f64 {
    GridSpec::default().re_min
}

fn default_re_max() -> f64 {
    GridSpec::default().re_max
}

fn default_step() -> f64 {
    GridSpec::default().step
}

impl Default for WignerConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        WignerConfig {
            re_min: g.re_min,
            re_max: g.re_max,
            im_min: g.im_min,
            im_max: g.im_max,
            step: g.step,
            source: WignerSource::default(),
        }
    }
}

impl WignerConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec { re_min: self.re_min, re_max: self.re_max, im_min: self.im_min, im_max: self.im_max, step: self.step }
    }

    pub fn points(&self) -> usize {
        self.spec().re_axis().len() * self.spec().im_axis().len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub rates: Vec<f64>,
    #[serde(default)]
    pub suppress: ParityName,
    /// Dump the steady-state Wigner grid for every rate.
    #[serde(default = "default_true")]
    pub wigner: bool,
}

/// Lists replacing the corresponding base parameter; omitted lists keep the
/// base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub detuning: Vec<f64>,
    #[serde(default)]
    pub kerr: Vec<f64>,
    #[serde(default)]
    pub pump: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub feedback_rate: Vec<f64>,
}

impl SweepConfig {
    /// Cross product in lexicographic order of the sorted coordinate lists.
    pub fn points(&self, base: &ParamsConfig) -> Vec<ParamsConfig> {
        let axis = |list: &Vec<f64>, default: f64| -> Vec<f64> {
            if list.is_empty() {
                vec![default]
            } else {
                let mut v = list.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        };
        let mut out = Vec::new();
        for d in axis(&self.detuning, base.detuning) {
            for u in axis(&self.kerr, base.kerr) {
                for g in axis(&self.pump, base.pump) {
                    for gamma in axis(&self.gamma, base.gamma) {
                        for eta in axis(&self.eta, base.eta) {
                            for f in axis(&self.feedback_rate, base.feedback_rate) {
                                out.push(ParamsConfig {
                                    detuning: d,
                                    kerr: u,
                                    pump: g,
                                    gamma,
                                    eta,
                                    feedback_rate: f,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// File name prefix; defaults to the scenario name.
    #[serde(default)]
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub params: ParamsConfig,
    #[serde(default)]
    pub cutoff: CutoffSpec,
    /// Initial states for evolve, trajectory and ensemble runs.
    #[serde(default = "default_initial")]
    pub initial: Vec<String>,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub wigner: Option<WignerConfig>,
    #[serde(default)]
    pub feedback: Option<FeedbackConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_initial() -> Vec<String> {
    vec!["vacuum".into()]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> SystemParams {
        self.params.to_params()
    }

    pub fn initial_states(&self) -> CliResult<Vec<InitialState>> {
        self.initial
            .iter()
            .enumerate()
            .map(|(k, s)| s.parse().map_err(|e| CliError::config(format!("initial[{k}]: {e}"))))
            .collect()
    }

    pub fn time(&self) -> CliResult<&TimeConfig> {
        self.time.as_ref().ok_or_else(|| CliError::config(format!("scenario {} needs a [time] section", self.scenario)))
    }

    pub fn prefix(&self) -> String {
        self.output.prefix.clone().unwrap_or_else(|| self.scenario.as_str().to_string())
    }

    /// Checks every field the scenario uses.
    pub fn validate(&self) -> CliResult<()> {
        self.params.validate("params")?;
        let p = self.params();
        if p.one_photon_rate <= 0.0 && p.two_photon_rate <= 0.0 {
            return Err(CliError::config("params.gamma or params.eta must be > 0"));
        }
        self.initial_states()?;
        if self.initial.is_empty() {
            return Err(CliError::config("initial must list at least one state"));
        }
        if let Some(t) = &self.time {
            t.validate()?;
        }
        let tol = &self.tolerances;
        for (name, v) in [("rtol", tol.rtol), ("atol", tol.atol), ("series_tol", tol.series_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::config(format!("tolerances.{name} must be > 0, got {v}")));
            }
        }
        let tr = &self.trajectory;
        if !(tr.dt > 0.0) || !tr.dt.is_finite() {
            return Err(CliError::config(format!("trajectory.dt must be > 0, got {}", tr.dt)));
        }
        if tr.count == 0 {
            return Err(CliError::config("trajectory.count must be >= 1"));
        }
        if let Some(w) = &self.wigner {
            w.spec().validate().map_err(|e| CliError::config(format!("wigner: {e}")))?;
        }
        if let Some(fb) = &self.feedback {
            if fb.rates.is_empty() {
                return Err(CliError::config("feedback.rates must not be empty"));
            }
            if let Some(r) = fb.rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
                return Err(CliError::config(format!("feedback.rates must be >= 0, got {r}")));
            }
        }
        if let Some(sw) = &self.sweep {
            for point in sw.points(&self.params) {
                point.validate("sweep")?;
            }
        }
        match self.scenario {
            Scenario::Evolve => {
                self.time()?;
            }
            Scenario::Trajectory | Scenario::Ensemble => {
                let t = self.time()?;
                if t.spacing != Spacing::Linear || t.times.is_some() {
                    return Err(CliError::config("trajectory output needs a linear time grid (t_max, points)"));
                }
                self.record_stride()?;
            }
            Scenario::Feedback => {
                if self.feedback.is_none() {
                    return Err(CliError::config("scenario feedback needs a [feedback] section"));
                }
            }
            Scenario::Sweep => {
                if self.sweep.is_none() {
                    return Err(CliError::config("scenario sweep needs a [sweep] section"));
                }
            }
            Scenario::Steady | Scenario::Wigner => {}
        }
        Ok(())
    }

    /// Trajectory steps between output times.
    pub fn record_stride(&self) -> CliResult<usize> {
        let t = self.time()?;
        let grid = t.grid()?;
        let interval = grid[1] - grid[0];
        let stride = (interval / self.trajectory.dt).round();
        if stride < 1.0 || (stride * self.trajectory.dt - interval).abs() > 1e-9 * interval {
            return Err(CliError::config(format!(
                "output interval {interval} is not a multiple of trajectory.dt = {}",
                self.trajectory.dt
            )));
        }
        Ok(stride as usize)
    }
}
