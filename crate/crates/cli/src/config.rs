//! Sweep configuration: JSON parsing and exhaustive validation.
//!
//! Parsing walks the document by hand instead of deriving `Deserialize` so
//! that every problem (unknown key, wrong type, bad probability vector, empty
//! grid) is reported in one pass rather than stopping at the first.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use phaseconv_core::distributions::{ConvolutionOptions, IntDistribution, TRIM_THRESHOLD};
use phaseconv_core::mixed::{MixedTarget, DEFAULT_CLASS_CAP, DEFAULT_DENSE_CAP};
use phaseconv_core::u1::{NumberState, RateSchedule, DEFAULT_CONVERGENCE_THRESHOLD};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Bumped whenever a key, default or CSV column changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_MC_DRAWS: usize = 10_000;
pub const DEFAULT_FFT_LEN: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    U1Fom,
    U1Posterior,
    U1Rates,
    Zd,
    MixedBound,
    MixedOracle,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::U1Fom,
        Experiment::U1Posterior,
        Experiment::U1Rates,
        Experiment::Zd,
        Experiment::MixedBound,
        Experiment::MixedOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::U1Fom => "u1-fom",
            Experiment::U1Posterior => "u1-posterior",
            Experiment::U1Rates => "u1-rates",
            Experiment::Zd => "zd",
            Experiment::MixedBound => "mixed-bound",
            Experiment::MixedOracle => "mixed-oracle",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}; expected one of {}", names()))
    }
}

fn names() -> String {
    Experiment::ALL.map(Experiment::name).join(", ")
}

/// A probability list on consecutive integers starting at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub offset: i64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MSchedule {
    Rate(RateSchedule),
    List(Vec<u64>),
}

impl MSchedule {
    /// M for the `i`-th entry of the N grid.
    pub fn m_at(&self, i: usize, n: u64) -> u64 {
        match self {
            MSchedule::Rate(r) => r.m_for(n),
            MSchedule::List(ms) => ms[i],
        }
    }

    pub fn label(&self) -> String {
        match self {
            MSchedule::Rate(r) => r.label(),
            MSchedule::List(ms) => format!("M in {ms:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Methods {
    pub exact: bool,
    pub closed: bool,
    pub mc: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Self { exact: true, closed: true, mc: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    pub fft_len: usize,
    pub classes: usize,
    pub dense_dim: usize,
    /// Posterior quadrature / sampler grid; `None` picks the documented default.
    pub grid_points: Option<usize>,
}

impl Default for Caps {
    fn default() -> Self {
        Self { fft_len: DEFAULT_FFT_LEN, classes: DEFAULT_CLASS_CAP, dense_dim: DEFAULT_DENSE_CAP, grid_points: None }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub source: Option<NumberState>,
    /// Raw probabilities for the cyclic protocol (gaps allowed).
    pub zd_probs: Option<Vec<f64>>,
    pub target: Option<MixedTarget>,
    pub n_grid: Vec<u64>,
    pub m_schedule: Option<MSchedule>,
    pub methods: Methods,
    pub mc_draws: usize,
    pub seed: u64,
    pub threshold: f64,
    pub gammas: Vec<f64>,
    pub epsilon: Option<f64>,
    pub trim_threshold: f64,
    pub caps: Caps,
    pub output: Option<PathBuf>,
    /// SHA-256 of the canonicalised config document.
    pub config_hash: String,
}

impl SweepConfig {
    pub fn convolution(&self) -> ConvolutionOptions {
        ConvolutionOptions { trim_threshold: self.trim_threshold, max_len: self.caps.fft_len }
    }

    /// Target as a single pure state, when it is one.
    pub fn pure_target(&self) -> Option<&NumberState> {
        self.target.as_ref().filter(|t| t.rank() == 1).map(|t| &t.states()[0])
    }
}

/// All problems found in a config document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} config error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

const TOP_KEYS: &[&str] = &[
    "schema_version",
    "experiment",
    "source",
    "target",
    "n_grid",
    "m_schedule",
    "methods",
    "mc_draws",
    "seed",
    "threshold",
    "gammas",
    "epsilon",
    "trim_threshold",
    "caps",
    "output",
];

/// Parses and validates a config for `experiment`.
pub fn parse_config(text: &str, experiment: Experiment) -> Result<SweepConfig, ValidationErrors> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ValidationErrors(vec![format!("malformed JSON: {e}")]))?;
    let Value::Object(root) = &doc else {
        return Err(ValidationErrors(vec!["config must be a JSON object".into()]));
    };
    let mut v = Validator::default();
    v.known_keys(root, "", TOP_KEYS);

    if let Some(ver) = v.opt_u64(root, "schema_version", "schema_version") {
        if ver != SCHEMA_VERSION as u64 {
            v.err(format!("schema_version: {ver} is not supported (this build reads {SCHEMA_VERSION})"));
        }
    }
    if let Some(name) = v.opt_str(root, "experiment", "experiment") {
        match name.parse::<Experiment>() {
            Ok(e) if e != experiment => {
                v.err(format!("experiment: config is for \"{}\" but {experiment} was requested", e.name()))
            }
            Ok(_) => {}
            Err(msg) => v.err(format!("experiment: {msg}")),
        }
    }

    let needs_source = experiment != Experiment::MixedOracle;
    let needs_target = matches!(
        experiment,
        Experiment::U1Fom | Experiment::U1Rates | Experiment::MixedBound | Experiment::MixedOracle
    );
    let needs_n = experiment != Experiment::MixedOracle;
    let needs_m = matches!(
        experiment,
        Experiment::U1Fom | Experiment::U1Rates | Experiment::MixedBound | Experiment::MixedOracle
    );

    let mut source = None;
    let mut zd_probs = None;
    match root.get("source") {
        None if needs_source => v.err("source: required".into()),
        None => {}
        Some(value) => {
            if let Some(spec) = v.spectrum(value, "source") {
                if experiment == Experiment::Zd {
                    zd_probs = v.zd_probs(&spec, "source");
                } else {
                    source = v.number_state(&spec, "source");
                }
            }
        }
    }

    let target = match root.get("target") {
        None if needs_target => {
            v.err("target: required".into());
            None
        }
        None => None,
        Some(value) => v.target(value),
    };
    if let Some(t) = &target {
        if matches!(experiment, Experiment::U1Fom | Experiment::U1Rates) && t.rank() != 1 {
            v.err(format!("target: {experiment} needs a pure target (\"probs\"), not a mixture"));
        }
    }

    let n_grid = match root.get("n_grid") {
        None if needs_n => {
            v.err("n_grid: required".into());
            Vec::new()
        }
        None => Vec::new(),
        Some(value) => v.n_grid(value),
    };
    let m_schedule = match root.get("m_schedule") {
        None if needs_m => {
            v.err("m_schedule: required".into());
            None
        }
        None => None,
        Some(value) => v.m_schedule(value),
    };
    if let Some(MSchedule::List(ms)) = &m_schedule {
        if experiment != Experiment::MixedOracle && needs_m && !n_grid.is_empty() && ms.len() != n_grid.len() {
            v.err(format!("m_schedule.list: has {} entries but n_grid has {}", ms.len(), n_grid.len()));
        }
    }
    if experiment == Experiment::MixedOracle {
        match &m_schedule {
            Some(MSchedule::Rate(_)) => v.err("m_schedule: mixed-oracle needs an explicit \"list\" of M".into()),
            Some(MSchedule::List(ms)) if ms.iter().any(|&m| m > 16) => {
                v.err("m_schedule.list: mixed-oracle builds dense M-copy matrices; M must be <= 16".into())
            }
            _ => {}
        }
    }
    if experiment == Experiment::MixedBound {
        if let Some(MSchedule::List(ms)) = &m_schedule {
            if ms.iter().any(|&m| m < 2) {
                v.err("m_schedule.list: mixed-bound needs M >= 2 for the typical-set radius".into());
            }
        }
    }

    let methods = match root.get("methods") {
        None => Methods::default(),
        Some(value) => v.methods(value),
    };
    let mc_draws = v.opt_u64(root, "mc_draws", "mc_draws").map_or(DEFAULT_MC_DRAWS, |d| d as usize);
    if mc_draws < 100 {
        v.err(format!("mc_draws: {mc_draws} is below the minimum of 100"));
    }
    let seed = v.opt_u64(root, "seed", "seed").unwrap_or(0);
    let threshold = v.opt_f64(root, "threshold", "threshold").unwrap_or(DEFAULT_CONVERGENCE_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        v.err(format!("threshold: {threshold} outside [0, 1]"));
    }
    let gammas = match root.get("gammas") {
        None => default_gammas(),
        Some(value) => v.f64_list(value, "gammas").unwrap_or_default(),
    };
    if gammas.iter().any(|g| !g.is_finite()) {
        v.err("gammas: entries must be finite".into());
    }
    let epsilon = v.opt_f64(root, "epsilon", "epsilon");
    if let Some(e) = epsilon {
        if !(0.0..=2.0).contains(&e) {
            v.err(format!("epsilon: {e} outside [0, 2]"));
        }
    }
    let trim_threshold = v.opt_f64(root, "trim_threshold", "trim_threshold").unwrap_or(TRIM_THRESHOLD);
    if !(0.0..1e-6).contains(&trim_threshold) {
        v.err(format!("trim_threshold: {trim_threshold} outside [0, 1e-6)"));
    }
    let caps = match root.get("caps") {
        None => Caps::default(),
        Some(value) => v.caps(value),
    };
    let output = v.opt_str(root, "output", "output").map(PathBuf::from);

    if !v.errors.is_empty() {
        return Err(ValidationErrors(v.errors));
    }
    Ok(SweepConfig {
        experiment,
        source,
        zd_probs,
        target,
        n_grid,
        m_schedule,
        methods,
        mc_draws,
        seed,
        threshold,
        gammas,
        epsilon,
        trim_threshold,
        caps,
        output,
        config_hash: config_hash(&doc),
    })
}

fn default_gammas() -> Vec<f64> {
    use std::f64::consts::PI;
    vec![0.0, PI / 8.0, PI / 4.0, PI / 2.0, PI]
}

/// Hex SHA-256 of the document with keys sorted and whitespace removed.
pub fn config_hash(doc: &Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical.
    let canonical = serde_json::to_string(doc).expect("a parsed Value always serialises");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Validator {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Validator {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn known_keys(&mut self, obj: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(format!("{}: unknown key (allowed: {})", join(path, key), allowed.join(", ")));
            }
        }
    }

    fn object<'a>(&mut self, value: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match value {
            Value::Object(m) => Some(m),
            other => {
                self.err(format!("{path}: expected an object, found {}", kind(other)));
                None
            }
        }
    }

    fn u64_value(&mut self, value: &Value, path: &str) -> Option<u64> {
        match value.as_u64() {
            Some(x) => Some(x),
            None => {
                self.err(format!("{path}: expected a non-negative integer, found {value}"));
                None
            }
        }
    }

    fn f64_value(&mut self, value: &Value, path: &str) -> Option<f64> {
        match value.as_f64() {
            Some(x) => Some(x),
            None => {
                self.err(format!("{path}: expected a number, found {value}"));
                None
            }
        }
    }

    fn opt_u64(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<u64> {
        obj.get(key).and_then(|v| self.u64_value(v, path))
    }

    fn opt_f64(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        obj.get(key).and_then(|v| self.f64_value(v, path))
    }

    fn opt_str(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.err(format!("{path}: expected a string, found {}", kind(other)));
                None
            }
        }
    }

    fn f64_list(&mut self, value: &Value, path: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = value else {
            self.err(format!("{path}: expected an array of numbers, found {}", kind(value)));
            return None;
        };
        let before = self.errors.len();
        let out: Vec<f64> =
            items.iter().enumerate().filter_map(|(i, x)| self.f64_value(x, &format!("{path}[{i}]"))).collect();
        (self.errors.len() == before).then_some(out)
    }

    fn u64_list(&mut self, value: &Value, path: &str) -> Option<Vec<u64>> {
        let Value::Array(items) = value else {
            self.err(format!("{path}: expected an array of integers, found {}", kind(value)));
            return None;
        };
        let before = self.errors.len();
        let out: Vec<u64> =
            items.iter().enumerate().filter_map(|(i, x)| self.u64_value(x, &format!("{path}[{i}]"))).collect();
        (self.errors.len() == before).then_some(out)
    }

    fn spectrum(&mut self, value: &Value, path: &str) -> Option<Spectrum> {
        let obj = self.object(value, path)?;
        self.known_keys(obj, path, &["probs", "offset"]);
        let offset = match obj.get("offset") {
            None => Some(0),
            Some(x) => match x.as_i64() {
                Some(o) => Some(o),
                None => {
                    self.err(format!("{path}.offset: expected an integer, found {x}"));
                    None
                }
            },
        };
        let probs = match obj.get("probs") {
            None => {
                self.err(format!("{path}.probs: required"));
                None
            }
            Some(p) => self.f64_list(p, &join(path, "probs")),
        };
        Some(Spectrum { offset: offset?, probs: probs? })
    }

    fn number_state(&mut self, spec: &Spectrum, path: &str) -> Option<NumberState> {
        let dist = match IntDistribution::new(spec.offset, spec.probs.clone()) {
            Ok(d) => d,
            Err(e) => {
                self.err(format!("{path}.probs: {e}"));
                return None;
            }
        };
        match NumberState::standardize(&dist) {
            Ok(s) => Some(s),
            Err(e) => {
                self.err(format!("{path}: {e}"));
                None
            }
        }
    }

    fn zd_probs(&mut self, spec: &Spectrum, path: &str) -> Option<Vec<f64>> {
        if spec.offset != 0 {
            self.err(format!("{path}.offset: the cyclic protocol indexes Z_d from 0; offset must be 0"));
        }
        if spec.probs.len() < 2 {
            self.err(format!("{path}.probs: need d >= 2 entries, got {}", spec.probs.len()));
            return None;
        }
        // reuse the PMF checks (nonnegative, finite, unit mass); gaps are fine on Z_d
        match IntDistribution::new(0, spec.probs.clone()) {
            Ok(_) => Some(spec.probs.clone()),
            Err(e) => {
                self.err(format!("{path}.probs: {e}"));
                None
            }
        }
    }

    fn target(&mut self, value: &Value) -> Option<MixedTarget> {
        let obj = self.object(value, "target")?;
        if obj.contains_key("components") {
            self.known_keys(obj, "target", &["components"]);
            let Value::Array(items) = &obj["components"] else {
                self.err("target.components: expected an array".into());
                return None;
            };
            if items.is_empty() {
                self.err("target.components: must not be empty".into());
                return None;
            }
            let mut parts = Vec::new();
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                let path = format!("target.components[{i}]");
                let Some(c) = self.object(item, &path) else {
                    ok = false;
                    continue;
                };
                self.known_keys(c, &path, &["weight", "probs", "offset"]);
                let weight = match c.get("weight") {
                    None => {
                        self.err(format!("{path}.weight: required"));
                        None
                    }
                    Some(w) => self.f64_value(w, &format!("{path}.weight")),
                };
                let mut inner = c.clone();
                inner.remove("weight");
                let state = self.spectrum(&Value::Object(inner), &path).and_then(|s| self.number_state(&s, &path));
                match (weight, state) {
                    (Some(w), Some(s)) => parts.push((w, s)),
                    _ => ok = false,
                }
            }
            if !ok {
                return None;
            }
            match MixedTarget::new(parts) {
                Ok(t) => Some(t),
                Err(e) => {
                    self.err(format!("target.components: {e}"));
                    None
                }
            }
        } else {
            let spec = self.spectrum(value, "target")?;
            self.number_state(&spec, "target").map(MixedTarget::pure)
        }
    }

    fn n_grid(&mut self, value: &Value) -> Vec<u64> {
        let grid = match value {
            Value::Object(obj) => {
                self.known_keys(obj, "n_grid", &["from", "to", "step"]);
                let from = obj.get("from").and_then(|x| self.u64_value(x, "n_grid.from"));
                let to = obj.get("to").and_then(|x| self.u64_value(x, "n_grid.to"));
                let step = obj.get("step").map_or(Some(1), |x| self.u64_value(x, "n_grid.step"));
                if !obj.contains_key("from") || !obj.contains_key("to") {
                    self.err("n_grid: a range needs both \"from\" and \"to\"".into());
                }
                match (from, to, step) {
                    (Some(_), Some(_), Some(0)) => {
                        self.err("n_grid.step: must be positive".into());
                        return Vec::new();
                    }
                    (Some(a), Some(b), Some(s)) => (a..=b).step_by(s as usize).collect(),
                    _ => return Vec::new(),
                }
            }
            other => match self.u64_list(other, "n_grid") {
                Some(g) => g,
                None => return Vec::new(),
            },
        };
        if grid.is_empty() {
            self.err("n_grid: must not be empty".into());
        } else if grid[0] == 0 {
            self.err("n_grid: copy numbers must be positive".into());
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            self.err("n_grid: must be strictly increasing".into());
        }
        grid
    }

    fn m_schedule(&mut self, value: &Value) -> Option<MSchedule> {
        let obj = self.object(value, "m_schedule")?;
        self.known_keys(obj, "m_schedule", &["a", "c", "list"]);
        let present: Vec<&str> = ["a", "c", "list"].into_iter().filter(|k| obj.contains_key(*k)).collect();
        if present.len() != 1 {
            self.err(format!("m_schedule: give exactly one of \"a\", \"c\" or \"list\" (found {present:?})"));
            return None;
        }
        let schedule = match present[0] {
            "a" => RateSchedule::Power(self.f64_value(&obj["a"], "m_schedule.a")?),
            "c" => RateSchedule::Linear(self.f64_value(&obj["c"], "m_schedule.c")?),
            _ => {
                let ms = self.u64_list(&obj["list"], "m_schedule.list")?;
                if ms.is_empty() || ms.contains(&0) {
                    self.err("m_schedule.list: must be nonempty with positive entries".into());
                    return None;
                }
                return Some(MSchedule::List(ms));
            }
        };
        if let Err(e) = schedule.validate() {
            self.err(format!("m_schedule: {e}"));
            return None;
        }
        Some(MSchedule::Rate(schedule))
    }

    fn methods(&mut self, value: &Value) -> Methods {
        let mut m = Methods { exact: false, closed: false, mc: false };
        let Value::Array(items) = value else {
            self.err(format!("methods: expected an array of strings, found {}", kind(value)));
            return Methods::default();
        };
        for (i, item) in items.iter().enumerate() {
            match item.as_str() {
                Some("exact") => m.exact = true,
                Some("closed") => m.closed = true,
                Some("mc") => m.mc = true,
                _ => self.err(format!("methods[{i}]: {item} is not one of \"exact\", \"closed\", \"mc\"")),
            }
        }
        if !(m.exact || m.closed || m.mc) {
            self.err("methods: must name at least one method".into());
        }
        m
    }

    fn caps(&mut self, value: &Value) -> Caps {
        let mut caps = Caps::default();
        let Some(obj) = self.object(value, "caps") else {
            return caps;
        };
        self.known_keys(obj, "caps", &["fft_len", "classes", "dense_dim", "grid_points"]);
        let positive = |v: &mut Self, key: &str| {
            let x = obj.get(key).and_then(|x| v.u64_value(x, &format!("caps.{key}")));
            if x == Some(0) {
                v.err(format!("caps.{key}: must be positive"));
            }
            x.map(|x| x as usize)
        };
        if let Some(x) = positive(self, "fft_len") {
            caps.fft_len = x;
        }
        if let Some(x) = positive(self, "classes") {
            caps.classes = x;
        }
        if let Some(x) = positive(self, "dense_dim") {
            caps.dense_dim = x;
        }
        caps.grid_points = positive(self, "grid_points");
        caps
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}
