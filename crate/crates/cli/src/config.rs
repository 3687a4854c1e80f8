//! Experiment configuration: a flat `key = value` file mirrored by CLI
//! flags (flags win), resolved against per-experiment defaults and
//! validated before anything is written.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use subfrac::inequality::gamma_max;
use subfrac::{FracParams, GroupDescriptor, QuasiNorm};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SobolevScan,
    HardyMu,
    Picone,
    Levelset,
    LemmaLem1,
    Eigen,
    Lyapunov,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SobolevScan,
        Experiment::HardyMu,
        Experiment::Picone,
        Experiment::Levelset,
        Experiment::LemmaLem1,
        Experiment::Eigen,
        Experiment::Lyapunov,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Experiment::SobolevScan => "sobolev-scan",
            Experiment::HardyMu => "hardy-mu",
            Experiment::Picone => "picone",
            Experiment::Levelset => "levelset",
            Experiment::LemmaLem1 => "lemma-lem1",
            Experiment::Eigen => "eigen",
            Experiment::Lyapunov => "lyapunov",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, CliError> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.id() == id.trim())
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|e| e.id()).collect();
                CliError::Config(format!(
                    "unknown experiment '{id}' (expected one of {})",
                    known.join(", ")
                ))
            })
    }

    /// Experiments whose statements need `Q > sp`.
    fn needs_subcritical(&self) -> bool {
        matches!(
            self,
            Experiment::SobolevScan
                | Experiment::HardyMu
                | Experiment::Levelset
                | Experiment::Lyapunov
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Keys accepted in config files and as flags.
pub const KEYS: [&str; 15] = [
    "experiment",
    "group",
    "norm",
    "s",
    "p",
    "gamma",
    "theta",
    "n",
    "box",
    "resolution",
    "R",
    "count",
    "seed",
    "deterministic",
    "out",
];

/// Unresolved `key → value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig(pub BTreeMap<String, String>);

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key '{key}'",
                    k + 1
                )));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key '{key}'",
                    k + 1
                )));
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `other` wins on conflicts.
    pub fn merged(mut self, other: RawConfig) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub group: String,
    pub norm: String,
    pub s: f64,
    pub p: f64,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    /// Cells per axis for grid experiments, cells per radius for the
    /// eigenvalue experiments.
    pub n: usize,
    /// Length scale of the sampling box.
    pub box_half: f64,
    /// Sphere-rule resolution.
    pub resolution: usize,
    pub radius: f64,
    /// Family size, γ-grid size or number of random instances.
    pub count: usize,
    pub seed: u64,
    pub deterministic: bool,
    pub out: PathBuf,
}

fn parse_num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>, CliError> {
    match raw.0.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'"))),
    }
}

fn parse_bool(raw: &RawConfig, key: &str) -> Result<Option<bool>, CliError> {
    match raw.0.get(key).map(|s| s.as_str()) {
        None => Ok(None),
        Some("true" | "1" | "yes") => Ok(Some(true)),
        Some("false" | "0" | "no") => Ok(Some(false)),
        Some(v) => Err(CliError::Config(format!(
            "{key}: expected a boolean, got '{v}'"
        ))),
    }
}

fn default_n(e: Experiment, g: &GroupDescriptor) -> usize {
    let dim = g.dim();
    let three = dim >= 3;
    match e {
        Experiment::Eigen | Experiment::Lyapunov => {
            if three {
                6
            } else {
                16
            }
        }
        Experiment::Picone => [32, 16, 8][dim.min(3) - 1],
        Experiment::LemmaLem1 => [512, 128, 40][dim.min(3) - 1],
        Experiment::SobolevScan | Experiment::HardyMu | Experiment::Levelset => {
            [256, 48, 20][dim.min(3) - 1]
        }
    }
}

fn default_count(e: Experiment) -> usize {
    match e {
        Experiment::HardyMu => 20,
        Experiment::SobolevScan => 12,
        Experiment::Levelset => 10,
        Experiment::LemmaLem1 => 20,
        Experiment::Picone => 3,
        Experiment::Eigen | Experiment::Lyapunov => 1,
    }
}

impl ExperimentConfig {
    /// Resolves defaults and checks admissibility. Nothing touches the file
    /// system here.
    pub fn resolve(raw: &RawConfig) -> Result<Self, CliError> {
        for key in raw.0.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("unknown key '{key}'")));
            }
        }
        let experiment = Experiment::from_id(
            raw.0
                .get("experiment")
                .ok_or_else(|| CliError::Config("no experiment given".into()))?,
        )?;
        let group = raw
            .0
            .get("group")
            .cloned()
            .unwrap_or_else(|| "abelian:1".into());
        let g = GroupDescriptor::from_id(&group).map_err(CliError::config)?;
        let default_norm = if g.name() == "heisenberg1" {
            "koranyi"
        } else {
            "euclidean"
        };
        let norm = raw
            .0
            .get("norm")
            .cloned()
            .unwrap_or_else(|| default_norm.into());
        let quasi = QuasiNorm::from_id(&norm).map_err(CliError::config)?;
        quasi.check_compatible(&g).map_err(CliError::config)?;
        let norm = quasi.id().to_string();
        let s = parse_num(raw, "s")?.unwrap_or(0.25);
        let p = parse_num(raw, "p")?.unwrap_or(2.0);
        let params = FracParams::new(s, p).map_err(CliError::config)?;
        if experiment.needs_subcritical() {
            params
                .require_subcritical(g.q_dim())
                .map_err(CliError::config)?;
        }
        let gamma: Option<f64> = parse_num(raw, "gamma")?;
        if let Some(gm) = gamma {
            let top = gamma_max(&g, &params);
            if !(gm > 0.0 && gm < top) {
                return Err(CliError::Config(format!(
                    "gamma = {gm} outside the admissible interval (0, {top})"
                )));
            }
        }
        let theta: Option<f64> = parse_num(raw, "theta")?;
        if let Some(th) = theta {
            let lo = g.q_dim() / params.sp();
            if !(th > lo && th.is_finite()) {
                return Err(CliError::Config(format!(
                    "theta = {th} outside the admissible range ({lo}, ∞)"
                )));
            }
        }
        let n = parse_num(raw, "n")?.unwrap_or_else(|| default_n(experiment, &g));
        if n < 2 {
            return Err(CliError::Config("n must be at least 2".into()));
        }
        let box_half = parse_num(raw, "box")?.unwrap_or(1.0);
        let radius = parse_num(raw, "R")?.unwrap_or(1.0);
        for (k, v) in [("box", box_half), ("R", radius)] {
            if !(v > 0.0 && f64::is_finite(v)) {
                return Err(CliError::Config(format!("{k} must be positive and finite")));
            }
        }
        let resolution = parse_num(raw, "resolution")?.unwrap_or(64);
        if resolution < 8 {
            return Err(CliError::Config("resolution must be at least 8".into()));
        }
        let count = parse_num(raw, "count")?.unwrap_or_else(|| default_count(experiment));
        if count == 0 {
            return Err(CliError::Config("count must be positive".into()));
        }
        if matches!(experiment, Experiment::SobolevScan | Experiment::Levelset) && count > 12 {
            return Err(CliError::Config(
                "the test-function family has 12 members".into(),
            ));
        }
        Ok(Self {
            experiment,
            group: g.name().to_string(),
            norm,
            s,
            p,
            gamma,
            theta,
            n,
            box_half,
            resolution,
            radius,
            count,
            seed: parse_num(raw, "seed")?.unwrap_or(0),
            deterministic: parse_bool(raw, "deterministic")?.unwrap_or(false),
            out: raw
                .0
                .get("out")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn group(&self) -> GroupDescriptor {
        GroupDescriptor::from_id(&self.group).expect("validated at resolve time")
    }

    pub fn norm(&self) -> QuasiNorm {
        QuasiNorm::from_id(&self.norm).expect("validated at resolve time")
    }

    pub fn params(&self) -> FracParams {
        FracParams::new(self.s, self.p).expect("validated at resolve time")
    }

    /// Canonical `key=value` lines, sorted by key, of every resolved field
    /// except the output path, plus the artifact version.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        fields.insert("experiment", self.experiment.id().into());
        fields.insert("group", self.group.clone());
        fields.insert("norm", self.norm.clone());
        fields.insert("s", format!("{:?}", self.s));
        fields.insert("p", format!("{:?}", self.p));
        fields.insert("gamma", opt(self.gamma));
        fields.insert("theta", opt(self.theta));
        fields.insert("n", self.n.to_string());
        fields.insert("box", format!("{:?}", self.box_half));
        fields.insert("resolution", self.resolution.to_string());
        fields.insert("R", format!("{:?}", self.radius));
        fields.insert("count", self.count.to_string());
        fields.insert("seed", self.seed.to_string());
        fields.insert("deterministic", self.deterministic.to_string());
        fields.insert("version", crate::VERSION.into());
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
