//! Experiment configuration: `key = value` lines, `#` comments and optional
//! `[kind]` sections. Command-line flags are applied afterwards through
//! [`ExperimentConfig::set`], so they use the same names as the file keys.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use redunet::vector::Membership;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Gauss2d,
    Gauss3d,
    Signals1d,
    MnistRotation,
    MnistTranslation,
    CustomVector,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Gauss2d,
        Kind::Gauss3d,
        Kind::Signals1d,
        Kind::MnistRotation,
        Kind::MnistTranslation,
        Kind::CustomVector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Gauss2d => "gauss2d",
            Kind::Gauss3d => "gauss3d",
            Kind::Signals1d => "signals1d",
            Kind::MnistRotation => "mnist-rotation",
            Kind::MnistTranslation => "mnist-translation",
            Kind::CustomVector => "custom-vector",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment kind `{s}`")))
    }
}

pub const KEYS: &[&str] = &[
    "kind",
    "seed",
    "out",
    "layers",
    "eta",
    "eps",
    "lambda",
    "membership",
    "channels",
    "kernel",
    "stride",
    "energy",
    "angles",
    "radii",
    "margin",
    "steps",
    "per_class",
    "test_per_class",
    "sigma",
    "noise",
    "length",
    "classes",
    "min_angle",
    "vector_eps",
    "vector_eta",
    "vector_steps",
    "images",
    "labels",
    "digits",
    "input",
    "test_input",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub out: PathBuf,
    pub layers: usize,
    pub eta: f64,
    pub eps: f64,
    /// `None` means `10·k`.
    pub lambda: Option<f64>,
    pub membership: Membership,
    /// Lifting channels (signals, translation) or polar radii count (rotation).
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub energy: f64,
    /// Angular samples Γ of the polar transform.
    pub angles: usize,
    pub margin: f64,
    /// Evaluated rotations or shifts for the invariant model.
    pub steps: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub sigma: f64,
    pub noise: f64,
    pub length: usize,
    pub classes: usize,
    /// Degrees.
    pub min_angle: f64,
    pub vector_eps: f64,
    pub vector_eta: f64,
    pub vector_steps: usize,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub digits: Vec<u8>,
    pub input: Option<PathBuf>,
    pub test_input: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults per experiment kind.
    pub fn defaults(kind: Kind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            seed: 0,
            out: PathBuf::from("out"),
            layers: 2000,
            eta: 0.5,
            eps: 0.1,
            lambda: None,
            membership: Membership::Estimated,
            channels: 5,
            kernel: 3,
            stride: 7,
            energy: 0.95,
            angles: 100,
            margin: 0.5,
            steps: 100,
            per_class: 500,
            test_per_class: 100,
            sigma: 0.1,
            noise: 0.1,
            length: 150,
            classes: 2,
            min_angle: 30.0,
            vector_eps: 1.0,
            vector_eta: 0.5,
            vector_steps: 20,
            images: PathBuf::from("data/mnist-01/images-idx3-ubyte"),
            labels: PathBuf::from("data/mnist-01/labels-idx1-ubyte"),
            digits: vec![0, 1],
            input: None,
            test_input: None,
        };
        match kind {
            Kind::Gauss2d => c.membership = Membership::TrueLabels,
            Kind::Gauss3d => {
                c.membership = Membership::TrueLabels;
                c.classes = 3;
            }
            Kind::Signals1d => {
                c.per_class = 200;
                c.eta = 0.1;
                c.channels = 7;
                c.kernel = 5;
                c.steps = 10;
            }
            Kind::MnistRotation => {
                c.layers = 500;
                c.per_class = 250;
            }
            Kind::MnistTranslation => {
                c.layers = 500;
                c.per_class = 200;
                c.test_per_class = 50;
                c.vector_eta = 0.1;
            }
            Kind::CustomVector => {
                c.layers = 100;
            }
        }
        c
    }

    /// Parses a config file. The kind comes from a top-level `kind` key, or
    /// from the only section when there is exactly one.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut top: Vec<(String, String, usize)> = Vec::new();
        let mut sections: Vec<(Kind, Vec<(String, String, usize)>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("line {lineno}: unterminated section header")))?;
                let kind: Kind = name.trim().parse()?;
                if sections.iter().any(|(k, _)| *k == kind) {
                    return Err(CliError::Config(format!("line {lineno}: duplicate section [{kind}]")));
                }
                sections.push((kind, Vec::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {lineno}: expected `key = value`")))?;
            let entry = (key.trim().to_string(), value.trim().to_string(), lineno);
            if !KEYS.contains(&entry.0.as_str()) {
                return Err(CliError::Config(format!("line {lineno}: unknown key `{}`", entry.0)));
            }
            match sections.last_mut() {
                Some((_, entries)) => entries.push(entry),
                None => top.push(entry),
            }
        }
        let kind = match top.iter().rev().find(|e| e.0 == "kind") {
            Some(e) => e.1.parse()?,
            None if sections.len() == 1 => sections[0].0,
            None => return Err(CliError::Config("config does not name an experiment kind".into())),
        };
        let mut config = ExperimentConfig::defaults(kind);
        let chosen = sections.iter().filter(|(k, _)| *k == kind).flat_map(|(_, e)| e.iter());
        for (key, value, lineno) in top.iter().chain(chosen) {
            if key == "kind" {
                if value.parse::<Kind>()? != kind {
                    return Err(CliError::Config(format!("line {lineno}: `kind` conflicts with [{kind}]")));
                }
                continue;
            }
            config.set(key, value).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("line {lineno}: {m}")),
                other => other,
            })?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> CliResult<T>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
        }
        match key {
            "kind" => {
                let kind: Kind = value.parse()?;
                if kind != self.kind {
                    return Err(CliError::Config(format!("`kind` cannot change from {} to {kind}", self.kind)));
                }
            }
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "layers" => self.layers = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "lambda" => self.lambda = Some(num(key, value)?),
            "membership" => {
                self.membership = match value {
                    "estimated" => Membership::Estimated,
                    "true" | "labels" => Membership::TrueLabels,
                    _ => return Err(CliError::Config(format!("`membership` must be estimated or labels, got `{value}`"))),
                }
            }
            "channels" | "radii" => self.channels = num(key, value)?,
            "kernel" => self.kernel = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "energy" => self.energy = num(key, value)?,
            "angles" => self.angles = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "per_class" => self.per_class = num(key, value)?,
            "test_per_class" => self.test_per_class = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "length" => self.length = num(key, value)?,
            "classes" => self.classes = num(key, value)?,
            "min_angle" => self.min_angle = num(key, value)?,
            "vector_eps" => self.vector_eps = num(key, value)?,
            "vector_eta" => self.vector_eta = num(key, value)?,
            "vector_steps" => self.vector_steps = num(key, value)?,
            "images" => self.images = PathBuf::from(value),
            "labels" => self.labels = PathBuf::from(value),
            "digits" => {
                self.digits = value
                    .split(',')
                    .map(|d| num::<u8>(key, d.trim()))
                    .collect::<CliResult<_>>()?;
            }
            "input" => self.input = Some(PathBuf::from(value)),
            "test_input" => self.test_input = Some(PathBuf::from(value)),
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [
            ("eta", self.eta),
            ("eps", self.eps),
            ("energy", self.energy),
            ("vector_eps", self.vector_eps),
            ("vector_eta", self.vector_eta),
            ("margin", self.margin),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::Config(format!("`lambda` must be positive, got {l}")));
            }
        }
        for (name, v) in [("sigma", self.sigma), ("noise", self.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("`{name}` must be non-negative, got {v}")));
            }
        }
        let counts = [
            ("channels", self.channels),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("angles", self.angles),
            ("steps", self.steps),
            ("per_class", self.per_class),
            ("test_per_class", self.test_per_class),
            ("length", self.length),
            ("vector_steps", self.vector_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CliError::Config(format!("`{name}` must be at least 1")));
            }
        }
        if self.energy > 1.0 {
            return Err(CliError::Config(format!("`energy` must not exceed 1, got {}", self.energy)));
        }
        if self.classes < 2 {
            return Err(CliError::Config("`classes` must be at least 2".into()));
        }
        if !(0.0..90.0).contains(&self.min_angle) {
            return Err(CliError::Config(format!("`min_angle` must lie in [0, 90), got {}", self.min_angle)));
        }
        if self.digits.len() < 2 && matches!(self.kind, Kind::MnistRotation | Kind::MnistTranslation) {
            return Err(CliError::Config("`digits` must name at least two classes".into()));
        }
        if self.kind == Kind::CustomVector && self.input.is_none() {
            return Err(CliError::Config("custom-vector needs `input`".into()));
        }
        Ok(())
    }
}
