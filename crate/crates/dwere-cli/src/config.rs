//! Experiment configuration: a TOML file of `key = value` sections merged
//! under command-line flags. Unknown keys are rejected up front, and every
//! run emits a snapshot of its effective settings that reproduces the run
//! byte for byte.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize};

/// Trial counts accept scientific notation (`1e6`) in both the file and on
/// the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Count(pub u64);

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = toml::Value::deserialize(d)?;
        match v {
            toml::Value::Integer(i) if i >= 0 => Ok(Count(i as u64)),
            toml::Value::Float(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => {
                Ok(Count(f as u64))
            }
            other => Err(serde::de::Error::custom(format!(
                "expected a nonnegative whole number, got {other}"
            ))),
        }
    }
}

pub fn parse_count(s: &str) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().with_context(|| format!("bad count {s:?}"))?;
    if f < 0.0 || f.fract() != 0.0 || f > u64::MAX as f64 {
        bail!("count {s:?} is not a nonnegative whole number");
    }
    Ok(f as u64)
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CommonSection {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub max_jump: Option<u32>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub stack_height: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<Count>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construct: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<Count>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<Vec<Count>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SurgerySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivot: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<Count>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Informational echo of the command that produced a snapshot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common: Option<CommonSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surgery: Option<SurgerySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construct: Option<ConstructSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Fully resolved common settings, after merging flags over file values.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub max_jump: u32,
    pub stack_height: u32,
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    pub trials: u64,
    pub max_steps: u64,
    pub window: Option<(i64, i64)>,
    pub out: Option<String>,
    pub workers: Option<u64>,
}

impl Resolved {
    pub fn distribution(&self) -> Result<dwere::env::CookieDistribution> {
        Ok(match &self.weights {
            Some(w) => dwere::env::CookieDistribution::new(self.max_jump, w.clone())?,
            None => dwere::env::CookieDistribution::uniform(self.max_jump),
        })
    }

    pub fn common_section(&self) -> CommonSection {
        CommonSection {
            max_jump: Some(self.max_jump),
            stack_height: Some(self.stack_height),
            weights: self.weights.clone(),
            seed: Some(Count(self.seed)),
            trials: Some(Count(self.trials)),
            max_steps: Some(Count(self.max_steps)),
            window: self.window.map(|(lo, hi)| format!("{lo}:{hi}")),
            out: self.out.clone(),
            workers: self.workers.map(Count),
        }
    }
}

pub fn parse_window(s: &str) -> Result<(i64, i64)> {
    let (lo, hi) = s
        .split_once(':')
        .with_context(|| format!("window {s:?} must look like lo:hi"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect()
}

pub fn parse_count_list(s: &str) -> Result<Vec<u64>> {
    s.split(',').map(|p| parse_count(p.trim())).collect()
}

/// Comma-separated list flags. Clap treats bare `Vec` fields as repeated
/// arguments, so lists arrive through these wrappers.
#[derive(Debug, Clone)]
pub struct F64List(pub Vec<f64>);

impl std::str::FromStr for F64List {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_f64_list(s).map(F64List)
    }
}

#[derive(Debug, Clone)]
pub struct CountList(pub Vec<u64>);

impl std::str::FromStr for CountList {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_count_list(s).map(CountList)
    }
}
