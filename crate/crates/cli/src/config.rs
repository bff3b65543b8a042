//! Problem files.

use std::path::Path;

use reachmesh::collision::ForbiddenCircle;
use reachmesh::transcription::ProblemDef;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

/// A plain number or a multiple of π such as `"pi/4"`, `"-3pi/2"` or `"0.5*pi"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Text(String),
}

impl Number {
    pub fn resolve(&self, field: &str) -> Result<f64, ConfigError> {
        let v = match self {
            Number::Value(v) => *v,
            Number::Text(s) => parse_number(s).map_err(|m| ConfigError::new(field, m))?,
        };
        if !v.is_finite() {
            return Err(ConfigError::new(field, "must be finite"));
        }
        Ok(v)
    }
}

pub fn parse_number(s: &str) -> Result<f64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    let bad = || format!("cannot parse {s:?}");
    let Some(at) = t.find("pi") else {
        return t.parse().map_err(|_| bad());
    };
    let coef = t[..at].trim_end_matches('*');
    let k = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let rest = &t[at + 2..];
    let div = match rest {
        "" => 1.0,
        r => r.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    if div == 0.0 {
        return Err(bad());
    }
    Ok(k * std::f64::consts::PI / div)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfzSpec {
    pub center: [Number; 2],
    pub radius: Number,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "V")]
    pub v: Number,
    pub u_max: Number,
    pub start: [Number; 3],
    pub goal: [Number; 3],
    pub tf_guess: Number,
    #[serde(default)]
    pub nfz: Vec<NfzSpec>,
    pub epsilon: Number,
    pub eps_trc: [Number; 3],
    #[serde(default)]
    pub sigma_trust: Option<Number>,
    pub n_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Trust radius on the final time when the file gives none, in seconds.
pub const DEFAULT_SIGMA_TRUST: f64 = 60.0;

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn problem(&self) -> Result<ProblemDef, ConfigError> {
        let triple = |name: &str, v: &[Number; 3]| -> Result<[f64; 3], ConfigError> {
            let mut out = [0.0; 3];
            for (i, x) in v.iter().enumerate() {
                out[i] = x.resolve(&format!("{name}[{i}]"))?;
            }
            Ok(out)
        };
        let mut nfz = Vec::with_capacity(self.nfz.len());
        for (i, n) in self.nfz.iter().enumerate() {
            let c = (n.center[0].resolve(&format!("nfz[{i}].center[0]"))?, n.center[1].resolve(&format!("nfz[{i}].center[1]"))?);
            nfz.push(ForbiddenCircle::new(c, n.radius.resolve(&format!("nfz[{i}].radius"))?));
        }
        let p = ProblemDef {
            v: self.v.resolve("V")?,
            u_max: self.u_max.resolve("u_max")?,
            start: triple("start", &self.start)?,
            goal: triple("goal", &self.goal)?,
            nfz,
            epsilon: self.epsilon.resolve("epsilon")?,
            eps_trc: triple("eps_trc", &self.eps_trc)?,
            sigma_trust: match &self.sigma_trust {
                Some(s) => s.resolve("sigma_trust")?,
                None => DEFAULT_SIGMA_TRUST,
            },
            tf_guess: self.tf_guess.resolve("tf_guess")?,
        };
        p.validate().map_err(|e| ConfigError::new(e.field, e.message))?;
        if self.n_nodes < 2 {
            return Err(ConfigError::new("n_nodes", "needs at least 2 nodes"));
        }
        Ok(p)
    }
}
