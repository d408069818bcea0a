//! Versioned JSON envelope for trained surface parameters.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irs::{IrsKind, ParameterBox};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub irs_kind: IrsKind,
    pub lower: Vec<String>,
    pub upper: Vec<String>,
    pub theta: Vec<String>,
    pub scenario_fingerprint: String,
    pub metadata: BTreeMap<String, String>,
}

fn encode(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format!("{v:.16e}")).collect()
}

fn decode(what: &str, values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::Checkpoint(format!("{what}: '{s}' is not a number"))))
        .collect()
}

impl Checkpoint {
    pub fn new(
        irs_kind: IrsKind,
        bounds: &ParameterBox,
        theta: &[f64],
        scenario_fingerprint: impl Into<String>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        crate::error::check_len("checkpoint theta", bounds.dim(), theta.len())?;
        if !bounds.contains(theta) {
            return Err(Error::Checkpoint("theta lies outside the box".into()));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            irs_kind,
            lower: encode(&bounds.lower),
            upper: encode(&bounds.upper),
            theta: encode(theta),
            scenario_fingerprint: scenario_fingerprint.into(),
            metadata,
        })
    }

    pub fn theta(&self) -> Result<Vec<f64>> {
        decode("theta", &self.theta)
    }

    pub fn bounds(&self) -> Result<ParameterBox> {
        ParameterBox::new(decode("lower", &self.lower)?, decode("upper", &self.upper)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::output::emit_json(self, path)
    }

    /// Loads and checks version, box membership and the scenario fingerprint.
    pub fn load(path: impl AsRef<Path>, expected_fingerprint: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if cp.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format version {}",
                path.display(),
                cp.format_version
            )));
        }
        if cp.scenario_fingerprint != expected_fingerprint {
            return Err(Error::Checkpoint(format!(
                "{}: scenario fingerprint mismatch (checkpoint {}, scenario {expected_fingerprint})",
                path.display(),
                cp.scenario_fingerprint
            )));
        }
        let bounds = cp.bounds()?;
        let theta = cp.theta()?;
        crate::error::check_len("checkpoint theta", bounds.dim(), theta.len())?;
        if !bounds.contains(&theta) {
            return Err(Error::Checkpoint(format!("{}: theta lies outside the box", path.display())));
        }
        Ok(cp)
    }
}
