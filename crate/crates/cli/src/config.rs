//! Run configuration: defaults, `key = value` files and flag overrides.

use crate::error::CliError;
use layerlab::harness::{parse_mixture, ProcessSpec, QSpec};
use layerlab::{RejectionBase, SphericalMeasure};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: String,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid_n: usize,
    pub paths: usize,
    pub seed: u64,
    /// Gamma truncation level per unit of T.
    pub gamma_cap: f64,
    pub out: String,
    pub format: String,
    /// `canonical` or `blend:<mass>`.
    pub q: String,
    /// Index mixture for the mixed process.
    pub mix: String,
    /// `inner` or `outer`, for the rejection series.
    pub base: String,
    /// Companion processes on the same draw, e.g. `stable:1.3,stable:0.9`.
    pub coupled: String,
    /// Replace the discarded small jumps by a matching Brownian term.
    #[serde(default)]
    pub gaussian_remainder: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            process: "layered".into(),
            alpha: 1.3,
            beta: 1.9,
            sigma: "discrete:[(1):1,(-1):1]".into(),
            horizon: 1.0,
            grid_n: 1000,
            paths: 1,
            seed: 0,
            gamma_cap: 1e4,
            out: "out".into(),
            format: "csv".into(),
            q: "canonical".into(),
            mix: "point:1.5".into(),
            base: "inner".into(),
            coupled: String::new(),
            gaussian_remainder: false,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| bad(format!("invalid value '{v}' for {key}")))
}

impl RunConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "process" => self.process = v.to_string(),
            "alpha" => self.alpha = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "sigma" => self.sigma = v.to_string(),
            "T" => self.horizon = num(key, v)?,
            "grid_n" => self.grid_n = num(key, v)?,
            "paths" => self.paths = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "gamma_cap" => self.gamma_cap = num(key, v)?,
            "out" => self.out = v.to_string(),
            "format" => self.format = v.to_string(),
            "q" => self.q = v.to_string(),
            "mix" => self.mix = v.to_string(),
            "base" => self.base = v.to_string(),
            "coupled" => self.coupled = v.to_string(),
            "gaussian_remainder" => self.gaussian_remainder = num(key, v)?,
            other => return Err(bad(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(bad(format!("{}:{}: expected key = value", path.display(), n + 1)));
            };
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn sigma(&self) -> Result<SphericalMeasure, CliError> {
        SphericalMeasure::parse(&self.sigma).map_err(|e| bad(format!("sigma: {e}")))
    }

    pub fn q_spec(&self) -> Result<QSpec, CliError> {
        self.q.parse().map_err(|e: layerlab::Error| bad(format!("q: {e}")))
    }

    pub fn process_spec(&self) -> Result<ProcessSpec, CliError> {
        Ok(match self.process.as_str() {
            "stable" => ProcessSpec::Stable { alpha: self.alpha },
            "layered" => ProcessSpec::Layered { alpha: self.alpha, beta: self.beta, q: self.q_spec()? },
            "layered-rejection" => ProcessSpec::LayeredRejection { alpha: self.alpha, beta: self.beta, base: self.base()? },
            "mixed" => ProcessSpec::Mixed { mix: parse_mixture(&self.mix).map_err(|e| bad(format!("mix: {e}")))? },
            other => return Err(bad(format!("unknown process '{other}'"))),
        })
    }

    pub fn base(&self) -> Result<RejectionBase, CliError> {
        match self.base.as_str() {
            "inner" => Ok(RejectionBase::Inner),
            "outer" => Ok(RejectionBase::Outer),
            other => Err(bad(format!("unknown rejection base '{other}'"))),
        }
    }

    /// Companion processes listed in `coupled`.
    pub fn companions(&self) -> Result<Vec<ProcessSpec>, CliError> {
        let mut out = Vec::new();
        for item in self.coupled.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let spec = match parts.as_slice() {
                ["stable", a] => ProcessSpec::Stable { alpha: num("coupled", a)? },
                ["layered", a, b] => ProcessSpec::Layered { alpha: num("coupled", a)?, beta: num("coupled", b)?, q: QSpec::Canonical },
                _ => return Err(bad(format!("coupled entry '{item}' must be stable:<alpha> or layered:<alpha>:<beta>"))),
            };
            out.push(spec);
        }
        Ok(out)
    }

    /// Checks scalar ranges before any simulation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad(format!("T = {} must be positive", self.horizon)));
        }
        if self.grid_n == 0 {
            return Err(bad("grid_n must be positive"));
        }
        if self.paths == 0 {
            return Err(bad("paths must be positive"));
        }
        if !(self.gamma_cap > 0.0 && self.gamma_cap.is_finite()) {
            return Err(bad(format!("gamma_cap = {} must be positive", self.gamma_cap)));
        }
        if self.format != "csv" && self.format != "json" {
            return Err(bad(format!("format must be csv or json, got '{}'", self.format)));
        }
        self.sigma()?;
        self.process_spec()?;
        self.companions()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_and_reject_unknown() {
        let mut c = RunConfig::default();
        c.set("alpha", "0.7").unwrap();
        c.set("T", "3").unwrap();
        assert_eq!(c.alpha, 0.7);
        assert_eq!(c.horizon, 3.0);
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("paths", "many").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# comment\nprocess = stable\nalpha = 1.5\nsigma = \"discrete:[(1):2]\"\n\nseed = 9\n").unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&p).unwrap();
        assert_eq!(c.process, "stable");
        assert_eq!(c.sigma, "discrete:[(1):2]");
        assert_eq!(c.seed, 9);
        c.validate().unwrap();
        std::fs::write(&p, "speed = 3\n").unwrap();
        assert!(matches!(RunConfig::default().apply_file(&p), Err(CliError::Config(_))));
        std::fs::write(&p, "alpha 3\n").unwrap();
        assert!(RunConfig::default().apply_file(&p).is_err());
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let c = RunConfig::default();
        let j = serde_json::to_string(&c).unwrap();
        assert!(j.contains("\"T\":1.0"));
        let back: RunConfig = serde_json::from_str(&j).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<RunConfig>(&j.replace("\"seed\"", "\"sead\"")).is_err());
    }

    #[test]
    fn companions_parse() {
        let c = RunConfig { coupled: "stable:1.3, layered:1.1:2.5".into(), ..Default::default() };
        assert_eq!(c.companions().unwrap().len(), 2);
        let c = RunConfig { coupled: "tempered:1".into(), ..Default::default() };
        assert!(c.companions().is_err());
    }
}
