use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_bytes};
use crate::augment::AugConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::losses::LossConfig;
use crate::optim::OptimConfig;

/// Every tunable of a run, loaded from TOML. Missing keys take their
/// defaults; unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub augment: AugConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optim.validate()?;
        self.augment.validate()?;
        self.eval.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_to_string(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_toml()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::OffsetProfile;
    use crate::eval::Alignment;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn edited_config_round_trips_through_files() {
        let mut cfg = RunConfig::default();
        cfg.optim.learning_rate = 0.02;
        cfg.optim.iterations = 1234;
        cfg.loss.alpha_ssim = 0.5;
        cfg.augment.profile = OffsetProfile::Automotive;
        cfg.eval.alignment = Alignment::Median;
        cfg.eval.depth_cap = Some(80.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        cfg.save(&p).unwrap();
        let back = RunConfig::load(&p).unwrap();
        assert_eq!(back, cfg);
        back.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("[optim]\niterations = 10\n").unwrap();
        assert_eq!(cfg.optim.iterations, 10);
        assert_eq!(cfg.loss, LossConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("[optim]\nlearnig_rate = 0.1\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
        assert!(RunConfig::from_toml("[augment]\nflip_prob = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[augment]\nfraction_range = [0.0, 1.0]\n").is_err());
    }
}
