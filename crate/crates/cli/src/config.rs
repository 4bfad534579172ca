use std::path::{Path, PathBuf};

use finray_core::fem2d::SimConfig;
use finray_core::grasp::{default_object_set, GraspConfig, ObjectSet};
use finray_core::qd::QdConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "FINRAY_CONFIG";

/// Contents of a run config file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generations: usize,
    /// Object-set TOML, relative to the config file. Built-in set when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objects: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Evaluation threads; 0 uses all cores.
    pub threads: usize,
    pub qd: QdConfig,
    pub sim: SimConfig,
    pub grasp: GraspConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            generations: 5,
            objects: None,
            output_dir: PathBuf::from("runs/latest"),
            threads: 0,
            qd: QdConfig::default(),
            sim: SimConfig::default(),
            grasp: GraspConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; object paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(obj), Some(dir)) = (&cfg.objects, path.parent()) {
            if obj.is_relative() {
                cfg.objects = Some(dir.join(obj));
            }
        }
        Ok(cfg)
    }

    /// Explicit path, else the environment variable, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(RunConfig::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(format!("config: {m}")));
        if self.generations < 1 {
            return usage("generations must be at least 1".into());
        }
        if let Err(m) = self.qd.validate() {
            return usage(format!("qd: {m}"));
        }
        if let Err(m) = self.sim.validate() {
            return usage(format!("sim: {m}"));
        }
        if let Err(m) = self.grasp.validate() {
            return usage(format!("grasp: {m}"));
        }
        Ok(())
    }

    pub fn object_set(&self) -> Result<ObjectSet, CliError> {
        match &self.objects {
            None => Ok(default_object_set()),
            Some(p) => ObjectSet::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
