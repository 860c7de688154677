use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::matching::MatchConfig;
use crate::spectral::WksConfig;

/// Everything a pipeline run depends on. Loaded from JSON or TOML (by file
/// extension) with camelCase keys; missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub topology: Topology,
    pub descriptor: WksConfig,
    /// Extra eigenpairs cached beyond `kMax`.
    pub eigen_margin: usize,
    /// Cycle-consistency loss weight. Recorded for completeness; nothing is
    /// trained, so it does not enter any computation.
    pub cycle_weight: f64,
    /// Matching refuses larger meshes unless `match.subsample` is set.
    pub max_vertices: usize,
    /// Graph refinement passes after the first multi-match round.
    pub refine_passes: usize,
    /// Worker threads; `None` uses all cores. Does not affect results.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            matching: MatchConfig::default(),
            topology: Topology::Full,
            descriptor: WksConfig::default(),
            eigen_margin: 10,
            cycle_weight: 0.5,
            max_vertices: 10_000,
            refine_passes: 0,
            jobs: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                location: crate::error::Location::Byte(e.span().map_or(0, |s| s.start)),
                message: e.message().to_owned(),
            })?,
            _ => serde_json::from_str(&text)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.matching.validate()?;
        if self.descriptor.num_energies == 0 || !(self.descriptor.sigma_factor > 0.0) {
            return Err(Error::Precondition(
                "descriptor needs numEnergies >= 1 and sigmaFactor > 0".into(),
            ));
        }
        if self.jobs == Some(0) {
            return Err(Error::Precondition("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Eigenpairs computed per mesh.
    pub fn cached_eigenpairs(&self) -> usize {
        self.matching.k_max.max(2) + self.eigen_margin
    }

    /// Hash of the settings that influence pairwise matches.
    pub fn match_hash(&self) -> [u8; 32] {
        let key = serde_json::json!({
            "match": self.matching,
            "descriptor": self.descriptor,
            "eigenpairs": self.cached_eigenpairs(),
        });
        Sha256::digest(key.to_string().as_bytes()).into()
    }

    /// Hash of every setting except the worker count.
    pub fn hash(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.jobs = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).into()
    }
}
