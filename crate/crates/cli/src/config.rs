//! Pipeline configuration file (TOML). Every field is optional; command-line
//! flags override file values, which override the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabsynth::gbt::GbtConfig;
use tabsynth::sampler::SamplerConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tables: Option<PathBuf>,
    pub lm_corpus: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub main_topics: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub where_count_dist: [f64; 4],
    pub ret_type_dist: [f64; 5],
    pub max_attempts_per_query: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            where_count_dist: d.where_count_dist,
            ret_type_dist: d.ret_type_dist,
            max_attempts_per_query: d.max_attempts_per_query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub keep_fraction: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { keep_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub order: usize,
    pub k: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        Self { order: 3, k: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsSection {
    pub nearest: usize,
    pub min_freq: usize,
    pub max_terms: usize,
    pub top_k: usize,
}

impl Default for TopicsSection {
    fn default() -> Self {
        Self {
            nearest: 5,
            min_freq: 15,
            max_terms: 1000,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub sampler: SamplerSection,
    pub filter: FilterSection,
    pub lm: LmSection,
    pub reranker: GbtConfig,
    pub topics: TopicsSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            where_count_dist: self.sampler.where_count_dist,
            ret_type_dist: self.sampler.ret_type_dist,
            max_attempts_per_query: self.sampler.max_attempts_per_query,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            "seed = 7\n[filter]\nkeep_fraction = 0.8\n[reranker]\nn_trees = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.filter.keep_fraction, 0.8);
        assert_eq!(cfg.reranker.n_trees, 10);
        assert_eq!(cfg.reranker.max_depth, 3);
        assert_eq!(cfg.sampler, SamplerSection::default());
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }
}
