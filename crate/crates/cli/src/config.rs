use std::path::{Path, PathBuf};

use lifelog_core::analysis::{ClassifierConfig, ClusterConfig};
use lifelog_core::graph::GraphSchema;
use lifelog_core::ingest::ScanConfig;
use lifelog_core::manifold::CcmSpec;
use lifelog_core::model::TrainConfig;
use lifelog_core::synth::{default_archetypes, ArchetypeSpec, DEFAULT_DAYS, DEFAULT_USERS_PER_ARCHETYPE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub dataset: Option<PathBuf>,
    pub user_dir_pattern: String,
    pub timestamp_formats: Vec<String>,
    pub min_days: usize,
    pub gender_table: Option<PathBuf>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let scan = ScanConfig::default();
        Self {
            dataset: None,
            user_dir_pattern: scan.user_dir_pattern,
            timestamp_formats: scan.timestamp_formats,
            min_days: scan.min_days,
            gender_table: scan.gender_table,
        }
    }
}

impl IngestSection {
    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            user_dir_pattern: self.user_dir_pattern.clone(),
            timestamp_formats: self.timestamp_formats.clone(),
            min_days: self.min_days,
            gender_table: self.gender_table.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub users_per_archetype: usize,
    pub days: usize,
    pub archetypes: Vec<ArchetypeSpec>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            users_per_archetype: DEFAULT_USERS_PER_ARCHETYPE,
            days: DEFAULT_DAYS,
            archetypes: default_archetypes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSpace {
    Projection,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub runs: usize,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    /// Project one mean embedding per user instead of one point per day.
    pub per_user: bool,
    pub cluster_space: ClusterSpace,
    pub classifier: ClassifierConfig,
    pub cluster: ClusterConfig,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            runs: 5,
            perplexity: 30.0,
            tsne_iterations: 1000,
            per_user: false,
            cluster_space: ClusterSpace::Projection,
            classifier: ClassifierConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

/// Everything a pipeline run depends on. The file form is TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub ingest: IngestSection,
    pub synth: SynthSection,
    pub graph: GraphSchema,
    pub ccm: CcmSpec,
    pub train: TrainConfig,
    pub analysis: AnalysisSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("lifelog-out"),
            ingest: IngestSection::default(),
            synth: SynthSection::default(),
            graph: GraphSchema::default(),
            ccm: CcmSpec::default(),
            train: TrainConfig::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.to_string().lines().next().unwrap_or_default().to_string();
            CliError::Usage(format!("config {}: {msg}", path.display()))
        })
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a seed is required (--seed or `seed` in the config)".into()))
    }

    /// Seeds derived from the master seed override the per-section seeds.
    pub fn finalize(mut self) -> Result<Self, CliError> {
        let seed = self.seed()?;
        self.train.seed = seed;
        self.analysis.cluster.seed = seed;
        self.graph.k = lifelog_core::graph::feature_width(self.graph.entity_hash_buckets);
        self.graph.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.ccm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(CliError::Usage)?;
        if self.analysis.runs == 0 {
            return Err(CliError::Usage("analysis.runs must be at least 1".into()));
        }
        Ok(self)
    }

    /// SHA-256 over the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Fingerprint stored in checkpoints and graph manifests.
    pub fn schema_fingerprint(&self) -> String {
        serde_json::to_string(&self.graph).expect("schema serializes")
    }
}
