//! Trained-model container: forest or rule set plus everything needed to
//! reproduce and apply it (feature set, per-domain/cert mode, meta combiner,
//! categorical codec, training manifest).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cert::{ts_rfc3339, CertificateRecord};
use crate::features::{
    self, average_vectors, extract_record, CategoricalCodec, FeatureSet, FeatureVector,
    PopularRanks, KEYWORD_BLOCK_START,
};
use crate::forest::{self, Forest};
use crate::rules::{score_rules, RuleSet};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Forest(#[from] forest::ForestError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error("empty input")]
    EmptyInput,
    #[error("model has no trained forest")]
    UntrainedModel,
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Rules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PerDomain,
    Cert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Meta {
    Min,
    Max,
    Avg,
    Med,
    Na,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    /// SHA-256 over the ordered (fingerprint, label) pairs of the training
    /// set, hex.
    pub dataset_hash: String,
    pub seed: u64,
    #[serde(with = "ts_rfc3339")]
    pub trained_at: DateTime<Utc>,
    pub n_records: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub feature_set: FeatureSet,
    pub mode: Mode,
    pub meta: Meta,
    pub forest: Option<Forest>,
    pub rules: Option<RuleSet>,
    pub codec: CategoricalCodec,
    pub train_manifest: Option<TrainManifest>,
}

impl TrainedModel {
    /// Wraps a rule set; needs no training data.
    pub fn from_rules(rules: RuleSet) -> TrainedModel {
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: ModelKind::Rules,
            feature_set: FeatureSet::All,
            mode: Mode::PerDomain,
            meta: Meta::Na,
            forest: None,
            rules: Some(rules),
            codec: CategoricalCodec::fit(std::iter::empty()),
            train_manifest: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Invalid(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        match self.kind {
            ModelKind::Forest => {
                let forest = self.forest.as_ref().ok_or(ModelError::UntrainedModel)?;
                if forest.trees.is_empty() {
                    return Err(ModelError::Invalid("forest has no trees".into()));
                }
                let dim = self.feature_set.len();
                if forest.n_features != dim {
                    return Err(ModelError::Invalid(format!(
                        "forest dimension {} does not match feature set {}",
                        forest.n_features, dim
                    )));
                }
                for tree in &forest.trees {
                    for node in &tree.nodes {
                        match node {
                            forest::Node::Leaf { fraction } => {
                                if !(0.0..=1.0).contains(fraction) {
                                    return Err(ModelError::Invalid(
                                        "leaf fraction out of range".into(),
                                    ));
                                }
                            }
                            forest::Node::Split { feature, .. } => {
                                if *feature >= dim {
                                    return Err(ModelError::Invalid(
                                        "split feature out of range".into(),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
            ModelKind::Rules => {
                let rules = self.rules.as_ref().ok_or_else(|| {
                    ModelError::Invalid("rules model carries no rule set".into())
                })?;
                rules.validate().map_err(ModelError::Invalid)?;
            }
        }
        Ok(())
    }

    /// Stable short identifier derived from the serialized model.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        let digest = h.finalize();
        let prefix = match self.kind {
            ModelKind::Forest => "forest",
            ModelKind::Rules => "rules",
        };
        format!("{}-{}", prefix, hex::encode(&digest[..6]))
    }

    /// Scores one already-extracted vector with the forest.
    pub fn score_vector(&self, v: &FeatureVector) -> Result<f64, ModelError> {
        let forest = self.forest.as_ref().ok_or(ModelError::UntrainedModel)?;
        if v.feature_set != self.feature_set {
            return Err(ModelError::Invalid("vector feature set differs from model".into()));
        }
        Ok(forest.score(&v.values)?)
    }

    /// Full per-record scoring path: extraction, projection, per-domain or
    /// averaged scoring, meta combination. Records without any name score 0.
    pub fn score_record(&self, record: &CertificateRecord) -> Result<f64, ModelError> {
        match self.kind {
            ModelKind::Rules => {
                let rules =
                    self.rules.as_ref().ok_or(ModelError::Invalid("missing rules".into()))?;
                Ok(score_rules(record, rules))
            }
            ModelKind::Forest => {
                let vectors = self.record_vectors(record)?;
                if vectors.is_empty() {
                    return Ok(0.0);
                }
                match self.mode {
                    Mode::Cert => self.score_vector(&vectors[0]),
                    Mode::PerDomain => {
                        let scores = vectors
                            .iter()
                            .map(|v| self.score_vector(v))
                            .collect::<Result<Vec<f64>, _>>()?;
                        combine_meta(&scores, self.meta)
                    }
                }
            }
        }
    }

    fn record_vectors(&self, record: &CertificateRecord) -> Result<Vec<FeatureVector>, ModelError> {
        let mut vectors = extract_record(record, &self.codec, PopularRanks::bundled());
        if self.feature_set == FeatureSet::Selected {
            vectors = vectors.iter().map(FeatureVector::select).collect();
        }
        if vectors.is_empty() {
            return Ok(vectors);
        }
        Ok(match self.mode {
            Mode::PerDomain => vectors,
            Mode::Cert => vec![average_vectors(&vectors)?],
        })
    }

    /// MDI ranking over the full catalog, keyword category excluded.
    pub fn mdi_selection(&self, k: usize) -> Result<Vec<usize>, ModelError> {
        let forest = self.forest.as_ref().ok_or(ModelError::UntrainedModel)?;
        if self.feature_set != FeatureSet::All {
            return Err(ModelError::Invalid(
                "importance ranking requires a model over the full catalog".into(),
            ));
        }
        debug_assert!(forest.n_features >= KEYWORD_BLOCK_START);
        Ok(features::mdi_selection(&forest.importances, k))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel, ModelError> {
        let model: TrainedModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Phish,
}

pub struct TrainOptions {
    pub feature_set: FeatureSet,
    pub mode: Mode,
    pub meta: Meta,
    pub n_trees: usize,
    pub seed: u64,
    /// Manifest timestamp; callers pass the dataset's created_at so a
    /// retrain of the same dataset is byte-identical.
    pub trained_at: DateTime<Utc>,
}

impl Default for TrainOptions {
    fn default() -> TrainOptions {
        TrainOptions {
            feature_set: FeatureSet::All,
            mode: Mode::PerDomain,
            meta: Meta::Max,
            n_trees: 200,
            seed: 0,
            trained_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }
}

/// Trains a forest model. In per-domain mode every (certificate, domain)
/// pair is one sample carrying the certificate's label; in cert mode each
/// certificate contributes its averaged vector.
pub fn train_forest(
    records: &[(CertificateRecord, Label)],
    opts: &TrainOptions,
) -> Result<TrainedModel, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let codec = CategoricalCodec::fit(records.iter().map(|(r, _)| r.issuer_dn.as_str()));
    let popular = PopularRanks::bundled();

    let mut x: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<bool> = Vec::new();
    for (record, label) in records {
        let mut vectors = extract_record(record, &codec, popular);
        if opts.feature_set == FeatureSet::Selected {
            vectors = vectors.iter().map(FeatureVector::select).collect();
        }
        if vectors.is_empty() {
            continue;
        }
        match opts.mode {
            Mode::PerDomain => {
                for v in vectors {
                    x.push(v.values);
                    y.push(*label == Label::Phish);
                }
            }
            Mode::Cert => {
                x.push(average_vectors(&vectors)?.values);
                y.push(*label == Label::Phish);
            }
        }
    }

    let forest = forest::fit(&x, &y, opts.n_trees, opts.seed)?;
    let manifest = TrainManifest {
        dataset_hash: dataset_hash(records),
        seed: opts.seed,
        trained_at: opts.trained_at,
        n_records: records.len(),
        n_samples: x.len(),
    };
    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Forest,
        feature_set: opts.feature_set,
        mode: opts.mode,
        meta: opts.meta,
        forest: Some(forest),
        rules: None,
        codec,
        train_manifest: Some(manifest),
    };
    model.validate()?;
    Ok(model)
}

pub fn dataset_hash(records: &[(CertificateRecord, Label)]) -> String {
    let mut h = Sha256::new();
    for (record, label) in records {
        h.update(record.fingerprint);
        h.update([*label as u8]);
    }
    hex::encode(h.finalize())
}

/// Aggregates per-domain scores into one certificate score. Median of an
/// even-length list is the mean of the two central values.
pub fn combine_meta(scores: &[f64], meta: Meta) -> Result<f64, ModelError> {
    if scores.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let v = match meta {
        Meta::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        Meta::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Meta::Avg => scores.iter().sum::<f64>() / scores.len() as f64,
        Meta::Med | Meta::Na => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite score"));
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            }
        }
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_examples() {
        let s = [0.1, 0.9];
        assert_eq!(combine_meta(&s, Meta::Min).unwrap(), 0.1);
        assert_eq!(combine_meta(&s, Meta::Max).unwrap(), 0.9);
        assert_eq!(combine_meta(&s, Meta::Avg).unwrap(), 0.5);
        assert_eq!(combine_meta(&s, Meta::Med).unwrap(), 0.5);
        for meta in [Meta::Min, Meta::Max, Meta::Avg, Meta::Med] {
            assert_eq!(combine_meta(&[0.42], meta).unwrap(), 0.42);
        }
        assert_eq!(combine_meta(&[0.2, 0.4, 0.9], Meta::Med).unwrap(), 0.4);
        assert!(matches!(combine_meta(&[], Meta::Avg), Err(ModelError::EmptyInput)));
    }

    #[test]
    fn rules_model_roundtrip() {
        let model = TrainedModel::from_rules(RuleSet::bundled().clone());
        model.validate().unwrap();
        let dir = std::env::temp_dir().join(format!("model-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rules.json");
        model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.id(), back.id());
        assert!(model.id().starts_with("rules-"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut model = TrainedModel::from_rules(RuleSet::bundled().clone());
        model.kind = ModelKind::Forest;
        assert!(matches!(model.validate(), Err(ModelError::UntrainedModel)));
        let mut capless = TrainedModel::from_rules(RuleSet::bundled().clone());
        capless.rules.as_mut().unwrap().cap = 0;
        assert!(capless.validate().is_err());
    }
}
