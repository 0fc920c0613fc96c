//! Gradient-boosted decision trees for binary classification with logistic
//! loss, trained by exact greedy second-order boosting.

pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabeledDataset};

pub use tree::{Tree, TreeNode};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Training knobs. The defaults mirror the reference boosted-tree tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub l2_reg: f64,
    pub seed: u64,
}

impl Default for GbtHyperparams {
    fn default() -> Self {
        GbtHyperparams {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            l2_reg: 1.0,
            seed: 0,
        }
    }
}

impl GbtHyperparams {
    fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A trained boosted-tree ensemble. Tree outputs are unscaled; the learning
/// rate is applied at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format_version: u32,
    pub model_kind: String,
    pub hyperparams: GbtHyperparams,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub importance: BTreeMap<String, f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trains the ensemble. Deterministic for a fixed dataset order and seed:
/// exact greedy split search has no sampled choices, so the seed only
/// travels with the model metadata.
pub fn train(data: &LabeledDataset, hp: &GbtHyperparams) -> Result<GbtModel> {
    hp.validate()?;
    let n = data.len();
    let labels = data.labels();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = n - positives;
    if positives < 2 || negatives < 2 {
        return Err(Error::DegenerateLabels);
    }
    let n_features = data.feature_names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n_features];
    for v in &data.vectors {
        for (f, x) in v.values.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidFeature {
                    name: data.feature_names[f].clone(),
                    value: *x,
                    trace_id: v.meta.trace_id.clone(),
                });
            }
            columns[f].push(*x);
        }
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();

    let prevalence = positives as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();

    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut gain_by_feature = vec![0.0; n_features];

    for _ in 0..hp.n_trees {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let mut ctx = tree::GrowContext {
            columns: &columns,
            grad: &grad,
            hess: &hess,
            params: tree::GrowParams {
                max_depth: hp.max_depth,
                min_child_weight: hp.min_child_weight,
                l2_reg: hp.l2_reg,
            },
            gain_by_feature,
        };
        let tree = ctx.grow((0..n).collect());
        gain_by_feature = ctx.gain_by_feature;

        let mut x_row = vec![0.0; n_features];
        for i in 0..n {
            for f in 0..n_features {
                x_row[f] = columns[f][i];
            }
            scores[i] += hp.learning_rate * tree.predict(&x_row);
        }
        trees.push(tree);
    }

    let mut importance = BTreeMap::new();
    for (f, gain) in gain_by_feature.iter().enumerate() {
        if *gain > 0.0 {
            importance.insert(data.feature_names[f].clone(), *gain);
        }
    }

    Ok(GbtModel {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: "gbt".to_string(),
        hyperparams: hp.clone(),
        feature_names: (*data.feature_names).clone(),
        base_score,
        trees,
        importance,
    })
}

impl GbtModel {
    /// Raw additive score before the sigmoid.
    pub fn raw_score(&self, values: &[f64]) -> f64 {
        let mut score = self.base_score;
        for t in &self.trees {
            score += self.hyperparams.learning_rate * t.predict(values);
        }
        score
    }

    /// Probability of class 1 for a values slice in training feature order.
    pub fn predict_proba_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.feature_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features, got {}",
                self.feature_names.len(),
                values.len()
            )));
        }
        Ok(sigmoid(self.raw_score(values)))
    }

    /// Probability of class 1; the vector's schema must equal the model's.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        if *x.names != self.feature_names {
            return Err(Error::SchemaMismatch(format!(
                "feature names of trace {} do not match the model schema",
                x.meta.trace_id
            )));
        }
        self.predict_proba_values(&x.values)
    }

    /// Hard label at the fixed 0.5 threshold.
    pub fn predict_label(&self, x: &FeatureVector) -> Result<u8> {
        Ok(if self.predict_proba(x)? >= 0.5 { 1 } else { 0 })
    }

    pub fn predict_label_values(&self, values: &[f64]) -> Result<u8> {
        Ok(if self.predict_proba_values(values)? >= 0.5 {
            1
        } else {
            0
        })
    }

    /// Features ranked by accumulated split gain, descending; only features
    /// with positive gain appear.
    pub fn feature_importance(&self, top_k: usize) -> Vec<(String, f64)> {
        let mut items: Vec<(String, f64)> = self
            .importance
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        // Stable order: gain descending, then training feature order.
        let order: BTreeMap<&str, usize> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        items.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| order[a.0.as_str()].cmp(&order[b.0.as_str()]))
        });
        items.truncate(top_k);
        items
    }

    /// Serializes to the versioned structured-text model format.
    pub fn save(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("model serialization");
        bytes.push(b'\n');
        bytes
    }

    /// Loads and validates a model produced by [`GbtModel::save`].
    pub fn load(bytes: &[u8]) -> Result<GbtModel> {
        let model: GbtModel = serde_json::from_slice(bytes).map_err(|e| Error::Deserialization {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Deserialization {
                location: "format_version".to_string(),
                message: format!("unsupported version {}", model.format_version),
            });
        }
        if model.model_kind != "gbt" {
            return Err(Error::Deserialization {
                location: "model_kind".to_string(),
                message: format!("expected a gbt model, found `{}`", model.model_kind),
            });
        }
        for (ti, tree) in model.trees.iter().enumerate() {
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        if *feature >= model.feature_names.len()
                            || *left >= tree.nodes.len()
                            || *right >= tree.nodes.len()
                        {
                            return Err(Error::Deserialization {
                                location: format!("trees[{ti}]"),
                                message: "node index out of range".to_string(),
                            });
                        }
                    }
                    TreeNode::Leaf { weight } => {
                        if !weight.is_finite() {
                            return Err(Error::Deserialization {
                                location: format!("trees[{ti}]"),
                                message: "non-finite leaf weight".to_string(),
                            });
                        }
                    }
                }
            }
        }
        Ok(model)
    }
}

/// Binary cross-entropy of predicted probabilities, in nats.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-12;
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(labels) {
        let p = p.clamp(eps, 1.0 - eps);
        total -= if *y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / probs.len() as f64
}
