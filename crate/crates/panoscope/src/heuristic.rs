//! Threshold-per-feature baseline: each selected feature votes through a
//! learned threshold and polarity, the majority wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabeledDataset};
use crate::gbt::MODEL_FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Values above the threshold vote 1 (360).
    AboveIsPositive,
    /// Values at or below the threshold vote 1.
    BelowIsPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub feature: String,
    pub threshold: f64,
    pub polarity: Polarity,
}

impl ThresholdEntry {
    fn vote(&self, value: f64) -> u8 {
        let above = value > self.threshold;
        match self.polarity {
            Polarity::AboveIsPositive => u8::from(above),
            Polarity::BelowIsPositive => u8::from(!above),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub format_version: u32,
    pub model_kind: String,
    pub entries: Vec<ThresholdEntry>,
}

/// Accuracy of `(threshold, polarity)` on value/label pairs.
fn threshold_accuracy(points: &[(f64, u8)], threshold: f64, polarity: Polarity) -> f64 {
    let entry = ThresholdEntry {
        feature: String::new(),
        threshold,
        polarity,
    };
    let correct = points
        .iter()
        .filter(|(x, y)| entry.vote(*x) == *y)
        .count();
    correct as f64 / points.len() as f64
}

fn fit_one(points: &[(f64, u8)]) -> (f64, Polarity, f64) {
    let mut values: Vec<f64> = points.iter().map(|(x, _)| *x).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();

    let mut candidates: Vec<f64> = values
        .windows(2)
        .map(|w| {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            if mid <= w[0] {
                w[1]
            } else {
                mid
            }
        })
        .collect();
    if candidates.is_empty() {
        // Constant feature: every vote lands on one side.
        candidates.push(values[0]);
    }

    let mut best: Option<(f64, Polarity, f64)> = None;
    for t in candidates {
        for polarity in [Polarity::AboveIsPositive, Polarity::BelowIsPositive] {
            let acc = threshold_accuracy(points, t, polarity);
            if best.is_none_or(|(_, _, b)| acc > b) {
                best = Some((t, polarity, acc));
            }
        }
    }
    best.expect("at least one candidate")
}

/// Learns one accuracy-maximizing threshold and polarity per feature.
/// Ties go to the lower threshold, then to above-is-positive.
pub fn fit_thresholds(data: &LabeledDataset, features: &[String]) -> Result<ThresholdModel> {
    if !data.has_both_classes() {
        return Err(Error::DegenerateLabels);
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one feature is required".to_string(),
        ));
    }
    let labels = data.labels();
    let mut entries = Vec::with_capacity(features.len());
    for feature in features {
        let idx = data
            .feature_names
            .iter()
            .position(|n| n == feature)
            .ok_or_else(|| {
                Error::SchemaMismatch(format!("feature `{feature}` is not in the dataset"))
            })?;
        let points: Vec<(f64, u8)> = data
            .vectors
            .iter()
            .zip(&labels)
            .map(|(v, y)| (v.values[idx], *y))
            .collect();
        let (threshold, polarity, _) = fit_one(&points);
        entries.push(ThresholdEntry {
            feature: feature.clone(),
            threshold,
            polarity,
        });
    }
    Ok(ThresholdModel {
        format_version: MODEL_FORMAT_VERSION,
        model_kind: "threshold".to_string(),
        entries,
    })
}

impl ThresholdModel {
    /// Majority over per-feature votes; a tie returns 0 (normal).
    pub fn predict(&self, x: &FeatureVector) -> Result<u8> {
        let mut ones = 0usize;
        for entry in &self.entries {
            let value = x.value(&entry.feature).ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "feature `{}` missing from trace {}",
                    entry.feature, x.meta.trace_id
                ))
            })?;
            ones += usize::from(entry.vote(value));
        }
        Ok(u8::from(ones * 2 > self.entries.len()))
    }

    pub fn save(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("model serialization");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(bytes: &[u8]) -> Result<ThresholdModel> {
        let model: ThresholdModel =
            serde_json::from_slice(bytes).map_err(|e| Error::Deserialization {
                location: format!("line {} column {}", e.line(), e.column()),
                message: e.to_string(),
            })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Deserialization {
                location: "format_version".to_string(),
                message: format!("unsupported version {}", model.format_version),
            });
        }
        if model.model_kind != "threshold" {
            return Err(Error::Deserialization {
                location: "model_kind".to_string(),
                message: format!("expected a threshold model, found `{}`", model.model_kind),
            });
        }
        Ok(model)
    }
}
