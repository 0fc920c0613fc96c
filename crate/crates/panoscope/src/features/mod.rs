//! Feature vectors, labeled datasets and their CSV formats.

pub mod flow;
pub mod pkt;

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::record::{Platform, TraceMeta};

/// Named, ordered numeric features for one trace (or one bin).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Arc<Vec<String>>,
    pub values: Vec<f64>,
    pub meta: TraceMeta,
}

impl FeatureVector {
    pub fn new(names: Arc<Vec<String>>, values: Vec<f64>, meta: TraceMeta) -> Result<FeatureVector> {
        if names.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names but {} values",
                names.len(),
                values.len()
            )));
        }
        for (name, value) in names.iter().zip(&values) {
            if !value.is_finite() {
                return Err(Error::InvalidFeature {
                    name: name.clone(),
                    value: *value,
                    trace_id: meta.trace_id.clone(),
                });
            }
        }
        Ok(FeatureVector {
            names,
            values,
            meta,
        })
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn label(&self) -> Option<u8> {
        self.meta.label
    }
}

/// Feature vectors sharing one schema, all labeled.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub feature_names: Arc<Vec<String>>,
    pub vectors: Vec<FeatureVector>,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<FeatureVector>) -> Result<LabeledDataset> {
        let first = vectors
            .first()
            .ok_or(Error::EmptyInput("dataset needs at least one vector"))?;
        let feature_names = first.names.clone();
        for v in &vectors {
            if *v.names != *feature_names {
                return Err(Error::SchemaMismatch(format!(
                    "trace {} does not share the dataset schema",
                    v.meta.trace_id
                )));
            }
            if v.meta.label.is_none() {
                return Err(Error::InvalidArgument(format!(
                    "trace {} has no label",
                    v.meta.trace_id
                )));
            }
        }
        Ok(LabeledDataset {
            feature_names,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.vectors.iter().map(|v| v.meta.label.unwrap()).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        let labels = self.labels();
        labels.contains(&0) && labels.contains(&1)
    }

    /// Restricts the dataset to one platform; `None` keeps everything.
    pub fn filter_platform(&self, platform: Option<Platform>) -> LabeledDataset {
        let vectors = self
            .vectors
            .iter()
            .filter(|v| platform.is_none_or(|p| v.meta.platform == p))
            .cloned()
            .collect();
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            vectors,
        }
    }
}

const FIXED_COLUMNS: [&str; 4] = ["trace_id", "video_id", "platform", "label"];

/// Writes the per-trace feature CSV: fixed metadata columns followed by the
/// canonical feature names. Provenance lines go first as `#` comments.
pub fn write_feature_csv<W: Write>(
    mut w: W,
    vectors: &[FeatureVector],
    provenance: &[String],
) -> Result<()> {
    let names = match vectors.first() {
        Some(v) => v.names.clone(),
        None => return Err(Error::EmptyInput("no feature vectors to write")),
    };
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    write!(w, "{}", FIXED_COLUMNS.join(","))?;
    for n in names.iter() {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for v in vectors {
        if *v.names != *names {
            return Err(Error::SchemaMismatch(format!(
                "trace {} does not share the output schema",
                v.meta.trace_id
            )));
        }
        let label = v
            .meta
            .label
            .map(|l| l.to_string())
            .unwrap_or_default();
        write!(
            w,
            "{},{},{},{}",
            v.meta.trace_id, v.meta.video_id, v.meta.platform, label
        )?;
        for x in &v.values {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a per-trace feature CSV produced by [`write_feature_csv`].
pub fn read_feature_csv<R: Read>(reader: R) -> Result<Vec<FeatureVector>> {
    let mut lines = BufReader::new(reader).lines();
    let mut line_no = 0u64;
    let header = loop {
        line_no += 1;
        match lines.next() {
            Some(line) => {
                let line = line?;
                if line.starts_with('#') {
                    continue;
                }
                break line;
            }
            None => return Err(Error::parse_line(line_no, "missing feature CSV header")),
        }
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != FIXED_COLUMNS {
        return Err(Error::parse_line(
            line_no,
            "feature CSV header must start with trace_id,video_id,platform,label",
        ));
    }
    let names: Arc<Vec<String>> = Arc::new(cols[4..].iter().map(|s| s.to_string()).collect());

    let mut out = Vec::new();
    for line in lines {
        line_no += 1;
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + names.len() {
            return Err(Error::parse_line(
                line_no,
                format!("expected {} fields, got {}", 4 + names.len(), fields.len()),
            ));
        }
        let platform = Platform::parse(fields[2])
            .ok_or_else(|| Error::parse_line(line_no, format!("bad platform `{}`", fields[2])))?;
        let label = match fields[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => {
                return Err(Error::parse_line(line_no, format!("bad label `{other}`")));
            }
        };
        let mut values = Vec::with_capacity(names.len());
        for f in &fields[4..] {
            let x: f64 = f
                .parse()
                .map_err(|_| Error::parse_line(line_no, format!("bad feature value `{f}`")))?;
            values.push(x);
        }
        let meta = TraceMeta {
            trace_id: fields[0].to_string(),
            video_id: fields[1].to_string(),
            platform,
            label,
        };
        out.push(
            FeatureVector::new(names.clone(), values, meta)
                .map_err(|e| Error::parse_line(line_no, e.to_string()))?,
        );
    }
    Ok(out)
}
