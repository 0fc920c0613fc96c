//! Experiment drivers: repeated random splits, metrics, interval and
//! flow-count sweeps, the near-real-time accuracy curve and per-video
//! accuracy.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::flow::{aggregate_top_flows, FlowFeatureSet, TopFlows};
use crate::features::pkt::{bin_packets, summarize_bins, BinFeatures};
use crate::features::{FeatureVector, LabeledDataset};
use crate::gbt::{train, GbtHyperparams, GbtModel};
use crate::heuristic::{fit_thresholds, ThresholdModel};
use crate::realtime::classify_stream;
use crate::record::{Platform, Trace, TraceMeta};
use crate::synth::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// No video appears on both sides of a split.
    VideoDisjoint,
    /// Each video contributes `train_fraction` of its traces to train.
    TraceLevel,
}

impl SplitStrategy {
    pub fn parse(s: &str) -> Option<SplitStrategy> {
        match s {
            "video-disjoint" | "video_disjoint" => Some(SplitStrategy::VideoDisjoint),
            "trace-level" | "trace_level" => Some(SplitStrategy::TraceLevel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitSpec {
    pub strategy: SplitStrategy,
    pub train_fraction: f64,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            strategy: SplitStrategy::VideoDisjoint,
            train_fraction: 0.7,
            n_repeats: 20,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "train_fraction must be in (0, 1)".to_string(),
            ));
        }
        if self.n_repeats < 1 {
            return Err(Error::InvalidArgument("n_repeats must be >= 1".to_string()));
        }
        Ok(())
    }
}

const MAX_SPLIT_ATTEMPTS: u32 = 100;

fn try_split_indices(
    metas: &[&TraceMeta],
    spec: &SplitSpec,
    repeat_index: usize,
    attempt: u32,
) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(&[
        spec.seed,
        repeat_index as u64,
        u64::from(attempt),
    ]));

    // Group trace indices by video, in first-appearance order.
    let mut video_order: Vec<&str> = Vec::new();
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in metas.iter().enumerate() {
        let entry = by_video.entry(m.video_id.as_str()).or_default();
        if entry.is_empty() {
            video_order.push(m.video_id.as_str());
        }
        entry.push(i);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    match spec.strategy {
        SplitStrategy::VideoDisjoint => {
            let mut videos = video_order.clone();
            videos.shuffle(&mut rng);
            let n_train = ((spec.train_fraction * videos.len() as f64).floor() as usize)
                .clamp(1, videos.len().saturating_sub(1).max(1));
            for (vi, video) in videos.iter().enumerate() {
                let side = if vi < n_train { &mut train } else { &mut test };
                side.extend_from_slice(&by_video[video]);
            }
        }
        SplitStrategy::TraceLevel => {
            for video in &video_order {
                let mut traces = by_video[video].clone();
                traces.shuffle(&mut rng);
                let n_train = (spec.train_fraction * traces.len() as f64).floor() as usize;
                train.extend_from_slice(&traces[..n_train]);
                test.extend_from_slice(&traces[n_train..]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Deterministic train/test index partition for `(spec.seed, repeat_index)`.
/// Resamples up to 100 times when the train side misses a class (or has
/// fewer than two samples of one) or the test side is empty.
pub fn split_indices(
    metas: &[&TraceMeta],
    spec: &SplitSpec,
    repeat_index: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    if metas.is_empty() {
        return Err(Error::EmptyInput("no traces to split"));
    }
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let (train, test) = try_split_indices(metas, spec, repeat_index, attempt);
        let count = |side: &[usize], label: u8| {
            side.iter()
                .filter(|&&i| metas[i].label == Some(label))
                .count()
        };
        if !test.is_empty() && count(&train, 0) >= 2 && count(&train, 1) >= 2 {
            return Ok((train, test));
        }
    }
    Err(Error::DegenerateSplit {
        attempts: MAX_SPLIT_ATTEMPTS,
    })
}

/// Splits a labeled dataset into train and test sides.
pub fn split(
    data: &LabeledDataset,
    spec: &SplitSpec,
    repeat_index: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let metas: Vec<&TraceMeta> = data.vectors.iter().map(|v| &v.meta).collect();
    let (train_idx, test_idx) = split_indices(&metas, spec, repeat_index)?;
    let pick = |idx: &[usize]| {
        LabeledDataset::new(idx.iter().map(|&i| data.vectors[i].clone()).collect())
    };
    Ok((pick(&train_idx)?, pick(&test_idx)?))
}

/// Accuracy and F1 (class 1 positive) for aligned prediction/label slices.
pub fn metrics(predictions: &[u8], labels: &[u8]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "got {} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let confusion = Confusion::from_pairs(predictions, labels);
    Ok((confusion.accuracy(), confusion.f1()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs(predictions: &[u8], labels: &[u8]) -> Confusion {
        let mut c = Confusion::default();
        for (p, y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn f1(&self) -> f64 {
        let precision_den = self.tp + self.fp;
        let recall_den = self.tp + self.fn_;
        if precision_den == 0 || recall_den == 0 {
            return 0.0;
        }
        let precision = self.tp as f64 / precision_den as f64;
        let recall = self.tp as f64 / recall_den as f64;
        if precision + recall == 0.0 {
            return 0.0;
        }
        2.0 * precision * recall / (precision + recall)
    }
}

/// Which classifier an experiment evaluates.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Gbt(GbtHyperparams),
    /// Thresholds over the top-k most important features of a GBT trained
    /// on the same split.
    Heuristic { top_k: usize, hp: GbtHyperparams },
}

impl ModelSpec {
    fn name(&self) -> String {
        match self {
            ModelSpec::Gbt(_) => "gbt".to_string(),
            ModelSpec::Heuristic { top_k, .. } => format!("heuristic-top{top_k}"),
        }
    }
}

enum FittedModel {
    Gbt(GbtModel),
    Heuristic(ThresholdModel),
}

impl FittedModel {
    fn predict(&self, x: &FeatureVector) -> Result<u8> {
        match self {
            FittedModel::Gbt(m) => m.predict_label(x),
            FittedModel::Heuristic(m) => m.predict(x),
        }
    }
}

fn fit(model: &ModelSpec, train_set: &LabeledDataset) -> Result<FittedModel> {
    match model {
        ModelSpec::Gbt(hp) => Ok(FittedModel::Gbt(train(train_set, hp)?)),
        ModelSpec::Heuristic { top_k, hp } => {
            let gbt = train(train_set, hp)?;
            let mut features: Vec<String> = gbt
                .feature_importance(*top_k)
                .into_iter()
                .map(|(name, _)| name)
                .collect();
            if features.is_empty() {
                // Nothing informative: fall back to the schema head.
                features = train_set
                    .feature_names
                    .iter()
                    .take(*top_k)
                    .cloned()
                    .collect();
            }
            Ok(FittedModel::Heuristic(fit_thresholds(train_set, &features)?))
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VideoAccuracy {
    pub correct: u64,
    pub total: u64,
}

impl VideoAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub traffic: String,
    pub model: String,
    pub param_name: String,
    pub param_value: String,
    pub n_repeats: usize,
    pub per_repeat_accuracy: Vec<f64>,
    pub per_repeat_f1: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub confusion: Confusion,
    pub per_video: BTreeMap<String, VideoAccuracy>,
}

impl EvalReport {
    /// Mean accuracy per video over every repeat where it was tested.
    pub fn per_video_accuracy(&self) -> BTreeMap<String, f64> {
        self.per_video
            .iter()
            .map(|(k, v)| (k.clone(), v.accuracy()))
            .collect()
    }
}

/// Runs `n_repeats` splits of `data`, fitting and scoring one model per
/// repeat.
pub fn evaluate(
    data: &LabeledDataset,
    spec: &SplitSpec,
    model: &ModelSpec,
    traffic: &str,
    param_name: &str,
    param_value: &str,
) -> Result<EvalReport> {
    spec.validate()?;
    if !data.has_both_classes() {
        return Err(Error::DegenerateLabels);
    }
    let mut per_acc = Vec::with_capacity(spec.n_repeats);
    let mut per_f1 = Vec::with_capacity(spec.n_repeats);
    let mut confusion = Confusion::default();
    let mut per_video: BTreeMap<String, VideoAccuracy> = BTreeMap::new();

    for repeat in 0..spec.n_repeats {
        let (train_set, test_set) = split(data, spec, repeat)?;
        let fitted = fit(model, &train_set)?;
        let mut predictions = Vec::with_capacity(test_set.len());
        let labels = test_set.labels();
        for v in &test_set.vectors {
            let p = fitted.predict(v)?;
            predictions.push(p);
            let entry = per_video.entry(v.meta.video_id.clone()).or_default();
            entry.total += 1;
            entry.correct += u64::from(p == v.meta.label.unwrap());
        }
        let (acc, f1) = metrics(&predictions, &labels)?;
        per_acc.push(acc);
        per_f1.push(f1);
        confusion.add(&Confusion::from_pairs(&predictions, &labels));
    }

    Ok(EvalReport {
        traffic: traffic.to_string(),
        model: model.name(),
        param_name: param_name.to_string(),
        param_value: param_value.to_string(),
        n_repeats: spec.n_repeats,
        accuracy_mean: crate::stats::mean(&per_acc),
        accuracy_std: crate::stats::pop_std(&per_acc),
        f1_mean: crate::stats::mean(&per_f1),
        f1_std: crate::stats::pop_std(&per_f1),
        per_repeat_accuracy: per_acc,
        per_repeat_f1: per_f1,
        confusion,
        per_video,
    })
}

/// Traffic type selector used by the sweep drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficType {
    Yt,
    Fb,
    Both,
}

impl TrafficType {
    pub fn name(&self) -> &'static str {
        match self {
            TrafficType::Yt => "yt",
            TrafficType::Fb => "fb",
            TrafficType::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<TrafficType> {
        match s.to_ascii_lowercase().as_str() {
            "yt" => Some(TrafficType::Yt),
            "fb" => Some(TrafficType::Fb),
            "both" => Some(TrafficType::Both),
            _ => None,
        }
    }

    pub fn keeps(&self, platform: Platform) -> bool {
        match self {
            TrafficType::Yt => platform == Platform::Yt,
            TrafficType::Fb => platform == Platform::Fb,
            TrafficType::Both => true,
        }
    }

    /// The traffic types worth evaluating for a set of platforms.
    pub fn available(platforms: &[Platform]) -> Vec<TrafficType> {
        let yt = platforms.contains(&Platform::Yt);
        let fb = platforms.contains(&Platform::Fb);
        match (yt, fb) {
            (true, true) => vec![TrafficType::Yt, TrafficType::Fb, TrafficType::Both],
            (true, false) => vec![TrafficType::Yt],
            (false, true) => vec![TrafficType::Fb],
            (false, false) => Vec::new(),
        }
    }
}

fn filter_traffic(data: &LabeledDataset, traffic: TrafficType) -> LabeledDataset {
    let vectors = data
        .vectors
        .iter()
        .filter(|v| traffic.keeps(v.meta.platform))
        .cloned()
        .collect();
    LabeledDataset {
        feature_names: data.feature_names.clone(),
        vectors,
    }
}

/// Offline packet-level vectors for every trace at one interval; bins are
/// computed once per trace and summarized per interval prefix.
pub fn pkt_vectors_at_interval(
    bins_per_trace: &[(TraceMeta, Vec<BinFeatures>)],
    window_s: u32,
    step_s: u32,
    interval_s: u32,
) -> Result<LabeledDataset> {
    let mut vectors = Vec::with_capacity(bins_per_trace.len());
    for (meta, bins) in bins_per_trace {
        if interval_s < window_s {
            return Err(Error::InvalidInterval {
                interval_s,
                window_s,
            });
        }
        let max_count = if interval_s >= window_s {
            ((interval_s - window_s) / step_s) as usize + 1
        } else {
            0
        };
        let prefix = &bins[..bins.len().min(max_count)];
        vectors.push(summarize_bins(prefix, meta.clone())?);
    }
    LabeledDataset::new(vectors)
}

/// Bins every trace once at the widest horizon needed.
pub fn bins_for_traces(
    traces: &[Trace],
    window_s: u32,
    step_s: u32,
    horizon_s: u32,
) -> Result<Vec<(TraceMeta, Vec<BinFeatures>)>> {
    traces
        .iter()
        .map(|t| {
            let bins = bin_packets(&t.packets, window_s, step_s, horizon_s)?;
            Ok((t.meta.clone(), bins))
        })
        .collect()
}

/// One report per (traffic type, interval): the offline packet-level sweep.
pub fn run_offline_pkt_sweep(
    traces: &[Trace],
    intervals: &[u32],
    spec: &SplitSpec,
    model: &ModelSpec,
    traffics: &[TrafficType],
) -> Result<Vec<EvalReport>> {
    let horizon = intervals.iter().copied().max().unwrap_or(120);
    let bins = bins_for_traces(traces, 5, 1, horizon)?;
    let mut reports = Vec::new();
    for traffic in traffics {
        for interval in intervals {
            let dataset = pkt_vectors_at_interval(&bins, 5, 1, *interval)?;
            let dataset = filter_traffic(&dataset, *traffic);
            let report = evaluate(
                &dataset,
                spec,
                model,
                traffic.name(),
                "interval_s",
                &interval.to_string(),
            )?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// One report per (traffic type, flow count): the flow-level sweep.
pub fn run_offline_flw_sweep(
    flows_per_trace: &[(TraceMeta, Vec<FlowFeatureSet>)],
    n_values: &[TopFlows],
    spec: &SplitSpec,
    model: &ModelSpec,
    traffics: &[TrafficType],
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for traffic in traffics {
        for n in n_values {
            let mut vectors = Vec::new();
            for (meta, flows) in flows_per_trace {
                if !traffic.keeps(meta.platform) || flows.is_empty() {
                    continue;
                }
                vectors.push(aggregate_top_flows(flows, *n, meta.clone())?);
            }
            let dataset = LabeledDataset::new(vectors)?;
            let expected = if *n == TopFlows::N(1) { 20 } else { 80 };
            if dataset.feature_names.len() != expected {
                return Err(Error::InvalidArgument(format!(
                    "aggregate vector has {} features, expected {expected}",
                    dataset.feature_names.len()
                )));
            }
            reports.push(evaluate(
                &dataset,
                spec,
                model,
                traffic.name(),
                "n_flows",
                &n.to_string(),
            )?);
        }
    }
    Ok(reports)
}

/// Accuracy of the streaming classifier at each decision time, averaged
/// over repeats.
#[derive(Debug, Clone, Serialize)]
pub struct RealtimeCurve {
    pub t_s: Vec<u32>,
    pub accuracy_mean: Vec<f64>,
}

/// Trains a bin-level model per repeat and replays every test trace through
/// the streaming classifier, recording accuracy per decision time.
pub fn run_realtime_curve(
    bins_per_trace: &[(TraceMeta, Vec<BinFeatures>)],
    spec: &SplitSpec,
    hp: &GbtHyperparams,
    stop_s: u32,
) -> Result<RealtimeCurve> {
    spec.validate()?;
    let metas: Vec<&TraceMeta> = bins_per_trace.iter().map(|(m, _)| m).collect();
    let times: Vec<u32> = (2..=stop_s / 5).map(|n| n * 5).collect();
    let mut correct = vec![0u64; times.len()];
    let mut total = vec![0u64; times.len()];
    let bin_names = BinFeatures::feature_names();

    for repeat in 0..spec.n_repeats {
        let (train_idx, test_idx) = split_indices(&metas, spec, repeat)?;
        let mut train_vectors = Vec::new();
        for &i in &train_idx {
            let (meta, bins) = &bins_per_trace[i];
            for bin in bins {
                train_vectors.push(FeatureVector::new(
                    bin_names.clone(),
                    bin.values().to_vec(),
                    meta.clone(),
                )?);
            }
        }
        let train_set = LabeledDataset::new(train_vectors)?;
        let model = train(&train_set, hp)?;

        for &i in &test_idx {
            let (meta, bins) = &bins_per_trace[i];
            let label = meta.label.unwrap();
            for decision in classify_stream(&model, bins, stop_s)? {
                let slot = (decision.t_s / 5 - 2) as usize;
                total[slot] += 1;
                correct[slot] += u64::from(decision.label == label);
            }
        }
    }

    let accuracy_mean = correct
        .iter()
        .zip(&total)
        .map(|(c, t)| if *t == 0 { 0.0 } else { *c as f64 / *t as f64 })
        .collect();
    Ok(RealtimeCurve {
        t_s: times,
        accuracy_mean,
    })
}
