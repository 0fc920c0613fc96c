//! Flow-level features: per-direction throughput, frame and burst
//! statistics, and the top-n flow aggregation.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::record::{Direction, FlowRecord, PacketRecord, Platform, Proto, TraceMeta};
use crate::stats;

pub const DEFAULT_BURST_GAP_S: f64 = 0.5;

/// The ten per-direction feature names, without the direction prefix.
pub const DIR_FEATURE_NAMES: [&str; 10] = [
    "throughput_mean_Bps",
    "frame_gap_mean_s",
    "frame_size_mean_B",
    "retransmissions_count",
    "burst_size_max_B",
    "burst_rate_max_Bps",
    "burst_time_max_s",
    "burst_pkt_count_max",
    "burst_gap_mean_s",
    "burst_duration_mean_s",
];

/// Canonical 20 flow feature names: the uplink block then the downlink one.
pub fn flow_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(20);
    for dir in ["ul", "dl"] {
        for f in DIR_FEATURE_NAMES {
            names.push(format!("{dir}_{f}"));
        }
    }
    names
}

/// A maximal run of same-direction packets whose consecutive gaps stay
/// within the burst gap threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Burst {
    pub direction: Direction,
    pub start_us: i64,
    pub end_us: i64,
    pub size: u64,
    pub pkt_count: u64,
}

impl Burst {
    pub fn duration_s(&self) -> f64 {
        (self.end_us - self.start_us) as f64 / 1_000_000.0
    }

    pub fn rate_bps(&self) -> f64 {
        let d = self.duration_s();
        if d > 0.0 {
            self.size as f64 / d
        } else {
            self.size as f64
        }
    }
}

/// Splits one direction of a flow into bursts. Consecutive same-direction
/// packets stay in one burst while their gap is at most `gap_threshold_s`.
pub fn detect_bursts(flow: &FlowRecord, direction: Direction, gap_threshold_s: f64) -> Vec<Burst> {
    let packets: Vec<&PacketRecord> = flow
        .packets
        .iter()
        .filter(|p| p.direction == direction)
        .collect();
    let mut bursts = Vec::new();
    let mut current: Option<Burst> = None;
    for p in packets {
        match current.as_mut() {
            Some(b) if (p.timestamp_us - b.end_us) as f64 / 1_000_000.0 <= gap_threshold_s => {
                b.end_us = p.timestamp_us;
                b.size += u64::from(p.pkt_len);
                b.pkt_count += 1;
            }
            _ => {
                if let Some(done) = current.take() {
                    bursts.push(done);
                }
                current = Some(Burst {
                    direction,
                    start_us: p.timestamp_us,
                    end_us: p.timestamp_us,
                    size: u64::from(p.pkt_len),
                    pkt_count: 1,
                });
            }
        }
    }
    if let Some(done) = current {
        bursts.push(done);
    }
    bursts
}

/// Per-direction feature block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DirFeatures {
    pub throughput_mean_bps: f64,
    pub frame_gap_mean_s: f64,
    pub frame_size_mean_b: f64,
    pub retransmissions_count: f64,
    pub burst_size_max_b: f64,
    pub burst_rate_max_bps: f64,
    pub burst_time_max_s: f64,
    pub burst_pkt_count_max: f64,
    pub burst_gap_mean_s: f64,
    pub burst_duration_mean_s: f64,
}

impl DirFeatures {
    pub fn values(&self) -> [f64; 10] {
        [
            self.throughput_mean_bps,
            self.frame_gap_mean_s,
            self.frame_size_mean_b,
            self.retransmissions_count,
            self.burst_size_max_b,
            self.burst_rate_max_bps,
            self.burst_time_max_s,
            self.burst_pkt_count_max,
            self.burst_gap_mean_s,
            self.burst_duration_mean_s,
        ]
    }
}

/// The Table-style flow feature set plus the sort/tie-break keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeatureSet {
    pub ul: DirFeatures,
    pub dl: DirFeatures,
    pub bytes_dl: u64,
    pub start_us: i64,
}

impl FlowFeatureSet {
    /// The 20 feature values in canonical order (ul block, dl block).
    pub fn values(&self) -> [f64; 20] {
        let mut out = [0.0; 20];
        out[..10].copy_from_slice(&self.ul.values());
        out[10..].copy_from_slice(&self.dl.values());
        out
    }
}

fn direction_features(
    flow: &FlowRecord,
    direction: Direction,
    flow_duration_s: f64,
    gap_threshold_s: f64,
) -> DirFeatures {
    let packets: Vec<&PacketRecord> = flow
        .packets
        .iter()
        .filter(|p| p.direction == direction)
        .collect();
    if packets.is_empty() {
        return DirFeatures::default();
    }

    let total_bytes: u64 = packets.iter().map(|p| u64::from(p.pkt_len)).sum();
    let throughput = if flow_duration_s > 0.0 {
        total_bytes as f64 / flow_duration_s
    } else {
        total_bytes as f64
    };

    let gaps: Vec<f64> = packets
        .windows(2)
        .map(|w| (w[1].timestamp_us - w[0].timestamp_us) as f64 / 1_000_000.0)
        .collect();
    let frame_gap_mean = stats::mean(&gaps);

    let frame_sizes: Vec<f64> = packets.iter().map(|p| f64::from(p.frame_len)).collect();
    let frame_size_mean = stats::mean(&frame_sizes);

    // Duplicate (sequence, payload length) pairs signal TCP retransmission;
    // QUIC/UDP retransmissions are invisible without decryption.
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut retransmissions = 0u64;
    for p in &packets {
        if p.proto != Proto::Tcp {
            continue;
        }
        if let Some(seq) = p.tcp_seq {
            if !seen.insert((seq, p.tcp_payload_len())) {
                retransmissions += 1;
            }
        }
    }

    let bursts = detect_bursts(flow, direction, gap_threshold_s);
    let mut features = DirFeatures {
        throughput_mean_bps: throughput,
        frame_gap_mean_s: frame_gap_mean,
        frame_size_mean_b: frame_size_mean,
        retransmissions_count: retransmissions as f64,
        ..Default::default()
    };
    if !bursts.is_empty() {
        features.burst_size_max_b = bursts.iter().map(|b| b.size as f64).fold(0.0, f64::max);
        features.burst_rate_max_bps = bursts.iter().map(Burst::rate_bps).fold(0.0, f64::max);
        features.burst_time_max_s = bursts.iter().map(Burst::duration_s).fold(0.0, f64::max);
        features.burst_pkt_count_max =
            bursts.iter().map(|b| b.pkt_count as f64).fold(0.0, f64::max);
        let burst_gaps: Vec<f64> = bursts
            .windows(2)
            .map(|w| (w[1].start_us - w[0].end_us) as f64 / 1_000_000.0)
            .collect();
        features.burst_gap_mean_s = stats::mean(&burst_gaps);
        let durations: Vec<f64> = bursts.iter().map(Burst::duration_s).collect();
        features.burst_duration_mean_s = stats::mean(&durations);
    }
    features
}

/// Computes the per-flow feature set for both directions.
pub fn compute_flow_features(flow: &FlowRecord, gap_threshold_s: f64) -> Result<FlowFeatureSet> {
    if flow.packets.is_empty() {
        return Err(Error::EmptyInput("flow has no packets"));
    }
    let duration_s = flow.duration_s();
    Ok(FlowFeatureSet {
        ul: direction_features(flow, Direction::Uplink, duration_s, gap_threshold_s),
        dl: direction_features(flow, Direction::Downlink, duration_s, gap_threshold_s),
        bytes_dl: flow.bytes_dl,
        start_us: flow.start_us,
    })
}

/// How many top flows feed the aggregate vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopFlows {
    N(usize),
    All,
}

impl TopFlows {
    pub fn parse(s: &str) -> Option<TopFlows> {
        if s.eq_ignore_ascii_case("all") {
            Some(TopFlows::All)
        } else {
            s.parse::<usize>().ok().map(TopFlows::N)
        }
    }
}

impl std::fmt::Display for TopFlows {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopFlows::N(n) => write!(f, "{n}"),
            TopFlows::All => write!(f, "all"),
        }
    }
}

/// Aggregate feature names for a given flow count: `<feature>_mean` (20
/// names) when n = 1, else mean/sum/min/max per feature (80 names).
pub fn aggregate_feature_names(n: TopFlows) -> Arc<Vec<String>> {
    let base = flow_feature_names();
    let names = if n == TopFlows::N(1) {
        base.iter().map(|f| format!("{f}_mean")).collect()
    } else {
        let mut out = Vec::with_capacity(80);
        for f in &base {
            for agg in ["mean", "sum", "min", "max"] {
                out.push(format!("{f}_{agg}"));
            }
        }
        out
    };
    Arc::new(names)
}

/// Sorts flows by downloaded bytes (descending, ties by earlier start),
/// keeps the first `n`, and aggregates their features into one vector.
pub fn aggregate_top_flows(
    flow_features: &[FlowFeatureSet],
    n: TopFlows,
    meta: TraceMeta,
) -> Result<FeatureVector> {
    if flow_features.is_empty() {
        return Err(Error::EmptyInput("no flows to aggregate"));
    }
    if n == TopFlows::N(0) {
        return Err(Error::InvalidArgument("top flow count must be >= 1".into()));
    }
    let mut sorted: Vec<&FlowFeatureSet> = flow_features.iter().collect();
    sorted.sort_by(|a, b| b.bytes_dl.cmp(&a.bytes_dl).then(a.start_us.cmp(&b.start_us)));
    let keep = match n {
        TopFlows::N(k) => k.min(sorted.len()),
        TopFlows::All => sorted.len(),
    };
    let selected = &sorted[..keep];

    let names = aggregate_feature_names(n);
    let values = if n == TopFlows::N(1) {
        selected[0].values().to_vec()
    } else {
        let mut out = Vec::with_capacity(80);
        for fi in 0..20 {
            let col: Vec<f64> = selected.iter().map(|f| f.values()[fi]).collect();
            out.push(stats::mean(&col));
            out.push(col.iter().sum::<f64>());
            out.push(stats::min(&col));
            out.push(stats::max(&col));
        }
        out
    };
    FeatureVector::new(names, values, meta)
}

/// One row of the flow-feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeatureRow {
    pub meta: TraceMeta,
    pub flow_rank: u32,
    pub features: FlowFeatureSet,
}

/// Full flow pipeline for one direction-assigned trace: assemble flows,
/// keep platform video flows, compute features, rank by bytes downloaded.
pub fn trace_flow_features(
    packets: Vec<crate::record::PacketRecord>,
    meta: &TraceMeta,
    platform: Option<Platform>,
    gap_threshold_s: f64,
) -> Result<Vec<FlowFeatureRow>> {
    let flows = crate::ingest::filter_video_flows(crate::ingest::assemble_flows(packets), platform);
    let mut rows = Vec::with_capacity(flows.len());
    for (rank, flow) in flows.iter().enumerate() {
        rows.push(FlowFeatureRow {
            meta: meta.clone(),
            flow_rank: rank as u32,
            features: compute_flow_features(flow, gap_threshold_s)?,
        });
    }
    Ok(rows)
}

/// Regroups CSV rows per trace, preserving rank order.
pub fn group_flow_rows(rows: Vec<FlowFeatureRow>) -> Vec<(TraceMeta, Vec<FlowFeatureSet>)> {
    let mut order: Vec<String> = Vec::new();
    let mut by_trace: std::collections::HashMap<String, (TraceMeta, Vec<FlowFeatureRow>)> =
        std::collections::HashMap::new();
    for row in rows {
        let key = row.meta.trace_id.clone();
        by_trace
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                (row.meta.clone(), Vec::new())
            })
            .1
            .push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let (meta, mut rows) = by_trace.remove(&key).expect("grouped at insert");
            rows.sort_by_key(|r| r.flow_rank);
            (meta, rows.into_iter().map(|r| r.features).collect())
        })
        .collect()
}

/// Writes the per-flow CSV: `trace_id,video_id,platform,label,flow_rank,
/// bytes_dl` then the 20 canonical feature names. Ranks are per trace,
/// assigned after sorting.
pub fn write_flow_csv<W: Write>(
    mut w: W,
    rows: &[FlowFeatureRow],
    provenance: &[String],
) -> Result<()> {
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    write!(w, "trace_id,video_id,platform,label,flow_rank,bytes_dl")?;
    for n in flow_feature_names() {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for row in rows {
        let label = row.meta.label.map(|l| l.to_string()).unwrap_or_default();
        write!(
            w,
            "{},{},{},{},{},{}",
            row.meta.trace_id,
            row.meta.video_id,
            row.meta.platform,
            label,
            row.flow_rank,
            row.features.bytes_dl
        )?;
        for v in row.features.values() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a per-flow CSV. Flow order inside a trace is recovered from the
/// rank column (the CSV does not carry flow start times).
pub fn read_flow_csv<R: Read>(reader: R) -> Result<Vec<FlowFeatureRow>> {
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
            None => return Err(Error::parse_line(line_no, "missing flow CSV header")),
        }
    };
    let mut expected = "trace_id,video_id,platform,label,flow_rank,bytes_dl".to_string();
    for n in flow_feature_names() {
        expected.push(',');
        expected.push_str(&n);
    }
    if header != expected {
        return Err(Error::parse_line(line_no, "bad flow CSV header"));
    }

    let mut out = Vec::new();
    for line in lines {
        line_no += 1;
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 26 {
            return Err(Error::parse_line(
                line_no,
                format!("expected 26 fields, got {}", fields.len()),
            ));
        }
        let platform = Platform::parse(fields[2])
            .ok_or_else(|| Error::parse_line(line_no, format!("bad platform `{}`", fields[2])))?;
        let label = match fields[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(Error::parse_line(line_no, format!("bad label `{other}`"))),
        };
        let flow_rank: u32 = fields[4]
            .parse()
            .map_err(|_| Error::parse_line(line_no, "bad flow_rank"))?;
        let bytes_dl: u64 = fields[5]
            .parse()
            .map_err(|_| Error::parse_line(line_no, "bad bytes_dl"))?;
        let mut vals = [0.0f64; 20];
        for (i, f) in fields[6..].iter().enumerate() {
            vals[i] = f
                .parse()
                .map_err(|_| Error::parse_line(line_no, format!("bad feature value `{f}`")))?;
        }
        let dir = |s: &[f64]| DirFeatures {
            throughput_mean_bps: s[0],
            frame_gap_mean_s: s[1],
            frame_size_mean_b: s[2],
            retransmissions_count: s[3],
            burst_size_max_b: s[4],
            burst_rate_max_bps: s[5],
            burst_time_max_s: s[6],
            burst_pkt_count_max: s[7],
            burst_gap_mean_s: s[8],
            burst_duration_mean_s: s[9],
        };
        out.push(FlowFeatureRow {
            meta: TraceMeta {
                trace_id: fields[0].to_string(),
                video_id: fields[1].to_string(),
                platform,
                label,
            },
            flow_rank,
            features: FlowFeatureSet {
                ul: dir(&vals[..10]),
                dl: dir(&vals[10..]),
                bytes_dl,
                start_us: i64::from(flow_rank),
            },
        });
    }
    Ok(out)
}
