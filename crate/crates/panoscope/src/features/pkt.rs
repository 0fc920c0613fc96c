//! Packet-level features: overlapping time bins and their per-trace summary.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::record::{Direction, PacketRecord, TraceMeta};
use crate::stats;

/// Canonical bin feature order. Downlink size statistics are over `pkt_len`
/// (transport through application layer); uplink totals use the on-the-wire
/// frame length.
pub const BIN_FEATURE_NAMES: [&str; 9] = [
    "ul_frame_len_total",
    "ul_pkt_count",
    "dl_pkt_size_total",
    "dl_tcp_hdr_total",
    "dl_pkt_count",
    "dl_pkt_size_mean",
    "dl_pkt_size_min",
    "dl_pkt_size_max",
    "dl_pkt_size_std",
];

pub const DEFAULT_WINDOW_S: u32 = 5;
pub const DEFAULT_STEP_S: u32 = 1;

/// Features of one sliding window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinFeatures {
    pub window_start_s: u32,
    pub ul_frame_len_total: u64,
    pub ul_pkt_count: u64,
    pub dl_pkt_size_total: u64,
    pub dl_tcp_hdr_total: u64,
    pub dl_pkt_count: u64,
    pub dl_pkt_size_mean: f64,
    pub dl_pkt_size_min: f64,
    pub dl_pkt_size_max: f64,
    pub dl_pkt_size_std: f64,
}

impl BinFeatures {
    /// The 9 feature values in canonical order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.ul_frame_len_total as f64,
            self.ul_pkt_count as f64,
            self.dl_pkt_size_total as f64,
            self.dl_tcp_hdr_total as f64,
            self.dl_pkt_count as f64,
            self.dl_pkt_size_mean,
            self.dl_pkt_size_min,
            self.dl_pkt_size_max,
            self.dl_pkt_size_std,
        ]
    }

    pub fn feature_names() -> Arc<Vec<String>> {
        Arc::new(BIN_FEATURE_NAMES.iter().map(|s| s.to_string()).collect())
    }
}

/// Computes the bin features over the packets of one window.
pub fn compute_bin_features(packets: &[&PacketRecord]) -> BinFeatures {
    let mut bin = BinFeatures::default();
    let mut dl_sizes: Vec<f64> = Vec::new();
    for p in packets {
        match p.direction {
            Direction::Uplink => {
                bin.ul_frame_len_total += u64::from(p.frame_len);
                bin.ul_pkt_count += 1;
            }
            Direction::Downlink => {
                bin.dl_pkt_size_total += u64::from(p.pkt_len);
                bin.dl_tcp_hdr_total += u64::from(p.tcp_hdr_len);
                bin.dl_pkt_count += 1;
                dl_sizes.push(f64::from(p.pkt_len));
            }
        }
    }
    if !dl_sizes.is_empty() {
        bin.dl_pkt_size_mean = stats::mean(&dl_sizes);
        bin.dl_pkt_size_min = stats::min(&dl_sizes);
        bin.dl_pkt_size_max = stats::max(&dl_sizes);
        bin.dl_pkt_size_std = stats::pop_std(&dl_sizes);
    }
    bin
}

/// Slices a time-sorted, rebased packet stream into overlapping bins.
///
/// Bin `i` covers `[i*step_s, i*step_s + window_s)` seconds; bins are
/// emitted while the window end stays within `min(interval_s,
/// ceil(duration))`. Windows without packets become all-zero bins.
pub fn bin_packets(
    packets: &[PacketRecord],
    window_s: u32,
    step_s: u32,
    interval_s: u32,
) -> Result<Vec<BinFeatures>> {
    if window_s < 1 || step_s < 1 {
        return Err(Error::InvalidArgument(
            "window_s and step_s must be >= 1".to_string(),
        ));
    }
    if interval_s < window_s {
        return Err(Error::InvalidInterval {
            interval_s,
            window_s,
        });
    }
    let duration_ceil_s = packets
        .last()
        .map(|p| ((p.timestamp_us + 999_999) / 1_000_000) as u32)
        .unwrap_or(0);
    let limit = interval_s.min(duration_ceil_s);
    if window_s > limit {
        return Ok(Vec::new());
    }
    let n_bins = ((limit - window_s) / step_s) as usize + 1;

    let mut bins = Vec::with_capacity(n_bins);
    for i in 0..n_bins {
        let start_s = i as u32 * step_s;
        let start_us = i64::from(start_s) * 1_000_000;
        let end_us = i64::from(start_s + window_s) * 1_000_000;
        let lo = packets.partition_point(|p| p.timestamp_us < start_us);
        let hi = packets.partition_point(|p| p.timestamp_us < end_us);
        let window: Vec<&PacketRecord> = packets[lo..hi].iter().collect();
        let mut bin = compute_bin_features(&window);
        bin.window_start_s = start_s;
        bins.push(bin);
    }
    Ok(bins)
}

/// Canonical summary feature names: `<binfeature>_<stat>` for the 9 bin
/// features and the 7 summary statistics, feature-major.
pub fn summary_feature_names() -> Arc<Vec<String>> {
    let mut names = Vec::with_capacity(BIN_FEATURE_NAMES.len() * stats::SUMMARY_STAT_NAMES.len());
    for f in BIN_FEATURE_NAMES {
        for s in stats::SUMMARY_STAT_NAMES {
            names.push(format!("{f}_{s}"));
        }
    }
    Arc::new(names)
}

/// Summarizes a trace's bins into the offline packet-level feature vector:
/// mean, std, min, max and 25th/50th/75th percentile of every bin feature.
pub fn summarize_bins(bins: &[BinFeatures], meta: TraceMeta) -> Result<FeatureVector> {
    if bins.is_empty() {
        return Err(Error::EmptyInput("summarize_bins needs at least one bin"));
    }
    let mut values = Vec::with_capacity(63);
    for fi in 0..BIN_FEATURE_NAMES.len() {
        let column: Vec<f64> = bins.iter().map(|b| b.values()[fi]).collect();
        values.extend_from_slice(&stats::summary_stats(&column));
    }
    FeatureVector::new(summary_feature_names(), values, meta)
}

/// Bins then summary for one trace: the offline packet-level pipeline.
pub fn trace_pkt_vector(
    packets: &[PacketRecord],
    meta: TraceMeta,
    window_s: u32,
    step_s: u32,
    interval_s: u32,
) -> Result<FeatureVector> {
    let bins = bin_packets(packets, window_s, step_s, interval_s)?;
    summarize_bins(&bins, meta)
}

pub const BIN_CSV_FIXED: [&str; 2] = ["trace_id", "window_start_s"];

/// Writes the per-bin CSV used by the real-time path.
pub fn write_bin_csv<W: Write>(
    mut w: W,
    rows: &[(String, BinFeatures)],
    provenance: &[String],
) -> Result<()> {
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    write!(w, "{}", BIN_CSV_FIXED.join(","))?;
    for n in BIN_FEATURE_NAMES {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (trace_id, bin) in rows {
        write!(w, "{},{}", trace_id, bin.window_start_s)?;
        for v in bin.values() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a per-bin CSV back into `(trace_id, BinFeatures)` rows.
pub fn read_bin_csv<R: Read>(reader: R) -> Result<Vec<(String, BinFeatures)>> {
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
            None => return Err(Error::parse_line(line_no, "missing bin CSV header")),
        }
    };
    let mut expected = BIN_CSV_FIXED.join(",");
    for n in BIN_FEATURE_NAMES {
        expected.push(',');
        expected.push_str(n);
    }
    if header != expected {
        return Err(Error::parse_line(line_no, "bad bin CSV header"));
    }
    let mut out = Vec::new();
    for line in lines {
        line_no += 1;
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::parse_line(
                line_no,
                format!("expected 11 fields, got {}", fields.len()),
            ));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse_line(line_no, format!("bad value `{s}`")))
        };
        let parse_u = |s: &str| -> Result<u64> {
            let v = parse_f(s)?;
            Ok(v as u64)
        };
        let bin = BinFeatures {
            window_start_s: fields[1]
                .parse()
                .map_err(|_| Error::parse_line(line_no, "bad window_start_s"))?,
            ul_frame_len_total: parse_u(fields[2])?,
            ul_pkt_count: parse_u(fields[3])?,
            dl_pkt_size_total: parse_u(fields[4])?,
            dl_tcp_hdr_total: parse_u(fields[5])?,
            dl_pkt_count: parse_u(fields[6])?,
            dl_pkt_size_mean: parse_f(fields[7])?,
            dl_pkt_size_min: parse_f(fields[8])?,
            dl_pkt_size_max: parse_f(fields[9])?,
            dl_pkt_size_std: parse_f(fields[10])?,
        };
        out.push((fields[0].to_string(), bin));
    }
    Ok(out)
}
