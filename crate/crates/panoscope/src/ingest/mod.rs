//! Capture ingestion: parsing, device filtering, direction assignment,
//! flow assembly and platform flow selection.

pub mod csv;
pub mod pcap;
pub mod sni;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::record::{
    byte_totals, flow_sni_hint, platform_keywords, ClientIdentity, FlowKey, FlowRecord,
    PacketRecord, Platform,
};

pub use pcap::ParseStats;

/// Supported capture container formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureFormat {
    /// Classic libpcap file, Ethernet link type.
    PcapEthernet,
    /// The packet CSV interchange format.
    PacketCsv,
}

impl CaptureFormat {
    /// Guesses the format from a file name, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> CaptureFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pcap") | Some("cap") => CaptureFormat::PcapEthernet,
            _ => CaptureFormat::PacketCsv,
        }
    }
}

/// Result of parsing one capture.
#[derive(Debug, Clone)]
pub struct ParsedCapture {
    pub packets: Vec<PacketRecord>,
    pub stats: ParseStats,
}

/// Parses raw capture bytes into time-sorted packet records, rebased so the
/// first packet is at 0. For pcap input only IPv4/IPv6 TCP/UDP packets are
/// kept and direction is a placeholder until [`assign_direction`] runs.
pub fn parse_capture(raw: &[u8], format: CaptureFormat) -> Result<Vec<PacketRecord>> {
    Ok(parse_capture_full(raw, format)?.packets)
}

/// Like [`parse_capture`] but also returns drop counters.
pub fn parse_capture_full(raw: &[u8], format: CaptureFormat) -> Result<ParsedCapture> {
    match format {
        CaptureFormat::PcapEthernet => {
            let (packets, stats) = pcap::parse_pcap(raw)?;
            Ok(ParsedCapture { packets, stats })
        }
        CaptureFormat::PacketCsv => {
            let mut packets = csv::read_packets(raw)?;
            packets.sort_by_key(|p| p.timestamp_us);
            if let Some(first) = packets.first().map(|p| p.timestamp_us) {
                for p in &mut packets {
                    p.timestamp_us -= first;
                }
            }
            let stats = ParseStats {
                records_total: packets.len() as u64,
                kept: packets.len() as u64,
                ..Default::default()
            };
            Ok(ParsedCapture { packets, stats })
        }
    }
}

/// Keeps only packets involving `client`, with direction set relative to it
/// (client as source = uplink). Packets whose endpoints both match the
/// client are an error.
pub fn assign_direction(
    packets: Vec<PacketRecord>,
    client: &ClientIdentity,
) -> Result<Vec<PacketRecord>> {
    if client.mac.is_none() && client.ip.is_none() {
        return Err(Error::InvalidArgument(
            "client identity needs a MAC or an IP".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(packets.len());
    for mut pkt in packets {
        if let Some(direction) = client.direction_of(&pkt)? {
            pkt.direction = direction;
            out.push(pkt);
        }
    }
    Ok(out)
}

/// Groups direction-assigned packets into flows keyed by the canonical
/// 5-tuple. Flows come back sorted by downloaded bytes, descending
/// (ties: earlier start first, then key).
pub fn assemble_flows(packets: Vec<PacketRecord>) -> Vec<FlowRecord> {
    let mut groups: HashMap<FlowKey, Vec<PacketRecord>> = HashMap::new();
    let mut order: Vec<FlowKey> = Vec::new();
    for pkt in packets {
        let key = FlowKey::from_packet(&pkt);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push(pkt);
    }

    let mut flows: Vec<FlowRecord> = order
        .into_iter()
        .map(|key| {
            let packets = groups.remove(&key).expect("key recorded at insert");
            let (bytes_dl, bytes_ul) = byte_totals(&packets);
            let start_us = packets.first().map(|p| p.timestamp_us).unwrap_or(0);
            let end_us = packets.last().map(|p| p.timestamp_us).unwrap_or(0);
            let sni_hint = flow_sni_hint(&packets);
            FlowRecord {
                key,
                packets,
                bytes_dl,
                bytes_ul,
                start_us,
                end_us,
                sni_hint,
            }
        })
        .collect();
    flows.sort_by(|a, b| {
        b.bytes_dl
            .cmp(&a.bytes_dl)
            .then(a.start_us.cmp(&b.start_us))
            .then(a.key.cmp(&b.key))
    });
    flows
}

/// Keeps flows whose hostname hint contains a platform keyword as a
/// substring. `None` matches either platform's keyword set. Flows without a
/// hint are dropped.
pub fn filter_video_flows(flows: Vec<FlowRecord>, platform: Option<Platform>) -> Vec<FlowRecord> {
    let keywords = platform_keywords(platform);
    flows
        .into_iter()
        .filter(|f| !f.sni_hint.is_empty() && keywords.iter().any(|k| f.sni_hint.contains(k)))
        .collect()
}
