//! Core packet and flow records shared by every pipeline stage.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Traffic direction relative to the client device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "ul" => Some(Direction::Uplink),
            "dl" => Some(Direction::Downlink),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Transport protocol of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Proto {
    Tcp,
    Udp,
    Other,
}

impl Proto {
    pub fn as_str(&self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Proto> {
        match s {
            "tcp" => Some(Proto::Tcp),
            "udp" => Some(Proto::Udp),
            "other" => Some(Proto::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Video platform of a trace or flow filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Platform {
    Yt,
    Fb,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Yt => "yt",
            Platform::Fb => "fb",
        }
    }

    pub fn parse(s: &str) -> Option<Platform> {
        match s.to_ascii_lowercase().as_str() {
            "yt" => Some(Platform::Yt),
            "fb" => Some(Platform::Fb),
            _ => None,
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One captured packet after normalization.
///
/// `pkt_len` covers the transport header through the application payload
/// (the IP payload), while `frame_len` is the layer-2 length on the wire.
/// `tcp_seq` and the MAC addresses are only available for pcap input; the
/// CSV interchange format does not carry them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp_us: i64,
    pub direction: Direction,
    pub frame_len: u32,
    pub pkt_len: u32,
    pub tcp_hdr_len: u32,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
    /// Lowercase TLS SNI or DNS-derived hostname for the packet's flow;
    /// empty when unknown.
    pub sni_hint: String,
    pub tcp_seq: Option<u32>,
    pub src_mac: Option<[u8; 6]>,
    pub dst_mac: Option<[u8; 6]>,
}

impl PacketRecord {
    /// TCP payload bytes (application layer only); 0 for non-TCP packets.
    pub fn tcp_payload_len(&self) -> u32 {
        self.pkt_len.saturating_sub(self.tcp_hdr_len)
    }

    /// Validates the size and protocol invariants shared by all inputs.
    pub fn check_invariants(&self) -> Result<()> {
        if self.timestamp_us < 0 {
            return Err(Error::InvalidArgument(format!(
                "negative timestamp {}us",
                self.timestamp_us
            )));
        }
        if self.frame_len < self.pkt_len || self.pkt_len < self.tcp_hdr_len {
            return Err(Error::InvalidArgument(format!(
                "length invariant violated: frame_len={} pkt_len={} tcp_hdr_len={}",
                self.frame_len, self.pkt_len, self.tcp_hdr_len
            )));
        }
        if self.proto != Proto::Tcp && self.tcp_hdr_len != 0 {
            return Err(Error::InvalidArgument(format!(
                "non-TCP packet with tcp_hdr_len={}",
                self.tcp_hdr_len
            )));
        }
        Ok(())
    }
}

/// Canonical 5-tuple key: the client endpoint is always stored first so both
/// directions of a conversation share one flow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub client_ip: String,
    pub server_ip: String,
    pub client_port: u16,
    pub server_port: u16,
    pub proto: Proto,
}

impl FlowKey {
    /// Builds the canonical key for a direction-assigned packet.
    pub fn from_packet(pkt: &PacketRecord) -> FlowKey {
        match pkt.direction {
            Direction::Uplink => FlowKey {
                client_ip: pkt.src_ip.clone(),
                server_ip: pkt.dst_ip.clone(),
                client_port: pkt.src_port,
                server_port: pkt.dst_port,
                proto: pkt.proto,
            },
            Direction::Downlink => FlowKey {
                client_ip: pkt.dst_ip.clone(),
                server_ip: pkt.src_ip.clone(),
                client_port: pkt.dst_port,
                server_port: pkt.src_port,
                proto: pkt.proto,
            },
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}<->{}:{}/{}",
            self.client_ip, self.client_port, self.server_ip, self.server_port, self.proto
        )
    }
}

/// Packets grouped under one canonical 5-tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub packets: Vec<PacketRecord>,
    pub bytes_dl: u64,
    pub bytes_ul: u64,
    pub start_us: i64,
    pub end_us: i64,
    pub sni_hint: String,
}

impl FlowRecord {
    pub fn duration_s(&self) -> f64 {
        (self.end_us - self.start_us) as f64 / 1_000_000.0
    }
}

/// Identity of the monitored client device. MAC is preferred when both the
/// identity and the packet carry one; IP is the fallback for flow-log-style
/// inputs without layer-2 addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientIdentity {
    pub mac: Option<[u8; 6]>,
    pub ip: Option<String>,
}

enum EndpointMatch {
    Source,
    Destination,
    Both,
    Neither,
}

impl ClientIdentity {
    pub fn from_mac(mac: [u8; 6]) -> ClientIdentity {
        ClientIdentity {
            mac: Some(mac),
            ip: None,
        }
    }

    pub fn from_ip(ip: impl Into<String>) -> ClientIdentity {
        ClientIdentity {
            mac: None,
            ip: Some(ip.into()),
        }
    }

    fn match_endpoints(&self, pkt: &PacketRecord) -> EndpointMatch {
        // MAC match takes precedence when both sides have the data for it.
        if let (Some(mac), Some(src_mac), Some(dst_mac)) = (self.mac, pkt.src_mac, pkt.dst_mac) {
            return match (src_mac == mac, dst_mac == mac) {
                (true, true) => EndpointMatch::Both,
                (true, false) => EndpointMatch::Source,
                (false, true) => EndpointMatch::Destination,
                (false, false) => EndpointMatch::Neither,
            };
        }
        if let Some(ip) = &self.ip {
            return match (&pkt.src_ip == ip, &pkt.dst_ip == ip) {
                (true, true) => EndpointMatch::Both,
                (true, false) => EndpointMatch::Source,
                (false, true) => EndpointMatch::Destination,
                (false, false) => EndpointMatch::Neither,
            };
        }
        EndpointMatch::Neither
    }

    /// Direction of `pkt` relative to this client: `Some(Uplink)` when the
    /// client is the source, `Some(Downlink)` when it is the destination,
    /// `None` when the packet does not involve the client.
    pub fn direction_of(&self, pkt: &PacketRecord) -> Result<Option<Direction>> {
        match self.match_endpoints(pkt) {
            EndpointMatch::Source => Ok(Some(Direction::Uplink)),
            EndpointMatch::Destination => Ok(Some(Direction::Downlink)),
            EndpointMatch::Neither => Ok(None),
            EndpointMatch::Both => Err(Error::AmbiguousIdentity {
                timestamp_us: pkt.timestamp_us,
            }),
        }
    }
}

/// Metadata identifying one capture of one video playback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub trace_id: String,
    pub video_id: String,
    pub platform: Platform,
    /// 1 = 360-degree video, 0 = regular video.
    pub label: Option<u8>,
}

/// One capture with its metadata.
#[derive(Debug, Clone)]
pub struct Trace {
    pub meta: TraceMeta,
    pub packets: Vec<PacketRecord>,
}

/// Keyword sets used to pick platform video flows out of a trace.
pub fn platform_keywords(platform: Option<Platform>) -> &'static [&'static str] {
    const YT: &[&str] = &["googlevideo", "yt", "youtube"];
    const FB: &[&str] = &["fb", "fbcdn", "facebook"];
    const ANY: &[&str] = &["googlevideo", "yt", "youtube", "fb", "fbcdn", "facebook"];
    match platform {
        Some(Platform::Yt) => YT,
        Some(Platform::Fb) => FB,
        None => ANY,
    }
}

/// Recomputes per-direction byte totals for a packet list.
pub fn byte_totals(packets: &[PacketRecord]) -> (u64, u64) {
    let mut dl = 0u64;
    let mut ul = 0u64;
    for p in packets {
        match p.direction {
            Direction::Downlink => dl += u64::from(p.pkt_len),
            Direction::Uplink => ul += u64::from(p.pkt_len),
        }
    }
    (dl, ul)
}

/// Picks the flow-level hostname hint: first non-empty packet hint.
pub fn flow_sni_hint(packets: &[PacketRecord]) -> String {
    packets
        .iter()
        .find(|p| !p.sni_hint.is_empty())
        .map(|p| p.sni_hint.clone())
        .unwrap_or_default()
}

/// Lookup table from canonical flow key to hostname, used when annotating
/// parsed packets with SNI/DNS hints.
pub type HostnameMap = HashMap<FlowKey, String>;
