//! Classic libpcap reader and writer (Ethernet link type, IPv4/IPv6,
//! TCP/UDP).
//!
//! The reader drops non-IP, fragmented and truncated packets, counting them
//! in [`ParseStats`]. The writer exists so traces can be exported and test
//! fixtures generated; it emits minimal frames whose logical fields
//! round-trip through the reader. When a TCP packet's flow carries a
//! hostname hint and its payload is large enough, the writer embeds a TLS
//! ClientHello with that SNI so the hint also survives a round trip.

use std::net::{Ipv4Addr, Ipv6Addr};

use crate::error::{Error, Result};
use crate::ingest::sni::{client_hello_bytes, parse_client_hello_sni, parse_dns_answers};
use crate::record::{Direction, PacketRecord, Proto};

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_NS: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;

/// Counters for records the parser had to discard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub records_total: u64,
    pub kept: u64,
    pub dropped_non_ip: u64,
    pub dropped_fragmented: u64,
    pub dropped_non_transport: u64,
    pub dropped_truncated: u64,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Cursor<'a> {
        Cursor {
            data,
            pos: 0,
            big_endian: false,
        }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse_bytes(
                self.pos as u64,
                format!("need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(if self.big_endian {
            u16::from_be_bytes([b[0], b[1]])
        } else {
            u16::from_le_bytes([b[0], b[1]])
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(if self.big_endian {
            u32::from_be_bytes([b[0], b[1], b[2], b[3]])
        } else {
            u32::from_le_bytes([b[0], b[1], b[2], b[3]])
        })
    }
}

fn be16(b: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([b[off], b[off + 1]])
}

fn be32(b: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Undirected endpoint pair used to tie ClientHello hints to whole flows
/// before direction assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct UndirectedKey {
    a: (String, u16),
    b: (String, u16),
    proto: Proto,
}

impl UndirectedKey {
    fn of(pkt: &PacketRecord) -> UndirectedKey {
        let x = (pkt.src_ip.clone(), pkt.src_port);
        let y = (pkt.dst_ip.clone(), pkt.dst_port);
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        UndirectedKey {
            a,
            b,
            proto: pkt.proto,
        }
    }
}

/// Parses a classic pcap byte stream. Packets come back time-sorted and
/// rebased so the first one is at 0; direction is a placeholder
/// ([`Direction::Downlink`]) until `assign_direction` runs.
pub fn parse_pcap(raw: &[u8]) -> Result<(Vec<PacketRecord>, ParseStats)> {
    let mut cur = Cursor::new(raw);
    if raw.len() < 24 {
        return Err(Error::parse_bytes(0, "pcap global header truncated"));
    }
    let magic_raw = u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
    let (big_endian, nanos) = match magic_raw {
        MAGIC_US => (false, false),
        MAGIC_NS => (false, true),
        m if m.swap_bytes() == MAGIC_US => (true, false),
        m if m.swap_bytes() == MAGIC_NS => (true, true),
        m => {
            return Err(Error::parse_bytes(0, format!("bad pcap magic 0x{m:08x}")));
        }
    };
    cur.big_endian = big_endian;
    cur.pos = 4;
    let _version_major = cur.u16()?;
    let _version_minor = cur.u16()?;
    let _thiszone = cur.u32()?;
    let _sigfigs = cur.u32()?;
    let _snaplen = cur.u32()?;
    let network = cur.u32()?;
    if network != LINKTYPE_ETHERNET {
        return Err(Error::UnsupportedFormat(format!(
            "pcap link type {network}; only Ethernet (1) is supported"
        )));
    }

    let mut stats = ParseStats::default();
    let mut packets: Vec<PacketRecord> = Vec::new();
    // Hostname sources discovered while scanning.
    let mut sni_by_flow: std::collections::HashMap<UndirectedKey, String> = Default::default();
    let mut dns_by_ip: std::collections::HashMap<String, (String, i64)> = Default::default();

    while cur.remaining() > 0 {
        let rec_off = cur.pos as u64;
        if cur.remaining() < 16 {
            return Err(Error::parse_bytes(rec_off, "pcap record header truncated"));
        }
        let ts_sec = cur.u32()? as i64;
        let ts_frac = cur.u32()? as i64;
        let incl_len = cur.u32()? as usize;
        let orig_len = cur.u32()?;
        let ts_us = if nanos {
            ts_sec * 1_000_000 + ts_frac / 1_000
        } else {
            ts_sec * 1_000_000 + ts_frac
        };
        let data = cur.take(incl_len).map_err(|_| {
            Error::parse_bytes(rec_off, "pcap record data truncated".to_string())
        })?;
        stats.records_total += 1;

        match parse_frame(data, orig_len, ts_us) {
            Ok(Parsed::Packet(pkt, payload)) => {
                match pkt.proto {
                    Proto::Tcp if payload.len() >= 5 && payload[0] == 0x16 && payload[1] == 0x03 => {
                        if let Some(host) = parse_client_hello_sni(payload) {
                            sni_by_flow
                                .entry(UndirectedKey::of(&pkt))
                                .or_insert(host);
                        }
                    }
                    Proto::Udp if pkt.src_port == 53 => {
                        for (ip, host) in parse_dns_answers(payload) {
                            dns_by_ip.entry(ip).or_insert((host, ts_us));
                        }
                    }
                    _ => {}
                }
                stats.kept += 1;
                packets.push(pkt);
            }
            Ok(Parsed::Dropped(kind)) => match kind {
                Skip::NonIp => stats.dropped_non_ip += 1,
                Skip::Fragmented => stats.dropped_fragmented += 1,
                Skip::NonTransport => stats.dropped_non_transport += 1,
                Skip::Truncated => stats.dropped_truncated += 1,
            },
            Err(e) => return Err(e),
        }
    }

    // Attach hostname hints: ClientHello SNI wins over preceding DNS answers.
    for pkt in &mut packets {
        if let Some(host) = sni_by_flow.get(&UndirectedKey::of(pkt)) {
            pkt.sni_hint = host.clone();
            continue;
        }
        for ip in [&pkt.src_ip, &pkt.dst_ip] {
            if let Some((host, seen_us)) = dns_by_ip.get(ip) {
                if *seen_us <= pkt.timestamp_us {
                    pkt.sni_hint = host.clone();
                    break;
                }
            }
        }
    }

    packets.sort_by_key(|p| p.timestamp_us);
    if let Some(first) = packets.first().map(|p| p.timestamp_us) {
        for p in &mut packets {
            p.timestamp_us -= first;
        }
    }
    Ok((packets, stats))
}

enum Skip {
    NonIp,
    Fragmented,
    NonTransport,
    Truncated,
}

enum Parsed<'a> {
    Packet(PacketRecord, &'a [u8]),
    Dropped(Skip),
}

fn parse_frame(data: &[u8], orig_len: u32, ts_us: i64) -> Result<Parsed<'_>> {
    if data.len() < 14 {
        return Ok(Parsed::Dropped(Skip::Truncated));
    }
    let dst_mac: [u8; 6] = data[0..6].try_into().unwrap();
    let src_mac: [u8; 6] = data[6..12].try_into().unwrap();
    let mut ethertype = be16(data, 12);
    let mut off = 14;
    // 802.1Q tag
    if ethertype == 0x8100 {
        if data.len() < 18 {
            return Ok(Parsed::Dropped(Skip::Truncated));
        }
        ethertype = be16(data, 16);
        off = 18;
    }
    let ip = &data[off..];
    let (src_ip, dst_ip, proto_num, pkt_len, transport) = match ethertype {
        0x0800 => match parse_ipv4(ip)? {
            Some(v) => v,
            None => return Ok(Parsed::Dropped(Skip::Fragmented)),
        },
        0x86dd => match parse_ipv6(ip)? {
            Some(v) => v,
            None => return Ok(Parsed::Dropped(Skip::Fragmented)),
        },
        _ => return Ok(Parsed::Dropped(Skip::NonIp)),
    };

    let (proto, src_port, dst_port, tcp_hdr_len, tcp_seq, payload) = match proto_num {
        6 => {
            if transport.len() < 20 {
                return Ok(Parsed::Dropped(Skip::Truncated));
            }
            let hdr = ((transport[12] >> 4) as u32) * 4;
            if hdr < 20 || (hdr as usize) > transport.len() {
                return Ok(Parsed::Dropped(Skip::Truncated));
            }
            (
                Proto::Tcp,
                be16(transport, 0),
                be16(transport, 2),
                hdr,
                Some(be32(transport, 4)),
                &transport[hdr as usize..],
            )
        }
        17 => {
            if transport.len() < 8 {
                return Ok(Parsed::Dropped(Skip::Truncated));
            }
            (
                Proto::Udp,
                be16(transport, 0),
                be16(transport, 2),
                0,
                None,
                &transport[8..],
            )
        }
        _ => return Ok(Parsed::Dropped(Skip::NonTransport)),
    };

    if pkt_len < tcp_hdr_len {
        return Ok(Parsed::Dropped(Skip::Truncated));
    }
    let pkt = PacketRecord {
        timestamp_us: ts_us,
        direction: Direction::Downlink,
        frame_len: orig_len,
        pkt_len,
        tcp_hdr_len,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        proto,
        sni_hint: String::new(),
        tcp_seq,
        src_mac: Some(src_mac),
        dst_mac: Some(dst_mac),
    };
    Ok(Parsed::Packet(pkt, payload))
}

type IpInfo<'a> = (String, String, u8, u32, &'a [u8]);

fn parse_ipv4(ip: &[u8]) -> Result<Option<IpInfo<'_>>> {
    if ip.len() < 20 {
        return Ok(None);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ip[0] >> 4 != 4 || ihl < 20 || ip.len() < ihl {
        return Ok(None);
    }
    let total_len = be16(ip, 2) as usize;
    if total_len < ihl {
        return Ok(None);
    }
    let frag = be16(ip, 6);
    if frag & 0x2000 != 0 || frag & 0x1fff != 0 {
        // MF set or nonzero offset
        return Ok(None);
    }
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]).to_string();
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]).to_string();
    let pkt_len = (total_len - ihl) as u32;
    let end = total_len.min(ip.len());
    Ok(Some((src, dst, ip[9], pkt_len, &ip[ihl..end])))
}

fn parse_ipv6(ip: &[u8]) -> Result<Option<IpInfo<'_>>> {
    if ip.len() < 40 || ip[0] >> 4 != 6 {
        return Ok(None);
    }
    let payload_len = be16(ip, 4) as usize;
    let mut next = ip[6];
    let mut off = 40usize;
    let mut ext_len = 0usize;
    // Walk extension headers to the transport header.
    loop {
        match next {
            0 | 43 | 60 => {
                if ip.len() < off + 2 {
                    return Ok(None);
                }
                let len = ((ip[off + 1] as usize) + 1) * 8;
                next = ip[off];
                off += len;
                ext_len += len;
                if ip.len() < off {
                    return Ok(None);
                }
            }
            44 => return Ok(None), // fragment header
            _ => break,
        }
    }
    if payload_len < ext_len {
        return Ok(None);
    }
    let src_bytes: [u8; 16] = ip[8..24].try_into().unwrap();
    let dst_bytes: [u8; 16] = ip[24..40].try_into().unwrap();
    let src = Ipv6Addr::from(src_bytes).to_string();
    let dst = Ipv6Addr::from(dst_bytes).to_string();
    let pkt_len = (payload_len - ext_len) as u32;
    let end = (40 + payload_len).min(ip.len());
    Ok(Some((src, dst, next, pkt_len, &ip[off..end])))
}

fn parse_ip_addr(s: &str) -> Result<std::net::IpAddr> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("`{s}` is not an IP address")))
}

/// Serializes packets to classic pcap (little-endian, microsecond
/// timestamps, Ethernet). Flow hostname hints are embedded as a TLS
/// ClientHello in the first TCP packet of each flow whose payload has room.
pub fn write_pcap(packets: &[PacketRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC_US.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());

    let mut hinted: std::collections::HashSet<UndirectedKey> = Default::default();
    for pkt in packets {
        pkt.check_invariants()?;
        let payload_len = match pkt.proto {
            Proto::Tcp => pkt.pkt_len - pkt.tcp_hdr_len,
            Proto::Udp => pkt.pkt_len.saturating_sub(8),
            Proto::Other => 0,
        };
        let mut payload = vec![0u8; payload_len as usize];
        if pkt.proto == Proto::Tcp && !pkt.sni_hint.is_empty() {
            let key = UndirectedKey::of(pkt);
            if !hinted.contains(&key) {
                let hello = client_hello_bytes(&pkt.sni_hint);
                if hello.len() <= payload.len() {
                    payload[..hello.len()].copy_from_slice(&hello);
                    hinted.insert(key);
                }
            }
        }
        let frame = build_frame(pkt, &payload)?;
        let ts_sec = (pkt.timestamp_us / 1_000_000) as u32;
        let ts_usec = (pkt.timestamp_us % 1_000_000) as u32;
        out.extend_from_slice(&ts_sec.to_le_bytes());
        out.extend_from_slice(&ts_usec.to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&pkt.frame_len.to_le_bytes());
        out.extend_from_slice(&frame);
    }
    Ok(out)
}

fn build_frame(pkt: &PacketRecord, payload: &[u8]) -> Result<Vec<u8>> {
    let src = parse_ip_addr(&pkt.src_ip)?;
    let dst = parse_ip_addr(&pkt.dst_ip)?;
    let proto_num: u8 = match pkt.proto {
        Proto::Tcp => 6,
        Proto::Udp => 17,
        Proto::Other => {
            return Err(Error::InvalidArgument(
                "cannot serialize proto=other to pcap".to_string(),
            ))
        }
    };

    let mut transport = Vec::new();
    match pkt.proto {
        Proto::Tcp => {
            if pkt.tcp_hdr_len < 20 || !pkt.tcp_hdr_len.is_multiple_of(4) || pkt.tcp_hdr_len > 60 {
                return Err(Error::InvalidArgument(format!(
                    "tcp_hdr_len {} not serializable",
                    pkt.tcp_hdr_len
                )));
            }
            transport.extend_from_slice(&pkt.src_port.to_be_bytes());
            transport.extend_from_slice(&pkt.dst_port.to_be_bytes());
            transport.extend_from_slice(&pkt.tcp_seq.unwrap_or(0).to_be_bytes());
            transport.extend_from_slice(&0u32.to_be_bytes()); // ack
            transport.push(((pkt.tcp_hdr_len / 4) << 4) as u8);
            transport.push(0x10); // ACK flag
            transport.extend_from_slice(&65535u16.to_be_bytes());
            transport.extend_from_slice(&0u16.to_be_bytes()); // checksum
            transport.extend_from_slice(&0u16.to_be_bytes()); // urgent
            transport.resize(pkt.tcp_hdr_len as usize, 0); // option padding
        }
        Proto::Udp => {
            if pkt.pkt_len < 8 {
                return Err(Error::InvalidArgument(format!(
                    "udp pkt_len {} below header size",
                    pkt.pkt_len
                )));
            }
            transport.extend_from_slice(&pkt.src_port.to_be_bytes());
            transport.extend_from_slice(&pkt.dst_port.to_be_bytes());
            transport.extend_from_slice(&(pkt.pkt_len as u16).to_be_bytes());
            transport.extend_from_slice(&0u16.to_be_bytes());
        }
        Proto::Other => unreachable!(),
    }
    transport.extend_from_slice(payload);
    if transport.len() != pkt.pkt_len as usize {
        return Err(Error::InvalidArgument(format!(
            "transport length {} != pkt_len {}",
            transport.len(),
            pkt.pkt_len
        )));
    }

    let mut frame = Vec::new();
    frame.extend_from_slice(&pkt.dst_mac.unwrap_or([0x02; 6]));
    frame.extend_from_slice(&pkt.src_mac.unwrap_or([0x04; 6]));
    match (src, dst) {
        (std::net::IpAddr::V4(s), std::net::IpAddr::V4(d)) => {
            frame.extend_from_slice(&0x0800u16.to_be_bytes());
            frame.push(0x45);
            frame.push(0);
            frame.extend_from_slice(&((20 + pkt.pkt_len) as u16).to_be_bytes());
            frame.extend_from_slice(&0u16.to_be_bytes()); // id
            frame.extend_from_slice(&0x4000u16.to_be_bytes()); // DF
            frame.push(64);
            frame.push(proto_num);
            frame.extend_from_slice(&0u16.to_be_bytes()); // checksum
            frame.extend_from_slice(&s.octets());
            frame.extend_from_slice(&d.octets());
        }
        (std::net::IpAddr::V6(s), std::net::IpAddr::V6(d)) => {
            frame.extend_from_slice(&0x86ddu16.to_be_bytes());
            frame.push(0x60);
            frame.extend_from_slice(&[0, 0, 0]);
            frame.extend_from_slice(&(pkt.pkt_len as u16).to_be_bytes());
            frame.push(proto_num);
            frame.push(64);
            frame.extend_from_slice(&s.octets());
            frame.extend_from_slice(&d.octets());
        }
        _ => {
            return Err(Error::InvalidArgument(
                "mixed IPv4/IPv6 endpoints in one packet".to_string(),
            ))
        }
    }
    frame.extend_from_slice(&transport);
    Ok(frame)
}
