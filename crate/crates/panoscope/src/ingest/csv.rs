//! Packet CSV interchange format.
//!
//! Header: `timestamp_us,direction,frame_len,pkt_len,tcp_hdr_len,src_ip,
//! dst_ip,src_port,dst_port,proto,sni_hint` with direction in {ul,dl} and
//! proto in {tcp,udp,other}. Lines starting with `#` are provenance
//! comments and are skipped.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::record::{Direction, PacketRecord, Proto};

pub const PACKET_CSV_HEADER: &str =
    "timestamp_us,direction,frame_len,pkt_len,tcp_hdr_len,src_ip,dst_ip,src_port,dst_port,proto,sni_hint";

pub fn read_packets<R: Read>(reader: R) -> Result<Vec<PacketRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    {
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse_line(1, e.to_string()))?;
        let expected: Vec<&str> = PACKET_CSV_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::parse_line(
                1,
                format!("bad packet CSV header: expected `{PACKET_CSV_HEADER}`"),
            ));
        }
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse_line(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push(parse_row(&rec, line)?);
    }
    Ok(out)
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'a str> {
    rec.get(idx)
        .ok_or_else(|| Error::parse_line(line, format!("missing field `{name}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::parse_line(line, format!("invalid {name}: `{s}`")))
}

fn parse_row(rec: &csv::StringRecord, line: u64) -> Result<PacketRecord> {
    if rec.len() != 11 {
        return Err(Error::parse_line(
            line,
            format!("expected 11 fields, got {}", rec.len()),
        ));
    }
    let timestamp_us: i64 = parse_num(field(rec, 0, "timestamp_us", line)?, "timestamp_us", line)?;
    let dir_s = field(rec, 1, "direction", line)?;
    let direction = Direction::parse(dir_s)
        .ok_or_else(|| Error::parse_line(line, format!("invalid direction: `{dir_s}`")))?;
    let frame_len: u32 = parse_num(field(rec, 2, "frame_len", line)?, "frame_len", line)?;
    let pkt_len: u32 = parse_num(field(rec, 3, "pkt_len", line)?, "pkt_len", line)?;
    let tcp_hdr_len: u32 = parse_num(field(rec, 4, "tcp_hdr_len", line)?, "tcp_hdr_len", line)?;
    let src_ip = field(rec, 5, "src_ip", line)?.to_string();
    let dst_ip = field(rec, 6, "dst_ip", line)?.to_string();
    let src_port: u16 = parse_num(field(rec, 7, "src_port", line)?, "src_port", line)?;
    let dst_port: u16 = parse_num(field(rec, 8, "dst_port", line)?, "dst_port", line)?;
    let proto_s = field(rec, 9, "proto", line)?;
    let proto = Proto::parse(proto_s)
        .ok_or_else(|| Error::parse_line(line, format!("invalid proto: `{proto_s}`")))?;
    let sni_hint = field(rec, 10, "sni_hint", line)?.to_ascii_lowercase();

    let pkt = PacketRecord {
        timestamp_us,
        direction,
        frame_len,
        pkt_len,
        tcp_hdr_len,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        proto,
        sni_hint,
        tcp_seq: None,
        src_mac: None,
        dst_mac: None,
    };
    pkt.check_invariants()
        .map_err(|e| Error::parse_line(line, e.to_string()))?;
    Ok(pkt)
}

/// Writes packets in the interchange format. `provenance` lines, when given,
/// are emitted first as `#`-prefixed comments.
pub fn write_packets<W: Write>(
    mut writer: W,
    packets: &[PacketRecord],
    provenance: &[String],
) -> Result<()> {
    for line in provenance {
        writeln!(writer, "# {line}")?;
    }
    writeln!(writer, "{PACKET_CSV_HEADER}")?;
    for p in packets {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.timestamp_us,
            p.direction,
            p.frame_len,
            p.pkt_len,
            p.tcp_hdr_len,
            p.src_ip,
            p.dst_ip,
            p.src_port,
            p.dst_port,
            p.proto,
            p.sni_hint
        )?;
    }
    Ok(())
}
