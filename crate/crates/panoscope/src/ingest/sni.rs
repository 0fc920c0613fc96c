//! Hostname hints from encrypted traffic: TLS ClientHello SNI and DNS
//! answer records. These are the only hostname sources available once
//! payloads are encrypted.

/// Extracts the server_name from a TLS ClientHello, if `payload` starts
/// with one. Returns the lowercased hostname.
pub fn parse_client_hello_sni(payload: &[u8]) -> Option<String> {
    // TLS record header: type(1) version(2) length(2)
    if payload.len() < 5 || payload[0] != 0x16 {
        return None;
    }
    let record_len = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    let record = payload.get(5..5 + record_len)?;
    // Handshake header: type(1) length(3)
    if record.len() < 4 || record[0] != 0x01 {
        return None;
    }
    let hs_len = u32::from_be_bytes([0, record[1], record[2], record[3]]) as usize;
    let body = record.get(4..4 + hs_len)?;

    let mut pos = 0usize;
    // client_version(2) + random(32)
    pos += 34;
    let sid_len = *body.get(pos)? as usize;
    pos += 1 + sid_len;
    let cs_len = u16::from_be_bytes([*body.get(pos)?, *body.get(pos + 1)?]) as usize;
    pos += 2 + cs_len;
    let cm_len = *body.get(pos)? as usize;
    pos += 1 + cm_len;
    if pos + 2 > body.len() {
        return None;
    }
    let ext_total = u16::from_be_bytes([body[pos], body[pos + 1]]) as usize;
    pos += 2;
    let exts = body.get(pos..pos + ext_total)?;

    let mut e = 0usize;
    while e + 4 <= exts.len() {
        let ext_type = u16::from_be_bytes([exts[e], exts[e + 1]]);
        let ext_len = u16::from_be_bytes([exts[e + 2], exts[e + 3]]) as usize;
        let data = exts.get(e + 4..e + 4 + ext_len)?;
        if ext_type == 0 {
            // server_name list: list_len(2) name_type(1) name_len(2) name
            if data.len() < 5 || data[2] != 0 {
                return None;
            }
            let name_len = u16::from_be_bytes([data[3], data[4]]) as usize;
            let name = data.get(5..5 + name_len)?;
            let host = std::str::from_utf8(name).ok()?;
            return Some(host.to_ascii_lowercase());
        }
        e += 4 + ext_len;
    }
    None
}

/// Builds a minimal TLS 1.2 ClientHello record carrying `host` as SNI.
/// Used by the pcap writer so hostname hints survive serialization.
pub fn client_hello_bytes(host: &str) -> Vec<u8> {
    let name = host.as_bytes();
    let sni_data_len = 5 + name.len(); // list_len(2) type(1) name_len(2) name
    let ext_total = 4 + sni_data_len;

    let mut body = Vec::new();
    body.extend_from_slice(&[0x03, 0x03]); // client_version TLS1.2
    body.extend_from_slice(&[0u8; 32]); // random
    body.push(0); // session_id
    body.extend_from_slice(&2u16.to_be_bytes()); // one cipher suite
    body.extend_from_slice(&[0x13, 0x01]);
    body.push(1); // one compression method
    body.push(0);
    body.extend_from_slice(&(ext_total as u16).to_be_bytes());
    body.extend_from_slice(&0u16.to_be_bytes()); // ext type server_name
    body.extend_from_slice(&(sni_data_len as u16).to_be_bytes());
    body.extend_from_slice(&((3 + name.len()) as u16).to_be_bytes()); // list len
    body.push(0); // name_type host_name
    body.extend_from_slice(&(name.len() as u16).to_be_bytes());
    body.extend_from_slice(name);

    let mut out = Vec::new();
    out.push(0x16);
    out.extend_from_slice(&[0x03, 0x01]);
    out.extend_from_slice(&((body.len() + 4) as u16).to_be_bytes());
    out.push(0x01); // ClientHello
    let len = body.len() as u32;
    out.extend_from_slice(&len.to_be_bytes()[1..]);
    out.extend_from_slice(&body);
    out
}

/// Parses a DNS response payload and returns (ip, hostname) pairs for every
/// A/AAAA answer, with the hostname taken from the first question.
pub fn parse_dns_answers(payload: &[u8]) -> Vec<(String, String)> {
    parse_dns_inner(payload).unwrap_or_default()
}

fn parse_dns_inner(p: &[u8]) -> Option<Vec<(String, String)>> {
    if p.len() < 12 {
        return None;
    }
    let flags = u16::from_be_bytes([p[2], p[3]]);
    if flags & 0x8000 == 0 {
        return None; // a query, not a response
    }
    let qdcount = u16::from_be_bytes([p[4], p[5]]) as usize;
    let ancount = u16::from_be_bytes([p[6], p[7]]) as usize;
    if qdcount == 0 {
        return None;
    }

    let mut pos = 12usize;
    let qname = read_name(p, &mut pos)?;
    pos += 4; // qtype + qclass
    for _ in 1..qdcount {
        read_name(p, &mut pos)?;
        pos += 4;
    }

    let mut out = Vec::new();
    for _ in 0..ancount {
        read_name(p, &mut pos)?;
        if pos + 10 > p.len() {
            return Some(out);
        }
        let rtype = u16::from_be_bytes([p[pos], p[pos + 1]]);
        let rdlen = u16::from_be_bytes([p[pos + 8], p[pos + 9]]) as usize;
        pos += 10;
        let rdata = p.get(pos..pos + rdlen)?;
        pos += rdlen;
        match (rtype, rdlen) {
            (1, 4) => {
                let ip = std::net::Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]);
                out.push((ip.to_string(), qname.clone()));
            }
            (28, 16) => {
                let bytes: [u8; 16] = rdata.try_into().ok()?;
                out.push((std::net::Ipv6Addr::from(bytes).to_string(), qname.clone()));
            }
            _ => {}
        }
    }
    Some(out)
}

/// Reads a DNS name at `*pos`, advancing past it; follows compression
/// pointers with a hop limit.
fn read_name(p: &[u8], pos: &mut usize) -> Option<String> {
    let mut labels: Vec<String> = Vec::new();
    let mut cursor = *pos;
    let mut jumped = false;
    let mut hops = 0;
    loop {
        let len = *p.get(cursor)? as usize;
        if len & 0xc0 == 0xc0 {
            let lo = *p.get(cursor + 1)? as usize;
            if !jumped {
                *pos = cursor + 2;
                jumped = true;
            }
            cursor = ((len & 0x3f) << 8) | lo;
            hops += 1;
            if hops > 10 {
                return None;
            }
            continue;
        }
        if len == 0 {
            if !jumped {
                *pos = cursor + 1;
            }
            break;
        }
        let label = p.get(cursor + 1..cursor + 1 + len)?;
        labels.push(String::from_utf8_lossy(label).to_ascii_lowercase());
        cursor += 1 + len;
    }
    Some(labels.join("."))
}

/// Builds a minimal DNS A-record response payload, for fixtures.
pub fn dns_response_bytes(host: &str, ip: std::net::Ipv4Addr) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x1234u16.to_be_bytes()); // id
    out.extend_from_slice(&0x8180u16.to_be_bytes()); // response, RD+RA
    out.extend_from_slice(&1u16.to_be_bytes()); // qdcount
    out.extend_from_slice(&1u16.to_be_bytes()); // ancount
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    for label in host.split('.') {
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
    out.extend_from_slice(&1u16.to_be_bytes()); // qtype A
    out.extend_from_slice(&1u16.to_be_bytes()); // qclass IN
    out.extend_from_slice(&[0xc0, 0x0c]); // name: pointer to question
    out.extend_from_slice(&1u16.to_be_bytes()); // type A
    out.extend_from_slice(&1u16.to_be_bytes()); // class IN
    out.extend_from_slice(&60u32.to_be_bytes()); // ttl
    out.extend_from_slice(&4u16.to_be_bytes()); // rdlength
    out.extend_from_slice(&ip.octets());
    out
}
