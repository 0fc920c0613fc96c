//! Deterministic labeled trace generator.
//!
//! The two class-conditional generators differ only through `separability`:
//! at 0 they are identical; as it grows, 360 traces stream more data in
//! sustained on/off segment pulses until the end of the session while
//! regular traces finish their download early and fall nearly silent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::{Direction, PacketRecord, Platform, Proto, Trace, TraceMeta};

pub const DEFAULT_DURATION_S: u32 = 120;
pub const DEFAULT_BASE_RATE_BPS: f64 = 120_000.0;
pub const DEFAULT_SIDE_FLOWS: u32 = 3;

const CLIENT_IP: &str = "10.0.0.2";
const MAIN_SERVER_IP: &str = "203.0.113.10";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub platform: Platform,
    /// 1 = 360-degree video, 0 = regular video.
    pub label: u8,
    pub duration_s: u32,
    pub base_rate_bps: f64,
    /// Class separation in [0, 1]; 0 makes the label uninformative.
    pub separability: f64,
    pub seed: u64,
    pub n_side_flows: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            platform: Platform::Yt,
            label: 1,
            duration_s: DEFAULT_DURATION_S,
            base_rate_bps: DEFAULT_BASE_RATE_BPS,
            separability: 0.8,
            seed: 0,
            n_side_flows: DEFAULT_SIDE_FLOWS,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.duration_s < 30 {
            return Err(Error::InvalidArgument(
                "duration_s must be >= 30".to_string(),
            ));
        }
        if self.base_rate_bps <= 0.0 || !self.base_rate_bps.is_finite() {
            return Err(Error::InvalidArgument(
                "base_rate_Bps must be > 0".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::InvalidArgument(
                "separability must be in [0, 1]".to_string(),
            ));
        }
        if self.label > 1 {
            return Err(Error::InvalidArgument("label must be 0 or 1".to_string()));
        }
        Ok(())
    }
}

/// SplitMix64 step, used to derive independent stream seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for p in parts {
        state = state.wrapping_add(*p).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94d0_49bb_1331_11eb);
        state ^= state >> 31;
    }
    state
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 is kept away from 0.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct FlowSpec {
    server_ip: String,
    server_port: u16,
    proto: Proto,
    sni: String,
}

fn main_flow_spec(platform: Platform) -> FlowSpec {
    match platform {
        Platform::Yt => FlowSpec {
            server_ip: MAIN_SERVER_IP.to_string(),
            server_port: 443,
            proto: Proto::Udp,
            sni: "r4---sn-p5qlsnsl.googlevideo.com".to_string(),
        },
        Platform::Fb => FlowSpec {
            server_ip: MAIN_SERVER_IP.to_string(),
            server_port: 443,
            proto: Proto::Tcp,
            sni: "video-arn2-1.xx.fbcdn.net".to_string(),
        },
    }
}

fn side_flow_spec(platform: Platform, index: u32) -> FlowSpec {
    match platform {
        Platform::Yt => FlowSpec {
            server_ip: format!("203.0.113.{}", 20 + index),
            server_port: 443,
            proto: Proto::Udp,
            sni: format!("r{}---sn-aux.googlevideo.com", index + 1),
        },
        Platform::Fb => FlowSpec {
            server_ip: format!("203.0.113.{}", 20 + index),
            server_port: 443,
            proto: Proto::Tcp,
            sni: format!("scontent-arn2-{}.xx.fbcdn.net", index + 1),
        },
    }
}

struct Emitter {
    packets: Vec<PacketRecord>,
    client_seq: u32,
    server_seq: u32,
}

impl Emitter {
    fn new() -> Emitter {
        Emitter {
            packets: Vec::new(),
            client_seq: 1,
            server_seq: 1,
        }
    }

    fn push(&mut self, spec: &FlowSpec, ts_us: i64, direction: Direction, pkt_len: u32) {
        let tcp = spec.proto == Proto::Tcp;
        let tcp_hdr_len = if tcp { 20 } else { 0 };
        let pkt_len = pkt_len.max(tcp_hdr_len).max(if tcp { 20 } else { 8 });
        let (src_ip, dst_ip, src_port, dst_port) = match direction {
            Direction::Uplink => (CLIENT_IP.to_string(), spec.server_ip.clone(), 40000, spec.server_port),
            Direction::Downlink => (spec.server_ip.clone(), CLIENT_IP.to_string(), spec.server_port, 40000),
        };
        let tcp_seq = if tcp {
            let seq = match direction {
                Direction::Uplink => &mut self.client_seq,
                Direction::Downlink => &mut self.server_seq,
            };
            let cur = *seq;
            *seq = seq.wrapping_add(pkt_len - tcp_hdr_len);
            Some(cur)
        } else {
            None
        };
        self.packets.push(PacketRecord {
            timestamp_us: ts_us,
            direction,
            frame_len: pkt_len + 34,
            pkt_len,
            tcp_hdr_len,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            proto: spec.proto,
            sni_hint: spec.sni.clone(),
            tcp_seq,
            src_mac: None,
            dst_mac: None,
        });
    }
}

/// Generates one labeled trace. Byte-identical for identical params.
pub fn generate_trace(params: &SynthParams) -> Result<Vec<PacketRecord>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sep = params.separability;
    let is_360 = params.label == 1;
    let duration = params.duration_s as f64;

    // Label-dependent shape, all scaled by separability so the classes
    // coincide at separability 0. Every class-informative quantity also
    // carries per-trace jitter, keeping single features from separating the
    // classes perfectly at low separability.
    let z_rate = normal(&mut rng);
    let z_size = normal(&mut rng);
    let z_std = normal(&mut rng);
    let rate = params.base_rate_bps * (0.06 * z_rate).exp() * if is_360 { 1.0 + sep } else { 1.0 };
    let completion_draw: f64 = rng.gen_range(0.0..1.0);
    let completion_frac = if is_360 {
        1.0
    } else {
        1.0 - (0.30 + 0.10 * completion_draw) * sep
    };
    let completion_s = duration * completion_frac;
    let size_mean = 1340.0 + 60.0 * sep * if is_360 { 1.0 } else { -1.0 } + 13.0 * z_size;
    let size_std = 50.0 * (1.0 + 0.5 * sep * f64::from(params.label)) * (0.08 * z_std).exp();

    let main = main_flow_spec(params.platform);
    let mut em = Emitter::new();

    // Dominant video flow: one segment fetch per second, the response
    // packets packed into a short on-pulse.
    for second in 0..params.duration_s {
        let t0 = f64::from(second);
        if t0 + 0.5 > completion_s {
            // Post-completion near-silence: a small keepalive every 3 s.
            if second % 3 == 0 {
                em.push(&main, to_us(t0 + 0.40), Direction::Downlink, 90);
            }
            continue;
        }
        // Request packet leading the segment.
        em.push(&main, to_us(t0 + 0.005), Direction::Uplink, 150);
        let pulse_jitter = (0.15 * normal(&mut rng)).exp();
        let mut remaining = rate * pulse_jitter;
        let on_len = 0.30;
        let mut offset = 0.010;
        let mut since_ack = 0u32;
        while remaining > 0.0 {
            let draw = size_mean + size_std * normal(&mut rng);
            let size = draw.clamp(300.0, 1452.0) as u32;
            em.push(&main, to_us(t0 + offset), Direction::Downlink, size);
            remaining -= f64::from(size);
            since_ack += 1;
            if since_ack == 15 {
                em.push(&main, to_us(t0 + offset + 0.001), Direction::Uplink, 36);
                since_ack = 0;
            }
            // Spread the pulse across the on-window with a little jitter.
            offset += on_len / (rate / size_mean).max(4.0) * rng.gen_range(0.7..1.3);
        }
    }

    // Low-volume side video flows (content spread across CDN hosts).
    for i in 0..params.n_side_flows {
        let spec = side_flow_spec(params.platform, i);
        let period = 4 + (i as i64 % 3);
        let mut s = 1 + i as i64;
        while (s as f64) < duration - 1.0 {
            let t0 = s as f64 + 0.1 * f64::from(i + 1);
            em.push(&spec, to_us(t0), Direction::Uplink, 120);
            let burst_bytes = params.base_rate_bps * 0.03 * rng.gen_range(0.5..1.5);
            let mut remaining = burst_bytes;
            let mut offset = 0.02;
            while remaining > 0.0 {
                let draw = size_mean + size_std * normal(&mut rng);
                let size = draw.clamp(300.0, 1452.0) as u32;
                em.push(&spec, to_us(t0 + offset), Direction::Downlink, size);
                remaining -= f64::from(size);
                offset += 0.015;
            }
            s += period;
        }
    }

    // Background traffic: a named non-video flow and an anonymous one.
    let analytics = FlowSpec {
        server_ip: "198.51.100.40".to_string(),
        server_port: 443,
        proto: Proto::Tcp,
        sni: "metrics.tracker.example.net".to_string(),
    };
    let anon = FlowSpec {
        server_ip: "198.51.100.41".to_string(),
        server_port: 123,
        proto: Proto::Udp,
        sni: String::new(),
    };
    let mut s = 2i64;
    while (s as f64) < duration {
        em.push(&analytics, to_us(s as f64 + 0.33), Direction::Uplink, 210);
        em.push(&analytics, to_us(s as f64 + 0.37), Direction::Downlink, 320);
        s += 10;
    }
    let mut s = 5i64;
    while (s as f64) < duration - 0.5 {
        em.push(&anon, to_us(s as f64 + 0.71), Direction::Uplink, 48);
        em.push(&anon, to_us(s as f64 + 0.74), Direction::Downlink, 48);
        s += 16;
    }
    // Closing keepalive pins the trace duration for both classes.
    em.push(&anon, to_us(duration - 0.2), Direction::Uplink, 48);

    let mut packets = em.packets;
    packets.sort_by_key(|p| p.timestamp_us);
    // Rebase so ingestion accepts the trace unchanged.
    if let Some(first) = packets.first().map(|p| p.timestamp_us) {
        for p in &mut packets {
            p.timestamp_us -= first;
        }
    }
    Ok(packets)
}

fn to_us(t_s: f64) -> i64 {
    (t_s * 1_000_000.0).round() as i64
}

/// Generates `n_per_class` traces per label, spread over
/// `ceil(n_per_class / traces_per_video)` videos per label. Traces of one
/// video share a latent per-video rate so popularity-style splits have
/// something to exploit.
pub fn generate_dataset(
    n_per_class: usize,
    template: &SynthParams,
    seed: u64,
    traces_per_video: usize,
) -> Result<Vec<Trace>> {
    if n_per_class < 1 {
        return Err(Error::InvalidArgument(
            "n_per_class must be >= 1".to_string(),
        ));
    }
    if traces_per_video < 1 {
        return Err(Error::InvalidArgument(
            "traces_per_video must be >= 1".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(2 * n_per_class);
    for label in [0u8, 1u8] {
        let class_tag = if label == 1 { "360" } else { "reg" };
        for trace_idx in 0..n_per_class {
            let video_idx = trace_idx / traces_per_video;
            let take = trace_idx % traces_per_video;
            let video_id = format!("{}-{}-v{:03}", template.platform, class_tag, video_idx);
            let trace_id = format!("{video_id}-t{take:02}");

            const VIDEO_STREAM_TAG: u64 = 0x7669_6465;
            let mut video_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                seed,
                u64::from(label),
                video_idx as u64,
                VIDEO_STREAM_TAG,
            ]));
            let video_rate_mult = (0.05 * normal(&mut video_rng)).exp();

            let params = SynthParams {
                label,
                base_rate_bps: template.base_rate_bps * video_rate_mult,
                seed: mix_seed(&[seed, u64::from(label), trace_idx as u64]),
                ..template.clone()
            };
            let packets = generate_trace(&params)?;
            out.push(Trace {
                meta: TraceMeta {
                    trace_id,
                    video_id,
                    platform: template.platform,
                    label: Some(label),
                },
                packets,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::byte_totals;

    #[test]
    fn zero_separability_makes_labels_indistinguishable() {
        let base = SynthParams {
            separability: 0.0,
            seed: 404,
            ..Default::default()
        };
        let normal_trace = generate_trace(&SynthParams { label: 0, ..base.clone() }).unwrap();
        let deg360_trace = generate_trace(&SynthParams { label: 1, ..base }).unwrap();
        assert_eq!(normal_trace, deg360_trace);
    }

    #[test]
    fn full_separability_means_more_downlink_bytes_for_360() {
        let base = SynthParams {
            separability: 1.0,
            seed: 7,
            ..Default::default()
        };
        let normal_trace = generate_trace(&SynthParams { label: 0, ..base.clone() }).unwrap();
        let deg360_trace = generate_trace(&SynthParams { label: 1, ..base }).unwrap();
        let (dl0, _) = byte_totals(&normal_trace);
        let (dl1, _) = byte_totals(&deg360_trace);
        assert!(dl1 > dl0, "360 bytes {dl1} vs normal {dl0}");
    }

    #[test]
    fn generation_is_deterministic() {
        let params = SynthParams {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(generate_trace(&params).unwrap(), generate_trace(&params).unwrap());
    }

    #[test]
    fn generated_packets_satisfy_record_invariants() {
        let params = SynthParams {
            platform: Platform::Fb,
            seed: 3,
            ..Default::default()
        };
        let packets = generate_trace(&params).unwrap();
        assert!(!packets.is_empty());
        let mut last = 0i64;
        for p in &packets {
            p.check_invariants().unwrap();
            assert!(p.timestamp_us >= last);
            last = p.timestamp_us;
        }
        // Duration pins to the configured length.
        let dur_s = (packets.last().unwrap().timestamp_us as f64) / 1e6;
        assert!(dur_s > 119.0 && dur_s < 120.0);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let template = SynthParams::default();
        let a = generate_dataset(10, &template, 5, 1).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.iter().filter(|t| t.meta.label == Some(1)).count(), 10);
        let ids: std::collections::HashSet<&str> =
            a.iter().map(|t| t.meta.trace_id.as_str()).collect();
        assert_eq!(ids.len(), 20);

        let b = generate_dataset(10, &template, 5, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.meta, y.meta);
            assert_eq!(x.packets, y.packets);
        }
    }

    #[test]
    fn traces_per_video_groups_ids() {
        let template = SynthParams::default();
        let set = generate_dataset(6, &template, 1, 3).unwrap();
        let videos: std::collections::HashSet<&str> = set
            .iter()
            .filter(|t| t.meta.label == Some(0))
            .map(|t| t.meta.video_id.as_str())
            .collect();
        assert_eq!(videos.len(), 2);
    }

    #[test]
    fn traces_survive_ingestion_unchanged() {
        // The interchange format has no TCP sequence column, so everything
        // except tcp_seq survives a write/parse cycle bit-exactly; the
        // already-rebased timestamps make re-rebasing a no-op.
        use crate::ingest::{csv::write_packets, parse_capture, CaptureFormat};
        for platform in [Platform::Yt, Platform::Fb] {
            let trace = generate_trace(&SynthParams {
                platform,
                seed: 8,
                ..Default::default()
            })
            .unwrap();
            let mut buf = Vec::new();
            write_packets(&mut buf, &trace, &[]).unwrap();
            let back = parse_capture(&buf, CaptureFormat::PacketCsv).unwrap();
            let normalized: Vec<PacketRecord> = trace
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p.tcp_seq = None;
                    p
                })
                .collect();
            assert_eq!(back, normalized, "{platform} trace");
        }
    }

    #[test]
    fn side_and_background_flows_are_present() {
        use crate::ingest::{assemble_flows, filter_video_flows};
        let params = SynthParams {
            seed: 11,
            ..Default::default()
        };
        let packets = generate_trace(&params).unwrap();
        let flows = assemble_flows(packets);
        // dominant + 3 side + analytics + anonymous
        assert_eq!(flows.len(), 6);
        let video = filter_video_flows(flows.clone(), Some(Platform::Yt));
        assert_eq!(video.len(), 4);
        // The dominant flow carries the most downlink bytes.
        assert!(video[0].sni_hint.contains("googlevideo"));
        assert_eq!(video[0].key.server_ip, MAIN_SERVER_IP);
    }
}
