//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible with `cargo test -- --nocapture`).

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panoscope::eval::{
    metrics, run_offline_pkt_sweep, split, ModelSpec, SplitSpec, SplitStrategy, TrafficType,
};
use panoscope::features::flow::{
    aggregate_top_flows, compute_flow_features, DirFeatures, FlowFeatureSet, TopFlows,
};
use panoscope::features::pkt::{bin_packets, BinFeatures, BIN_FEATURE_NAMES};
use panoscope::features::{FeatureVector, LabeledDataset};
use panoscope::gbt::{train, GbtHyperparams};
use panoscope::heuristic::fit_thresholds;
use panoscope::ingest::assemble_flows;
use panoscope::realtime::{classify_stream, StreamState};
use panoscope::record::{Direction, PacketRecord, Platform, Proto, TraceMeta};
use panoscope::synth::{generate_dataset, generate_trace, SynthParams};

const ACCEPTANCE_SEED: u64 = 42;

fn meta(trace: &str, label: u8) -> TraceMeta {
    TraceMeta {
        trace_id: trace.to_string(),
        video_id: trace.to_string(),
        platform: Platform::Yt,
        label: Some(label),
    }
}

// ------------------------------------------------------------- criterion 1

fn pop_std_ref(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Brute-force bin recomputation: full rescan of the packet list per window.
fn oracle_bin(packets: &[PacketRecord], start_s: u32, window_s: u32) -> BinFeatures {
    let lo = i64::from(start_s) * 1_000_000;
    let hi = lo + i64::from(window_s) * 1_000_000;
    let mut bin = BinFeatures {
        window_start_s: start_s,
        ..Default::default()
    };
    let mut dl_sizes = Vec::new();
    for p in packets {
        if p.timestamp_us < lo || p.timestamp_us >= hi {
            continue;
        }
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
        bin.dl_pkt_size_mean = dl_sizes.iter().sum::<f64>() / dl_sizes.len() as f64;
        bin.dl_pkt_size_min = dl_sizes.iter().cloned().fold(f64::INFINITY, f64::min);
        bin.dl_pkt_size_max = dl_sizes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        bin.dl_pkt_size_std = pop_std_ref(&dl_sizes);
    }
    bin
}

/// Brute-force per-direction flow features straight from the packet list.
fn oracle_dir_features(
    packets: &[&PacketRecord],
    direction: Direction,
    flow_start_us: i64,
    flow_end_us: i64,
    gap_threshold_s: f64,
) -> DirFeatures {
    let sel: Vec<&&PacketRecord> = packets
        .iter()
        .filter(|p| p.direction == direction)
        .collect();
    if sel.is_empty() {
        return DirFeatures::default();
    }
    let duration = (flow_end_us - flow_start_us) as f64 / 1e6;
    let total: u64 = sel.iter().map(|p| u64::from(p.pkt_len)).sum();
    let throughput = if duration > 0.0 {
        total as f64 / duration
    } else {
        total as f64
    };
    let gaps: Vec<f64> = sel
        .windows(2)
        .map(|w| (w[1].timestamp_us - w[0].timestamp_us) as f64 / 1e6)
        .collect();
    let frame_gap_mean = if gaps.is_empty() {
        0.0
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let frame_size_mean = sel.iter().map(|p| f64::from(p.frame_len)).sum::<f64>() / sel.len() as f64;

    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut retrans = 0u64;
    for p in &sel {
        if p.proto != Proto::Tcp {
            continue;
        }
        if let Some(seq) = p.tcp_seq {
            if !seen.insert((seq, p.pkt_len - p.tcp_hdr_len)) {
                retrans += 1;
            }
        }
    }

    let mut groups: Vec<Vec<&&PacketRecord>> = Vec::new();
    for p in &sel {
        let new_group = match groups.last().and_then(|g| g.last()) {
            Some(last) => (p.timestamp_us - last.timestamp_us) as f64 / 1e6 > gap_threshold_s,
            None => true,
        };
        if new_group {
            groups.push(vec![p]);
        } else {
            groups.last_mut().unwrap().push(p);
        }
    }
    let sizes: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|p| f64::from(p.pkt_len)).sum())
        .collect();
    let durs: Vec<f64> = groups
        .iter()
        .map(|g| (g.last().unwrap().timestamp_us - g.first().unwrap().timestamp_us) as f64 / 1e6)
        .collect();
    let rates: Vec<f64> = sizes
        .iter()
        .zip(&durs)
        .map(|(s, d)| if *d > 0.0 { s / d } else { *s })
        .collect();
    let fmax = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
    let mut bgaps = Vec::new();
    for w in groups.windows(2) {
        bgaps.push(
            (w[1].first().unwrap().timestamp_us - w[0].last().unwrap().timestamp_us) as f64 / 1e6,
        );
    }
    DirFeatures {
        throughput_mean_bps: throughput,
        frame_gap_mean_s: frame_gap_mean,
        frame_size_mean_b: frame_size_mean,
        retransmissions_count: retrans as f64,
        burst_size_max_b: fmax(&sizes),
        burst_rate_max_bps: fmax(&rates),
        burst_time_max_s: fmax(&durs),
        burst_pkt_count_max: fmax(&groups.iter().map(|g| g.len() as f64).collect::<Vec<_>>()),
        burst_gap_mean_s: if bgaps.is_empty() {
            0.0
        } else {
            bgaps.iter().sum::<f64>() / bgaps.len() as f64
        },
        burst_duration_mean_s: durs.iter().sum::<f64>() / durs.len() as f64,
    }
}

#[test]
fn c01_feature_oracle_equivalence() {
    let started = Instant::now();
    let mut traces_checked = 0;
    for i in 0..100u64 {
        let params = SynthParams {
            platform: if i % 2 == 0 { Platform::Yt } else { Platform::Fb },
            label: (i % 2) as u8,
            duration_s: 60,
            base_rate_bps: 60_000.0 + 1_000.0 * i as f64,
            separability: (i % 5) as f64 / 4.0,
            seed: 1000 + i,
            n_side_flows: (i % 4) as u32,
        };
        let packets = generate_trace(&params).unwrap();

        // Packet-level bins against the rescan oracle.
        let bins = bin_packets(&packets, 5, 1, 60).unwrap();
        for bin in &bins {
            let expect = oracle_bin(&packets, bin.window_start_s, 5);
            assert_eq!(bin.ul_frame_len_total, expect.ul_frame_len_total);
            assert_eq!(bin.ul_pkt_count, expect.ul_pkt_count);
            assert_eq!(bin.dl_pkt_size_total, expect.dl_pkt_size_total);
            assert_eq!(bin.dl_tcp_hdr_total, expect.dl_tcp_hdr_total);
            assert_eq!(bin.dl_pkt_count, expect.dl_pkt_count);
            assert!(close(bin.dl_pkt_size_mean, expect.dl_pkt_size_mean));
            assert!(close(bin.dl_pkt_size_min, expect.dl_pkt_size_min));
            assert!(close(bin.dl_pkt_size_max, expect.dl_pkt_size_max));
            assert!(close(bin.dl_pkt_size_std, expect.dl_pkt_size_std));
        }

        // Flow-level features against the brute-force oracle.
        for flow in assemble_flows(packets.clone()) {
            let got = compute_flow_features(&flow, 0.5).unwrap();
            let refs: Vec<&PacketRecord> = flow.packets.iter().collect();
            for direction in [Direction::Uplink, Direction::Downlink] {
                let expect =
                    oracle_dir_features(&refs, direction, flow.start_us, flow.end_us, 0.5);
                let got_dir = if direction == Direction::Uplink {
                    &got.ul
                } else {
                    &got.dl
                };
                for (g, e) in got_dir.values().iter().zip(expect.values()) {
                    assert!(close(*g, e), "flow {} {direction:?}: {g} vs {e}", flow.key);
                }
            }
            assert_eq!(got.bytes_dl, flow.bytes_dl);
        }
        traces_checked += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "acceptance 1 PASS: feature-oracle equivalence on {traces_checked} traces in {elapsed:?}"
    );
}

// ------------------------------------------------------------- criterion 2

#[test]
fn c02_bin_schedule_law() {
    let mut counts = Vec::new();
    for duration_s in [20u32, 30, 60, 90, 120] {
        // Packets every half second, last one just before the nominal end.
        let mut packets: Vec<PacketRecord> = Vec::new();
        let mut t = 0i64;
        let end = i64::from(duration_s) * 1_000_000 - 200_000;
        while t <= end {
            packets.push(PacketRecord {
                timestamp_us: t,
                direction: Direction::Downlink,
                frame_len: 1254,
                pkt_len: 1200,
                tcp_hdr_len: 20,
                src_ip: "203.0.113.1".into(),
                dst_ip: "10.0.0.2".into(),
                src_port: 443,
                dst_port: 40000,
                proto: Proto::Tcp,
                sni_hint: String::new(),
                tcp_seq: None,
                src_mac: None,
                dst_mac: None,
            });
            t += 500_000;
        }
        let bins = bin_packets(&packets, 5, 1, 120).unwrap();
        counts.push(bins.len());
    }
    assert_eq!(counts, vec![16, 26, 56, 86, 116]);

    // Decision count at stop 120 s: train a tiny bin-level model and replay.
    let names = BinFeatures::feature_names();
    let vectors: Vec<FeatureVector> = (0..40)
        .map(|i| {
            let mut values = vec![0.0; 9];
            values[2] = if i % 2 == 0 { 100.0 } else { 100_000.0 };
            FeatureVector::new(names.clone(), values, meta(&format!("b{i}"), (i % 2) as u8))
                .unwrap()
        })
        .collect();
    let model = train(
        &LabeledDataset::new(vectors).unwrap(),
        &GbtHyperparams {
            n_trees: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let bins: Vec<BinFeatures> = (0..116)
        .map(|i| BinFeatures {
            window_start_s: i,
            dl_pkt_size_total: 100_000,
            ..Default::default()
        })
        .collect();
    let decisions = classify_stream(&model, &bins, 120).unwrap();
    assert_eq!(decisions.len(), 23);
    println!("acceptance 2 PASS: bin counts {counts:?}, 23 decisions at stop 120 s");
}

// ------------------------------------------------------------- criterion 3

#[test]
fn c03_classifier_sanity() {
    let started = Instant::now();
    let names = Arc::new(vec!["x".to_string()]);

    // Axis-separable: 100% training accuracy.
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let vectors: Vec<FeatureVector> = (0..200)
        .map(|i| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            FeatureVector::new(names.clone(), vec![x], meta(&format!("t{i}"), u8::from(x > 0.0)))
                .unwrap()
        })
        .collect();
    let data = LabeledDataset::new(vectors).unwrap();
    let model = train(&data, &GbtHyperparams::default()).unwrap();
    let train_acc = data
        .vectors
        .iter()
        .filter(|v| model.predict_label(v).unwrap() == v.meta.label.unwrap())
        .count() as f64
        / data.len() as f64;
    assert_eq!(train_acc, 1.0, "axis-separable training accuracy");

    // XOR, 400 points, depth >= 2: at least 95% held-out accuracy.
    let xor = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = Arc::new(vec!["x0".to_string(), "x1".to_string()]);
        let vectors: Vec<FeatureVector> = (0..400)
            .map(|i| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                FeatureVector::new(
                    names.clone(),
                    vec![a, b],
                    meta(&format!("t{i}"), u8::from((a > 0.0) != (b > 0.0))),
                )
                .unwrap()
            })
            .collect();
        LabeledDataset::new(vectors).unwrap()
    };
    let train_set = xor(ACCEPTANCE_SEED + 1);
    let test_set = xor(ACCEPTANCE_SEED + 2);
    let model = train(&train_set, &GbtHyperparams::default()).unwrap();
    let xor_acc = test_set
        .vectors
        .iter()
        .filter(|v| model.predict_label(v).unwrap() == v.meta.label.unwrap())
        .count() as f64
        / test_set.len() as f64;
    assert!(xor_acc >= 0.95, "xor test accuracy {xor_acc}");

    // Label-permuted data: 50% +- 10% mean test accuracy over 20 reseeds.
    let mut accs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let vectors: Vec<FeatureVector> = (0..200)
            .map(|i| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                FeatureVector::new(names.clone(), vec![x], meta(&format!("t{i}"), (i % 2) as u8))
                    .unwrap()
            })
            .collect();
        let (train_rows, test_rows) = vectors.split_at(140);
        let model = train(
            &LabeledDataset::new(train_rows.to_vec()).unwrap(),
            &GbtHyperparams::default(),
        )
        .unwrap();
        let acc = test_rows
            .iter()
            .filter(|v| model.predict_label(v).unwrap() == v.meta.label.unwrap())
            .count() as f64
            / test_rows.len() as f64;
        accs.push(acc);
    }
    let null_acc = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!(
        (null_acc - 0.5).abs() <= 0.10,
        "permuted-label accuracy {null_acc}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "acceptance 3 PASS: train 100%, xor {xor_acc:.3}, permuted {null_acc:.3} in {elapsed:?}"
    );
}

// ------------------------------------------------------------- criterion 4

#[test]
fn c04_majority_amplification() {
    let p = 0.7f64;
    let runs = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let mut hits = [0u32; 5];
    for _ in 0..runs {
        let mut state = StreamState::new();
        for _ in 0..25 {
            let pred = u8::from(rng.gen_bool(p));
            state.push_prediction(pred);
        }
        for (n, d) in state.decisions().iter().enumerate() {
            hits[n] += u32::from(d.label == 1);
        }
    }

    // Binomial-majority closed form; an even-group tie falls back on the
    // previous odd-group decision, correct with probability exactly 1/2.
    let ln_fact = |m: u32| -> f64 { (1..=m).map(|x| f64::from(x).ln()).sum() };
    let closed_form = |k: u32| -> f64 {
        let term = |j: u32| {
            (ln_fact(k) - ln_fact(j) - ln_fact(k - j)
                + f64::from(j) * p.ln()
                + f64::from(k - j) * (1.0 - p).ln())
            .exp()
        };
        let mut acc: f64 = (k / 2 + 1..=k).map(term).sum();
        if k.is_multiple_of(2) {
            acc += 0.5 * term(k / 2);
        }
        acc
    };

    let mut sims = Vec::new();
    let mut last = 0.0f64;
    for n in 1..=5u32 {
        let sim = f64::from(hits[(n - 1) as usize]) / runs as f64;
        let expect = closed_form(5 * n);
        assert!(
            (sim - expect).abs() <= 0.02,
            "n={n}: simulated {sim} vs closed form {expect}"
        );
        assert!(sim >= last - 0.02, "n={n}: decreased from {last} to {sim}");
        last = sim;
        sims.push((sim * 1000.0).round() / 1000.0);
    }
    println!("acceptance 4 PASS: majority amplification at 5n bins: {sims:?}");
}

// ------------------------------------------------------------- criterion 5

fn pkt_accuracy_at(separability: f64, n_per_class: usize, interval: u32) -> f64 {
    let template = SynthParams {
        separability,
        ..Default::default()
    };
    let traces = generate_dataset(n_per_class, &template, ACCEPTANCE_SEED, 1).unwrap();
    let spec = SplitSpec {
        strategy: SplitStrategy::VideoDisjoint,
        train_fraction: 0.7,
        n_repeats: 20,
        seed: ACCEPTANCE_SEED,
    };
    let reports = run_offline_pkt_sweep(
        &traces,
        &[interval],
        &spec,
        &ModelSpec::Gbt(GbtHyperparams::default()),
        &[TrafficType::Yt],
    )
    .unwrap();
    reports[0].accuracy_mean
}

#[test]
fn c05_separability_curve() {
    let started = Instant::now();
    let mut curve = Vec::new();
    for sep in [0.0, 0.25, 0.5, 0.75, 1.0] {
        curve.push((sep, pkt_accuracy_at(sep, 50, 30)));
    }
    for pair in curve.windows(2) {
        assert!(
            pair[1].1 >= pair[0].1,
            "accuracy decreased between {:?} and {:?}",
            pair[0],
            pair[1]
        );
    }
    assert!(
        (curve[0].1 - 0.5).abs() <= 0.07,
        "separability 0 accuracy {}",
        curve[0].1
    );
    let acc_08 = pkt_accuracy_at(0.8, 50, 30);
    assert!(acc_08 >= 0.95, "separability 0.8 accuracy {acc_08}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "acceptance 5 PASS: curve {:?}, 0.8 -> {acc_08:.4} in {elapsed:?}",
        curve
            .iter()
            .map(|(s, a)| format!("{s}:{a:.3}"))
            .collect::<Vec<_>>()
    );
}

// ------------------------------------------------------------- criterion 6

#[test]
fn c06_heuristic_gap() {
    let template = SynthParams {
        separability: 0.8,
        ..Default::default()
    };
    let traces = generate_dataset(50, &template, ACCEPTANCE_SEED, 1).unwrap();
    let spec = SplitSpec {
        strategy: SplitStrategy::VideoDisjoint,
        train_fraction: 0.7,
        n_repeats: 20,
        seed: ACCEPTANCE_SEED,
    };
    let hp = GbtHyperparams::default();
    let gbt = run_offline_pkt_sweep(
        &traces,
        &[30],
        &spec,
        &ModelSpec::Gbt(hp.clone()),
        &[TrafficType::Yt],
    )
    .unwrap();
    let heuristic = run_offline_pkt_sweep(
        &traces,
        &[30],
        &spec,
        &ModelSpec::Heuristic { top_k: 5, hp },
        &[TrafficType::Yt],
    )
    .unwrap();
    let gap = gbt[0].accuracy_mean - heuristic[0].accuracy_mean;
    assert!(
        gap >= 0.0,
        "gbt {} below heuristic {}",
        gbt[0].accuracy_mean,
        heuristic[0].accuracy_mean
    );
    println!(
        "acceptance 6 PASS: gbt {:.4} vs heuristic {:.4}, measured gap {:+.4}",
        gbt[0].accuracy_mean, heuristic[0].accuracy_mean, gap
    );
}

// ------------------------------------------------------------- criterion 7

fn random_flow_set(rng: &mut ChaCha8Rng) -> Vec<FlowFeatureSet> {
    let n = rng.gen_range(1..12);
    (0..n)
        .map(|i| {
            let dirf = |rng: &mut ChaCha8Rng| DirFeatures {
                throughput_mean_bps: rng.gen_range(0.0..1e6),
                frame_gap_mean_s: rng.gen_range(0.0..2.0),
                frame_size_mean_b: rng.gen_range(60.0..1514.0),
                retransmissions_count: f64::from(rng.gen_range(0..30)),
                burst_size_max_b: rng.gen_range(0.0..1e6),
                burst_rate_max_bps: rng.gen_range(0.0..1e7),
                burst_time_max_s: rng.gen_range(0.0..10.0),
                burst_pkt_count_max: f64::from(rng.gen_range(1..500)),
                burst_gap_mean_s: rng.gen_range(0.0..5.0),
                burst_duration_mean_s: rng.gen_range(0.0..5.0),
            };
            FlowFeatureSet {
                ul: dirf(rng),
                dl: dirf(rng),
                // Narrow byte range so ties exercise the start tie-break.
                bytes_dl: rng.gen_range(0..6) * 1_000_000,
                start_us: i64::from(i),
            }
        })
        .collect()
}

#[test]
fn c07_flow_aggregation_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let n_values = [
        TopFlows::N(1),
        TopFlows::N(2),
        TopFlows::N(4),
        TopFlows::N(6),
        TopFlows::N(8),
        TopFlows::All,
    ];
    for round in 0..1000 {
        let flows = random_flow_set(&mut rng);
        for n in n_values {
            let v = aggregate_top_flows(&flows, n, meta(&format!("t{round}"), 1)).unwrap();
            let expected_len = if n == TopFlows::N(1) { 20 } else { 80 };
            assert_eq!(v.values.len(), expected_len, "n={n} length");

            // Sort-select oracle: stable sort by (bytes_dl desc, start asc).
            let mut order: Vec<usize> = (0..flows.len()).collect();
            order.sort_by(|&a, &b| {
                flows[b]
                    .bytes_dl
                    .cmp(&flows[a].bytes_dl)
                    .then(flows[a].start_us.cmp(&flows[b].start_us))
            });
            let keep = match n {
                TopFlows::N(k) => k.min(flows.len()),
                TopFlows::All => flows.len(),
            };
            let selected: Vec<&FlowFeatureSet> = order[..keep].iter().map(|&i| &flows[i]).collect();
            for fi in 0..20 {
                let col: Vec<f64> = selected.iter().map(|f| f.values()[fi]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let sum: f64 = col.iter().sum();
                let mn = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let mx = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if n == TopFlows::N(1) {
                    assert_eq!(v.values[fi], col[0]);
                } else {
                    let o = fi * 4;
                    assert_eq!(v.values[o], mean);
                    assert_eq!(v.values[o + 1], sum);
                    assert_eq!(v.values[o + 2], mn);
                    assert_eq!(v.values[o + 3], mx);
                }
            }
        }
    }
    println!("acceptance 7 PASS: 20/80 feature law and top-n selection on 1000 flow sets");
}

// ------------------------------------------------------------- criterion 8

#[test]
fn c08_stage_determinism() {
    let template = SynthParams {
        separability: 0.8,
        ..Default::default()
    };

    type StageBytes = (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>);
    let stage_bytes = || -> StageBytes {
        let traces = generate_dataset(6, &template, ACCEPTANCE_SEED, 1).unwrap();

        let mut packets_csv = Vec::new();
        for t in &traces {
            panoscope::ingest::csv::write_packets(&mut packets_csv, &t.packets, &[]).unwrap();
        }

        let mut vectors = Vec::new();
        let mut bins_csv = Vec::new();
        let mut bin_rows = Vec::new();
        for t in &traces {
            let bins = bin_packets(&t.packets, 5, 1, 30).unwrap();
            for b in &bins {
                bin_rows.push((t.meta.trace_id.clone(), b.clone()));
            }
            vectors
                .push(panoscope::features::pkt::summarize_bins(&bins, t.meta.clone()).unwrap());
        }
        panoscope::features::pkt::write_bin_csv(&mut bins_csv, &bin_rows, &[]).unwrap();
        let mut features_csv = Vec::new();
        panoscope::features::write_feature_csv(&mut features_csv, &vectors, &[]).unwrap();

        let mut flows_csv = Vec::new();
        let mut rows = Vec::new();
        for t in &traces {
            rows.extend(
                panoscope::features::flow::trace_flow_features(
                    t.packets.clone(),
                    &t.meta,
                    None,
                    0.5,
                )
                .unwrap(),
            );
        }
        panoscope::features::flow::write_flow_csv(&mut flows_csv, &rows, &[]).unwrap();

        let data = LabeledDataset::new(vectors).unwrap();
        let model_bytes = train(&data, &GbtHyperparams::default()).unwrap().save();
        (packets_csv, features_csv, bins_csv, flows_csv, model_bytes)
    };

    let a = stage_bytes();
    let b = stage_bytes();
    assert_eq!(a.0, b.0, "trace CSV bytes differ");
    assert_eq!(a.1, b.1, "feature CSV bytes differ");
    assert_eq!(a.2, b.2, "bin CSV bytes differ");
    assert_eq!(a.3, b.3, "flow CSV bytes differ");
    assert_eq!(a.4, b.4, "model bytes differ");
    println!("acceptance 8 PASS: every stage reruns byte-identical");
}

// ------------------------------------------------------------- criterion 9

#[test]
fn c09_streaming_latency() {
    // Train a default-hyperparameter bin model on realistic synthetic bins.
    let template = SynthParams {
        separability: 0.8,
        ..Default::default()
    };
    let traces = generate_dataset(10, &template, ACCEPTANCE_SEED, 1).unwrap();
    let names = BinFeatures::feature_names();
    let mut vectors = Vec::new();
    let mut replay = Vec::new();
    for t in &traces {
        for bin in bin_packets(&t.packets, 5, 1, 120).unwrap() {
            vectors.push(
                FeatureVector::new(names.clone(), bin.values().to_vec(), t.meta.clone()).unwrap(),
            );
            replay.push(bin);
        }
    }
    let model = train(
        &LabeledDataset::new(vectors).unwrap(),
        &GbtHyperparams::default(),
    )
    .unwrap();

    let mut state = StreamState::new();
    let mut pushed = 0u32;
    let started = Instant::now();
    for bin in &replay {
        let mut bin = bin.clone();
        bin.window_start_s = pushed;
        panoscope::realtime::push_bin(&mut state, &model, &bin).unwrap();
        pushed += 1;
    }
    let elapsed = started.elapsed();
    let mean_ms = elapsed.as_secs_f64() * 1000.0 / f64::from(pushed);
    assert!(
        mean_ms < 1.0,
        "push_bin mean latency {mean_ms:.4} ms over {pushed} bins"
    );
    println!(
        "acceptance 9 PASS: push_bin mean latency {mean_ms:.4} ms over {pushed} bins"
    );
}

// ------------------------------------------------------------ criterion 10

/// Optional replication tier. Point PANOSCOPE_DATASET_DIR at a directory
/// holding `pkt/traces.csv` (packet captures, both platforms, labeled) and
/// optionally `flw/flows.csv` (flow-feature rows) converted from the public
/// dataset, then run `cargo test -p panoscope --test acceptance -- --ignored`.
/// Deviations from the published reference numbers are reported, not failed:
/// preprocessing details of the original collection are reimplemented here.
#[test]
#[ignore]
fn c10_optional_replication_tier() {
    let dir = match std::env::var("PANOSCOPE_DATASET_DIR") {
        Ok(d) => std::path::PathBuf::from(d),
        Err(_) => {
            println!("acceptance 10 SKIP: PANOSCOPE_DATASET_DIR not set");
            return;
        }
    };
    let spec = SplitSpec {
        strategy: SplitStrategy::VideoDisjoint,
        train_fraction: 0.7,
        n_repeats: 20,
        seed: ACCEPTANCE_SEED,
    };

    // Packet level, BOTH at 30 s vs the 95.2% reference.
    let manifest = dir.join("pkt").join("traces.csv");
    let text = std::fs::read_to_string(&manifest).expect("manifest");
    let mut traces = Vec::new();
    for line in text.lines().skip(1) {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let raw = std::fs::read(manifest.parent().unwrap().join(f[4])).expect("trace file");
        let packets = panoscope::ingest::parse_capture(
            &raw,
            panoscope::ingest::CaptureFormat::from_path(std::path::Path::new(f[4])),
        )
        .expect("parse");
        traces.push(panoscope::record::Trace {
            meta: TraceMeta {
                trace_id: f[0].into(),
                video_id: f[1].into(),
                platform: Platform::parse(f[2]).expect("platform"),
                label: Some(f[3].parse().expect("label")),
            },
            packets,
        });
    }
    let reports = run_offline_pkt_sweep(
        &traces,
        &[30],
        &spec,
        &ModelSpec::Gbt(GbtHyperparams::default()),
        &[TrafficType::Both],
    )
    .unwrap();
    let acc = reports[0].accuracy_mean * 100.0;
    let dev = acc - 95.2;
    println!(
        "acceptance 10 REPORT: packet-level BOTH @30s accuracy {acc:.1}% (reference 95.2%, deviation {dev:+.1} points{})",
        if dev.abs() <= 3.0 { ", within +-3" } else { ", outside +-3" }
    );

    let flows_path = dir.join("flw").join("flows.csv");
    if let Ok(raw) = std::fs::read(&flows_path) {
        let grouped = panoscope::features::flow::group_flow_rows(
            panoscope::features::flow::read_flow_csv(raw.as_slice()).expect("flow csv"),
        );
        let reports = panoscope::eval::run_offline_flw_sweep(
            &grouped,
            &[TopFlows::N(4)],
            &spec,
            &ModelSpec::Gbt(GbtHyperparams::default()),
            &[TrafficType::Fb],
        )
        .unwrap();
        let acc = reports[0].accuracy_mean * 100.0;
        let dev = acc - 94.1;
        println!(
            "acceptance 10 REPORT: flow-level FB @n=4 accuracy {acc:.1}% (reference 94.1%, deviation {dev:+.1} points{})",
            if dev.abs() <= 3.0 { ", within +-3" } else { ", outside +-3" }
        );
    }
}

// --------------------------------------------------- supporting properties

/// The trace-level split strategy may use the per-video latents the
/// video-disjoint one cannot; its accuracy stays within 2 points.
#[test]
fn popularity_split_does_not_hurt() {
    let template = SynthParams {
        separability: 0.25,
        ..Default::default()
    };
    let traces = generate_dataset(50, &template, ACCEPTANCE_SEED, 5).unwrap();
    let bins = panoscope::eval::bins_for_traces(&traces, 5, 1, 30).unwrap();
    let data = panoscope::eval::pkt_vectors_at_interval(&bins, 5, 1, 30).unwrap();
    let hp = GbtHyperparams::default();
    let mut results = Vec::new();
    for strategy in [SplitStrategy::VideoDisjoint, SplitStrategy::TraceLevel] {
        let spec = SplitSpec {
            strategy,
            train_fraction: 0.7,
            n_repeats: 20,
            seed: ACCEPTANCE_SEED,
        };
        let report = panoscope::eval::evaluate(
            &data,
            &spec,
            &ModelSpec::Gbt(hp.clone()),
            "yt",
            "strategy",
            &format!("{strategy:?}"),
        )
        .unwrap();
        results.push(report.accuracy_mean);
    }
    assert!(
        results[1] >= results[0] - 0.02,
        "trace-level {} vs video-disjoint {}",
        results[1],
        results[0]
    );
    println!(
        "split strategies: video-disjoint {:.4}, trace-level {:.4}",
        results[0], results[1]
    );
}

/// Metrics stay consistent with a manual confusion count on a pipeline run.
#[test]
fn end_to_end_split_metrics_consistency() {
    let template = SynthParams {
        separability: 1.0,
        duration_s: 60,
        ..Default::default()
    };
    let traces = generate_dataset(10, &template, 7, 1).unwrap();
    let bins = panoscope::eval::bins_for_traces(&traces, 5, 1, 30).unwrap();
    let data = panoscope::eval::pkt_vectors_at_interval(&bins, 5, 1, 30).unwrap();
    let spec = SplitSpec {
        n_repeats: 1,
        seed: 3,
        ..Default::default()
    };
    let (train_set, test_set) = split(&data, &spec, 0).unwrap();
    let model = train(&train_set, &GbtHyperparams::default()).unwrap();
    let preds: Vec<u8> = test_set
        .vectors
        .iter()
        .map(|v| model.predict_label(v).unwrap())
        .collect();
    let labels = test_set.labels();
    let (acc, f1) = metrics(&preds, &labels).unwrap();
    let manual_acc = preds
        .iter()
        .zip(&labels)
        .filter(|(p, y)| p == y)
        .count() as f64
        / preds.len() as f64;
    assert_eq!(acc, manual_acc);
    assert!((0.0..=1.0).contains(&f1));
}

/// Heuristic feature selection comes from the trained importance ranking.
#[test]
fn heuristic_uses_important_features() {
    let template = SynthParams {
        separability: 0.8,
        ..Default::default()
    };
    let traces = generate_dataset(10, &template, 5, 1).unwrap();
    let bins = panoscope::eval::bins_for_traces(&traces, 5, 1, 30).unwrap();
    let data = panoscope::eval::pkt_vectors_at_interval(&bins, 5, 1, 30).unwrap();
    let gbt = train(&data, &GbtHyperparams::default()).unwrap();
    let top: Vec<String> = gbt
        .feature_importance(5)
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert!(!top.is_empty());
    let model = fit_thresholds(&data, &top).unwrap();
    assert_eq!(model.entries.len(), top.len());
    let train_acc = data
        .vectors
        .iter()
        .filter(|v| model.predict(v).unwrap() == v.meta.label.unwrap())
        .count() as f64
        / data.len() as f64;
    assert!(train_acc >= 0.9, "heuristic training accuracy {train_acc}");
}

/// Bin names and vector schema stay aligned from extraction to prediction.
#[test]
fn bin_schema_is_stable() {
    assert_eq!(BIN_FEATURE_NAMES.len(), 9);
    assert_eq!(
        panoscope::features::pkt::summary_feature_names().len(),
        63
    );
    let mut set = HashMap::new();
    for n in panoscope::features::pkt::summary_feature_names().iter() {
        assert!(set.insert(n.clone(), ()).is_none(), "duplicate name {n}");
    }
}
