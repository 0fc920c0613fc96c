mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use panoscope::eval::{
    evaluate, run_offline_flw_sweep, run_offline_pkt_sweep, run_realtime_curve, EvalReport,
    ModelSpec, SplitSpec, SplitStrategy, TrafficType,
};
use panoscope::features::flow::{
    group_flow_rows, read_flow_csv, trace_flow_features, write_flow_csv, TopFlows,
    DEFAULT_BURST_GAP_S,
};
use panoscope::features::pkt::{
    bin_packets, read_bin_csv, trace_pkt_vector, write_bin_csv, BinFeatures, DEFAULT_STEP_S,
    DEFAULT_WINDOW_S,
};
use panoscope::features::{read_feature_csv, write_feature_csv, FeatureVector, LabeledDataset};
use panoscope::gbt::{train, GbtHyperparams, GbtModel};
use panoscope::heuristic::{fit_thresholds, ThresholdModel};
use panoscope::ingest::{assign_direction, parse_capture_full, CaptureFormat};
use panoscope::realtime::classify_stream;
use panoscope::record::{ClientIdentity, PacketRecord, Platform, Trace, TraceMeta};
use panoscope::synth::{generate_dataset, SynthParams};

use config::FileConfig;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Marker for command-line usage problems (exit code 1, not 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "panoscope",
    version,
    about = "Classify 360-degree vs regular video sessions from encrypted traffic captures"
)]
struct Cli {
    /// Optional key=value config file; flags override file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a labeled synthetic trace set (packet CSV + manifest).
    Synth(SynthArgs),
    /// Extract offline packet-level feature vectors from traces.
    ExtractPkt(ExtractPktArgs),
    /// Extract per-flow feature rows from traces.
    ExtractFlw(ExtractFlwArgs),
    /// Train a classifier and write the model file.
    Train(TrainArgs),
    /// Score feature vectors with a trained model.
    Predict(PredictArgs),
    /// Rank features of a trained model by split gain.
    Importance(ImportanceArgs),
    /// Replay one capture through the near-real-time classifier.
    Stream(StreamArgs),
    /// Run repeated-split experiments and write report files.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ClientArgs {
    /// Client MAC address (aa:bb:cc:dd:ee:ff) used to filter and orient
    /// packets; pcap input needs this or --client-ip.
    #[arg(long)]
    client_mac: Option<String>,
    /// Client IP address; fallback when no MAC is available.
    #[arg(long)]
    client_ip: Option<String>,
}

impl ClientArgs {
    fn identity(&self) -> Result<Option<ClientIdentity>> {
        let mac = match &self.client_mac {
            Some(s) => Some(parse_mac(s)?),
            None => None,
        };
        if mac.is_none() && self.client_ip.is_none() {
            return Ok(None);
        }
        Ok(Some(ClientIdentity {
            mac,
            ip: self.client_ip.clone(),
        }))
    }
}

fn parse_mac(s: &str) -> Result<[u8; 6]> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 6 {
        return Err(usage(format!("bad MAC address `{s}`")));
    }
    let mut mac = [0u8; 6];
    for (i, p) in parts.iter().enumerate() {
        mac[i] = u8::from_str_radix(p, 16).map_err(|_| usage(format!("bad MAC address `{s}`")))?;
    }
    Ok(mac)
}

#[derive(Args)]
struct HpArgs {
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_child_weight: Option<f64>,
    #[arg(long)]
    l2_reg: Option<f64>,
}

impl HpArgs {
    fn resolve(&self, cfg: &FileConfig, seed: u64) -> Result<GbtHyperparams> {
        let d = GbtHyperparams::default();
        Ok(GbtHyperparams {
            n_trees: cfg.get("n-trees", self.n_trees, d.n_trees)?,
            max_depth: cfg.get("max-depth", self.max_depth, d.max_depth)?,
            learning_rate: cfg.get("learning-rate", self.learning_rate, d.learning_rate)?,
            min_child_weight: cfg.get(
                "min-child-weight",
                self.min_child_weight,
                d.min_child_weight,
            )?,
            l2_reg: cfg.get("l2-reg", self.l2_reg, d.l2_reg)?,
            seed,
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the manifest and per-trace CSV files.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_per_class: usize,
    #[arg(long, default_value_t = 1)]
    traces_per_video: usize,
    /// yt, fb or both.
    #[arg(long, default_value = "yt")]
    platform: String,
    #[arg(long, default_value_t = 120)]
    duration_s: u32,
    #[arg(long, default_value_t = 120000.0)]
    base_rate_bps: f64,
    #[arg(long, default_value_t = 0.8)]
    separability: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    n_side_flows: u32,
}

#[derive(Args)]
struct ExtractPktArgs {
    /// Manifest CSV written by `synth` (or hand-written in its format).
    #[arg(long)]
    traces: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    window_s: Option<u32>,
    #[arg(long)]
    step_s: Option<u32>,
    /// Data collection interval in seconds.
    #[arg(long)]
    interval_s: Option<u32>,
    /// Also write the per-bin CSV for the real-time path.
    #[arg(long)]
    bins_out: Option<PathBuf>,
    /// Keep only flows matching a platform's keywords before binning
    /// (yt, fb or any); default keeps every packet of the device.
    #[arg(long)]
    platform_filter: Option<String>,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args)]
struct ExtractFlwArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Burst gap threshold in seconds.
    #[arg(long)]
    burst_gap_s: Option<f64>,
    /// yt, fb or any (default: any).
    #[arg(long)]
    platform_filter: Option<String>,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Offline feature CSV (packet-level or any fixed schema).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Per-flow CSV; aggregated with --top-n-flows before training.
    #[arg(long)]
    flow_features: Option<PathBuf>,
    /// Per-bin CSV; labels joined from --manifest. Trains a bin-level model.
    #[arg(long)]
    bins: Option<PathBuf>,
    /// Manifest supplying labels for --bins input.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Flow count for aggregation: a number or `all`.
    #[arg(long)]
    top_n_flows: Option<String>,
    #[arg(long)]
    model_out: PathBuf,
    /// gbt (default) or heuristic.
    #[arg(long, default_value = "gbt")]
    model_kind: String,
    /// Feature count for the heuristic baseline.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    flow_features: Option<PathBuf>,
    #[arg(long)]
    top_n_flows: Option<String>,
    /// Output CSV (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    /// Bin-level model trained on the bin feature schema.
    #[arg(long)]
    model: PathBuf,
    /// One capture file (packet CSV or pcap).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    stop_s: Option<u32>,
    /// Emit JSON lines instead of comma-separated fields.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// offline, pkt-sweep, flw-sweep or realtime.
    #[arg(long, default_value = "offline")]
    mode: String,
    /// Feature CSV for offline mode.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Manifest for pkt-sweep / realtime modes.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Per-flow CSV for flw-sweep mode.
    #[arg(long)]
    flow_features: Option<PathBuf>,
    /// Comma-separated intervals for pkt-sweep.
    #[arg(long, default_value = "20,30,60,90,120")]
    intervals: String,
    /// Comma-separated flow counts for flw-sweep (numbers or `all`).
    #[arg(long, default_value = "1,2,4,6,8,all")]
    n_flows: String,
    /// Comma-separated traffic types (yt, fb, both); default: autodetect.
    #[arg(long)]
    traffic: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// video-disjoint or trace-level.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// gbt or heuristic.
    #[arg(long, default_value = "gbt")]
    model_kind: String,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    stop_s: Option<u32>,
    /// Report CSV output.
    #[arg(long)]
    report: PathBuf,
    /// Optional JSON summary with the full resolved config.
    #[arg(long)]
    summary_json: Option<PathBuf>,
    /// Optional per-video accuracy CSV.
    #[arg(long)]
    per_video: Option<PathBuf>,
    #[command(flatten)]
    client: ClientArgs,
    #[command(flatten)]
    hp: HpArgs,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    match cli.command {
        Command::Synth(args) => cmd_synth(args, &cfg),
        Command::ExtractPkt(args) => cmd_extract_pkt(args, &cfg),
        Command::ExtractFlw(args) => cmd_extract_flw(args, &cfg),
        Command::Train(args) => cmd_train(args, &cfg),
        Command::Predict(args) => cmd_predict(args),
        Command::Importance(args) => cmd_importance(args, &cfg),
        Command::Stream(args) => cmd_stream(args, &cfg),
        Command::Evaluate(args) => cmd_evaluate(args, &cfg),
    }
}

fn provenance(settings: &BTreeMap<String, String>) -> Vec<String> {
    let mut line = String::new();
    for (k, v) in settings {
        if !line.is_empty() {
            line.push(' ');
        }
        let _ = write!(line, "{k}={v}");
    }
    vec![format!("panoscope {VERSION}"), format!("config: {line}")]
}

// ---------------------------------------------------------------- manifest

const MANIFEST_HEADER: &str = "trace_id,video_id,platform,label,file";

struct ManifestRow {
    meta: TraceMeta,
    file: PathBuf,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != MANIFEST_HEADER {
                bail!("{}: bad manifest header", path.display());
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("{} line {}: expected 5 fields", path.display(), i + 1);
        }
        let platform = Platform::parse(fields[2])
            .ok_or_else(|| anyhow!("{} line {}: bad platform", path.display(), i + 1))?;
        let label = match fields[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => bail!("{} line {}: bad label `{other}`", path.display(), i + 1),
        };
        rows.push(ManifestRow {
            meta: TraceMeta {
                trace_id: fields[0].to_string(),
                video_id: fields[1].to_string(),
                platform,
                label,
            },
            file: base.join(fields[4]),
        });
    }
    if !saw_header {
        bail!("{}: empty manifest", path.display());
    }
    Ok(rows)
}

fn load_capture(path: &Path, client: Option<&ClientIdentity>) -> Result<Vec<PacketRecord>> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let format = CaptureFormat::from_path(path);
    let parsed =
        parse_capture_full(&raw, format).with_context(|| format!("parsing {}", path.display()))?;
    match (format, client) {
        (CaptureFormat::PcapEthernet, None) => Err(usage(
            "pcap input needs --client-mac or --client-ip to assign directions".to_string(),
        )),
        (_, Some(identity)) => Ok(assign_direction(parsed.packets, identity)?),
        (CaptureFormat::PacketCsv, None) => Ok(parsed.packets),
    }
}

fn load_traces(manifest: &Path, client: Option<&ClientIdentity>) -> Result<Vec<Trace>> {
    let rows = read_manifest(manifest)?;
    let mut traces = Vec::with_capacity(rows.len());
    for row in rows {
        let packets = load_capture(&row.file, client)?;
        traces.push(Trace {
            meta: row.meta,
            packets,
        });
    }
    Ok(traces)
}

fn parse_platform_filter(s: Option<&str>) -> Result<Option<Platform>> {
    match s {
        None => Ok(None),
        Some(raw) => match raw.to_ascii_lowercase().as_str() {
            "any" => Ok(None),
            other => Platform::parse(other)
                .map(Some)
                .ok_or_else(|| usage(format!("bad platform filter `{raw}`"))),
        },
    }
}

// ------------------------------------------------------------------ synth

fn cmd_synth(args: SynthArgs, _cfg: &FileConfig) -> Result<()> {
    let seed = args.seed.unwrap_or(0);
    let platforms: Vec<Platform> = match args.platform.to_ascii_lowercase().as_str() {
        "yt" => vec![Platform::Yt],
        "fb" => vec![Platform::Fb],
        "both" => vec![Platform::Yt, Platform::Fb],
        other => return Err(usage(format!("bad platform `{other}`"))),
    };
    fs::create_dir_all(&args.out_dir)?;

    let mut settings = BTreeMap::new();
    settings.insert("command".into(), "synth".into());
    settings.insert("n_per_class".into(), args.n_per_class.to_string());
    settings.insert("traces_per_video".into(), args.traces_per_video.to_string());
    settings.insert("platform".into(), args.platform.to_ascii_lowercase());
    settings.insert("duration_s".into(), args.duration_s.to_string());
    settings.insert("base_rate_bps".into(), args.base_rate_bps.to_string());
    settings.insert("separability".into(), args.separability.to_string());
    settings.insert("seed".into(), seed.to_string());
    settings.insert("n_side_flows".into(), args.n_side_flows.to_string());
    let header = provenance(&settings);

    let mut manifest = String::new();
    for line in &header {
        let _ = writeln!(manifest, "# {line}");
    }
    let _ = writeln!(manifest, "{MANIFEST_HEADER}");

    for platform in &platforms {
        let template = SynthParams {
            platform: *platform,
            duration_s: args.duration_s,
            base_rate_bps: args.base_rate_bps,
            separability: args.separability,
            n_side_flows: args.n_side_flows,
            ..Default::default()
        };
        let platform_seed = panoscope::synth::mix_seed(&[seed, *platform as u64]);
        let traces = generate_dataset(
            args.n_per_class,
            &template,
            platform_seed,
            args.traces_per_video,
        )?;
        for trace in traces {
            let file = format!("{}.csv", trace.meta.trace_id);
            let mut buf = Vec::new();
            panoscope::ingest::csv::write_packets(&mut buf, &trace.packets, &header)?;
            fs::write(args.out_dir.join(&file), buf)?;
            let _ = writeln!(
                manifest,
                "{},{},{},{},{}",
                trace.meta.trace_id,
                trace.meta.video_id,
                trace.meta.platform,
                trace.meta.label.unwrap(),
                file
            );
        }
    }
    fs::write(args.out_dir.join("traces.csv"), manifest)?;
    eprintln!(
        "wrote {} traces to {}",
        2 * args.n_per_class * platforms.len(),
        args.out_dir.display()
    );
    Ok(())
}

// ------------------------------------------------------------ extract-pkt

fn cmd_extract_pkt(args: ExtractPktArgs, cfg: &FileConfig) -> Result<()> {
    let window_s = cfg.get("window-s", args.window_s, DEFAULT_WINDOW_S)?;
    let step_s = cfg.get("step-s", args.step_s, DEFAULT_STEP_S)?;
    let interval_s = cfg.get("interval-s", args.interval_s, 120u32)?;
    let platform_filter = parse_platform_filter(args.platform_filter.as_deref())?;
    let client = args.client.identity()?;
    let traces = load_traces(&args.traces, client.as_ref())?;

    let mut settings = BTreeMap::new();
    settings.insert("command".into(), "extract-pkt".into());
    settings.insert("window_s".into(), window_s.to_string());
    settings.insert("step_s".into(), step_s.to_string());
    settings.insert("interval_s".into(), interval_s.to_string());
    settings.insert(
        "platform_filter".into(),
        platform_filter
            .map(|p| p.to_string())
            .unwrap_or_else(|| "none".into()),
    );
    let header = provenance(&settings);

    let mut vectors: Vec<FeatureVector> = Vec::with_capacity(traces.len());
    let mut bin_rows: Vec<(String, BinFeatures)> = Vec::new();
    for trace in traces {
        let packets = match platform_filter {
            Some(p) => flatten_video_packets(trace.packets, Some(p)),
            None => trace.packets,
        };
        if args.bins_out.is_some() {
            for bin in bin_packets(&packets, window_s, step_s, interval_s)? {
                bin_rows.push((trace.meta.trace_id.clone(), bin));
            }
        }
        vectors.push(trace_pkt_vector(
            &packets,
            trace.meta.clone(),
            window_s,
            step_s,
            interval_s,
        )?);
    }
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &vectors, &header)?;
    fs::write(&args.out, buf)?;
    if let Some(bins_out) = &args.bins_out {
        let mut buf = Vec::new();
        write_bin_csv(&mut buf, &bin_rows, &header)?;
        fs::write(bins_out, buf)?;
    }
    eprintln!(
        "wrote {} feature vectors to {}",
        vectors.len(),
        args.out.display()
    );
    Ok(())
}

/// Keeps packets of flows matching the platform keywords and re-merges them
/// into one time-ordered stream.
fn flatten_video_packets(
    packets: Vec<PacketRecord>,
    platform: Option<Platform>,
) -> Vec<PacketRecord> {
    let flows =
        panoscope::ingest::filter_video_flows(panoscope::ingest::assemble_flows(packets), platform);
    let mut out: Vec<PacketRecord> = flows.into_iter().flat_map(|f| f.packets).collect();
    out.sort_by_key(|p| p.timestamp_us);
    out
}

// ------------------------------------------------------------ extract-flw

fn cmd_extract_flw(args: ExtractFlwArgs, cfg: &FileConfig) -> Result<()> {
    let burst_gap_s = cfg.get("burst-gap-s", args.burst_gap_s, DEFAULT_BURST_GAP_S)?;
    let platform_filter = parse_platform_filter(args.platform_filter.as_deref())?;
    let client = args.client.identity()?;
    let traces = load_traces(&args.traces, client.as_ref())?;

    let mut settings = BTreeMap::new();
    settings.insert("command".into(), "extract-flw".into());
    settings.insert("burst_gap_s".into(), burst_gap_s.to_string());
    settings.insert(
        "platform_filter".into(),
        platform_filter
            .map(|p| p.to_string())
            .unwrap_or_else(|| "any".into()),
    );
    let header = provenance(&settings);

    let mut rows = Vec::new();
    for trace in traces {
        rows.extend(trace_flow_features(
            trace.packets,
            &trace.meta,
            platform_filter,
            burst_gap_s,
        )?);
    }
    let mut buf = Vec::new();
    write_flow_csv(&mut buf, &rows, &header)?;
    fs::write(&args.out, buf)?;
    eprintln!("wrote {} flow rows to {}", rows.len(), args.out.display());
    Ok(())
}

// ------------------------------------------------------------------ train

fn parse_top_flows(s: Option<&str>, cfg: &FileConfig) -> Result<TopFlows> {
    let raw = match s {
        Some(v) => v.to_string(),
        None => cfg.get("top-n-flows", None::<String>, "1".to_string())?,
    };
    TopFlows::parse(&raw).ok_or_else(|| usage(format!("bad flow count `{raw}`")))
}

fn load_vectors(
    features: Option<&Path>,
    flow_features: Option<&Path>,
    bins: Option<&Path>,
    manifest: Option<&Path>,
    top_n: TopFlows,
) -> Result<Vec<FeatureVector>> {
    match (features, flow_features, bins) {
        (Some(path), None, None) => {
            let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(read_feature_csv(raw.as_slice())?)
        }
        (None, Some(path), None) => {
            let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let grouped = group_flow_rows(read_flow_csv(raw.as_slice())?);
            let mut vectors = Vec::new();
            for (meta, flows) in grouped {
                vectors.push(panoscope::features::flow::aggregate_top_flows(
                    &flows, top_n, meta,
                )?);
            }
            Ok(vectors)
        }
        (None, None, Some(path)) => {
            let manifest_path =
                manifest.ok_or_else(|| usage("--bins needs --manifest for labels".to_string()))?;
            let labels: BTreeMap<String, TraceMeta> = read_manifest(manifest_path)?
                .into_iter()
                .map(|r| (r.meta.trace_id.clone(), r.meta))
                .collect();
            let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let names = BinFeatures::feature_names();
            let mut vectors = Vec::new();
            for (trace_id, bin) in read_bin_csv(raw.as_slice())? {
                let meta = labels
                    .get(&trace_id)
                    .ok_or_else(|| anyhow!("trace `{trace_id}` missing from manifest"))?;
                vectors.push(FeatureVector::new(
                    names.clone(),
                    bin.values().to_vec(),
                    meta.clone(),
                )?);
            }
            Ok(vectors)
        }
        _ => Err(usage(
            "provide exactly one of --features, --flow-features, --bins".to_string(),
        )),
    }
}

fn cmd_train(args: TrainArgs, cfg: &FileConfig) -> Result<()> {
    let seed = cfg.get("seed", args.seed, 0u64)?;
    let hp = args.hp.resolve(cfg, seed)?;
    let top_n = parse_top_flows(args.top_n_flows.as_deref(), cfg)?;
    let vectors = load_vectors(
        args.features.as_deref(),
        args.flow_features.as_deref(),
        args.bins.as_deref(),
        args.manifest.as_deref(),
        top_n,
    )?;
    let data = LabeledDataset::new(vectors)?;

    let bytes = match args.model_kind.as_str() {
        "gbt" => train(&data, &hp)?.save(),
        "heuristic" => {
            let top_k = cfg.get("top-k", args.top_k, 5usize)?;
            let gbt = train(&data, &hp)?;
            let mut features: Vec<String> = gbt
                .feature_importance(top_k)
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            if features.is_empty() {
                features = data.feature_names.iter().take(top_k).cloned().collect();
            }
            fit_thresholds(&data, &features)?.save()
        }
        other => return Err(usage(format!("bad model kind `{other}`"))),
    };
    fs::write(&args.model_out, bytes)?;
    eprintln!("wrote model to {}", args.model_out.display());
    Ok(())
}

// ---------------------------------------------------------------- predict

enum AnyModel {
    Gbt(GbtModel),
    Threshold(ThresholdModel),
}

fn load_model(path: &Path) -> Result<AnyModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| anyhow!("{}: not a model file: {e}", path.display()))?;
    match value.get("model_kind").and_then(|v| v.as_str()) {
        Some("gbt") => Ok(AnyModel::Gbt(GbtModel::load(&bytes)?)),
        Some("threshold") => Ok(AnyModel::Threshold(ThresholdModel::load(&bytes)?)),
        other => bail!("{}: unknown model kind {other:?}", path.display()),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let cfg = FileConfig::default();
    let top_n = parse_top_flows(args.top_n_flows.as_deref(), &cfg)?;
    let vectors = load_vectors(
        args.features.as_deref(),
        args.flow_features.as_deref(),
        None,
        None,
        top_n,
    )?;
    let mut out = String::new();
    let _ = writeln!(out, "trace_id,video_id,platform,prediction,probability");
    for v in &vectors {
        let (label, prob) = match &model {
            AnyModel::Gbt(m) => {
                let p = m.predict_proba(v)?;
                (u8::from(p >= 0.5), format!("{p}"))
            }
            AnyModel::Threshold(m) => (m.predict(v)?, String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            v.meta.trace_id, v.meta.video_id, v.meta.platform, label, prob
        );
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_importance(args: ImportanceArgs, cfg: &FileConfig) -> Result<()> {
    let top_k = cfg.get("top-k", args.top_k, 10usize)?;
    let model = match load_model(&args.model)? {
        AnyModel::Gbt(m) => m,
        AnyModel::Threshold(_) => bail!("importance ranking needs a gbt model"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "rank,feature,gain");
    for (i, (name, gain)) in model.feature_importance(top_k).iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, name, gain);
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

// ----------------------------------------------------------------- stream

fn cmd_stream(args: StreamArgs, cfg: &FileConfig) -> Result<()> {
    let stop_s = cfg.get("stop-s", args.stop_s, 120u32)?;
    let model = match load_model(&args.model)? {
        AnyModel::Gbt(m) => m,
        AnyModel::Threshold(_) => bail!("stream needs a gbt bin-level model"),
    };
    let client = args.client.identity()?;
    let packets = load_capture(&args.input, client.as_ref())?;
    let bins = bin_packets(&packets, DEFAULT_WINDOW_S, DEFAULT_STEP_S, stop_s)?;
    use std::io::Write as _;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for decision in classify_stream(&model, &bins, stop_s)? {
        let line = if args.json {
            serde_json::to_string(&decision)?
        } else {
            format!(
                "{},{},{},{}",
                decision.t_s, decision.label, decision.votes_for_1, decision.votes_total
            )
        };
        if let Err(e) = writeln!(out, "{line}") {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return Ok(());
            }
            return Err(e.into());
        }
    }
    Ok(())
}

// --------------------------------------------------------------- evaluate

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("bad {what} `{p}`")))
        })
        .collect()
}

fn resolve_traffics(requested: Option<&str>, platforms: &[Platform]) -> Result<Vec<TrafficType>> {
    match requested {
        Some(raw) => raw
            .split(',')
            .map(|p| {
                TrafficType::parse(p.trim()).ok_or_else(|| usage(format!("bad traffic type `{p}`")))
            })
            .collect(),
        None => Ok(TrafficType::available(platforms)),
    }
}

fn report_csv(reports: &[EvalReport], header: &[String]) -> String {
    let mut out = String::new();
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(
        out,
        "traffic,model,param_name,param_value,n_repeats,acc_mean,acc_std,f1_mean,f1_std,tp,fp,tn,fn"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.traffic,
            r.model,
            r.param_name,
            r.param_value,
            r.n_repeats,
            r.accuracy_mean,
            r.accuracy_std,
            r.f1_mean,
            r.f1_std,
            r.confusion.tp,
            r.confusion.fp,
            r.confusion.tn,
            r.confusion.fn_
        );
    }
    out
}

fn per_video_csv(reports: &[EvalReport], header: &[String]) -> String {
    let mut out = String::new();
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "traffic,param_name,param_value,video_id,accuracy,n_tests");
    for r in reports {
        for (video, acc) in &r.per_video {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.traffic,
                r.param_name,
                r.param_value,
                video,
                acc.accuracy(),
                acc.total
            );
        }
    }
    out
}

fn cmd_evaluate(args: EvaluateArgs, cfg: &FileConfig) -> Result<()> {
    let seed = cfg.get("seed", args.seed, 0u64)?;
    let n_repeats = cfg.get("repeats", args.repeats, 20usize)?;
    let train_fraction = cfg.get("train-fraction", args.train_fraction, 0.7f64)?;
    let strategy_raw = match &args.split {
        Some(s) => s.clone(),
        None => cfg.get("split", None::<String>, "video-disjoint".to_string())?,
    };
    let strategy = SplitStrategy::parse(&strategy_raw)
        .ok_or_else(|| usage(format!("bad split strategy `{strategy_raw}`")))?;
    let spec = SplitSpec {
        strategy,
        train_fraction,
        n_repeats,
        seed,
    };
    let hp = args.hp.resolve(cfg, seed)?;
    let model = match args.model_kind.as_str() {
        "gbt" => ModelSpec::Gbt(hp.clone()),
        "heuristic" => ModelSpec::Heuristic {
            top_k: cfg.get("top-k", args.top_k, 5usize)?,
            hp: hp.clone(),
        },
        other => return Err(usage(format!("bad model kind `{other}`"))),
    };

    let mut settings = BTreeMap::new();
    settings.insert("command".into(), "evaluate".into());
    settings.insert("mode".into(), args.mode.clone());
    settings.insert("model_kind".into(), args.model_kind.clone());
    settings.insert("seed".into(), seed.to_string());
    settings.insert("repeats".into(), n_repeats.to_string());
    settings.insert("train_fraction".into(), train_fraction.to_string());
    settings.insert("split".into(), strategy_raw.clone());
    settings.insert("n_trees".into(), hp.n_trees.to_string());
    settings.insert("max_depth".into(), hp.max_depth.to_string());
    settings.insert("learning_rate".into(), hp.learning_rate.to_string());

    let client = args.client.identity()?;
    let mut curve_csv: Option<String> = None;
    let reports: Vec<EvalReport> = match args.mode.as_str() {
        "offline" => {
            let path = args
                .features
                .as_ref()
                .ok_or_else(|| usage("offline mode needs --features".to_string()))?;
            let raw = fs::read(path)?;
            let vectors = read_feature_csv(raw.as_slice())?;
            let data = LabeledDataset::new(vectors)?;
            let platforms: Vec<Platform> = data.vectors.iter().map(|v| v.meta.platform).collect();
            let traffics = resolve_traffics(args.traffic.as_deref(), &platforms)?;
            let mut reports = Vec::new();
            for traffic in traffics {
                let subset = data.filter_platform(match traffic {
                    TrafficType::Yt => Some(Platform::Yt),
                    TrafficType::Fb => Some(Platform::Fb),
                    TrafficType::Both => None,
                });
                reports.push(evaluate(
                    &subset,
                    &spec,
                    &model,
                    traffic.name(),
                    "dataset",
                    "features",
                )?);
            }
            reports
        }
        "pkt-sweep" => {
            let manifest = args
                .traces
                .as_ref()
                .ok_or_else(|| usage("pkt-sweep mode needs --traces".to_string()))?;
            let intervals: Vec<u32> = parse_list(&args.intervals, "interval")?;
            settings.insert("intervals".into(), args.intervals.clone());
            let traces = load_traces(manifest, client.as_ref())?;
            let platforms: Vec<Platform> = traces.iter().map(|t| t.meta.platform).collect();
            let traffics = resolve_traffics(args.traffic.as_deref(), &platforms)?;
            run_offline_pkt_sweep(&traces, &intervals, &spec, &model, &traffics)?
        }
        "flw-sweep" => {
            let path = args
                .flow_features
                .as_ref()
                .ok_or_else(|| usage("flw-sweep mode needs --flow-features".to_string()))?;
            let n_values: Vec<TopFlows> = args
                .n_flows
                .split(',')
                .map(|p| {
                    TopFlows::parse(p.trim()).ok_or_else(|| usage(format!("bad flow count `{p}`")))
                })
                .collect::<Result<_>>()?;
            settings.insert("n_flows".into(), args.n_flows.clone());
            let raw = fs::read(path)?;
            let grouped = group_flow_rows(read_flow_csv(raw.as_slice())?);
            let platforms: Vec<Platform> = grouped.iter().map(|(m, _)| m.platform).collect();
            let traffics = resolve_traffics(args.traffic.as_deref(), &platforms)?;
            run_offline_flw_sweep(&grouped, &n_values, &spec, &model, &traffics)?
        }
        "realtime" => {
            let manifest = args
                .traces
                .as_ref()
                .ok_or_else(|| usage("realtime mode needs --traces".to_string()))?;
            let stop_s = cfg.get("stop-s", args.stop_s, 120u32)?;
            settings.insert("stop_s".into(), stop_s.to_string());
            let traces = load_traces(manifest, client.as_ref())?;
            let bins = panoscope::eval::bins_for_traces(&traces, 5, 1, stop_s)?;
            let curve = run_realtime_curve(&bins, &spec, &hp, stop_s)?;
            let mut out = String::new();
            for line in provenance(&settings) {
                let _ = writeln!(out, "# {line}");
            }
            let _ = writeln!(out, "t_s,accuracy_mean");
            for (t, acc) in curve.t_s.iter().zip(&curve.accuracy_mean) {
                let _ = writeln!(out, "{t},{acc}");
            }
            curve_csv = Some(out);
            Vec::new()
        }
        other => return Err(usage(format!("bad mode `{other}`"))),
    };

    let header = provenance(&settings);
    match curve_csv {
        Some(csv) => fs::write(&args.report, csv)?,
        None => fs::write(&args.report, report_csv(&reports, &header))?,
    }
    if let Some(path) = &args.summary_json {
        #[derive(serde::Serialize)]
        struct Summary<'a> {
            tool_version: &'a str,
            config: &'a BTreeMap<String, String>,
            reports: &'a [EvalReport],
        }
        let summary = Summary {
            tool_version: VERSION,
            config: &settings,
            reports: &reports,
        };
        let mut bytes = serde_json::to_vec_pretty(&summary)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
    }
    if let Some(path) = &args.per_video {
        fs::write(path, per_video_csv(&reports, &header))?;
    }
    for r in &reports {
        eprintln!(
            "{} {} {}={}: acc {:.4} (+-{:.4}) f1 {:.4}",
            r.traffic, r.model, r.param_name, r.param_value, r.accuracy_mean, r.accuracy_std, r.f1_mean
        );
    }
    Ok(())
}
