//! Labeled synthetic traffic.
//!
//! Flows are first synthesized as per-second byte schedules, then cut into
//! packet records. Video follows a buffering burst at twice the nominal rate
//! and then on/off chunk cycles whose duty cycle shrinks with resolution;
//! downloads run at a steady rate; application flows cycle on and off at low
//! rates; app mice send a few small bursts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::broker::suffix_for_provider;
use crate::dns;
use crate::features::{attributes, make_subprofiles, TrafficProfile, TRAINING_PROFILE_LEN};
use crate::labels::{Resolution, StreamClass, IDENTIFIER_CLASSES, RESOLUTION_CLASSES};
use crate::ml::Dataset;
use crate::pipeline::{FlowKey, PacketRecord, Proto};

pub const MTU: u64 = 1500;
/// Link and transport headers added to a DNS payload.
const DNS_OVERHEAD: u64 = 42;
pub const VIDEO_PROVIDERS: [&str; 4] = ["Youtube", "Netflix", "Twitch", "Facebook"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraffgenError {
    #[error("no DNS suffix configured for provider {0:?}")]
    UnknownProvider(String),
    #[error("invalid generator parameter: {0}")]
    BadParams(&'static str),
}

/// Shape of one resolution tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    /// Bytes per second.
    pub nominal_rate: f64,
    /// Inclusive range of the initial buffering burst length, seconds.
    pub initial_burst_seconds: (u32, u32),
    /// Range the per-flow chunk period is drawn from, seconds.
    pub chunk_period: (f64, f64),
    pub chunk_duty: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoModelParams {
    pub classes: [ClassShape; 4],
    /// Per-flow multiplicative spread of the nominal rate.
    pub rate_spread: (f64, f64),
    /// Jitter during the buffering burst.
    pub burst_jitter: f64,
}

const fn mbps(x: f64) -> f64 {
    x * 1e6 / 8.0
}

impl Default for VideoModelParams {
    fn default() -> Self {
        let shape = |rate, duty, jitter| ClassShape {
            nominal_rate: mbps(rate),
            initial_burst_seconds: (8, 30),
            chunk_period: (4.0, 10.0),
            chunk_duty: duty,
            jitter,
        };
        VideoModelParams {
            classes: [
                shape(0.4, 0.25, 0.2),
                shape(1.5, 0.4, 0.2),
                shape(4.0, 0.55, 0.2),
                shape(16.0, 0.7, 0.25),
            ],
            rate_spread: (0.8, 1.25),
            burst_jitter: 0.05,
        }
    }
}

impl VideoModelParams {
    pub fn shape(&self, r: Resolution) -> &ClassShape {
        &self.classes[r.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownloadParams {
    /// Log-uniform rate range, bytes per second.
    pub rate_range: (f64, f64),
    pub jitter: f64,
    /// Chance that a given second carries no data.
    pub stall_probability: f64,
}

impl Default for DownloadParams {
    fn default() -> Self {
        DownloadParams {
            rate_range: (mbps(0.4), mbps(40.0)),
            jitter: 0.05,
            stall_probability: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiceParams {
    pub bursts: (u32, u32),
    pub burst_bytes: (u64, u64),
}

impl Default for MiceParams {
    fn default() -> Self {
        MiceParams {
            bursts: (2, 6),
            burst_bytes: (50_000, 500_000),
        }
    }
}

/// Long-lived application flows (feeds, sync, chat media) that are bursty
/// like video but run well below video rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppParams {
    /// Log-uniform rate range, bytes per second.
    pub rate_range: (f64, f64),
    pub period: (f64, f64),
    pub duty: (f64, f64),
    pub jitter: f64,
}

impl Default for AppParams {
    fn default() -> Self {
        AppParams {
            rate_range: (mbps(0.06), mbps(0.28)),
            period: (2.0, 12.0),
            duty: (0.15, 0.8),
            jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenParams {
    pub video: VideoModelParams,
    pub download: DownloadParams,
    pub app: AppParams,
    pub mice: MiceParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamKind {
    Video { provider: String, resolution: Resolution },
    Download,
    App,
    AppMice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub duration: u32,
    pub start_time: f64,
    pub seed: u64,
}

/// Kind column of the truth sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Video,
    Download,
    App,
    Mice,
    Constant,
    Dns,
}

impl TruthKind {
    pub fn name(self) -> &'static str {
        match self {
            TruthKind::Video => "video",
            TruthKind::Download => "download",
            TruthKind::App => "app",
            TruthKind::Mice => "mice",
            TruthKind::Constant => "constant",
            TruthKind::Dns => "dns",
        }
    }

    pub fn stream_class(self) -> StreamClass {
        if self == TruthKind::Video {
            StreamClass::Video
        } else {
            StreamClass::NonVideo
        }
    }
}

impl fmt::Display for TruthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TruthKind {
    type Err = crate::labels::UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "video" => TruthKind::Video,
            "download" => TruthKind::Download,
            "app" => TruthKind::App,
            "mice" => TruthKind::Mice,
            "constant" => TruthKind::Constant,
            "dns" => TruthKind::Dns,
            _ => return Err(crate::labels::UnknownLabel),
        })
    }
}

/// Ground truth of one generated flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTruth {
    pub flow_id: u64,
    pub key: FlowKey,
    pub kind: TruthKind,
    pub resolution: Option<Resolution>,
    pub provider: String,
    pub total_bytes: u64,
}

/// A packet tagged with the generator's flow id.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub flow_id: u64,
    pub packet: PacketRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledTrace {
    pub records: Vec<TraceRecord>,
    pub truth: Vec<FlowTruth>,
}

impl LabeledTrace {
    /// Merges fragments into one time-ordered trace.
    pub fn merge(parts: Vec<LabeledTrace>) -> LabeledTrace {
        let mut out = LabeledTrace::default();
        for p in parts {
            out.records.extend(p.records);
            out.truth.extend(p.truth);
        }
        out.records.sort_by(|a, b| {
            a.packet
                .timestamp
                .total_cmp(&b.packet.timestamp)
                .then(a.flow_id.cmp(&b.flow_id))
        });
        out.truth.sort_by_key(|t| t.flow_id);
        out
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.packet.bytes).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Packetization {
    /// MTU-sized records plus a residual tail, evenly spread within the second.
    Mtu,
    /// One aggregate record per flow per second.
    PerSecond,
}

fn jittered(rng: &mut ChaCha8Rng, x: f64, j: f64) -> f64 {
    if j > 0.0 {
        x * rng.gen_range(1.0 - j..1.0 + j)
    } else {
        x
    }
}

/// Buffering burst of `burst` seconds at twice `rate`, then on/off cycles
/// averaging `rate`.
#[allow(clippy::too_many_arguments)]
fn on_off_schedule(
    rng: &mut ChaCha8Rng,
    duration: usize,
    rate: f64,
    burst: f64,
    burst_jitter: f64,
    period: f64,
    duty: f64,
    jitter: f64,
) -> Vec<u64> {
    let on_len = duty * period;
    let on_rate = rate / duty;
    let origin = burst + rng.gen_range(0.0..period) - period;

    (0..duration)
        .map(|s| {
            let t0 = s as f64;
            if t0 < burst {
                return libm::round(jittered(rng, 2.0 * rate, burst_jitter)) as u64;
            }
            let t1 = t0 + 1.0;
            let first = libm::floor((t0 - origin) / period) as i64 - 1;
            let last = libm::floor((t1 - origin) / period) as i64;
            let mut on = 0.0;
            for m in first..=last {
                let a = (origin + m as f64 * period).max(burst);
                let b = origin + m as f64 * period + on_len;
                on += (b.min(t1) - a.max(t0)).max(0.0);
            }
            if on <= 0.0 {
                0
            } else {
                libm::round(jittered(rng, on_rate * on, jitter)) as u64
            }
        })
        .collect()
}

fn video_schedule(shape: &ClassShape, params: &VideoModelParams, duration: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let rate = shape.nominal_rate * rng.gen_range(params.rate_spread.0..params.rate_spread.1);
    let burst = rng.gen_range(shape.initial_burst_seconds.0..=shape.initial_burst_seconds.1) as f64;
    let period = rng.gen_range(shape.chunk_period.0..shape.chunk_period.1);
    let duty = (shape.chunk_duty * rng.gen_range(0.85..1.15)).min(1.0);
    on_off_schedule(
        rng,
        duration,
        rate,
        burst,
        params.burst_jitter,
        period,
        duty,
        shape.jitter,
    )
}

fn app_schedule(params: &AppParams, duration: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let (lo, hi) = params.rate_range;
    let rate = libm::exp(rng.gen_range(libm::log(lo)..libm::log(hi)));
    let period = rng.gen_range(params.period.0..params.period.1);
    let duty = rng.gen_range(params.duty.0..params.duty.1);
    on_off_schedule(rng, duration, rate, 0.0, 0.0, period, duty, params.jitter)
}

fn download_schedule(params: &DownloadParams, duration: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let (lo, hi) = params.rate_range;
    let rate = libm::exp(rng.gen_range(libm::log(lo)..libm::log(hi)));
    (0..duration)
        .map(|_| {
            if rng.gen_bool(params.stall_probability) {
                0
            } else {
                libm::round(jittered(rng, rate, params.jitter)) as u64
            }
        })
        .collect()
}

fn mice_schedule(params: &MiceParams, duration: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut bins = vec![0u64; duration];
    let n = rng.gen_range(params.bursts.0..=params.bursts.1);
    for _ in 0..n {
        let at = rng.gen_range(0..duration.max(1));
        bins[at] += rng.gen_range(params.burst_bytes.0..=params.burst_bytes.1);
    }
    bins
}

/// Per-second byte schedule of a stream; deterministic in `spec.seed`.
pub fn stream_schedule(spec: &StreamSpec, params: &GenParams) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let duration = spec.duration.max(1) as usize;
    match &spec.kind {
        StreamKind::Video { resolution, .. } => {
            video_schedule(params.video.shape(*resolution), &params.video, duration, &mut rng)
        }
        StreamKind::Download => download_schedule(&params.download, duration, &mut rng),
        StreamKind::App => app_schedule(&params.app, duration, &mut rng),
        StreamKind::AppMice => mice_schedule(&params.mice, duration, &mut rng),
    }
}

pub fn stream_profile(spec: &StreamSpec, params: &GenParams) -> TrafficProfile {
    TrafficProfile::new(
        spec.start_time,
        stream_schedule(spec, params).into_iter().map(|b| b as f64).collect(),
    )
}

/// Cuts a per-second schedule into packet records.
pub fn packetize(key: FlowKey, start_time: f64, bins: &[u64], mode: Packetization) -> Vec<PacketRecord> {
    let mut out = Vec::new();
    for (s, &bytes) in bins.iter().enumerate() {
        if bytes == 0 {
            continue;
        }
        let second = start_time + s as f64;
        match mode {
            Packetization::PerSecond => out.push(PacketRecord::new(second, key, bytes)),
            Packetization::Mtu => {
                let n = bytes.div_ceil(MTU);
                for j in 0..n {
                    let size = if j + 1 == n { bytes - MTU * (n - 1) } else { MTU };
                    let t = second + (j as f64 + 0.5) / n as f64;
                    out.push(PacketRecord::new(t, key, size));
                }
            }
        }
    }
    out
}

/// Generates one flow as a trace fragment.
pub fn generate_stream(
    spec: &StreamSpec,
    key: FlowKey,
    flow_id: u64,
    params: &GenParams,
    mode: Packetization,
) -> LabeledTrace {
    let bins = stream_schedule(spec, params);
    let records: Vec<TraceRecord> = packetize(key, spec.start_time, &bins, mode)
        .into_iter()
        .map(|packet| TraceRecord { flow_id, packet })
        .collect();
    let (kind, resolution, provider) = match &spec.kind {
        StreamKind::Video { provider, resolution } => (TruthKind::Video, Some(*resolution), provider.clone()),
        StreamKind::Download => (TruthKind::Download, None, "Unknown".to_string()),
        StreamKind::App => (TruthKind::App, None, "Unknown".to_string()),
        StreamKind::AppMice => (TruthKind::Mice, None, "Unknown".to_string()),
    };
    LabeledTrace {
        truth: vec![FlowTruth {
            flow_id,
            key,
            kind,
            resolution,
            provider,
            total_bytes: bins.iter().sum(),
        }],
        records,
    }
}

/// DNS reply for a name under `provider`'s suffix resolving to `server_ip`.
pub fn generate_dns(
    provider: &str,
    server_ip: Ipv4Addr,
    client_ip: Ipv4Addr,
    at: f64,
    id: u16,
) -> Result<PacketRecord, TraffgenError> {
    let suffix = suffix_for_provider(provider).ok_or_else(|| TraffgenError::UnknownProvider(provider.to_string()))?;
    let name = format!("r{}---sn-{:04x}.{}", id % 20, id, suffix);
    dns_packet(&name, server_ip, client_ip, at, id)
}

fn dns_packet(
    name: &str,
    server_ip: Ipv4Addr,
    client_ip: Ipv4Addr,
    at: f64,
    id: u16,
) -> Result<PacketRecord, TraffgenError> {
    let payload = dns::encode_a_reply(id, name, &[server_ip]).map_err(|_| TraffgenError::BadParams("DNS name"))?;
    let key = FlowKey::new(RESOLVER, client_ip, 53, 30_000 + id % 30_000, Proto::Udp);
    Ok(PacketRecord::new(at, key, payload.len() as u64 + DNS_OVERHEAD).with_dns(payload))
}

pub const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 53);

/// Mixed trace of videos, downloads, application flows and app mice, each
/// preceded by its DNS
/// reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub videos: [usize; 4],
    pub downloads: usize,
    pub apps: usize,
    pub mice: usize,
    /// Seconds each flow lasts.
    pub duration: u32,
    /// Seconds between consecutive flow starts.
    pub spacing: f64,
    pub seed: u64,
    pub packetization: Packetization,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            videos: [1, 1, 1, 1],
            downloads: 2,
            apps: 2,
            mice: 4,
            duration: 128,
            spacing: 5.0,
            seed: 1,
            packetization: Packetization::Mtu,
        }
    }
}

pub fn generate_trace(config: &TraceConfig, params: &GenParams) -> Result<LabeledTrace, TraffgenError> {
    let mut kinds = Vec::new();
    for r in Resolution::ALL {
        for _ in 0..config.videos[r.index()] {
            let provider = VIDEO_PROVIDERS[kinds.len() % VIDEO_PROVIDERS.len()].to_string();
            kinds.push(StreamKind::Video {
                provider,
                resolution: r,
            });
        }
    }
    kinds.extend((0..config.downloads).map(|_| StreamKind::Download));
    kinds.extend((0..config.apps).map(|_| StreamKind::App));
    kinds.extend((0..config.mice).map(|_| StreamKind::AppMice));
    if kinds.len() > 60_000 {
        return Err(TraffgenError::BadParams("too many flows"));
    }

    let mut parts = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.into_iter().enumerate() {
        let dns_id = (1u64 << 32) + i as u64;
        let start = libm::round(1.0 + i as f64 * config.spacing);
        let server = Ipv4Addr::new(172, 16 + (i >> 8) as u8, (i & 0xff) as u8, 10);
        let client = Ipv4Addr::new(192, 168, (i >> 8) as u8, (i & 0xff) as u8);
        let key = FlowKey::new(server, client, 443, 40_000 + (i % 20_000) as u16, Proto::Tcp);
        let dns_at = (start - 0.5).max(0.0);
        let dns = match &kind {
            StreamKind::Video { provider, .. } => generate_dns(provider, server, client, dns_at, i as u16)?,
            StreamKind::Download => {
                dns_packet(&format!("dl{i}.releases.ubuntu.com"), server, client, dns_at, i as u16)?
            }
            StreamKind::App | StreamKind::AppMice => {
                dns_packet(&format!("edge{i}.facebook.com"), server, client, dns_at, i as u16)?
            }
        };
        let spec = StreamSpec {
            kind,
            duration: config.duration,
            start_time: start,
            seed: config.seed.wrapping_add(i as u64),
        };
        let mut part = generate_stream(&spec, key, i as u64, params, config.packetization);
        if part.truth[0].kind != TruthKind::Video {
            let name = match dns.dns_payload.as_deref().map(|p| dns::parse_dns_reply(p, 0.0)) {
                Some(Ok(r)) => r.query_name,
                _ => String::new(),
            };
            part.truth[0].provider = crate::broker::registrable_domain(&name).to_string();
        }
        part.truth.push(FlowTruth {
            flow_id: dns_id,
            key: dns.key,
            kind: TruthKind::Dns,
            resolution: None,
            provider: "-".to_string(),
            total_bytes: dns.bytes,
        });
        part.records.push(TraceRecord {
            flow_id: dns_id,
            packet: dns,
        });
        parts.push(part);
    }
    Ok(LabeledTrace::merge(parts))
}

/// Counts of generated flows per class for the training datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub videos: [usize; 4],
    pub downloads: usize,
    pub apps: usize,
    pub seed: u64,
}

impl DatasetConfig {
    /// Half video spread evenly across resolutions, half non-video split
    /// between downloads and application flows.
    pub fn balanced(flows: usize, seed: u64) -> Self {
        let videos = flows / 2;
        let mut per = [videos / 4; 4];
        for slot in per.iter_mut().take(videos % 4) {
            *slot += 1;
        }
        let other = flows - videos;
        DatasetConfig {
            videos: per,
            downloads: other - other / 4,
            apps: other / 4,
            seed,
        }
    }

    pub fn flows(&self) -> usize {
        self.videos.iter().sum::<usize>() + self.downloads + self.apps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDatasets {
    /// video / nonvideo over every flow.
    pub identifier: Dataset,
    /// Resolution tier over the video flows.
    pub resolution: Dataset,
}

/// Flow `i` is generated with seed `config.seed + i`, profiled over 128 s and
/// cut into the eight sub-profiles; each sub-profile yields one instance.
pub fn generate_dataset(config: &DatasetConfig, params: &GenParams) -> GeneratedDatasets {
    let mut identifier = Dataset::traffic(&IDENTIFIER_CLASSES);
    let mut resolution = Dataset::traffic(&RESOLUTION_CLASSES);
    let mut kinds = Vec::with_capacity(config.flows());
    for r in Resolution::ALL {
        for _ in 0..config.videos[r.index()] {
            kinds.push(StreamKind::Video {
                provider: VIDEO_PROVIDERS[kinds.len() % VIDEO_PROVIDERS.len()].to_string(),
                resolution: r,
            });
        }
    }
    kinds.extend((0..config.downloads).map(|_| StreamKind::Download));
    kinds.extend((0..config.apps).map(|_| StreamKind::App));

    for (i, kind) in kinds.into_iter().enumerate() {
        let spec = StreamSpec {
            kind,
            duration: TRAINING_PROFILE_LEN as u32,
            start_time: 0.0,
            seed: config.seed.wrapping_add(i as u64),
        };
        let profile = stream_profile(&spec, params);
        let subs = make_subprofiles(&profile).expect("training profiles are 128 s long");
        for (w, sub) in subs.iter().enumerate() {
            let attrs = attributes(sub);
            match &spec.kind {
                StreamKind::Video { resolution: r, .. } => {
                    identifier
                        .push_attributes(&attrs, StreamClass::Video.index(), Some(w))
                        .expect("fixed schema");
                    resolution
                        .push_attributes(&attrs, r.index(), Some(w))
                        .expect("fixed schema");
                }
                _ => identifier
                    .push_attributes(&attrs, StreamClass::NonVideo.index(), Some(w))
                    .expect("fixed schema"),
            }
        }
    }
    GeneratedDatasets { identifier, resolution }
}

/// Constant-rate flow workload modeled on a hardware traffic generator:
/// `n_pairs` transmitter/receiver pairs each run `blocks_per_pair` stream
/// blocks, and every block moves to a fresh destination port each second for
/// `ports_per_block` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressConfig {
    pub n_pairs: usize,
    pub blocks_per_pair: usize,
    pub ports_per_block: usize,
    /// Bits per second.
    pub rate_range: (f64, f64),
    pub duration: u32,
    pub seed: u64,
}

impl Default for StressConfig {
    fn default() -> Self {
        StressConfig {
            n_pairs: 14,
            blocks_per_pair: 20,
            ports_per_block: 114,
            rate_range: (0.8e6, 1.2e6),
            duration: 300,
            seed: 1,
        }
    }
}

impl StressConfig {
    pub fn blocks(&self) -> usize {
        self.n_pairs * self.blocks_per_pair
    }

    pub fn flows(&self) -> usize {
        self.blocks() * self.ports_per_block
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressFlow {
    pub flow_id: u64,
    pub key: FlowKey,
    pub start: f64,
    /// Bytes per second.
    pub rate: f64,
}

impl StressFlow {
    /// Bytes sent in the flow's `k`-th second; cumulative sums are exact.
    pub fn bytes_in_second(&self, k: u64) -> u64 {
        let upto = |n: u64| libm::floor(n as f64 * self.rate) as u64;
        upto(k + 1) - upto(k)
    }

    pub fn seconds_active(&self, duration: u32) -> u64 {
        libm::ceil(duration as f64 - self.start).max(0.0) as u64
    }

    pub fn total_bytes(&self, duration: u32) -> u64 {
        libm::floor(self.seconds_active(duration) as f64 * self.rate) as u64
    }
}

/// Lazily generated stress trace, one aggregate record per flow per second.
#[derive(Debug, Clone)]
pub struct StressTrace {
    config: StressConfig,
    flows: Vec<StressFlow>,
    second: u32,
    buffer: Vec<TraceRecord>,
    pos: usize,
}

impl StressTrace {
    pub fn new(config: StressConfig) -> Result<StressTrace, TraffgenError> {
        if config.n_pairs == 0 || config.n_pairs > 15 || config.blocks_per_pair == 0 || config.ports_per_block == 0 {
            return Err(TraffgenError::BadParams("stress topology"));
        }
        if config.blocks_per_pair * config.ports_per_block > 55_000 {
            return Err(TraffgenError::BadParams("port space exhausted"));
        }
        if !(config.rate_range.0 > 0.0 && config.rate_range.0 <= config.rate_range.1) {
            return Err(TraffgenError::BadParams("rate range"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let blocks = config.blocks();
        let mut flows = Vec::with_capacity(config.flows());
        for s in 0..config.ports_per_block {
            for p in 0..config.n_pairs {
                for b in 0..config.blocks_per_pair {
                    let block = p * config.blocks_per_pair + b;
                    let server = Ipv4Addr::new(203, 0, 113, (p * 16 + 1) as u8);
                    let client = Ipv4Addr::new(198, 51, 100, (p * 16 + 1) as u8);
                    let port = 10_000 + (b * config.ports_per_block + s) as u16;
                    let bits = if config.rate_range.0 < config.rate_range.1 {
                        rng.gen_range(config.rate_range.0..=config.rate_range.1)
                    } else {
                        config.rate_range.0
                    };
                    flows.push(StressFlow {
                        flow_id: flows.len() as u64,
                        key: FlowKey::new(server, client, 80, port, Proto::Tcp),
                        start: s as f64 + block as f64 / blocks as f64,
                        rate: bits / 8.0,
                    });
                }
            }
        }
        Ok(StressTrace {
            config,
            flows,
            second: 0,
            buffer: Vec::new(),
            pos: 0,
        })
    }

    pub fn flows(&self) -> &[StressFlow] {
        &self.flows
    }

    pub fn config(&self) -> &StressConfig {
        &self.config
    }

    pub fn truth(&self) -> Vec<FlowTruth> {
        self.flows
            .iter()
            .map(|f| FlowTruth {
                flow_id: f.flow_id,
                key: f.key,
                kind: TruthKind::Constant,
                resolution: None,
                provider: "Unknown".to_string(),
                total_bytes: f.total_bytes(self.config.duration),
            })
            .collect()
    }

    pub fn total_bytes(&self) -> u64 {
        self.flows.iter().map(|f| f.total_bytes(self.config.duration)).sum()
    }

    fn fill(&mut self) -> bool {
        while self.second < self.config.duration {
            let t = self.second as f64;
            self.second += 1;
            self.buffer.clear();
            self.pos = 0;
            for f in &self.flows {
                if f.start >= t + 1.0 {
                    // flows are ordered by start
                    break;
                }
                let k = libm::ceil(t - f.start - 1e-9).max(0.0) as u64;
                let ts = f.start + k as f64;
                if ts < t || ts >= t + 1.0 || ts >= self.config.duration as f64 {
                    continue;
                }
                self.buffer.push(TraceRecord {
                    flow_id: f.flow_id,
                    packet: PacketRecord::new(ts, f.key, f.bytes_in_second(k)),
                });
            }
            self.buffer.sort_by(|a, b| {
                a.packet
                    .timestamp
                    .total_cmp(&b.packet.timestamp)
                    .then(a.flow_id.cmp(&b.flow_id))
            });
            if !self.buffer.is_empty() {
                return true;
            }
        }
        false
    }
}

impl Iterator for StressTrace {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        loop {
            if self.pos < self.buffer.len() {
                let r = self.buffer[self.pos].clone();
                self.pos += 1;
                return Some(r);
            }
            if !self.fill() {
                return None;
            }
        }
    }
}
