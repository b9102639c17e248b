//! Controller-side orchestration: provider attribution, counter polling and
//! periodic classification.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::dns::DnsReply;
use crate::features::{attributes, AttributeVector, TrafficProfile};
use crate::inspector::ElephantEvent;
use crate::labels::{Resolution, IDENTIFIER_CLASSES, RESOLUTION_CLASSES};
use crate::ml::TrainedModel;
use crate::pipeline::{FlowKey, GroupId, PipelineError, SwitchState};

pub const UNKNOWN_PROVIDER: &str = "Unknown";

/// Built-in suffix table. The first suffix listed for a provider is the one
/// the generator uses.
pub const DEFAULT_SUFFIXES: [(&str, &str); 10] = [
    ("googlevideo.com", "Youtube"),
    ("youtube.com", "Youtube"),
    ("nflxvideo.net", "Netflix"),
    ("nflxvideo.com", "Netflix"),
    ("ttvnw.net", "Twitch"),
    ("fbcdn.net", "Facebook"),
    ("akamaized.net", "Akamai"),
    ("akamai.net", "Akamai"),
    ("akamaiedge.net", "Akamai"),
    ("hls.ttvnw.net", "Twitch"),
];

pub fn suffix_for_provider(provider: &str) -> Option<&'static str> {
    DEFAULT_SUFFIXES.iter().find(|(_, p)| *p == provider).map(|(s, _)| *s)
}

/// Last two labels of a host name.
pub fn registrable_domain(name: &str) -> &str {
    let name = name.trim_end_matches('.');
    match name.rmatch_indices('.').nth(1) {
        Some((i, _)) => &name[i + 1..],
        None => name,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsRecord {
    pub timestamp: f64,
    pub query_name: String,
    pub ip: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderMapError {
    #[error("line {line}: expected `suffix<TAB>provider`")]
    Malformed { line: usize },
}

#[derive(Debug, Clone, Default)]
pub struct ProviderMap {
    suffix_to_provider: BTreeMap<String, String>,
    dns_history: Vec<DnsRecord>,
    by_ip: BTreeMap<Ipv4Addr, Vec<usize>>,
}

impl ProviderMap {
    pub fn empty() -> Self {
        ProviderMap::default()
    }

    pub fn with_defaults() -> Self {
        let mut m = ProviderMap::default();
        for (s, p) in DEFAULT_SUFFIXES {
            m.insert_suffix(s, p);
        }
        m
    }

    /// Parses `suffix<TAB>provider` lines; blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, ProviderMapError> {
        let mut m = ProviderMap::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(p), None) if !s.trim().is_empty() && !p.trim().is_empty() => {
                    m.insert_suffix(s.trim(), p.trim())
                }
                _ => return Err(ProviderMapError::Malformed { line: i + 1 }),
            }
        }
        Ok(m)
    }

    pub fn insert_suffix(&mut self, suffix: &str, provider: &str) {
        let suffix = suffix.trim_matches('.').to_ascii_lowercase();
        self.suffix_to_provider.insert(suffix, provider.to_string());
    }

    pub fn suffixes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.suffix_to_provider.iter().map(|(s, p)| (s.as_str(), p.as_str()))
    }

    pub fn dns_history(&self) -> &[DnsRecord] {
        &self.dns_history
    }

    pub fn record_dns(&mut self, reply: &DnsReply) {
        for ip in &reply.answer_ips {
            let rec = DnsRecord {
                timestamp: reply.timestamp,
                query_name: reply.query_name.clone(),
                ip: *ip,
            };
            let pos = self.dns_history.partition_point(|r| r.timestamp <= rec.timestamp);
            if pos < self.dns_history.len() {
                for idx in self.by_ip.values_mut().flat_map(|v| v.iter_mut()) {
                    if *idx >= pos {
                        *idx += 1;
                    }
                }
            }
            self.dns_history.insert(pos, rec);
            let idxs = self.by_ip.entry(*ip).or_default();
            let at = idxs.partition_point(|&i| i < pos);
            idxs.insert(at, pos);
        }
    }

    /// Provider for a host name: longest configured suffix, otherwise the
    /// registrable domain.
    pub fn provider_for_name(&self, name: &str) -> String {
        let name = name.trim_end_matches('.').to_ascii_lowercase();
        let mut rest = name.as_str();
        loop {
            if let Some(p) = self.suffix_to_provider.get(rest) {
                return p.clone();
            }
            match rest.find('.') {
                Some(i) => rest = &rest[i + 1..],
                None => break,
            }
        }
        registrable_domain(&name).to_string()
    }

    /// Provider of the latest DNS record at or before `at` that resolved to
    /// `ip`.
    pub fn lookup_provider(&self, ip: Ipv4Addr, at: f64) -> String {
        self.by_ip
            .get(&ip)
            .and_then(|idxs| {
                idxs.iter()
                    .rev()
                    .map(|&i| &self.dns_history[i])
                    .find(|r| r.timestamp <= at)
            })
            .map(|r| self.provider_for_name(&r.query_name))
            .unwrap_or_else(|| UNKNOWN_PROVIDER.to_string())
    }
}

/// Seconds until the next counter poll for a table of `n_entries` flows.
pub fn polling_interval(n_entries: usize) -> u32 {
    const LOW: usize = 2500;
    const HIGH: usize = 10_000;
    if n_entries < LOW {
        1
    } else if n_entries >= HIGH {
        4
    } else {
        libm::ceil(1.0 + 3.0 * (n_entries - LOW) as f64 / (HIGH - LOW) as f64) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSampleSeries {
    pub key: FlowKey,
    pub provider: String,
    pub group_id: GroupId,
    pub start_time: f64,
    /// Volume seen on the mirror before the entry was installed.
    pub initial_volume: u64,
    /// `(poll_time, cumulative bytes)`.
    pub samples: Vec<(f64, u64)>,
    pub end_time: Option<f64>,
}

impl FlowSampleSeries {
    fn push(&mut self, t: f64, bytes: u64) -> bool {
        match self.samples.last() {
            Some(&(last, _)) if t <= last => false,
            _ => {
                self.samples.push((t, bytes));
                true
            }
        }
    }

    pub fn latest_bytes(&self) -> u64 {
        self.samples.last().map_or(self.initial_volume, |s| s.1)
    }

    /// Drops samples no longer needed to cover `[from, ..)`, keeping the last
    /// one at or before `from`.
    fn trim_before(&mut self, from: f64) {
        let keep = self.samples.partition_point(|s| s.0 <= from);
        if keep > 1 {
            self.samples.drain(..keep - 1);
        }
    }
}

/// Resamples the cumulative series onto the `bins` one-second bins ending at
/// `end`, spreading every poll delta evenly over the time it spans.
pub fn bin_samples(samples: &[(f64, u64)], end: f64, bins: usize) -> TrafficProfile {
    let start = end - bins as f64;
    let mut out = alloc::vec![0.0; bins];
    for w in samples.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        let delta = c1.saturating_sub(c0) as f64;
        if delta == 0.0 || t1 <= start || t0 >= end {
            continue;
        }
        let span = t1 - t0;
        let first = libm::floor((t0.max(start) - start).max(0.0)) as usize;
        for (j, bin) in out.iter_mut().enumerate().skip(first) {
            let b0 = start + j as f64;
            let b1 = b0 + 1.0;
            if b0 >= t1 {
                break;
            }
            let overlap = b1.min(t1) - b0.max(t0);
            if overlap > 0.0 {
                *bin += delta * overlap / span;
            }
        }
    }
    TrafficProfile::new(start, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrokerConfig {
    pub tick_period: f64,
    pub max_window: f64,
    pub min_bins: usize,
    pub debounce: bool,
    pub classify: bool,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            tick_period: 16.0,
            max_window: 64.0,
            min_bins: 16,
            debounce: true,
            classify: true,
        }
    }
}

/// The two operating classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifiers {
    pub identifier: TrainedModel,
    pub resolution: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifierError {
    #[error("identifier classes must be {expected:?}, got {got:?}")]
    IdentifierClasses { expected: Vec<String>, got: Vec<String> },
    #[error("resolution classes must be {expected:?}, got {got:?}")]
    ResolutionClasses { expected: Vec<String>, got: Vec<String> },
    #[error("model expects {got} attributes, profiles yield {expected}")]
    Attributes { expected: usize, got: usize },
}

impl Classifiers {
    pub fn new(identifier: TrainedModel, resolution: TrainedModel) -> Result<Self, ClassifierError> {
        let names = |c: &[&str]| c.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        if identifier.class_names != names(&IDENTIFIER_CLASSES) {
            return Err(ClassifierError::IdentifierClasses {
                expected: names(&IDENTIFIER_CLASSES),
                got: identifier.class_names,
            });
        }
        if resolution.class_names != names(&RESOLUTION_CLASSES) {
            return Err(ClassifierError::ResolutionClasses {
                expected: names(&RESOLUTION_CLASSES),
                got: resolution.class_names,
            });
        }
        for m in [&identifier, &resolution] {
            if m.attribute_names.len() != crate::features::N_ATTRIBUTES {
                return Err(ClassifierError::Attributes {
                    expected: crate::features::N_ATTRIBUTES,
                    got: m.attribute_names.len(),
                });
            }
        }
        Ok(Classifiers { identifier, resolution })
    }

    /// `(is_video, resolution)` for one attribute vector.
    pub fn classify(&self, attrs: &AttributeVector) -> (bool, Option<Resolution>) {
        let values = attrs.values();
        let id = self.identifier.predict(&values).class;
        if id != 0 {
            return (false, None);
        }
        let r = self.resolution.predict(&values).class;
        (true, Resolution::from_index(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub time: f64,
    pub is_video: bool,
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub key: FlowKey,
    pub is_video: bool,
    pub provider: String,
    pub resolution: Option<Resolution>,
    pub verdict_time: f64,
    pub history: Vec<VerdictRecord>,
    /// Resolution the change counter currently considers settled.
    pub settled: Option<Resolution>,
    pub resolution_changes: u32,
    #[serde(skip)]
    candidate: Option<Resolution>,
}

/// One row of the verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictUpdate {
    pub time: f64,
    pub key: FlowKey,
    pub provider: String,
    pub is_video: bool,
    pub resolution: Option<Resolution>,
    pub age: f64,
    pub bytes: u64,
    pub resolution_change: bool,
    pub attributes: AttributeVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassifyReport {
    pub updates: Vec<VerdictUpdate>,
    /// Flows whose window held too few bins.
    pub insufficient: Vec<FlowKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstalledEntry {
    pub key: FlowKey,
    pub provider: String,
    pub group_id: GroupId,
    pub installed_at: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PollOutcome {
    pub time: f64,
    pub entries: usize,
    pub expired: Vec<FlowKey>,
    pub installed: Vec<InstalledEntry>,
    pub next_interval: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Due(f64);

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
pub struct Broker {
    pub providers: ProviderMap,
    config: BrokerConfig,
    open: BTreeMap<FlowKey, FlowSampleSeries>,
    closed: Vec<FlowSampleSeries>,
    pending: Vec<ElephantEvent>,
    provider_series: BTreeMap<String, Vec<(f64, u64)>>,
    verdicts: BTreeMap<FlowKey, VideoVerdict>,
    schedule: BTreeSet<(Due, FlowKey)>,
    next_due: BTreeMap<FlowKey, f64>,
}

impl Broker {
    pub fn new(providers: ProviderMap, config: BrokerConfig) -> Self {
        Broker {
            providers,
            config,
            open: BTreeMap::new(),
            closed: Vec::new(),
            pending: Vec::new(),
            provider_series: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            schedule: BTreeSet::new(),
            next_due: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    pub fn open_series(&self) -> impl Iterator<Item = &FlowSampleSeries> {
        self.open.values()
    }

    pub fn series(&self, key: &FlowKey) -> Option<&FlowSampleSeries> {
        self.open.get(key)
    }

    pub fn closed_series(&self) -> &[FlowSampleSeries] {
        &self.closed
    }

    pub fn pending(&self) -> &[ElephantEvent] {
        &self.pending
    }

    pub fn provider_series(&self) -> &BTreeMap<String, Vec<(f64, u64)>> {
        &self.provider_series
    }

    pub fn verdicts(&self) -> &BTreeMap<FlowKey, VideoVerdict> {
        &self.verdicts
    }

    pub fn next_classify_time(&self) -> Option<f64> {
        self.schedule.first().map(|(d, _)| d.0)
    }

    /// Installs a reactive entry for a freshly detected elephant. A full
    /// table leaves the flow mirrored and queues it for the next poll.
    pub fn on_elephant(
        &mut self,
        event: ElephantEvent,
        switch: &mut SwitchState,
    ) -> Result<InstalledEntry, PipelineError> {
        self.install(event, event.detected_at, switch).inspect_err(|e| {
            if matches!(e, PipelineError::TableFull { .. }) {
                self.pending.push(event);
            }
        })
    }

    fn install(
        &mut self,
        event: ElephantEvent,
        now: f64,
        switch: &mut SwitchState,
    ) -> Result<InstalledEntry, PipelineError> {
        let provider = self.providers.lookup_provider(event.server_ip(), event.detected_at);
        let group_id = switch.ensure_group(&provider);
        switch.install_reactive(event.key, group_id, now)?;
        self.open.insert(
            event.key,
            FlowSampleSeries {
                key: event.key,
                provider: provider.clone(),
                group_id,
                start_time: now,
                initial_volume: event.volume_at_detection,
                samples: alloc::vec![(now, event.volume_at_detection)],
                end_time: None,
            },
        );
        if self.config.classify {
            let due = now + self.config.tick_period;
            self.schedule.insert((Due(due), event.key));
            self.next_due.insert(event.key, due);
        }
        log::debug!("installed {} -> {} ({})", event.key, group_id, provider);
        Ok(InstalledEntry {
            key: event.key,
            provider,
            group_id,
            installed_at: now,
        })
    }

    /// Retries queued installs, snapshots the counters into the sample store
    /// and expires idle entries.
    pub fn poll_tick(&mut self, switch: &mut SwitchState, now: f64) -> PollOutcome {
        let mut installed = Vec::new();
        let pending = core::mem::take(&mut self.pending);
        for (i, ev) in pending.iter().enumerate() {
            match self.install(*ev, now, switch) {
                Ok(e) => installed.push(e),
                Err(PipelineError::TableFull { .. }) => {
                    self.pending.extend_from_slice(&pending[i..]);
                    break;
                }
                Err(e) => log::warn!("dropping queued install for {}: {e}", ev.key),
            }
        }

        let snap = switch.poll_counters();
        for c in &snap.flows {
            if let Some(s) = self.open.get_mut(&c.key) {
                let v = s.initial_volume + c.byte_count;
                s.push(now, v);
            }
        }
        for g in &snap.groups {
            let series = self.provider_series.entry(g.provider.clone()).or_default();
            if series.last().is_none_or(|l| l.0 < now) {
                series.push((now, g.byte_count));
            }
        }

        let expired = switch.expire_idle(now);
        for key in &expired {
            if let Some(mut s) = self.open.remove(key) {
                s.end_time = Some(now);
                self.closed.push(s);
            }
            if let Some(due) = self.next_due.remove(key) {
                self.schedule.remove(&(Due(due), *key));
            }
        }

        let horizon = now - self.config.max_window - 8.0;
        for s in self.open.values_mut() {
            s.trim_before(horizon);
        }

        let entries = switch.reactive_len();
        PollOutcome {
            time: now,
            entries,
            expired,
            installed,
            next_interval: polling_interval(entries),
        }
    }

    /// Classifies every flow whose tick is due at or before `now`.
    pub fn classify_tick(&mut self, models: &Classifiers, now: f64) -> ClassifyReport {
        let mut report = ClassifyReport::default();
        while let Some(&(Due(due), key)) = self.schedule.first() {
            if due > now {
                break;
            }
            self.schedule.pop_first();
            let next = due + self.config.tick_period;
            self.schedule.insert((Due(next), key));
            self.next_due.insert(key, next);
            match self.classify_flow(models, key, due) {
                Some(u) => report.updates.push(u),
                None => report.insufficient.push(key),
            }
        }
        report
    }

    fn classify_flow(&mut self, models: &Classifiers, key: FlowKey, now: f64) -> Option<VerdictUpdate> {
        let series = self.open.get(&key)?;
        let age = now - series.start_time;
        // window ends at the last poll that saw new bytes
        let end = series
            .samples
            .windows(2)
            .rev()
            .find(|w| w[1].1 > w[0].1)
            .map_or(series.start_time, |w| w[1].0);
        let span = (end - series.start_time).min(self.config.max_window);
        let bins = libm::ceil(span - 1e-9) as usize;
        if bins < self.config.min_bins {
            log::debug!("{key}: {bins} bins, skipped");
            return None;
        }
        let profile = bin_samples(&series.samples, end, bins);
        let attrs = attributes(&profile);
        let (is_video, resolution) = models.classify(&attrs);
        let provider = series.provider.clone();
        let bytes = series.latest_bytes();

        let debounce = self.config.debounce;
        let verdict = self.verdicts.entry(key).or_insert_with(|| VideoVerdict {
            key,
            is_video,
            provider: provider.clone(),
            resolution,
            verdict_time: now,
            history: Vec::new(),
            settled: None,
            resolution_changes: 0,
            candidate: None,
        });
        verdict.is_video = is_video;
        verdict.resolution = resolution;
        verdict.verdict_time = now;
        verdict.history.push(VerdictRecord {
            time: now,
            is_video,
            resolution,
        });
        let mut changed = false;
        if let Some(r) = resolution {
            match verdict.settled {
                None => verdict.settled = Some(r),
                Some(s) if s == r => verdict.candidate = None,
                Some(_) => {
                    if !debounce || verdict.candidate == Some(r) {
                        verdict.settled = Some(r);
                        verdict.candidate = None;
                        verdict.resolution_changes += 1;
                        changed = true;
                    } else {
                        verdict.candidate = Some(r);
                    }
                }
            }
        }
        Some(VerdictUpdate {
            time: now,
            key,
            provider,
            is_video,
            resolution,
            age,
            bytes,
            resolution_change: changed,
            attributes: attrs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns::DnsReply;
    use crate::pipeline::{Direction, PacketRecord, Proto};
    use alloc::vec;

    fn reply(name: &str, ip: Ipv4Addr, t: f64) -> DnsReply {
        DnsReply {
            query_name: name.into(),
            answer_ips: vec![ip],
            timestamp: t,
        }
    }

    const IP: Ipv4Addr = Ipv4Addr::new(203, 0, 113, 7);

    #[test]
    fn polling_examples() {
        assert_eq!(polling_interval(0), 1);
        assert_eq!(polling_interval(1000), 1);
        assert_eq!(polling_interval(2499), 1);
        assert_eq!(polling_interval(2500), 1);
        assert_eq!(polling_interval(2501), 2);
        assert_eq!(polling_interval(6250), 3);
        assert_eq!(polling_interval(9999), 4);
        assert_eq!(polling_interval(10_000), 4);
        assert_eq!(polling_interval(1_000_000), 4);
    }

    #[test]
    fn registrable() {
        assert_eq!(registrable_domain("a.b.example.org"), "example.org");
        assert_eq!(registrable_domain("example.org."), "example.org");
        assert_eq!(registrable_domain("localhost"), "localhost");
    }

    #[test]
    fn lookup_uses_latest_record() {
        let mut m = ProviderMap::with_defaults();
        assert_eq!(m.lookup_provider(IP, 10.0), UNKNOWN_PROVIDER);
        m.record_dns(&reply("r1---sn-abc.googlevideo.com", IP, 1.0));
        assert_eq!(m.lookup_provider(IP, 6.0), "Youtube");
        m.record_dns(&reply("ipv4-c001.nflxvideo.net", IP, 5.0));
        assert_eq!(m.lookup_provider(IP, 6.0), "Netflix");
        assert_eq!(m.lookup_provider(IP, 4.0), "Youtube");
        assert_eq!(m.lookup_provider(IP, 0.5), UNKNOWN_PROVIDER);
        // out-of-order insertion keeps the history sorted
        m.record_dns(&reply("video.example-cdn.org", IP, 3.0));
        assert!(m.dns_history().windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert_eq!(m.lookup_provider(IP, 4.0), "example-cdn.org");
        assert_eq!(m.lookup_provider(IP, 6.0), "Netflix");
    }

    #[test]
    fn longest_suffix_wins() {
        let mut m = ProviderMap::empty();
        m.insert_suffix("example.net", "Outer");
        m.insert_suffix("video.example.net", "Inner");
        assert_eq!(m.provider_for_name("a.video.example.net"), "Inner");
        assert_eq!(m.provider_for_name("a.www.example.net"), "Outer");
        assert_eq!(m.provider_for_name("VIDEO.example.net."), "Inner");
        assert_eq!(m.provider_for_name("notexample.net"), "notexample.net");
    }

    #[test]
    fn parse_provider_file() {
        let m = ProviderMap::parse("# comment\ngooglevideo.com\tYoutube\n\nfoo.org\tFoo\n").unwrap();
        assert_eq!(m.provider_for_name("x.foo.org"), "Foo");
        assert_eq!(
            ProviderMap::parse("a.com Youtube\n").unwrap_err(),
            ProviderMapError::Malformed { line: 1 }
        );
    }

    fn event(key: FlowKey, at: f64, volume: u64) -> ElephantEvent {
        ElephantEvent {
            key,
            direction: Direction::infer(&key),
            detected_at: at,
            volume_at_detection: volume,
        }
    }

    fn flow(port: u16) -> FlowKey {
        FlowKey::new(IP, Ipv4Addr::new(10, 0, 0, 1), 443, port, Proto::Tcp)
    }

    #[test]
    fn elephant_installs_with_provider() {
        let mut sw = SwitchState::default();
        let mut b = Broker::new(ProviderMap::with_defaults(), BrokerConfig::default());
        b.providers.record_dns(&reply("r3.googlevideo.com", IP, 0.5));
        let e = b.on_elephant(event(flow(5000), 10.0, 4_000_000), &mut sw).unwrap();
        assert_eq!(e.provider, "Youtube");
        assert_eq!(sw.group(e.group_id).unwrap().provider, "Youtube");
        let s = b.series(&flow(5000)).unwrap();
        assert_eq!(s.samples, [(10.0, 4_000_000)]);
        assert_eq!(b.next_classify_time(), Some(26.0));

        let other = FlowKey::new(
            Ipv4Addr::new(8, 8, 4, 4),
            Ipv4Addr::new(10, 0, 0, 1),
            443,
            6000,
            Proto::Tcp,
        );
        let e = b.on_elephant(event(other, 11.0, 4_000_000), &mut sw).unwrap();
        assert_eq!(e.provider, UNKNOWN_PROVIDER);
    }

    #[test]
    fn table_full_queues_until_space() {
        let mut sw = SwitchState::new(1);
        let mut b = Broker::new(ProviderMap::with_defaults(), BrokerConfig::default());
        b.on_elephant(event(flow(1), 1.0, 5), &mut sw).unwrap();
        let err = b.on_elephant(event(flow(2), 1.5, 5), &mut sw).unwrap_err();
        assert_eq!(err, PipelineError::TableFull { capacity: 1 });
        assert_eq!(b.pending().len(), 1);
        let out = b.poll_tick(&mut sw, 2.0);
        assert!(out.installed.is_empty());
        // flow(1) idles out at t > 61
        let out = b.poll_tick(&mut sw, 62.0);
        assert_eq!(out.expired, [flow(1)]);
        assert!(out.installed.is_empty());
        let out = b.poll_tick(&mut sw, 63.0);
        assert_eq!(out.installed.len(), 1);
        assert!(b.pending().is_empty());
        assert!(b.series(&flow(2)).is_some());
    }

    #[test]
    fn poll_ticks_accumulate() {
        let mut sw = SwitchState::default();
        let mut b = Broker::new(ProviderMap::with_defaults(), BrokerConfig::default());
        let k = flow(7);
        b.on_elephant(event(k, 0.5, 0), &mut sw).unwrap();
        for t in 1..=3 {
            sw.process_packet(&PacketRecord::new(t as f64 - 0.25, k, 1_000_000));
            let out = b.poll_tick(&mut sw, t as f64);
            assert_eq!(out.entries, 1);
            assert_eq!(out.next_interval, 1);
        }
        let s = b.series(&k).unwrap();
        assert_eq!(&s.samples[1..], &[(1.0, 1_000_000), (2.0, 2_000_000), (3.0, 3_000_000)]);
        let out = b.poll_tick(&mut sw, 63.0);
        assert_eq!(out.expired, [k]);
        assert!(b.series(&k).is_none());
        assert_eq!(b.closed_series()[0].end_time, Some(63.0));
        assert_eq!(b.next_classify_time(), None);
        assert_eq!(b.provider_series()[UNKNOWN_PROVIDER].last(), Some(&(63.0, 3_000_000)));
    }

    #[test]
    fn binning_spreads_deltas() {
        let samples = [(0.0, 0), (1.0, 100), (5.0, 500), (6.0, 500)];
        let p = bin_samples(&samples, 6.0, 6);
        assert_eq!(p.bins, [100.0; 5].iter().copied().chain([0.0]).collect::<Vec<_>>());
        let p = bin_samples(&samples, 5.5, 4);
        assert_eq!(p.start_time, 1.5);
        assert_eq!(p.bins, [100.0, 100.0, 100.0, 50.0]);
        let total: f64 = bin_samples(&[(0.3, 0), (4.3, 1000)], 4.3, 4).bins.iter().sum();
        assert!((total - 1000.0).abs() < 1e-9);
    }
}
