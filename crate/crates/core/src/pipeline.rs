//! Behavioral model of the switch pipeline.
//!
//! Table 0 holds reactive 5-tuple entries that point at a per-provider group.
//! Table 1 forwards and mirrors every TCP/UDP packet that missed table 0.
//! Table 2 cross-connects everything else. Nothing is ever punted to the
//! controller.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

/// Port the content provider side is attached to.
pub const PORT_IN: u8 = 1;
/// Cross-connect port towards consumers.
pub const PORT_OUT: u8 = 2;
/// Mirror port feeding the inspection engine.
pub const PORT_MIRROR: u8 = 3;

/// Reactive entries are removed after this many seconds without a match.
pub const DEFAULT_IDLE_TIMEOUT: f64 = 60.0;
pub const DEFAULT_TABLE_CAPACITY: usize = 100_000;
/// Flow statistics replies are split into parts of this many entries.
pub const POLL_CHUNK: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Proto {
    Tcp,
    Udp,
    Other(u8),
}

impl Proto {
    pub fn from_number(n: u8) -> Proto {
        match n {
            6 => Proto::Tcp,
            17 => Proto::Udp,
            n => Proto::Other(n),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Proto::Tcp => 6,
            Proto::Udp => 17,
            Proto::Other(n) => n,
        }
    }

    pub fn is_tcp_or_udp(self) -> bool {
        matches!(self, Proto::Tcp | Proto::Udp)
    }
}

/// 5-tuple flow identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
}

impl FlowKey {
    /// Builds a key, zeroing the ports for protocols other than TCP/UDP.
    pub fn new(src_ip: Ipv4Addr, dst_ip: Ipv4Addr, src_port: u16, dst_port: u16, proto: Proto) -> Self {
        let (src_port, dst_port) = if proto.is_tcp_or_udp() {
            (src_port, dst_port)
        } else {
            (0, 0)
        };
        FlowKey {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            proto,
        }
    }

    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            src_port: self.dst_port,
            dst_port: self.src_port,
            proto: self.proto,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}/{}",
            self.src_ip,
            self.src_port,
            self.dst_ip,
            self.dst_port,
            self.proto.number()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ProviderToConsumer,
    ConsumerToProvider,
}

impl Direction {
    /// Servers sit on the lower port; ties go to the provider side.
    pub fn infer(key: &FlowKey) -> Direction {
        if key.src_port <= key.dst_port {
            Direction::ProviderToConsumer
        } else {
            Direction::ConsumerToProvider
        }
    }
}

/// One packet (or per-second aggregate) observed on the monitored link.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub key: FlowKey,
    pub bytes: u64,
    pub direction: Direction,
    /// Raw DNS message carried by the packet, if any.
    pub dns_payload: Option<Vec<u8>>,
}

impl PacketRecord {
    pub fn new(timestamp: f64, key: FlowKey, bytes: u64) -> Self {
        PacketRecord {
            timestamp,
            key,
            bytes: bytes.max(1),
            direction: Direction::infer(&key),
            dns_payload: None,
        }
    }

    pub fn with_dns(mut self, payload: Vec<u8>) -> Self {
        self.dns_payload = Some(payload);
        self
    }

    /// DNS payloads are only meaningful on UDP replies from port 53.
    pub fn is_dns_reply(&self) -> bool {
        self.dns_payload.is_some() && self.key.proto == Proto::Udp && self.key.src_port == 53
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveEntry {
    pub key: FlowKey,
    pub group_id: GroupId,
    pub byte_count: u64,
    pub packet_count: u64,
    pub installed_at: f64,
    pub last_matched: f64,
    pub idle_timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub group_id: GroupId,
    pub provider: String,
    pub byte_count: u64,
    pub packet_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedTable {
    Reactive,
    Proactive,
    Default,
}

/// Small set of output port ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PortSet(u8);

impl PortSet {
    pub fn with(self, port: u8) -> PortSet {
        PortSet(self.0 | (1 << port))
    }

    pub fn contains(self, port: u8) -> bool {
        port < 8 && self.0 & (1 << port) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..8u8).filter(move |p| self.contains(*p))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardDecision {
    pub output_ports: PortSet,
    pub matched_table: MatchedTable,
}

impl ForwardDecision {
    pub fn is_mirrored(&self) -> bool {
        self.output_ports.contains(PORT_MIRROR)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("reactive entry for {0} already installed")]
    DuplicateEntry(FlowKey),
    #[error("reactive table full ({capacity} entries)")]
    TableFull { capacity: usize },
    #[error("group {0} does not exist")]
    UnknownGroup(GroupId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounter {
    pub key: FlowKey,
    pub byte_count: u64,
    pub packet_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounter {
    pub provider: String,
    pub byte_count: u64,
}

/// Immutable copy of all counters taken at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub flows: Vec<FlowCounter>,
    pub groups: Vec<GroupCounter>,
}

impl CounterSnapshot {
    /// The flow part of the reply as the switch would send it, in
    /// [`POLL_CHUNK`]-sized parts.
    pub fn parts(&self) -> core::slice::Chunks<'_, FlowCounter> {
        self.flows.chunks(POLL_CHUNK)
    }
}

/// Serializable view of the switch for debugging dumps.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchDump {
    pub reactive_table: Vec<ReactiveEntry>,
    pub group_table: Vec<GroupEntry>,
    pub table_capacity: usize,
    pub ports: PortMap,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PortMap {
    pub r#in: u8,
    pub out: u8,
    pub mirror: u8,
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    reactive: BTreeMap<FlowKey, ReactiveEntry>,
    groups: BTreeMap<GroupId, GroupEntry>,
    provider_groups: BTreeMap<String, GroupId>,
    capacity: usize,
    idle_timeout: f64,
    clock: f64,
}

impl Default for SwitchState {
    fn default() -> Self {
        SwitchState::new(DEFAULT_TABLE_CAPACITY)
    }
}

impl SwitchState {
    pub fn new(capacity: usize) -> Self {
        SwitchState {
            reactive: BTreeMap::new(),
            groups: BTreeMap::new(),
            provider_groups: BTreeMap::new(),
            capacity,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            clock: f64::NEG_INFINITY,
        }
    }

    pub fn with_idle_timeout(mut self, seconds: f64) -> Self {
        self.idle_timeout = seconds;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn reactive_len(&self) -> usize {
        self.reactive.len()
    }

    pub fn reactive_entry(&self, key: &FlowKey) -> Option<&ReactiveEntry> {
        self.reactive.get(key)
    }

    pub fn reactive_entries(&self) -> impl Iterator<Item = &ReactiveEntry> {
        self.reactive.values()
    }

    pub fn group(&self, id: GroupId) -> Option<&GroupEntry> {
        self.groups.get(&id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupEntry> {
        self.groups.values()
    }

    pub fn group_of_provider(&self, provider: &str) -> Option<GroupId> {
        self.provider_groups.get(provider).copied()
    }

    /// Runs one packet through tables 0, 1 and 2.
    pub fn process_packet(&mut self, pkt: &PacketRecord) -> ForwardDecision {
        debug_assert!(
            pkt.timestamp >= self.clock,
            "packet at {} precedes clock {}",
            pkt.timestamp,
            self.clock
        );
        if pkt.timestamp > self.clock {
            self.clock = pkt.timestamp;
        }

        if let Some(entry) = self.reactive.get_mut(&pkt.key) {
            entry.byte_count += pkt.bytes;
            entry.packet_count += 1;
            entry.last_matched = pkt.timestamp;
            let group = self
                .groups
                .get_mut(&entry.group_id)
                .expect("reactive entry references a live group");
            group.byte_count += pkt.bytes;
            group.packet_count += 1;
            return ForwardDecision {
                output_ports: PortSet::default().with(PORT_OUT),
                matched_table: MatchedTable::Reactive,
            };
        }

        if pkt.key.proto.is_tcp_or_udp() {
            ForwardDecision {
                output_ports: PortSet::default().with(PORT_OUT).with(PORT_MIRROR),
                matched_table: MatchedTable::Proactive,
            }
        } else {
            ForwardDecision {
                output_ports: PortSet::default().with(PORT_OUT),
                matched_table: MatchedTable::Default,
            }
        }
    }

    pub fn install_reactive(&mut self, key: FlowKey, group_id: GroupId, now: f64) -> Result<(), PipelineError> {
        if !self.groups.contains_key(&group_id) {
            return Err(PipelineError::UnknownGroup(group_id));
        }
        if self.reactive.contains_key(&key) {
            return Err(PipelineError::DuplicateEntry(key));
        }
        if self.reactive.len() >= self.capacity {
            return Err(PipelineError::TableFull {
                capacity: self.capacity,
            });
        }
        self.reactive.insert(
            key,
            ReactiveEntry {
                key,
                group_id,
                byte_count: 0,
                packet_count: 0,
                installed_at: now,
                last_matched: now,
                idle_timeout: self.idle_timeout,
            },
        );
        Ok(())
    }

    /// Returns the provider's group, creating an empty one on first use.
    pub fn ensure_group(&mut self, provider: &str) -> GroupId {
        if let Some(id) = self.provider_groups.get(provider) {
            return *id;
        }
        let id = GroupId(self.groups.len() as u32 + 1);
        self.groups.insert(
            id,
            GroupEntry {
                group_id: id,
                provider: provider.to_string(),
                byte_count: 0,
                packet_count: 0,
            },
        );
        self.provider_groups.insert(provider.to_string(), id);
        id
    }

    /// Removes entries idle for strictly longer than their timeout. Keys come
    /// back in key order.
    pub fn expire_idle(&mut self, now: f64) -> Vec<FlowKey> {
        let expired: Vec<FlowKey> = self
            .reactive
            .values()
            .filter(|e| now - e.last_matched > e.idle_timeout)
            .map(|e| e.key)
            .collect();
        for key in &expired {
            self.reactive.remove(key);
        }
        expired
    }

    pub fn poll_counters(&self) -> CounterSnapshot {
        CounterSnapshot {
            flows: self
                .reactive
                .values()
                .map(|e| FlowCounter {
                    key: e.key,
                    byte_count: e.byte_count,
                    packet_count: e.packet_count,
                })
                .collect(),
            groups: self
                .groups
                .values()
                .map(|g| GroupCounter {
                    provider: g.provider.clone(),
                    byte_count: g.byte_count,
                })
                .collect(),
        }
    }

    pub fn dump(&self) -> SwitchDump {
        SwitchDump {
            reactive_table: self.reactive.values().cloned().collect(),
            group_table: self.groups.values().cloned().collect(),
            table_capacity: self.capacity,
            ports: PortMap {
                r#in: PORT_IN,
                out: PORT_OUT,
                mirror: PORT_MIRROR,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tcp(port: u16) -> FlowKey {
        FlowKey::new(
            Ipv4Addr::new(10, 0, 0, 1),
            Ipv4Addr::new(192, 168, 1, 2),
            443,
            port,
            Proto::Tcp,
        )
    }

    #[test]
    fn tcp_miss_is_forwarded_and_mirrored() {
        let mut sw = SwitchState::default();
        let d = sw.process_packet(&PacketRecord::new(0.0, tcp(5000), 1500));
        assert_eq!(d.matched_table, MatchedTable::Proactive);
        assert_eq!(d.output_ports.iter().collect::<Vec<_>>(), [2, 3]);
    }

    #[test]
    fn reactive_match_suppresses_mirror() {
        let mut sw = SwitchState::default();
        let g = sw.ensure_group("Youtube");
        sw.install_reactive(tcp(5000), g, 0.0).unwrap();
        let d = sw.process_packet(&PacketRecord::new(1.0, tcp(5000), 1500));
        assert_eq!(d.matched_table, MatchedTable::Reactive);
        assert_eq!(d.output_ports.iter().collect::<Vec<_>>(), [2]);
        let e = sw.reactive_entry(&tcp(5000)).unwrap();
        assert_eq!((e.byte_count, e.packet_count), (1500, 1));
        assert_eq!(sw.group(g).unwrap().byte_count, 1500);
    }

    #[test]
    fn other_protocols_fall_through_to_default() {
        let mut sw = SwitchState::default();
        let key = FlowKey::new(
            Ipv4Addr::new(10, 0, 0, 1),
            Ipv4Addr::new(10, 0, 0, 2),
            7,
            9,
            Proto::Other(1),
        );
        assert_eq!((key.src_port, key.dst_port), (0, 0));
        let d = sw.process_packet(&PacketRecord::new(0.0, key, 64));
        assert_eq!(d.matched_table, MatchedTable::Default);
        assert_eq!(d.output_ports.iter().collect::<Vec<_>>(), [2]);
    }

    #[test]
    fn install_errors() {
        let mut sw = SwitchState::new(1);
        let g = sw.ensure_group("Netflix");
        sw.install_reactive(tcp(1), g, 0.0).unwrap();
        let e = sw.reactive_entry(&tcp(1)).unwrap();
        assert_eq!((e.byte_count, e.packet_count, e.idle_timeout), (0, 0, 60.0));
        assert_eq!(
            sw.install_reactive(tcp(1), g, 0.0),
            Err(PipelineError::DuplicateEntry(tcp(1)))
        );
        assert_eq!(
            sw.install_reactive(tcp(2), g, 0.0),
            Err(PipelineError::TableFull { capacity: 1 })
        );
        assert_eq!(
            sw.install_reactive(tcp(3), GroupId(99), 0.0),
            Err(PipelineError::UnknownGroup(GroupId(99)))
        );
    }

    #[test]
    fn ensure_group_is_idempotent() {
        let mut sw = SwitchState::default();
        let a = sw.ensure_group("Youtube");
        assert_eq!(sw.ensure_group("Youtube"), a);
        assert_eq!(sw.groups().count(), 1);
        let t = sw.ensure_group("Twitch");
        assert_ne!(a, t);
        assert_eq!(sw.groups().count(), 2);
        sw.install_reactive(tcp(7), t, 0.0).unwrap();
    }

    #[test]
    fn idle_timeout_is_strict() {
        let mut sw = SwitchState::default();
        let g = sw.ensure_group("Unknown");
        sw.install_reactive(tcp(1), g, 10.0).unwrap();
        assert!(sw.expire_idle(70.0).is_empty());
        assert_eq!(sw.expire_idle(71.0), [tcp(1)]);
        assert_eq!(sw.groups().count(), 1);
    }

    #[test]
    fn expired_keys_are_sorted() {
        let mut sw = SwitchState::default();
        let g = sw.ensure_group("Unknown");
        for p in [9, 3, 5] {
            sw.install_reactive(tcp(p), g, 0.0).unwrap();
        }
        sw.process_packet(&PacketRecord::new(30.0, tcp(5), 100));
        let mut oracle: Vec<FlowKey> = sw
            .reactive_entries()
            .filter(|e| 80.0 - e.last_matched > 60.0)
            .map(|e| e.key)
            .collect();
        oracle.sort();
        assert_eq!(sw.expire_idle(80.0), oracle);
        assert_eq!(oracle, [tcp(3), tcp(9)]);
    }

    #[test]
    fn snapshot_chunks() {
        let mut sw = SwitchState::default();
        assert!(sw.poll_counters().flows.is_empty());
        let g = sw.ensure_group("Unknown");
        for p in 0..6000u16 {
            sw.install_reactive(tcp(p), g, 0.0).unwrap();
        }
        let snap = sw.poll_counters();
        let sizes: Vec<usize> = snap.parts().map(|c| c.len()).collect();
        assert_eq!(sizes, [2500, 2500, 1000]);
        assert_eq!(
            snap.groups,
            [GroupCounter {
                provider: "Unknown".into(),
                byte_count: 0
            }]
        );
    }

    #[test]
    fn direction_from_ports() {
        assert_eq!(Direction::infer(&tcp(5000)), Direction::ProviderToConsumer);
        assert_eq!(Direction::infer(&tcp(5000).reversed()), Direction::ConsumerToProvider);
    }
}
