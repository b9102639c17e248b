//! Software inspection of the mirror stream.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dns::{self, DnsError, DnsReply};
use crate::pipeline::{Direction, FlowKey, PacketRecord};

/// 4 MB, decimal.
pub const DEFAULT_ELEPHANT_THRESHOLD: u64 = 4_000_000;
/// Trackers idle for longer than this are dropped.
pub const DEFAULT_GC_HORIZON: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTracker {
    pub key: FlowKey,
    pub direction: Direction,
    pub volume: u64,
    pub first_seen: f64,
    pub last_seen: f64,
    pub elephant_reported: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElephantEvent {
    pub key: FlowKey,
    pub direction: Direction,
    pub detected_at: f64,
    pub volume_at_detection: u64,
}

impl ElephantEvent {
    /// Address of the content server side of the flow.
    pub fn server_ip(&self) -> core::net::Ipv4Addr {
        match self.direction {
            Direction::ProviderToConsumer => self.key.src_ip,
            Direction::ConsumerToProvider => self.key.dst_ip,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inspector {
    trackers: BTreeMap<FlowKey, FlowTracker>,
    threshold: u64,
    gc_horizon: f64,
}

impl Default for Inspector {
    fn default() -> Self {
        Inspector::new(DEFAULT_ELEPHANT_THRESHOLD)
    }
}

impl Inspector {
    pub fn new(threshold: u64) -> Self {
        Inspector {
            trackers: BTreeMap::new(),
            threshold,
            gc_horizon: DEFAULT_GC_HORIZON,
        }
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn tracker(&self, key: &FlowKey) -> Option<&FlowTracker> {
        self.trackers.get(key)
    }

    pub fn len(&self) -> usize {
        self.trackers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trackers.is_empty()
    }

    /// Accounts one mirrored packet. Returns an event the first time the
    /// flow's mirrored volume reaches the threshold.
    pub fn observe_mirrored(&mut self, pkt: &PacketRecord) -> Option<ElephantEvent> {
        let tracker = self.trackers.entry(pkt.key).or_insert_with(|| FlowTracker {
            key: pkt.key,
            direction: pkt.direction,
            volume: 0,
            first_seen: pkt.timestamp,
            last_seen: pkt.timestamp,
            elephant_reported: false,
        });
        tracker.volume += pkt.bytes;
        tracker.last_seen = pkt.timestamp;
        if !tracker.elephant_reported && tracker.volume >= self.threshold {
            tracker.elephant_reported = true;
            return Some(ElephantEvent {
                key: pkt.key,
                direction: tracker.direction,
                detected_at: pkt.timestamp,
                volume_at_detection: tracker.volume,
            });
        }
        None
    }

    /// Decodes the DNS payload of a mirrored reply, if it carries one.
    pub fn inspect_dns(&self, pkt: &PacketRecord) -> Option<Result<DnsReply, DnsError>> {
        if !pkt.is_dns_reply() {
            return None;
        }
        pkt.dns_payload
            .as_deref()
            .map(|p| dns::parse_dns_reply(p, pkt.timestamp))
    }

    pub fn gc_trackers(&mut self, now: f64) -> usize {
        let before = self.trackers.len();
        let horizon = self.gc_horizon;
        self.trackers.retain(|_, t| now - t.last_seen <= horizon);
        before - self.trackers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Proto;
    use core::net::Ipv4Addr;

    fn key(port: u16) -> FlowKey {
        FlowKey::new(
            Ipv4Addr::new(10, 1, 0, 1),
            Ipv4Addr::new(10, 2, 0, 1),
            443,
            port,
            Proto::Tcp,
        )
    }

    #[test]
    fn event_fires_once_at_threshold() {
        let mut insp = Inspector::default();
        assert!(insp
            .observe_mirrored(&PacketRecord::new(0.0, key(5000), 3_999_000))
            .is_none());
        let ev = insp.observe_mirrored(&PacketRecord::new(1.0, key(5000), 1500)).unwrap();
        assert_eq!(ev.volume_at_detection, 4_000_500);
        assert_eq!(ev.detected_at, 1.0);
        assert_eq!(ev.server_ip(), Ipv4Addr::new(10, 1, 0, 1));
        assert!(insp
            .observe_mirrored(&PacketRecord::new(2.0, key(5000), 1500))
            .is_none());
        assert_eq!(insp.tracker(&key(5000)).unwrap().volume, 4_002_000);
    }

    #[test]
    fn mice_never_fire() {
        let mut insp = Inspector::default();
        for p in 0..100 {
            for i in 0..10 {
                assert!(insp
                    .observe_mirrored(&PacketRecord::new(i as f64, key(p), 1000))
                    .is_none());
            }
        }
        assert_eq!(insp.len(), 100);
    }

    #[test]
    fn gc_boundary() {
        let mut insp = Inspector::default();
        insp.observe_mirrored(&PacketRecord::new(0.0, key(1), 10));
        insp.observe_mirrored(&PacketRecord::new(2.0, key(2), 10));
        assert_eq!(insp.gc_trackers(121.0), 1);
        assert!(insp.tracker(&key(1)).is_none());
        assert!(insp.tracker(&key(2)).is_some());
    }

    #[test]
    fn gc_counts_match_linear_scan() {
        let mut insp = Inspector::default();
        for p in 0..15_000u16 {
            let t = if p % 3 == 0 { 200.0 } else { 10.0 };
            insp.observe_mirrored(&PacketRecord::new(t, key(p), 10));
        }
        let oracle = (0..15_000u16).filter(|p| p % 3 != 0).count();
        assert_eq!(oracle, 10_000);
        assert_eq!(insp.gc_trackers(200.0), oracle);
        assert_eq!(insp.len(), 5_000);
    }

    #[test]
    fn dns_only_from_udp_53() {
        let insp = Inspector::default();
        let payload = dns::encode_a_reply(1, "a.googlevideo.com", &[Ipv4Addr::new(1, 2, 3, 4)]).unwrap();
        let udp = FlowKey::new(
            Ipv4Addr::new(8, 8, 8, 8),
            Ipv4Addr::new(10, 0, 0, 2),
            53,
            40000,
            Proto::Udp,
        );
        let pkt = PacketRecord::new(3.0, udp, 90).with_dns(payload.clone());
        let reply = insp.inspect_dns(&pkt).unwrap().unwrap();
        assert_eq!(reply.answer_ips, [Ipv4Addr::new(1, 2, 3, 4)]);
        let tcp = PacketRecord::new(3.0, key(53), 90).with_dns(payload);
        assert!(insp.inspect_dns(&tcp).is_none());
    }
}
