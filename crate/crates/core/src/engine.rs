//! Virtual-time event loop tying the switch, the inspector and the broker
//! together.
//!
//! Packets are fed in timestamp order. Before each packet every poll and
//! classification tick due at or before its timestamp is run, earliest first.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::broker::{Broker, BrokerConfig, Classifiers, InstalledEntry, PollOutcome, ProviderMap, VerdictUpdate};
use crate::inspector::{ElephantEvent, Inspector, DEFAULT_ELEPHANT_THRESHOLD};
use crate::pipeline::{
    ForwardDecision, MatchedTable, PacketRecord, SwitchState, DEFAULT_IDLE_TIMEOUT, DEFAULT_TABLE_CAPACITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub table_capacity: usize,
    pub idle_timeout: f64,
    pub elephant_threshold: u64,
    pub broker: BrokerConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            table_capacity: DEFAULT_TABLE_CAPACITY,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            elephant_threshold: DEFAULT_ELEPHANT_THRESHOLD,
            broker: BrokerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EngineStats {
    pub total_packets: u64,
    pub total_bytes: u64,
    pub mirrored_packets: u64,
    pub mirrored_bytes: u64,
    pub reactive_bytes: u64,
    pub elephants: u64,
    pub installs: u64,
    pub table_full: u64,
    pub dns_replies: u64,
    pub dns_errors: u64,
    pub polls: u64,
    pub expired: u64,
    pub insufficient: u64,
    /// Mirrored bytes per whole second.
    pub mirror_load: BTreeMap<u64, u64>,
    /// Reactive installs per whole second.
    pub installs_per_second: BTreeMap<u64, u64>,
    /// `(poll_time, reactive entries)`.
    pub entries: Vec<(f64, usize)>,
}

impl EngineStats {
    /// Dense per-second series over `0..len`.
    pub fn dense(map: &BTreeMap<u64, u64>, len: u64) -> Vec<u64> {
        (0..len).map(|s| map.get(&s).copied().unwrap_or(0)).collect()
    }

    pub fn peak_entries(&self) -> usize {
        self.entries.iter().map(|e| e.1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketOutcome {
    pub decision: ForwardDecision,
    pub elephant: Option<ElephantEvent>,
    pub installed: Option<InstalledEntry>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub switch: SwitchState,
    pub inspector: Inspector,
    pub broker: Broker,
    models: Option<Classifiers>,
    next_poll: Option<f64>,
    last_poll: Option<f64>,
    clock: f64,
    stats: EngineStats,
    verdict_log: Vec<VerdictUpdate>,
}

impl Engine {
    pub fn new(config: EngineConfig, providers: ProviderMap, models: Option<Classifiers>) -> Self {
        let mut broker_cfg = config.broker;
        broker_cfg.classify &= models.is_some();
        Engine {
            switch: SwitchState::new(config.table_capacity).with_idle_timeout(config.idle_timeout),
            inspector: Inspector::new(config.elephant_threshold),
            broker: Broker::new(providers, broker_cfg),
            models,
            next_poll: None,
            last_poll: None,
            clock: f64::NEG_INFINITY,
            stats: EngineStats::default(),
            verdict_log: Vec::new(),
        }
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn verdict_log(&self) -> &[VerdictUpdate] {
        &self.verdict_log
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Runs all timers due at or before `t`.
    pub fn advance_to(&mut self, t: f64) {
        loop {
            let poll = self.next_poll.filter(|p| *p <= t);
            let classify = self.broker.next_classify_time().filter(|c| *c <= t);
            match (poll, classify) {
                (Some(p), Some(c)) if c < p => self.run_classify(c),
                (Some(p), _) => {
                    self.run_poll(p);
                }
                (None, Some(c)) => self.run_classify(c),
                (None, None) => break,
            }
        }
    }

    fn run_poll(&mut self, now: f64) -> PollOutcome {
        let out = self.broker.poll_tick(&mut self.switch, now);
        self.inspector.gc_trackers(now);
        self.stats.polls += 1;
        self.stats.expired += out.expired.len() as u64;
        for e in &out.installed {
            self.count_install(e.installed_at);
        }
        self.stats.entries.push((now, out.entries));
        self.last_poll = Some(now);
        self.next_poll = Some(now + out.next_interval as f64);
        self.clock = self.clock.max(now);
        out
    }

    fn run_classify(&mut self, now: f64) {
        let Some(models) = &self.models else { return };
        let report = self.broker.classify_tick(models, now);
        self.stats.insufficient += report.insufficient.len() as u64;
        self.verdict_log.extend(report.updates);
        self.clock = self.clock.max(now);
    }

    fn count_install(&mut self, at: f64) {
        self.stats.installs += 1;
        *self
            .stats
            .installs_per_second
            .entry(libm::floor(at.max(0.0)) as u64)
            .or_default() += 1;
    }

    pub fn process(&mut self, pkt: &PacketRecord) -> PacketOutcome {
        if self.next_poll.is_none() {
            self.next_poll = Some(libm::ceil(pkt.timestamp));
        }
        self.advance_to(pkt.timestamp);
        self.clock = self.clock.max(pkt.timestamp);

        let decision = self.switch.process_packet(pkt);
        self.stats.total_packets += 1;
        self.stats.total_bytes += pkt.bytes;
        if decision.matched_table == MatchedTable::Reactive {
            self.stats.reactive_bytes += pkt.bytes;
        }
        let mut out = PacketOutcome {
            decision,
            elephant: None,
            installed: None,
        };
        if !decision.is_mirrored() {
            return out;
        }
        self.stats.mirrored_packets += 1;
        self.stats.mirrored_bytes += pkt.bytes;
        *self
            .stats
            .mirror_load
            .entry(libm::floor(pkt.timestamp.max(0.0)) as u64)
            .or_default() += pkt.bytes;

        match self.inspector.inspect_dns(pkt) {
            Some(Ok(reply)) => {
                self.stats.dns_replies += 1;
                self.broker.providers.record_dns(&reply);
            }
            Some(Err(e)) => {
                self.stats.dns_errors += 1;
                log::debug!("dropping DNS payload from {}: {e}", pkt.key);
            }
            None => {}
        }

        if let Some(ev) = self.inspector.observe_mirrored(pkt) {
            self.stats.elephants += 1;
            out.elephant = Some(ev);
            match self.broker.on_elephant(ev, &mut self.switch) {
                Ok(e) => {
                    self.count_install(e.installed_at);
                    out.installed = Some(e);
                }
                Err(e) => {
                    self.stats.table_full += 1;
                    log::warn!("install for {} deferred: {e}", ev.key);
                }
            }
        }
        out
    }

    /// Runs timers up to `end` (or the last packet) and takes a closing poll.
    pub fn finish(&mut self, end: Option<f64>) {
        let end = end.unwrap_or(self.clock).max(self.clock);
        if !end.is_finite() {
            return;
        }
        self.advance_to(end);
        if self.last_poll != Some(end) {
            self.run_poll(end);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{FlowKey, Proto};
    use core::net::Ipv4Addr;

    fn key(port: u16) -> FlowKey {
        FlowKey::new(
            Ipv4Addr::new(1, 1, 1, 1),
            Ipv4Addr::new(10, 0, 0, 1),
            443,
            port,
            Proto::Tcp,
        )
    }

    #[test]
    fn elephant_stops_mirroring() {
        let mut e = Engine::new(EngineConfig::default(), ProviderMap::with_defaults(), None);
        let k = key(5000);
        let mut installed_at = None;
        for i in 0..100 {
            let out = e.process(&PacketRecord::new(i as f64 * 0.1, k, 100_000));
            if out.installed.is_some() {
                installed_at = Some(i);
            }
        }
        assert_eq!(installed_at, Some(39));
        e.finish(None);
        let s = e.stats();
        assert_eq!(s.mirrored_bytes, 4_000_000);
        assert_eq!(s.reactive_bytes, 6_000_000);
        assert_eq!(s.total_bytes, s.mirrored_bytes + s.reactive_bytes);
        let group_bytes: u64 = e.switch.groups().map(|g| g.byte_count).sum();
        assert_eq!(group_bytes, s.reactive_bytes);
        assert_eq!(s.entries.first(), Some(&(0.0, 0)));
        assert!(s.polls >= 10);
    }

    #[test]
    fn idle_entry_expires_after_timeout() {
        let mut e = Engine::new(EngineConfig::default(), ProviderMap::with_defaults(), None);
        let k = key(1);
        e.process(&PacketRecord::new(0.0, k, 5_000_000));
        assert_eq!(e.switch.reactive_len(), 1);
        e.finish(Some(60.0));
        assert_eq!(e.switch.reactive_len(), 1);
        e.finish(Some(61.0));
        assert_eq!(e.switch.reactive_len(), 0);
        assert_eq!(e.stats().expired, 1);
    }
}
