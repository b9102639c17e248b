//! Trace replay through the engine.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use vidtel_core::broker::{Classifiers, ProviderMap};
use vidtel_core::engine::{Engine, EngineConfig};
use vidtel_core::pipeline::FlowKey;
use vidtel_core::traffgen::TraceRecord;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Speed {
    /// Sleep so that trace time tracks wall time.
    Realtime,
    /// Advance the clock straight from packet timestamps.
    #[default]
    Max,
}

pub struct ReplayResult {
    pub engine: Engine,
    /// Trace flow id of every 5-tuple seen.
    pub flow_ids: HashMap<FlowKey, u64>,
    pub records: u64,
    pub start_epoch: u64,
    pub elapsed: Duration,
}

impl ReplayResult {
    pub fn flow_id(&self, key: &FlowKey) -> Option<u64> {
        self.flow_ids.get(key).copied()
    }
}

pub fn replay(
    records: impl IntoIterator<Item = Result<TraceRecord>>,
    start_epoch: u64,
    config: EngineConfig,
    providers: ProviderMap,
    models: Option<Classifiers>,
    speed: Speed,
) -> Result<ReplayResult> {
    let started = Instant::now();
    let mut engine = Engine::new(config, providers, models);
    let mut flow_ids = HashMap::new();
    let mut first_ts = None;
    let mut n = 0u64;
    for rec in records {
        let rec = rec?;
        let ts = rec.packet.timestamp;
        if speed == Speed::Realtime {
            let origin = *first_ts.get_or_insert(ts);
            let due = Duration::from_secs_f64((ts - origin).max(0.0));
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        flow_ids.entry(rec.packet.key).or_insert(rec.flow_id);
        engine.process(&rec.packet);
        n += 1;
    }
    if n == 0 {
        return Err(Error::data("trace has no records"));
    }
    engine.finish(None);
    let stats = engine.stats();
    log::info!(
        "replayed {n} records: {} elephants, {} installs, peak {} entries",
        stats.elephants,
        stats.installs,
        stats.peak_entries()
    );
    Ok(ReplayResult {
        engine,
        flow_ids,
        records: n,
        start_epoch,
        elapsed: started.elapsed(),
    })
}
