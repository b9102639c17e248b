//! Replay reports and the analytics tables derived from verdict logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use vidtel_core::broker::{FlowSampleSeries, VerdictUpdate};
use vidtel_core::engine::EngineStats;
use vidtel_core::Resolution;

use crate::error::{Error, Result};
use crate::replay::ReplayResult;
use crate::trace::TruthRow;

pub const VERDICT_HEADER: &str = "time\tflow_id\tflow\tprovider\tis_video\tresolution\tage\tbytes\tres_change";

/// One parsed verdict-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub time: f64,
    pub flow_id: Option<u64>,
    pub flow: String,
    pub provider: String,
    pub is_video: bool,
    pub resolution: Option<Resolution>,
    pub age: f64,
    pub bytes: u64,
    pub res_change: bool,
}

impl VerdictRow {
    pub fn from_update(u: &VerdictUpdate, flow_id: Option<u64>) -> Self {
        VerdictRow {
            time: u.time,
            flow_id,
            flow: u.key.to_string(),
            provider: u.provider.clone(),
            is_video: u.is_video,
            resolution: u.resolution,
            age: u.age,
            bytes: u.bytes,
            res_change: u.resolution_change,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{:.3}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}\t{}",
            self.time,
            self.flow_id.map_or_else(|| "-".to_string(), |i| i.to_string()),
            self.flow,
            self.provider,
            u8::from(self.is_video),
            self.resolution.map_or("-", Resolution::name),
            self.age,
            self.bytes,
            u8::from(self.res_change)
        )
    }

    pub fn parse(line: &str) -> std::result::Result<VerdictRow, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(format!("expected 9 columns, got {}", f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number {s:?}"));
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(format!("bad flag {s:?}")),
        };
        Ok(VerdictRow {
            time: num(f[0])?,
            flow_id: match f[1] {
                "-" => None,
                s => Some(s.parse().map_err(|_| format!("bad flow id {s:?}"))?),
            },
            flow: f[2].to_string(),
            provider: f[3].to_string(),
            is_video: flag(f[4])?,
            resolution: match f[5] {
                "-" => None,
                s => Some(s.parse().map_err(|_| format!("bad resolution {s:?}"))?),
            },
            age: num(f[6])?,
            bytes: f[7].parse().map_err(|_| format!("bad byte count {:?}", f[7]))?,
            res_change: flag(f[8])?,
        })
    }
}

pub fn read_verdict_log(path: &Path) -> Result<Vec<VerdictRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_verdict_log(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn parse_verdict_log(text: &str) -> std::result::Result<Vec<VerdictRow>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == VERDICT_HEADER => {}
        _ => return Err("missing verdict log header".into()),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| VerdictRow::parse(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// `(x, P(X > x))` at every distinct sample value.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        while i < v.len() && v[i] == x {
            i += 1;
        }
        out.push((x, (v.len() - i) as f64 / n));
    }
    out
}

/// Per-stream view of a verdict log; one entry per flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSummary {
    pub flow: String,
    pub flow_id: Option<u64>,
    pub provider: String,
    pub is_video: bool,
    pub resolution: Option<Resolution>,
    pub duration: f64,
    pub bytes: u64,
    pub resolution_changes: u32,
}

impl StreamSummary {
    pub fn mean_rate_mbps(&self) -> f64 {
        if self.duration > 0.0 {
            self.bytes as f64 * 8.0 / self.duration / 1e6
        } else {
            0.0
        }
    }

    pub fn changes_per_hour(&self) -> f64 {
        if self.duration > 0.0 {
            self.resolution_changes as f64 * 3600.0 / self.duration
        } else {
            0.0
        }
    }
}

/// Groups rows by flow; the final verdict decides the stream's class.
pub fn summarize_streams(rows: &[VerdictRow]) -> Vec<StreamSummary> {
    let mut by_flow: BTreeMap<&str, StreamSummary> = BTreeMap::new();
    for r in rows {
        let s = by_flow.entry(&r.flow).or_insert_with(|| StreamSummary {
            flow: r.flow.clone(),
            flow_id: r.flow_id,
            provider: r.provider.clone(),
            is_video: r.is_video,
            resolution: r.resolution,
            duration: 0.0,
            bytes: 0,
            resolution_changes: 0,
        });
        if r.age >= s.duration {
            s.is_video = r.is_video;
            s.resolution = r.resolution;
            s.duration = r.age;
            s.bytes = s.bytes.max(r.bytes);
        }
        s.resolution_changes += u32::from(r.res_change);
    }
    by_flow.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Analytics {
    /// `(provider, video streams, share)`, largest first.
    pub provider_share: Vec<(String, usize, f64)>,
    /// Hour index to per-resolution fraction of video verdicts.
    pub resolution_hourly: BTreeMap<u64, [f64; 4]>,
    pub change_ccdf: Vec<(f64, f64)>,
    pub duration_ccdf: Vec<(f64, f64)>,
    pub rate_ccdf: Vec<(f64, f64)>,
}

pub fn analyze(rows: &[VerdictRow]) -> Result<Analytics> {
    if rows.is_empty() {
        return Err(Error::data("verdict log is empty"));
    }
    let streams = summarize_streams(rows);
    let videos: Vec<&StreamSummary> = streams.iter().filter(|s| s.is_video).collect();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &videos {
        *counts.entry(&s.provider).or_default() += 1;
    }
    let mut provider_share: Vec<(String, usize, f64)> = counts
        .into_iter()
        .map(|(p, n)| (p.to_string(), n, n as f64 / videos.len() as f64))
        .collect();
    provider_share.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut hourly: BTreeMap<u64, [usize; 4]> = BTreeMap::new();
    for r in rows {
        if let (true, Some(res)) = (r.is_video, r.resolution) {
            hourly.entry((r.time.max(0.0) / 3600.0) as u64).or_default()[res.index()] += 1;
        }
    }
    let resolution_hourly = hourly
        .into_iter()
        .map(|(h, c)| {
            let total: usize = c.iter().sum();
            (h, c.map(|x| x as f64 / total as f64))
        })
        .collect();

    Ok(Analytics {
        provider_share,
        resolution_hourly,
        change_ccdf: ccdf(&videos.iter().map(|s| s.changes_per_hour()).collect::<Vec<_>>()),
        duration_ccdf: ccdf(&streams.iter().map(|s| s.duration).collect::<Vec<_>>()),
        rate_ccdf: ccdf(&streams.iter().map(|s| s.mean_rate_mbps()).collect::<Vec<_>>()),
    })
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn ccdf_table(header: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\tccdf\n");
    for (x, p) in points {
        writeln!(s, "{x}\t{p}").unwrap();
    }
    s
}

pub fn write_analytics(dir: &Path, a: &Analytics) -> Result<()> {
    let mut s = String::from("provider\tstreams\tshare\n");
    for (p, n, share) in &a.provider_share {
        writeln!(s, "{p}\t{n}\t{share:.4}").unwrap();
    }
    write_file(dir, "provider_share.tsv", &s)?;

    let mut s = String::from("hour\tlow\tmedium\thigh\tultrahigh\n");
    for (h, f) in &a.resolution_hourly {
        writeln!(s, "{h}\t{:.4}\t{:.4}\t{:.4}\t{:.4}", f[0], f[1], f[2], f[3]).unwrap();
    }
    write_file(dir, "resolution_hourly.tsv", &s)?;
    write_file(
        dir,
        "resolution_change_ccdf.tsv",
        &ccdf_table("changes_per_hour", &a.change_ccdf),
    )?;
    write_file(dir, "duration_ccdf.tsv", &ccdf_table("duration_s", &a.duration_ccdf))?;
    write_file(dir, "rate_ccdf.tsv", &ccdf_table("mean_rate_mbps", &a.rate_ccdf))
}

/// Final verdict of one flow compared with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowEvaluation {
    pub flow_id: u64,
    pub truth_kind: String,
    pub truth_resolution: Option<Resolution>,
    pub truth_provider: String,
    pub is_video: bool,
    pub resolution: Option<Resolution>,
    pub provider: String,
}

impl FlowEvaluation {
    pub fn identity_correct(&self) -> bool {
        self.is_video == (self.truth_kind == "video")
    }
}

pub fn evaluate(result: &ReplayResult, truth: &[TruthRow]) -> Vec<FlowEvaluation> {
    let truth: BTreeMap<u64, &TruthRow> = truth.iter().map(|t| (t.flow_id, t)).collect();
    let mut out = Vec::new();
    for v in result.engine.broker.verdicts().values() {
        let Some(id) = result.flow_id(&v.key) else { continue };
        let Some(t) = truth.get(&id) else { continue };
        out.push(FlowEvaluation {
            flow_id: id,
            truth_kind: t.kind.to_string(),
            truth_resolution: t.resolution,
            truth_provider: t.provider.clone(),
            is_video: v.is_video,
            resolution: v.resolution,
            provider: v.provider.clone(),
        });
    }
    out.sort_by_key(|e| e.flow_id);
    out
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    records: u64,
    start_epoch: u64,
    elapsed_seconds: f64,
    total_bytes: u64,
    mirrored_bytes: u64,
    reactive_bytes: u64,
    group_bytes: u64,
    bytes_conserved: bool,
    elephants: u64,
    installs: u64,
    deferred_installs: u64,
    peak_entries: usize,
    polls: u64,
    expired_entries: u64,
    dns_replies: u64,
    dns_errors: u64,
    verdicts: usize,
    insufficient_windows: u64,
    video_flows: usize,
    evaluated_flows: Option<usize>,
    identifier_accuracy: Option<f64>,
    resolution_accuracy: Option<f64>,
    provider_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    advisory: Option<&'a str>,
}

fn series_rows(series: &[FlowSampleSeries], result: &ReplayResult, out: &mut String) {
    for s in series {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{}\t{}",
            result.flow_id(&s.key).map_or_else(|| "-".into(), |i| i.to_string()),
            s.key,
            s.provider,
            s.start_time,
            s.end_time.map_or_else(|| "-".into(), |t| format!("{t:.3}")),
            s.latest_bytes()
        )
        .unwrap();
    }
}

/// Writes the full report bundle of a replay into `dir`.
pub fn write_replay_report(dir: &Path, result: &ReplayResult, truth: Option<&[TruthRow]>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let engine = &result.engine;
    let stats: &EngineStats = engine.stats();

    let rows: Vec<VerdictRow> = engine
        .verdict_log()
        .iter()
        .map(|u| VerdictRow::from_update(u, result.flow_id(&u.key)))
        .collect();
    let mut s = format!("{VERDICT_HEADER}\n");
    for r in &rows {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    write_file(dir, "verdicts.tsv", &s)?;

    let mut s = String::from("provider\ttime\tbytes\n");
    for (p, series) in engine.broker.provider_series() {
        for (t, b) in series {
            writeln!(s, "{p}\t{t:.3}\t{b}").unwrap();
        }
    }
    write_file(dir, "provider_volume.tsv", &s)?;

    let horizon = engine.clock().max(0.0).ceil() as u64 + 1;
    let mut s = String::from("second\tmirrored_bytes\n");
    for (i, b) in EngineStats::dense(&stats.mirror_load, horizon).iter().enumerate() {
        writeln!(s, "{i}\t{b}").unwrap();
    }
    write_file(dir, "mirror_load.tsv", &s)?;

    let mut s = String::from("second\tinstalls\n");
    for (i, b) in EngineStats::dense(&stats.installs_per_second, horizon)
        .iter()
        .enumerate()
    {
        writeln!(s, "{i}\t{b}").unwrap();
    }
    write_file(dir, "installs.tsv", &s)?;

    let mut s = String::from("time\tentries\n");
    for (t, n) in &stats.entries {
        writeln!(s, "{t:.3}\t{n}").unwrap();
    }
    write_file(dir, "entries.tsv", &s)?;

    let mut s = String::from("flow_id\tflow\tprovider\tstart\tend\tbytes\n");
    series_rows(engine.broker.closed_series(), result, &mut s);
    let open: Vec<FlowSampleSeries> = engine.broker.open_series().cloned().collect();
    series_rows(&open, result, &mut s);
    write_file(dir, "flows.tsv", &s)?;

    let evaluation = truth.map(|t| evaluate(result, t));
    if let Some(ev) = &evaluation {
        let mut s =
            String::from("flow_id\ttruth_kind\ttruth_resolution\ttruth_provider\tis_video\tresolution\tprovider\n");
        for e in ev {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.flow_id,
                e.truth_kind,
                e.truth_resolution.map_or("-", Resolution::name),
                e.truth_provider,
                u8::from(e.is_video),
                e.resolution.map_or("-", Resolution::name),
                e.provider
            )
            .unwrap();
        }
        write_file(dir, "evaluation.tsv", &s)?;
    }
    let ratio = |hit: usize, n: usize| (n > 0).then(|| hit as f64 / n as f64);
    let (id_acc, res_acc, prov_acc) = match &evaluation {
        Some(ev) => {
            let videos: Vec<&FlowEvaluation> = ev.iter().filter(|e| e.truth_kind == "video").collect();
            (
                ratio(ev.iter().filter(|e| e.identity_correct()).count(), ev.len()),
                ratio(
                    videos.iter().filter(|e| e.resolution == e.truth_resolution).count(),
                    videos.len(),
                ),
                ratio(ev.iter().filter(|e| e.provider == e.truth_provider).count(), ev.len()),
            )
        }
        None => (None, None, None),
    };

    let group_bytes: u64 = engine.switch.groups().map(|g| g.byte_count).sum();
    let summary = Summary {
        records: result.records,
        start_epoch: result.start_epoch,
        elapsed_seconds: result.elapsed.as_secs_f64(),
        total_bytes: stats.total_bytes,
        mirrored_bytes: stats.mirrored_bytes,
        reactive_bytes: stats.reactive_bytes,
        group_bytes,
        bytes_conserved: stats.mirrored_bytes + group_bytes == stats.total_bytes,
        elephants: stats.elephants,
        installs: stats.installs,
        deferred_installs: stats.table_full,
        peak_entries: stats.peak_entries(),
        polls: stats.polls,
        expired_entries: stats.expired,
        dns_replies: stats.dns_replies,
        dns_errors: stats.dns_errors,
        verdicts: rows.len(),
        insufficient_windows: stats.insufficient,
        video_flows: engine.broker.verdicts().values().filter(|v| v.is_video).count(),
        evaluated_flows: evaluation.as_ref().map(Vec::len),
        identifier_accuracy: id_acc,
        resolution_accuracy: res_acc,
        provider_accuracy: prov_acc,
        advisory: rows
            .is_empty()
            .then_some("no verdicts: replay ran without models or no flow aged 16 s"),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(dir, "summary.json", &(json + "\n"))?;

    if !rows.is_empty() {
        write_analytics(dir, &analyze(&rows)?)?;
    }
    Ok(())
}
