//! Text trace files and truth sidecars.
//!
//! A trace starts with a version header and holds one packet per line:
//!
//! ```text
//! #vidtel-trace v1 start_epoch=0
//! 0.5 4294967296 10.0.0.53 192.168.0.0 53 30000 udp 90 dns:r0---sn-0000.googlevideo.com=172.16.0.10
//! 1.0005 0 172.16.0.10 192.168.0.0 443 40000 tcp 1500
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use vidtel_core::dns;
use vidtel_core::pipeline::{FlowKey, PacketRecord, Proto};
use vidtel_core::traffgen::{FlowTruth, TraceRecord, TruthKind};
use vidtel_core::Resolution;

use crate::error::{Error, Result};

pub const TRACE_MAGIC: &str = "#vidtel-trace";
pub const TRACE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceHeader {
    pub start_epoch: u64,
}

impl TraceHeader {
    pub fn line(&self) -> String {
        format!("{TRACE_MAGIC} {TRACE_VERSION} start_epoch={}", self.start_epoch)
    }

    pub fn parse(line: &str) -> Result<TraceHeader> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(TRACE_MAGIC) {
            return Err(Error::data("trace header missing"));
        }
        match parts.next() {
            Some(TRACE_VERSION) => {}
            Some(v) => return Err(Error::data(format!("unsupported trace version {v}"))),
            None => return Err(Error::data("trace version missing")),
        }
        let mut header = TraceHeader::default();
        for kv in parts {
            if let Some(v) = kv.strip_prefix("start_epoch=") {
                header.start_epoch = v.parse().map_err(|_| Error::data(format!("bad start_epoch {v:?}")))?;
            }
        }
        Ok(header)
    }
}

fn proto_name(p: Proto) -> String {
    match p {
        Proto::Tcp => "tcp".into(),
        Proto::Udp => "udp".into(),
        Proto::Other(n) => n.to_string(),
    }
}

fn parse_proto(s: &str) -> Option<Proto> {
    match s {
        "tcp" => Some(Proto::Tcp),
        "udp" => Some(Proto::Udp),
        n => n.parse::<u8>().ok().map(Proto::from_number),
    }
}

/// One record as a trace line, without the newline.
pub fn format_record(r: &TraceRecord) -> String {
    let p = &r.packet;
    let k = &p.key;
    let mut line = format!(
        "{} {} {} {} {} {} {} {}",
        p.timestamp,
        r.flow_id,
        k.src_ip,
        k.dst_ip,
        k.src_port,
        k.dst_port,
        proto_name(k.proto),
        p.bytes
    );
    if let Some(reply) = p
        .dns_payload
        .as_deref()
        .and_then(|b| dns::parse_dns_reply(b, p.timestamp).ok())
    {
        let ips: Vec<String> = reply.answer_ips.iter().map(Ipv4Addr::to_string).collect();
        line.push_str(&format!(" dns:{}={}", reply.query_name, ips.join(",")));
    }
    line
}

/// Parses one record line. DNS annotations are re-encoded as A replies.
pub fn parse_record(line: &str) -> std::result::Result<TraceRecord, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 8 && f.len() != 9 {
        return Err(format!("expected 8 or 9 fields, got {}", f.len()));
    }
    let timestamp: f64 = f[0].parse().map_err(|_| format!("bad timestamp {:?}", f[0]))?;
    if !timestamp.is_finite() || timestamp < 0.0 {
        return Err(format!("bad timestamp {:?}", f[0]));
    }
    let flow_id: u64 = f[1].parse().map_err(|_| format!("bad flow id {:?}", f[1]))?;
    let src: Ipv4Addr = f[2].parse().map_err(|_| format!("bad source address {:?}", f[2]))?;
    let dst: Ipv4Addr = f[3]
        .parse()
        .map_err(|_| format!("bad destination address {:?}", f[3]))?;
    let sport: u16 = f[4].parse().map_err(|_| format!("bad source port {:?}", f[4]))?;
    let dport: u16 = f[5].parse().map_err(|_| format!("bad destination port {:?}", f[5]))?;
    let proto = parse_proto(f[6]).ok_or_else(|| format!("bad protocol {:?}", f[6]))?;
    let bytes: u64 = f[7].parse().map_err(|_| format!("bad byte count {:?}", f[7]))?;
    let key = FlowKey::new(src, dst, sport, dport, proto);
    let mut packet = PacketRecord::new(timestamp, key, bytes);
    if let Some(ann) = f.get(8) {
        let body = ann
            .strip_prefix("dns:")
            .ok_or_else(|| format!("unknown annotation {ann:?}"))?;
        let (name, ips) = body.split_once('=').ok_or("dns annotation needs name=ip")?;
        let ips = ips
            .split(',')
            .map(|s| s.parse::<Ipv4Addr>().map_err(|_| format!("bad dns answer {s:?}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let payload = dns::encode_a_reply(flow_id as u16, name, &ips).map_err(|e| format!("dns annotation: {e}"))?;
        packet = packet.with_dns(payload);
    }
    Ok(TraceRecord { flow_id, packet })
}

pub struct TraceWriter<W: Write> {
    out: W,
    last: f64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: TraceHeader) -> std::io::Result<Self> {
        writeln!(out, "{}", header.line())?;
        Ok(TraceWriter {
            out,
            last: f64::NEG_INFINITY,
        })
    }

    pub fn write(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        debug_assert!(r.packet.timestamp >= self.last, "trace records out of order");
        self.last = r.packet.timestamp;
        writeln!(self.out, "{}", format_record(r))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trace_file(
    path: &Path,
    header: TraceHeader,
    records: impl IntoIterator<Item = TraceRecord>,
) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = TraceWriter::new(BufWriter::new(file), header).map_err(|e| Error::io(path, e))?;
    let mut n = 0;
    for r in records {
        w.write(&r).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.finish().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

/// Streaming reader; checks the header and timestamp order.
pub struct TraceReader<R: BufRead> {
    lines: std::io::Lines<R>,
    header: TraceHeader,
    line_no: usize,
    last: f64,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        TraceReader::new(BufReader::new(file))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = match lines.next() {
            Some(Ok(l)) => l,
            Some(Err(e)) => return Err(Error::data(format!("reading trace: {e}"))),
            None => return Err(Error::data("empty trace")),
        };
        Ok(TraceReader {
            header: TraceHeader::parse(&first)?,
            lines,
            line_no: 1,
            last: f64::NEG_INFINITY,
        })
    }

    pub fn header(&self) -> TraceHeader {
        self.header
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::data(format!("reading trace: {e}")))),
            };
            self.line_no += 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let rec = match parse_record(t) {
                Ok(r) => r,
                Err(e) => return Some(Err(Error::data(format!("trace line {}: {e}", self.line_no)))),
            };
            if rec.packet.timestamp < self.last {
                return Some(Err(Error::data(format!(
                    "trace line {}: timestamp {} goes backwards",
                    self.line_no, rec.packet.timestamp
                ))));
            }
            self.last = rec.packet.timestamp;
            return Some(Ok(rec));
        }
    }
}

/// Sidecar line: `flow_id kind resolution provider`, `-` for no resolution.
pub fn format_truth(t: &FlowTruth) -> String {
    format!(
        "{} {} {} {}",
        t.flow_id,
        t.kind,
        t.resolution.map_or("-", Resolution::name),
        t.provider
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthRow {
    pub flow_id: u64,
    pub kind: TruthKind,
    pub resolution: Option<Resolution>,
    pub provider: String,
}

pub fn parse_truth(line: &str) -> std::result::Result<TruthRow, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    let [id, kind, res, provider] = f[..] else {
        return Err(format!("expected 4 fields, got {}", f.len()));
    };
    Ok(TruthRow {
        flow_id: id.parse().map_err(|_| format!("bad flow id {id:?}"))?,
        kind: kind.parse().map_err(|_| format!("bad kind {kind:?}"))?,
        resolution: match res {
            "-" => None,
            r => Some(r.parse().map_err(|_| format!("bad resolution {r:?}"))?),
        },
        provider: provider.to_string(),
    })
}

pub fn write_truth_file(path: &Path, truth: impl IntoIterator<Item = FlowTruth>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in truth {
        writeln!(w, "{}", format_truth(&t)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_file(path: &Path) -> Result<Vec<TruthRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_truth(l).map_err(|e| Error::data(format!("truth line {}: {e}", i + 1))))
        .collect()
}
