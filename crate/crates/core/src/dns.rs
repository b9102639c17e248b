//! DNS response decoding (A records only) and a minimal response encoder.

use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

const HEADER_LEN: usize = 12;
const TYPE_A: u16 = 1;
const TYPE_CNAME: u16 = 5;
const TYPE_AAAA: u16 = 28;
const CLASS_IN: u16 = 1;
const MAX_NAME_LEN: usize = 253;
const MAX_POINTER_HOPS: usize = 64;

/// Server name and addresses extracted from one A reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsReply {
    /// Lowercase question name without the trailing dot.
    pub query_name: String,
    pub answer_ips: Vec<Ipv4Addr>,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DnsError {
    #[error("malformed DNS message: {0}")]
    MalformedDns(&'static str),
    #[error("DNS message is a query, not a response")]
    NotAResponse,
    #[error("DNS response carries no A records")]
    NoARecords,
    #[error("invalid domain name")]
    InvalidName,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, DnsError> {
        let b = *self.buf.get(self.pos).ok_or(DnsError::MalformedDns("truncated"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, DnsError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn skip(&mut self, n: usize) -> Result<&'a [u8], DnsError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or(DnsError::MalformedDns("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Reads a possibly compressed name, leaving the cursor after its
    /// in-place encoding.
    fn name(&mut self) -> Result<String, DnsError> {
        let mut out = String::new();
        let mut pos = self.pos;
        let mut resume = None;
        let mut hops = 0;
        loop {
            let len = *self.buf.get(pos).ok_or(DnsError::MalformedDns("truncated name"))? as usize;
            match len & 0xC0 {
                0x00 => {
                    if len == 0 {
                        pos += 1;
                        break;
                    }
                    let label = self
                        .buf
                        .get(pos + 1..pos + 1 + len)
                        .ok_or(DnsError::MalformedDns("truncated label"))?;
                    if !out.is_empty() {
                        out.push('.');
                    }
                    for &b in label {
                        if !b.is_ascii_graphic() || b == b'.' {
                            return Err(DnsError::MalformedDns("unsupported label byte"));
                        }
                        out.push(b.to_ascii_lowercase() as char);
                    }
                    if out.len() > MAX_NAME_LEN {
                        return Err(DnsError::MalformedDns("name too long"));
                    }
                    pos += 1 + len;
                }
                0xC0 => {
                    let lo = *self
                        .buf
                        .get(pos + 1)
                        .ok_or(DnsError::MalformedDns("truncated pointer"))? as usize;
                    hops += 1;
                    if hops > MAX_POINTER_HOPS {
                        return Err(DnsError::MalformedDns("compression loop"));
                    }
                    if resume.is_none() {
                        resume = Some(pos + 2);
                    }
                    pos = ((len & 0x3F) << 8) | lo;
                }
                _ => return Err(DnsError::MalformedDns("reserved label type")),
            }
        }
        self.pos = resume.unwrap_or(pos);
        Ok(out)
    }
}

/// Decodes a DNS response and collects its A records.
///
/// The reported name is the first question's name; CNAME, AAAA and other
/// answer records are skipped.
pub fn parse_dns_reply(payload: &[u8], timestamp: f64) -> Result<DnsReply, DnsError> {
    if payload.len() < HEADER_LEN {
        return Err(DnsError::MalformedDns("short header"));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let _id = r.u16()?;
    let flags = r.u16()?;
    let qdcount = r.u16()?;
    let ancount = r.u16()?;
    let _nscount = r.u16()?;
    let _arcount = r.u16()?;
    if flags & 0x8000 == 0 {
        return Err(DnsError::NotAResponse);
    }
    if qdcount == 0 {
        return Err(DnsError::MalformedDns("no question"));
    }

    let mut query_name = None;
    for _ in 0..qdcount {
        let name = r.name()?;
        r.skip(4)?;
        query_name.get_or_insert(name);
    }
    let query_name = query_name.unwrap_or_default();

    let mut answer_ips = Vec::new();
    for _ in 0..ancount {
        let _owner = r.name()?;
        let rtype = r.u16()?;
        let class = r.u16()?;
        r.skip(4)?;
        let rdlen = r.u16()? as usize;
        let rdata = r.skip(rdlen)?;
        if rtype == TYPE_A && class == CLASS_IN {
            if rdlen != 4 {
                return Err(DnsError::MalformedDns("A record length"));
            }
            answer_ips.push(Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]));
        }
    }
    if answer_ips.is_empty() {
        return Err(DnsError::NoARecords);
    }
    Ok(DnsReply {
        query_name,
        answer_ips,
        timestamp,
    })
}

/// One answer record for [`encode_reply`].
#[derive(Debug, Clone, PartialEq)]
pub enum Answer<'a> {
    A(&'a str, Ipv4Addr),
    Cname(&'a str, &'a str),
    Aaaa(&'a str, [u8; 16]),
}

fn push_name(out: &mut Vec<u8>, name: &str) -> Result<(), DnsError> {
    let name = name.strip_suffix('.').unwrap_or(name);
    if name.is_empty() || name.len() > MAX_NAME_LEN {
        return Err(DnsError::InvalidName);
    }
    for label in name.split('.') {
        if label.is_empty() || label.len() > 63 || !label.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(DnsError::InvalidName);
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
    Ok(())
}

/// Encodes an uncompressed response to an A query for `query_name`.
pub fn encode_reply(id: u16, query_name: &str, answers: &[Answer<'_>]) -> Result<Vec<u8>, DnsError> {
    let mut out = Vec::with_capacity(64 + answers.len() * 32);
    out.extend_from_slice(&id.to_be_bytes());
    // QR=1, RD=1, RA=1
    out.extend_from_slice(&0x8180u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(answers.len() as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    push_name(&mut out, query_name)?;
    out.extend_from_slice(&TYPE_A.to_be_bytes());
    out.extend_from_slice(&CLASS_IN.to_be_bytes());
    for answer in answers {
        let (owner, rtype, rdata): (&str, u16, Vec<u8>) = match answer {
            Answer::A(owner, ip) => (owner, TYPE_A, ip.octets().to_vec()),
            Answer::Cname(owner, target) => {
                let mut rd = Vec::new();
                push_name(&mut rd, target)?;
                (owner, TYPE_CNAME, rd)
            }
            Answer::Aaaa(owner, addr) => (owner, TYPE_AAAA, addr.to_vec()),
        };
        push_name(&mut out, owner)?;
        out.extend_from_slice(&rtype.to_be_bytes());
        out.extend_from_slice(&CLASS_IN.to_be_bytes());
        out.extend_from_slice(&300u32.to_be_bytes());
        out.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        out.extend_from_slice(&rdata);
    }
    Ok(out)
}

/// Encodes a plain reply resolving `name` to `ips`.
pub fn encode_a_reply(id: u16, name: &str, ips: &[Ipv4Addr]) -> Result<Vec<u8>, DnsError> {
    let answers: Vec<Answer<'_>> = ips.iter().map(|ip| Answer::A(name, *ip)).collect();
    encode_reply(id, name, &answers)
}
