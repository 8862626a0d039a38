//! `.catbag` recording, playback and comparison.
//!
//! A bag is a header, a topic table and a run of records, closed by a
//! footer that carries the record count and a completion flag:
//!
//! ```text
//! "CATB" version:u16 seed:u64 step:f64
//! topic_count:u32 { id:u32 name_len:u32 name tag:u8 }*
//! { topic_id:u32 t:u64 seq:u32 len:u32 payload }*
//! "CATF" record_count:u64 status:u8
//! ```
//!
//! Everything is little-endian. Payloads use the layouts in [`crate::msg`].

mod diff;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

pub use diff::{diff, DiffReport, Side};
pub use replay::{play, replay_into_bag, BagRecorder};

use crate::bus::Envelope;
use crate::msg::{DecodeError, Message, TypeTag};

pub const MAGIC: [u8; 4] = *b"CATB";
pub const FOOTER_MAGIC: [u8; 4] = *b"CATF";
pub const VERSION: u16 = 1;

const HEADER_LEN: u64 = 4 + 2 + 8 + 8;
const RECORD_HEADER_LEN: u64 = 4 + 8 + 4 + 4;
const FOOTER_LEN: u64 = 4 + 8 + 1;

#[derive(Debug, thiserror::Error)]
pub enum BagError {
    #[error("not a catbag file")]
    BadMagic,
    #[error("unsupported bag format version {0}")]
    UnsupportedVersion(u16),
    /// `offset` is the end of the last intact structure.
    #[error("corrupt bag after byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("bag truncated: last valid byte offset {offset}, {records} intact records")]
    Truncated { offset: u64, records: u64 },
    #[error("record {index} on `{topic}` does not decode: {source}")]
    Payload {
        index: usize,
        topic: String,
        source: DecodeError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum BagStatus {
    Complete = 0,
    /// The recording was cut short, for example by a strict-mode fault.
    Partial = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicEntry {
    pub id: u32,
    pub name: Arc<str>,
    pub tag: TypeTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagRecord {
    pub topic_id: u32,
    pub t: u64,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl BagRecord {
    fn encoded_len(&self) -> u64 {
        RECORD_HEADER_LEN + self.payload.len() as u64
    }
}

/// An in-memory bag.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub version: u16,
    pub seed: u64,
    pub step: f64,
    pub topics: Vec<TopicEntry>,
    pub records: Vec<BagRecord>,
    pub status: BagStatus,
    ids: BTreeMap<Arc<str>, u32>,
}

impl Bag {
    pub fn new(seed: u64, step: f64) -> Self {
        Self {
            version: VERSION,
            seed,
            step,
            topics: Vec::new(),
            records: Vec::new(),
            status: BagStatus::Complete,
            ids: BTreeMap::new(),
        }
    }

    /// Returns the id of `topic`, adding it to the table on first use.
    pub fn topic_id(&mut self, topic: &Arc<str>, tag: TypeTag) -> u32 {
        if let Some(&id) = self.ids.get(topic) {
            return id;
        }
        let id = self.topics.len() as u32;
        self.topics.push(TopicEntry {
            id,
            name: topic.clone(),
            tag,
        });
        self.ids.insert(topic.clone(), id);
        id
    }

    pub fn push(&mut self, env: &Envelope) {
        let topic_id = self.topic_id(&env.topic, env.type_tag());
        self.records.push(BagRecord {
            topic_id,
            t: env.t,
            seq: env.seq,
            payload: env.payload.encode(),
        });
    }

    pub fn topic(&self, id: u32) -> &TopicEntry {
        &self.topics[id as usize]
    }

    /// Decodes record `index`.
    pub fn message(&self, index: usize) -> Result<Message, BagError> {
        let rec = &self.records[index];
        let entry = self.topic(rec.topic_id);
        Message::decode(entry.tag, &rec.payload, self.step).map_err(|source| BagError::Payload {
            index,
            topic: entry.name.to_string(),
            source,
        })
    }

    /// Decodes every record into an envelope, in file order.
    pub fn envelopes(&self) -> Result<Vec<Envelope>, BagError> {
        (0..self.records.len())
            .map(|i| {
                let rec = &self.records[i];
                Ok(Envelope {
                    topic: self.topic(rec.topic_id).name.clone(),
                    t: rec.t,
                    seq: rec.seq,
                    payload: Arc::new(self.message(i)?),
                })
            })
            .collect()
    }

    /// Byte offset of each record in the serialized file.
    pub fn record_offsets(&self) -> Vec<u64> {
        let mut at = HEADER_LEN + 4 + self.topics.iter().map(|t| 4 + 4 + t.name.len() as u64 + 1).sum::<u64>();
        self.records
            .iter()
            .map(|r| {
                let here = at;
                at += r.encoded_len();
                here
            })
            .collect()
    }

    /// Offset just past the last record, where the footer starts.
    pub fn records_end(&self) -> u64 {
        self.record_offsets()
            .last()
            .zip(self.records.last())
            .map_or_else(
                || HEADER_LEN + 4 + self.topics.iter().map(|t| 9 + t.name.len() as u64).sum::<u64>(),
                |(o, r)| o + r.encoded_len(),
            )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.records_end() as usize + FOOTER_LEN as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.topics.len() as u32).to_le_bytes());
        for t in &self.topics {
            out.extend_from_slice(&t.id.to_le_bytes());
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.tag as u8);
        }
        for r in &self.records {
            out.extend_from_slice(&r.topic_id.to_le_bytes());
            out.extend_from_slice(&r.t.to_le_bytes());
            out.extend_from_slice(&r.seq.to_le_bytes());
            out.extend_from_slice(&(r.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&r.payload);
        }
        out.extend_from_slice(&FOOTER_MAGIC);
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.push(self.status as u8);
        out
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), BagError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Parses a complete bag. Any damage is an error naming the last valid
    /// offset.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BagError> {
        match Self::recover(bytes)? {
            (bag, None) => Ok(bag),
            (_, Some(err)) => Err(err),
        }
    }

    /// Parses as much as possible. Returns the intact prefix together with
    /// the error that stopped parsing, if any. Header damage is fatal.
    pub fn recover(bytes: &[u8]) -> Result<(Self, Option<BagError>), BagError> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        let magic = c.take(4).ok_or(BagError::BadMagic)?;
        if magic != MAGIC {
            return Err(BagError::BadMagic);
        }
        let version = c.u16().ok_or(BagError::Truncated { offset: 0, records: 0 })?;
        if version != VERSION {
            return Err(BagError::UnsupportedVersion(version));
        }
        let (seed, step) = match (c.u64(), c.f64()) {
            (Some(s), Some(t)) => (s, t),
            _ => return Err(BagError::Truncated { offset: 0, records: 0 }),
        };
        let mut bag = Bag::new(seed, step);
        let header_end = c.pos as u64;
        let truncated = |offset| BagError::Truncated { offset, records: 0 };
        let count = c.u32().ok_or(truncated(header_end))?;
        for expected in 0..count {
            let start = c.pos as u64;
            let id = c.u32().ok_or(truncated(start))?;
            let len = c.u32().ok_or(truncated(start))? as usize;
            let name = c.take(len).ok_or(truncated(start))?;
            let tag = c.u8().ok_or(truncated(start))?;
            let corrupt = |reason: String| BagError::Corrupt { offset: start, reason };
            if id != expected {
                return Err(corrupt(format!("topic id {id} out of order, expected {expected}")));
            }
            let name = std::str::from_utf8(name).map_err(|e| corrupt(e.to_string()))?;
            if !crate::bus::is_valid_topic(name) {
                return Err(corrupt(format!("malformed topic name `{name}`")));
            }
            let tag = TypeTag::from_u8(tag).ok_or_else(|| corrupt(format!("unknown type tag {tag}")))?;
            let name: Arc<str> = Arc::from(name);
            if bag.ids.contains_key(&name) {
                return Err(corrupt(format!("topic `{name}` listed twice")));
            }
            bag.topic_id(&name, tag);
        }

        loop {
            let start = c.pos as u64;
            let n = bag.records.len() as u64;
            let truncated = BagError::Truncated { offset: start, records: n };
            if c.remaining() >= 4 && c.peek(4) == Some(&FOOTER_MAGIC[..]) {
                c.take(4);
                let (Some(declared), Some(status)) = (c.u64(), c.u8()) else {
                    return Ok((bag, Some(truncated)));
                };
                let corrupt = |reason: String| BagError::Corrupt { offset: start, reason };
                let status = match status {
                    0 => BagStatus::Complete,
                    1 => BagStatus::Partial,
                    s => return Ok((bag, Some(corrupt(format!("unknown status byte {s}"))))),
                };
                bag.status = status;
                if declared != n {
                    return Ok((bag, Some(corrupt(format!("footer declares {declared} records, found {n}")))));
                }
                if c.remaining() != 0 {
                    let extra = c.remaining();
                    return Ok((bag, Some(corrupt(format!("{extra} bytes after footer")))));
                }
                return Ok((bag, None));
            }
            let Some(topic_id) = c.u32() else {
                return Ok((bag, Some(truncated)));
            };
            let (Some(t), Some(seq), Some(len)) = (c.u64(), c.u32(), c.u32()) else {
                return Ok((bag, Some(truncated)));
            };
            let Some(payload) = c.take(len as usize) else {
                return Ok((bag, Some(truncated)));
            };
            if topic_id as usize >= bag.topics.len() {
                let err = BagError::Corrupt {
                    offset: start,
                    reason: format!("record names unknown topic id {topic_id}"),
                };
                return Ok((bag, Some(err)));
            }
            if let Some(prev) = bag.records.last() {
                let key = |r: &BagRecord| (r.t, bag.topics[r.topic_id as usize].name.clone(), r.seq);
                let here = (t, bag.topics[topic_id as usize].name.clone(), seq);
                if key(prev) >= here {
                    let err = BagError::Corrupt {
                        offset: start,
                        reason: format!("record at t={t} on `{}` is out of order", here.1),
                    };
                    return Ok((bag, Some(err)));
                }
            }
            bag.records.push(BagRecord {
                topic_id,
                t,
                seq,
                payload: payload.to_vec(),
            });
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, BagError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn info(&self) -> BagInfo {
        let mut counts = vec![0u64; self.topics.len()];
        for r in &self.records {
            counts[r.topic_id as usize] += 1;
        }
        let span = match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0, 0),
        };
        BagInfo {
            version: self.version,
            seed: self.seed,
            step: self.step,
            status: self.status,
            records: self.records.len() as u64,
            first_tick: span.0,
            last_tick: span.1,
            topics: self
                .topics
                .iter()
                .zip(counts)
                .map(|(t, n)| (t.name.to_string(), t.tag, n))
                .collect(),
        }
    }
}

/// Summary printed by `catsim info`.
#[derive(Debug, Clone, PartialEq)]
pub struct BagInfo {
    pub version: u16,
    pub seed: u64,
    pub step: f64,
    pub status: BagStatus,
    pub records: u64,
    pub first_tick: u64,
    pub last_tick: u64,
    /// Name, type and record count, in table order.
    pub topics: Vec<(String, TypeTag, u64)>,
}

impl fmt::Display for BagInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format version: {}", self.version)?;
        writeln!(f, "seed:           {}", self.seed)?;
        writeln!(f, "step:           {} s", self.step)?;
        writeln!(f, "status:         {:?}", self.status)?;
        writeln!(f, "records:        {}", self.records)?;
        writeln!(
            f,
            "time span:      {:.3} s .. {:.3} s",
            self.first_tick as f64 * self.step,
            self.last_tick as f64 * self.step
        )?;
        writeln!(f, "topics:")?;
        for (name, tag, n) in &self.topics {
            writeln!(f, "  {name:<24} {:<16} {n}", format!("{tag:?}"))?;
        }
        Ok(())
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn peek(&self, n: usize) -> Option<&'a [u8]> {
        self.buf.get(self.pos..self.pos + n)
    }
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}
