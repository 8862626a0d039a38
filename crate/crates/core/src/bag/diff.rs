use std::fmt;

use super::Bag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Outcome of comparing two bags record by record. Header fields such as
/// the seed are not compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffReport {
    Equal,
    /// Record `index` differs in topic, time or payload.
    Diverged {
        index: usize,
        topic_a: String,
        topic_b: String,
        offset_a: u64,
        offset_b: u64,
    },
    /// One bag is a strict prefix of the other; `longer` has extra records
    /// starting at `index`.
    MissingSuffix {
        longer: Side,
        index: usize,
        topic: String,
        offset: u64,
    },
}

impl DiffReport {
    pub fn is_equal(&self) -> bool {
        matches!(self, DiffReport::Equal)
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffReport::Equal => write!(f, "equal"),
            DiffReport::Diverged {
                index,
                topic_a,
                topic_b,
                offset_a,
                offset_b,
            } => {
                write!(f, "first divergence at record {index}: ")?;
                if topic_a == topic_b {
                    write!(f, "`{topic_a}`")?;
                } else {
                    write!(f, "`{topic_a}` vs `{topic_b}`")?;
                }
                write!(f, " (byte offset {offset_a} in a, {offset_b} in b)")
            }
            DiffReport::MissingSuffix {
                longer,
                index,
                topic,
                offset,
            } => {
                let (long, short) = match longer {
                    Side::A => ("a", "b"),
                    Side::B => ("b", "a"),
                };
                write!(
                    f,
                    "{short} ends after {index} records; {long} continues with `{topic}` at byte offset {offset}"
                )
            }
        }
    }
}

/// Finds the first record where the two bags disagree on topic name,
/// timestamp or payload bytes.
pub fn diff(a: &Bag, b: &Bag) -> DiffReport {
    let offsets_a = a.record_offsets();
    let offsets_b = b.record_offsets();
    for (index, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        let topic_a = &a.topic(ra.topic_id).name;
        let topic_b = &b.topic(rb.topic_id).name;
        if topic_a != topic_b || ra.t != rb.t || ra.payload != rb.payload {
            return DiffReport::Diverged {
                index,
                topic_a: topic_a.to_string(),
                topic_b: topic_b.to_string(),
                offset_a: offsets_a[index],
                offset_b: offsets_b[index],
            };
        }
    }
    let (longer, bag, offsets) = match a.records.len().cmp(&b.records.len()) {
        std::cmp::Ordering::Equal => return DiffReport::Equal,
        std::cmp::Ordering::Greater => (Side::A, a, offsets_a),
        std::cmp::Ordering::Less => (Side::B, b, offsets_b),
    };
    let index = a.records.len().min(b.records.len());
    DiffReport::MissingSuffix {
        longer,
        index,
        topic: bag.topic(bag.records[index].topic_id).name.to_string(),
        offset: offsets[index],
    }
}
