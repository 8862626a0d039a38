//! In-process, tick-synchronous publish/subscribe.
//!
//! Messages published during tick `t` are held until [`Bus::drain_tick`] is
//! called for `t`, which orders them by `(t, topic, seq)` and fans them out to
//! every matching subscription. Consumers read them at the start of tick
//! `t + 1`.
//!
//! Observers outside the tick loop (recorder, UI bridge) attach as
//! [`BusTap`]s and receive each tick's delivered envelopes.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::msg::{Message, TypeTag};

/// Receives a copy of every envelope delivered at the end of each tick.
pub trait BusTap: Send {
    fn on_tick(&mut self, tick: u64, delivered: &[Envelope]);
}

/// A delivered message.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: Arc<str>,
    /// Tick of publication.
    pub t: u64,
    /// Per-topic sequence number, starting at 0.
    pub seq: u32,
    pub payload: Arc<Message>,
}

impl Envelope {
    pub fn type_tag(&self) -> TypeTag {
        self.payload.type_tag()
    }
}

/// Checks `(/[A-Za-z0-9_]+)+`.
pub fn is_valid_topic(name: &str) -> bool {
    name.starts_with('/') && name[1..].split('/').all(|seg| !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'))
}

/// An exact topic name, or one where whole segments are `+` wildcards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicPattern {
    raw: String,
    segments: Vec<Option<String>>,
}

impl TopicPattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        if !pattern.starts_with('/') {
            return Err(Error::BadTopic(pattern.into()));
        }
        let segments = pattern[1..]
            .split('/')
            .map(|seg| match seg {
                "+" => Ok(None),
                s if !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') => Ok(Some(s.to_string())),
                _ => Err(Error::BadTopic(pattern.into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            raw: pattern.to_string(),
            segments,
        })
    }

    pub fn matches(&self, topic: &str) -> bool {
        let mut parts = topic[1..].split('/');
        for seg in &self.segments {
            match (seg, parts.next()) {
                (_, None) => return false,
                (Some(want), Some(got)) if want != got => return false,
                _ => {}
            }
        }
        parts.next().is_none()
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

#[derive(Debug, Clone)]
pub struct Publisher {
    topic: Arc<str>,
    tag: TypeTag,
}

impl Publisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }
    pub fn type_tag(&self) -> TypeTag {
        self.tag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriptionId(usize);

struct TopicInfo {
    name: Arc<str>,
    tag: TypeTag,
    next_seq: u32,
}

struct Subscription {
    pattern: TopicPattern,
    /// Only envelopes published at or after this publish index are delivered.
    since: u64,
    inbox: Vec<Envelope>,
}

struct Pending {
    index: u64,
    envelope: Envelope,
}

#[derive(Default)]
pub struct Bus {
    topics: BTreeMap<Arc<str>, TopicInfo>,
    subs: Vec<Option<Subscription>>,
    pending: Vec<Pending>,
    publish_count: u64,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a topic with a message type; re-advertising with the same
    /// type shares the stream.
    pub fn advertise(&mut self, topic: &str, tag: TypeTag) -> Result<Publisher> {
        if !is_valid_topic(topic) {
            return Err(Error::BadTopic(topic.into()));
        }
        if let Some(info) = self.topics.get(topic) {
            if info.tag != tag {
                return Err(Error::TopicTypeConflict {
                    topic: topic.into(),
                    existing: info.tag,
                    requested: tag,
                });
            }
            return Ok(Publisher {
                topic: info.name.clone(),
                tag,
            });
        }
        let name: Arc<str> = Arc::from(topic);
        self.topics.insert(
            name.clone(),
            TopicInfo {
                name: name.clone(),
                tag,
                next_seq: 0,
            },
        );
        Ok(Publisher { topic: name, tag })
    }

    pub fn topic_type(&self, topic: &str) -> Option<TypeTag> {
        self.topics.get(topic).map(|i| i.tag)
    }

    pub fn topics(&self) -> impl Iterator<Item = (&str, TypeTag)> {
        self.topics.values().map(|i| (&*i.name, i.tag))
    }

    pub fn subscribe(&mut self, pattern: &str) -> Result<SubscriptionId> {
        let pattern = TopicPattern::parse(pattern)?;
        self.subs.push(Some(Subscription {
            pattern,
            since: self.publish_count,
            inbox: Vec::new(),
        }));
        Ok(SubscriptionId(self.subs.len() - 1))
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) {
        if let Some(slot) = self.subs.get_mut(id.0) {
            *slot = None;
        }
    }

    /// Queues `payload` for delivery at the end of tick `t`.
    pub fn publish(&mut self, publisher: &Publisher, payload: Message, t: u64) -> Result<()> {
        self.publish_shared(publisher, Arc::new(payload), t)
    }

    pub fn publish_shared(&mut self, publisher: &Publisher, payload: Arc<Message>, t: u64) -> Result<()> {
        if payload.type_tag() != publisher.tag {
            return Err(Error::TopicTypeConflict {
                topic: publisher.topic.to_string(),
                existing: publisher.tag,
                requested: payload.type_tag(),
            });
        }
        let info = self
            .topics
            .get_mut(&*publisher.topic)
            .expect("publisher topics are registered");
        let seq = info.next_seq;
        info.next_seq += 1;
        self.pending.push(Pending {
            index: self.publish_count,
            envelope: Envelope {
                topic: publisher.topic.clone(),
                t,
                seq,
                payload,
            },
        });
        self.publish_count += 1;
        Ok(())
    }

    /// Closes tick `t`: returns everything published at or before `t` in
    /// `(t, topic, seq)` order and hands copies to matching subscriptions.
    pub fn drain_tick(&mut self, t: u64) -> Vec<Envelope> {
        let (mut pending, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|p| p.envelope.t <= t);
        self.pending = later;
        pending.sort_by(|a, b| {
            (a.envelope.t, &a.envelope.topic, a.envelope.seq).cmp(&(b.envelope.t, &b.envelope.topic, b.envelope.seq))
        });
        for sub in self.subs.iter_mut().flatten() {
            for p in &pending {
                if p.index >= sub.since && sub.pattern.matches(&p.envelope.topic) {
                    sub.inbox.push(p.envelope.clone());
                }
            }
        }
        pending.into_iter().map(|p| p.envelope).collect()
    }

    /// Takes the envelopes delivered to `id` since the last call.
    pub fn take(&mut self, id: SubscriptionId) -> Vec<Envelope> {
        self.subs
            .get_mut(id.0)
            .and_then(Option::as_mut)
            .map(|s| std::mem::take(&mut s.inbox))
            .unwrap_or_default()
    }
}
