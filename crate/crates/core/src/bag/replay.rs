use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{Bag, BagError, BagStatus};
use crate::bus::{Bus, BusTap, Envelope, Publisher, TopicPattern};
use crate::error::{Error, Result};
use crate::pacing::Pacer;

/// Records bus traffic on a background thread.
///
/// The engine hands over each tick's envelopes through an unbounded
/// channel, so recording never drops and never blocks the tick loop.
/// The bag is assembled in memory and returned by [`finish`](Self::finish).
pub struct BagRecorder {
    patterns: Vec<TopicPattern>,
    tx: Option<Sender<Vec<Envelope>>>,
    worker: Option<JoinHandle<Bag>>,
}

impl BagRecorder {
    /// Records topics matching any of `patterns`; an empty list records
    /// everything.
    pub fn spawn(seed: u64, step: f64, patterns: &[&str]) -> Result<Self> {
        let patterns = patterns.iter().map(|p| TopicPattern::parse(p)).collect::<Result<Vec<_>>>()?;
        let (tx, rx) = channel::<Vec<Envelope>>();
        let worker = std::thread::Builder::new()
            .name("catsim-recorder".into())
            .spawn(move || {
                let mut bag = Bag::new(seed, step);
                for batch in rx {
                    for env in &batch {
                        bag.push(env);
                    }
                }
                bag
            })?;
        Ok(Self {
            patterns,
            tx: Some(tx),
            worker: Some(worker),
        })
    }

    fn wants(&self, topic: &str) -> bool {
        self.patterns.is_empty() || self.patterns.iter().any(|p| p.matches(topic))
    }

    /// Queues envelopes for recording.
    pub fn record(&mut self, delivered: &[Envelope]) {
        let batch: Vec<_> = delivered.iter().filter(|e| self.wants(&e.topic)).cloned().collect();
        if batch.is_empty() {
            return;
        }
        if let Some(tx) = &self.tx {
            // The worker only exits once the sender is dropped.
            let _ = tx.send(batch);
        }
    }

    /// Flushes the queue and returns the bag with the given status.
    pub fn finish(mut self, status: BagStatus) -> Result<Bag> {
        self.tx.take();
        let mut bag = self
            .worker
            .take()
            .expect("finish consumes the recorder")
            .join()
            .map_err(|_| Error::Domain("recorder thread panicked".into()))?;
        bag.status = status;
        Ok(bag)
    }
}

impl BusTap for BagRecorder {
    fn on_tick(&mut self, _tick: u64, delivered: &[Envelope]) {
        self.record(delivered);
    }
}

impl Drop for BagRecorder {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Republishes a bag's records on `bus` with their original timestamps.
///
/// Records sharing a tick are published together, then the tick is drained
/// and `on_tick` sees the delivered envelopes. With `rate > 0` each tick is
/// released when `(t − t_first)·step / rate` wall seconds have passed;
/// `rate == 0` plays as fast as possible. Returns the number of records
/// published.
pub fn play(bag: &Bag, rate: f64, bus: &mut Bus, mut on_tick: impl FnMut(u64, &[Envelope])) -> Result<usize> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParam {
            name: "rate",
            reason: format!("must be ≥ 0, got {rate}"),
        });
    }
    let mut publishers: BTreeMap<u32, Publisher> = BTreeMap::new();
    for entry in &bag.topics {
        publishers.insert(entry.id, bus.advertise(&entry.name, entry.tag)?);
    }
    let Some(first) = bag.records.first() else {
        return Ok(0);
    };
    let t0 = first.t;
    let pacer = Pacer::new(rate);
    let mut i = 0;
    while i < bag.records.len() {
        let t = bag.records[i].t;
        pacer.wait((t - t0) as f64 * bag.step);
        while i < bag.records.len() && bag.records[i].t == t {
            let msg = bag.message(i).map_err(Error::from)?;
            bus.publish_shared(&publishers[&bag.records[i].topic_id], Arc::new(msg), t)?;
            i += 1;
        }
        let delivered = bus.drain_tick(t);
        on_tick(t, &delivered);
    }
    Ok(bag.records.len())
}

/// Convenience for tests and tools: a bag's envelopes after a round trip
/// through a fresh bus.
pub fn replay_into_bag(bag: &Bag, seed: u64) -> Result<Bag, BagError> {
    let mut out = Bag::new(seed, bag.step);
    let mut bus = Bus::new();
    play(bag, 0.0, &mut bus, |_, envs| {
        for e in envs {
            out.push(e);
        }
    })
    .map_err(|e| match e {
        Error::Bag(b) => b,
        other => BagError::Corrupt {
            offset: 0,
            reason: other.to_string(),
        },
    })?;
    out.status = bag.status;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msg::{Message, TypeTag};
    use crate::types::{SimTime, VelocityCommand};
    use std::time::Instant;

    fn traffic(ticks: u64) -> Bag {
        let mut bus = Bus::new();
        let clock = bus.advertise("/clock", TypeTag::Clock).unwrap();
        let cmd = bus.advertise("/a/cmd_vel", TypeTag::VelocityCommand).unwrap();
        let mut bag = Bag::new(5, 0.001);
        for t in 1..=ticks {
            if t % 10 == 0 {
                let m = Message::VelocityCommand(VelocityCommand { v_set: t as f64, delta_set: 0.0 });
                bus.publish(&cmd, m, t).unwrap();
            }
            bus.publish(&clock, Message::Clock(SimTime { ticks: t, step: 0.001 }), t).unwrap();
            for e in bus.drain_tick(t) {
                bag.push(&e);
            }
        }
        bag
    }

    #[test]
    fn recorder_keeps_everything_in_order() {
        let mut bus = Bus::new();
        let clock = bus.advertise("/clock", TypeTag::Clock).unwrap();
        let mut rec = BagRecorder::spawn(1, 0.001, &[]).unwrap();
        for t in 1..=500 {
            bus.publish(&clock, Message::Clock(SimTime { ticks: t, step: 0.001 }), t).unwrap();
            rec.on_tick(t, &bus.drain_tick(t));
        }
        let bag = rec.finish(BagStatus::Complete).unwrap();
        assert_eq!(bag.records.len(), 500);
        assert!(bag.records.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn recorder_filters_by_pattern() {
        let bag = traffic(100);
        let mut rec = BagRecorder::spawn(1, 0.001, &["/+/cmd_vel"]).unwrap();
        let mut bus = Bus::new();
        play(&bag, 0.0, &mut bus, |t, envs| rec.on_tick(t, envs)).unwrap();
        let out = rec.finish(BagStatus::Complete).unwrap();
        assert_eq!(out.records.len(), 10);
        assert_eq!(out.topics.len(), 1);
        assert!(BagRecorder::spawn(1, 0.001, &["bad"]).is_err());
    }

    #[test]
    fn replay_round_trip_is_byte_identical() {
        let bag = traffic(300);
        let again = replay_into_bag(&bag, bag.seed).unwrap();
        assert_eq!(again.to_bytes(), bag.to_bytes());
        let other_seed = replay_into_bag(&bag, 77).unwrap();
        assert_eq!(other_seed.to_bytes()[14..], bag.to_bytes()[14..]);
    }

    #[test]
    fn empty_bag_plays() {
        let mut bus = Bus::new();
        let mut calls = 0;
        assert_eq!(play(&Bag::new(0, 0.001), 0.0, &mut bus, |_, _| calls += 1).unwrap(), 0);
        assert_eq!(calls, 0);
        assert!(play(&Bag::new(0, 0.001), -1.0, &mut bus, |_, _| {}).is_err());
    }

    #[test]
    fn rate_scales_wall_time() {
        // 0.5 simulated seconds at rate 2 should take about 0.25 s.
        let bag = traffic(500);
        let mut bus = Bus::new();
        let start = Instant::now();
        play(&bag, 2.0, &mut bus, |_, _| {}).unwrap();
        let wall = start.elapsed().as_secs_f64();
        let expected = (499.0 * 0.001) / 2.0;
        assert!((wall - expected).abs() < 0.1 * expected + 0.01, "{wall}");
    }
}
