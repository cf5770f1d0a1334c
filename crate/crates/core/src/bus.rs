//! In-process topic bus.
//!
//! Every module talks to every other module only through named topics.
//! A topic is either a bounded `Stream` (per-subscriber FIFO, oldest entry
//! dropped on overflow) or `Latest` (each subscriber holds at most the most
//! recent undelivered envelope). The bus is a cheap `Clone` handle over a
//! mutex, so the same instance serves the lockstep scheduler and threaded
//! workers alike.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::ops::Deref;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual (or wall) time in milliseconds.
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicMode {
    Stream { capacity: usize },
    Latest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicSpec {
    pub name: String,
    pub mode: TopicMode,
}

impl TopicSpec {
    pub fn stream(name: impl Into<String>, capacity: usize) -> Self {
        Self {
            name: name.into(),
            mode: TopicMode::Stream { capacity },
        }
    }

    pub fn latest(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            mode: TopicMode::Latest,
        }
    }

    fn capacity(&self) -> usize {
        match self.mode {
            TopicMode::Stream { capacity } => capacity,
            TopicMode::Latest => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{0}` is already registered")]
    DuplicateTopic(String),
    #[error("invalid spec for topic `{0}`: stream capacity must be positive")]
    InvalidCapacity(String),
    #[error("`{producer}` published on `{topic}` at {ts} ms after {last} ms")]
    TimeRegression {
        topic: String,
        producer: String,
        last: Millis,
        ts: Millis,
    },
    #[error("`{subscriber}` is already subscribed to `{topic}`")]
    DuplicateSubscription { topic: String, subscriber: String },
    #[error("subscription {id} on `{topic}` is no longer valid")]
    StaleSubscription { topic: String, id: u64 },
}

/// Immutable, timestamped, sequence-numbered message.
pub struct Envelope<P> {
    pub topic: Arc<str>,
    pub seq: u64,
    pub ts: Millis,
    pub producer: Arc<str>,
    payload: Arc<P>,
}

impl<P> Envelope<P> {
    pub fn payload(&self) -> &P {
        &self.payload
    }
}

impl<P> Clone for Envelope<P> {
    fn clone(&self) -> Self {
        Self {
            topic: Arc::clone(&self.topic),
            seq: self.seq,
            ts: self.ts,
            producer: Arc::clone(&self.producer),
            payload: Arc::clone(&self.payload),
        }
    }
}

impl<P> Deref for Envelope<P> {
    type Target = P;

    fn deref(&self) -> &P {
        &self.payload
    }
}

impl<P: fmt::Debug> fmt::Debug for Envelope<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Envelope")
            .field("topic", &self.topic)
            .field("seq", &self.seq)
            .field("ts", &self.ts)
            .field("producer", &self.producer)
            .field("payload", &self.payload)
            .finish()
    }
}

/// Handle returned by [`Bus::subscribe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    topic: Arc<str>,
    id: u64,
    subscriber: Arc<str>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn subscriber(&self) -> &str {
        &self.subscriber
    }
}

type Recorder<P> = Box<dyn FnMut(&Envelope<P>) + Send>;

struct SubscriberQueue<P> {
    id: u64,
    subscriber: Arc<str>,
    queue: VecDeque<Envelope<P>>,
    dropped: u64,
}

struct TopicState<P> {
    spec: TopicSpec,
    name: Arc<str>,
    next_seq: u64,
    last_ts: HashMap<Arc<str>, Millis>,
    subscribers: Vec<SubscriberQueue<P>>,
    latest: Option<Envelope<P>>,
}

struct BusInner<P> {
    topics: BTreeMap<String, TopicState<P>>,
    next_subscription: u64,
    recorder: Option<Recorder<P>>,
}

pub struct Bus<P> {
    inner: Arc<Mutex<BusInner<P>>>,
}

impl<P> Clone for Bus<P> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<P> Default for Bus<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Bus<P> {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(Mutex::new(BusInner {
                topics: BTreeMap::new(),
                next_subscription: 1,
                recorder: None,
            })),
        }
    }

    fn lock(&self) -> MutexGuard<'_, BusInner<P>> {
        // A panicking worker must not wedge every other worker.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register(&self, spec: TopicSpec) -> Result<(), BusError> {
        if spec.capacity() == 0 {
            return Err(BusError::InvalidCapacity(spec.name));
        }
        let mut inner = self.lock();
        if inner.topics.contains_key(&spec.name) {
            return Err(BusError::DuplicateTopic(spec.name));
        }
        let name: Arc<str> = Arc::from(spec.name.as_str());
        inner.topics.insert(
            spec.name.clone(),
            TopicState {
                spec,
                name,
                next_seq: 1,
                last_ts: HashMap::new(),
                subscribers: Vec::new(),
                latest: None,
            },
        );
        Ok(())
    }

    pub fn topic_spec(&self, topic: &str) -> Option<TopicSpec> {
        self.lock().topics.get(topic).map(|t| t.spec.clone())
    }

    /// Installs a hook that observes every envelope, in global publish
    /// order, while the bus lock is held.
    pub fn set_recorder(&self, recorder: impl FnMut(&Envelope<P>) + Send + 'static) {
        self.lock().recorder = Some(Box::new(recorder));
    }

    pub fn clear_recorder(&self) {
        self.lock().recorder = None;
    }

    pub fn publish(
        &self,
        topic: &str,
        producer: &str,
        ts: Millis,
        payload: P,
    ) -> Result<u64, BusError> {
        let mut guard = self.lock();
        let inner = &mut *guard;
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;

        let producer_key = match state.last_ts.get_key_value(producer) {
            Some((key, &last)) => {
                if ts < last {
                    return Err(BusError::TimeRegression {
                        topic: topic.to_string(),
                        producer: producer.to_string(),
                        last,
                        ts,
                    });
                }
                Arc::clone(key)
            }
            None => Arc::from(producer),
        };
        state.last_ts.insert(Arc::clone(&producer_key), ts);

        let seq = state.next_seq;
        state.next_seq += 1;
        let envelope = Envelope {
            topic: Arc::clone(&state.name),
            seq,
            ts,
            producer: producer_key,
            payload: Arc::new(payload),
        };

        let capacity = state.spec.capacity();
        for sub in &mut state.subscribers {
            if sub.queue.len() >= capacity {
                sub.queue.pop_front();
                sub.dropped += 1;
            }
            sub.queue.push_back(envelope.clone());
        }
        if let Some(recorder) = inner.recorder.as_mut() {
            recorder(&envelope);
        }
        state.latest = Some(envelope);
        Ok(seq)
    }

    pub fn subscribe(&self, topic: &str, subscriber: &str) -> Result<Subscription, BusError> {
        let mut guard = self.lock();
        let inner = &mut *guard;
        let id = inner.next_subscription;
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        if state
            .subscribers
            .iter()
            .any(|s| &*s.subscriber == subscriber)
        {
            return Err(BusError::DuplicateSubscription {
                topic: topic.to_string(),
                subscriber: subscriber.to_string(),
            });
        }
        let subscriber: Arc<str> = Arc::from(subscriber);
        state.subscribers.push(SubscriberQueue {
            id,
            subscriber: Arc::clone(&subscriber),
            queue: VecDeque::new(),
            dropped: 0,
        });
        inner.next_subscription += 1;
        Ok(Subscription {
            topic: Arc::clone(&state.name),
            id,
            subscriber,
        })
    }

    pub fn unsubscribe(&self, sub: &Subscription) -> Result<(), BusError> {
        let mut inner = self.lock();
        let state = inner
            .topics
            .get_mut(&*sub.topic)
            .ok_or_else(|| BusError::UnknownTopic(sub.topic.to_string()))?;
        let before = state.subscribers.len();
        state.subscribers.retain(|s| s.id != sub.id);
        if state.subscribers.len() == before {
            return Err(stale(sub));
        }
        Ok(())
    }

    /// Drains pending envelopes for `sub` in sequence order.
    pub fn poll(&self, sub: &Subscription) -> Result<Vec<Envelope<P>>, BusError> {
        let mut inner = self.lock();
        let queue = inner
            .topics
            .get_mut(&*sub.topic)
            .and_then(|t| t.subscribers.iter_mut().find(|s| s.id == sub.id))
            .ok_or_else(|| stale(sub))?;
        Ok(queue.queue.drain(..).collect())
    }

    /// Number of envelopes dropped from `sub`'s queue by overflow.
    pub fn dropped(&self, sub: &Subscription) -> Result<u64, BusError> {
        let inner = self.lock();
        inner
            .topics
            .get(&*sub.topic)
            .and_then(|t| t.subscribers.iter().find(|s| s.id == sub.id))
            .map(|s| s.dropped)
            .ok_or_else(|| stale(sub))
    }

    /// Most recent envelope ever published on `topic`, without consuming.
    pub fn latest(&self, topic: &str) -> Result<Option<Envelope<P>>, BusError> {
        let inner = self.lock();
        inner
            .topics
            .get(topic)
            .map(|t| t.latest.clone())
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))
    }
}

fn stale(sub: &Subscription) -> BusError {
    BusError::StaleSubscription {
        topic: sub.topic.to_string(),
        id: sub.id,
    }
}
