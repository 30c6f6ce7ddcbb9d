use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;

use crate::error::Result;
use crate::model::ForwardTrace;

pub const DEFAULT_CAPACITY: usize = 256;

/// LRU of corpus-sentence traces, shared across threads. Two threads missing
/// on the same sentence both compute it; the values are identical.
#[derive(Debug)]
pub struct TraceCache {
    entries: Option<Mutex<LruCache<usize, Arc<ForwardTrace>>>>,
    computed: AtomicUsize,
}

impl TraceCache {
    /// A capacity of 0 disables caching.
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c))),
            computed: AtomicUsize::new(0),
        }
    }

    pub fn get_or_compute(
        &self,
        sentence_id: usize,
        compute: impl FnOnce() -> Result<ForwardTrace>,
    ) -> Result<Arc<ForwardTrace>> {
        if let Some(entries) = &self.entries {
            if let Some(hit) = entries.lock().expect("cache lock").get(&sentence_id) {
                return Ok(Arc::clone(hit));
            }
        }
        let trace = Arc::new(compute()?);
        self.computed.fetch_add(1, Ordering::Relaxed);
        if let Some(entries) = &self.entries {
            entries
                .lock()
                .expect("cache lock")
                .put(sentence_id, Arc::clone(&trace));
        }
        Ok(trace)
    }

    /// Number of forward passes run on behalf of this cache.
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }
}

impl Default for TraceCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}
