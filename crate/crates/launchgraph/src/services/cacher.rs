use std::sync::Mutex;
use std::time::Instant;

use launchgraph_core::cache::{CacheKey, Ttl, TtlCache};
use launchgraph_core::ArgValue;

use crate::service::{MethodError, MethodResult, Service};
use crate::wire::Client;

/// Read-through memo in front of an upstream service. Entries are keyed by
/// method and canonical argument bytes and stamped with the time the
/// upstream request was sent, so a served value is never older than the ttl.
/// Concurrent misses on one key may each go upstream.
pub struct CacherService {
    upstream: Client,
    origin: Instant,
    cache: Mutex<TtlCache<ArgValue>>,
}

impl CacherService {
    pub fn new(upstream: Client, ttl: Ttl) -> Self {
        CacherService {
            upstream,
            origin: Instant::now(),
            cache: Mutex::new(TtlCache::new(ttl)),
        }
    }

    pub fn ttl(&self) -> Ttl {
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).ttl()
    }
}

impl Service for CacherService {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        let key = CacheKey::new(method, args).map_err(|e| MethodError(e.to_string()))?;
        {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(hit) = cache.get(&key, self.origin.elapsed()) {
                return Ok(hit.value.clone());
            }
        }
        let sent_at = self.origin.elapsed();
        let value = self.upstream.call(method, args.to_vec())?;
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, value.clone(), sent_at);
        Ok(value)
    }
}
