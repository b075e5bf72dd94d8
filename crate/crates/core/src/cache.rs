//! Time-to-live memo table used by cacher nodes.
//!
//! Time is passed in by the caller as a [`Duration`] since any fixed origin,
//! which keeps this module free of clocks. Expiry is lazy: a stale entry
//! stays until it is overwritten.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use serde_json::Value;

use crate::json;
use crate::value::{ArgValue, HandlePolicy, ValueError};

/// `(method, canonical JSON of the argument list)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub method: String,
    pub args: Vec<u8>,
}

impl CacheKey {
    pub fn new(method: &str, args: &[ArgValue]) -> Result<Self, ValueError> {
        let args = args
            .iter()
            .map(|a| a.to_json(HandlePolicy::Reject))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CacheKey {
            method: method.into(),
            args: json::to_vec(&Value::Array(args)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ttl {
    Finite(Duration),
    Forever,
}

impl Ttl {
    /// `None` means forever; otherwise seconds, which must be finite and
    /// nonnegative.
    pub fn from_secs(secs: Option<f64>) -> Option<Ttl> {
        match secs {
            None => Some(Ttl::Forever),
            Some(s) if s.is_infinite() && s > 0.0 => Some(Ttl::Forever),
            Some(s) if s >= 0.0 => Duration::try_from_secs_f64(s).ok().map(Ttl::Finite),
            Some(_) => None,
        }
    }

    fn is_fresh(self, age: Duration) -> bool {
        match self {
            Ttl::Forever => true,
            Ttl::Finite(ttl) => age < ttl,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry<V> {
    pub value: V,
    pub fetched_at: Duration,
}

#[derive(Debug, Clone)]
pub struct TtlCache<V> {
    ttl: Ttl,
    entries: BTreeMap<CacheKey, CacheEntry<V>>,
}

impl<V> TtlCache<V> {
    pub fn new(ttl: Ttl) -> Self {
        TtlCache {
            ttl,
            entries: BTreeMap::new(),
        }
    }

    pub fn ttl(&self) -> Ttl {
        self.ttl
    }

    /// The entry for `key` if `now - fetched_at < ttl`.
    pub fn get(&self, key: &CacheKey, now: Duration) -> Option<&CacheEntry<V>> {
        self.entries
            .get(key)
            .filter(|e| self.ttl.is_fresh(now.saturating_sub(e.fetched_at)))
    }

    pub fn insert(&mut self, key: CacheKey, value: V, fetched_at: Duration) {
        self.entries.insert(key, CacheEntry { value, fetched_at });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
