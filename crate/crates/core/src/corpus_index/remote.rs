//! Client for a remote phrase-count service (PhraseFinder-style HTTP GET).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::external::ExternalFreqTable;

/// Anything that can answer "how often does this phrase occur".
/// `None` means the count is unknown (not zero).
pub trait NgramCountSource: Sync {
    fn ngram_count(&self, phrase: &str) -> Option<f64>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteNgramConfig {
    pub endpoint: String,
    /// Query parameter carrying the phrase.
    pub query_param: String,
    /// Extra fixed query parameters, e.g. corpus selection.
    pub extra_params: Vec<(String, String)>,
    /// JSON field holding the match count; searched recursively.
    pub count_field: String,
    pub cache_path: Option<PathBuf>,
    pub offline: bool,
    pub min_interval_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RemoteNgramConfig {
    fn default() -> Self {
        RemoteNgramConfig {
            endpoint: "https://api.phrasefinder.io/search".into(),
            query_param: "query".into(),
            extra_params: vec![("corpus".into(), "eng-us".into())],
            count_field: "mc".into(),
            cache_path: None,
            offline: true,
            min_interval_ms: 100,
            max_attempts: 3,
            backoff_base_ms: 250,
            timeout_ms: 10_000,
        }
    }
}

enum Attempt {
    Count(f64),
    Retry(String),
    GiveUp(String),
}

/// Cached, rate-limited phrase-count client. Lookups go cache, then local
/// table, then network (unless offline). Failures become `None` with a
/// warning and never abort a batch.
pub struct RemoteNgramClient {
    config: RemoteNgramConfig,
    local: Option<ExternalFreqTable>,
    agent: ureq::Agent,
    cache: RwLock<HashMap<String, f64>>,
    cache_writer: Mutex<Option<File>>,
    last_request: Mutex<Option<Instant>>,
    network_calls: AtomicUsize,
}

impl RemoteNgramClient {
    pub fn new(config: RemoteNgramConfig, local: Option<ExternalFreqTable>) -> Result<Self> {
        let mut cache = HashMap::new();
        let mut writer = None;
        if let Some(path) = &config.cache_path {
            if path.exists() {
                let f = File::open(path).map_err(|e| Error::io(path, e))?;
                for line in BufReader::new(f).lines() {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if let Some((phrase, count)) = line.rsplit_once('\t') {
                        if let Ok(c) = count.parse::<f64>() {
                            cache.insert(phrase.to_string(), c);
                        }
                    }
                }
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writer = Some(f);
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(RemoteNgramClient {
            config,
            local,
            agent,
            cache: RwLock::new(cache),
            cache_writer: Mutex::new(writer),
            last_request: Mutex::new(None),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// Number of HTTP requests issued so far.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn lookup(&self, phrase: &str) -> Option<f64> {
        if let Some(&c) = self.cache.read().unwrap().get(phrase) {
            return Some(c);
        }
        if let Some(t) = &self.local {
            if let Some(r) = t.get(phrase) {
                return Some(r[0]);
            }
        }
        if self.config.offline {
            return None;
        }
        let count = self.fetch(phrase)?;
        self.remember(phrase, count);
        Some(count)
    }

    fn remember(&self, phrase: &str, count: f64) {
        self.cache.write().unwrap().insert(phrase.to_string(), count);
        let mut writer = self.cache_writer.lock().unwrap();
        if let Some(f) = writer.as_mut() {
            if let Err(e) = writeln!(f, "{phrase}\t{count}") {
                log::warn!("could not persist n-gram cache entry: {e}");
            }
        }
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap();
        let interval = Duration::from_millis(self.config.min_interval_ms);
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch(&self, phrase: &str) -> Option<f64> {
        let attempts = self.config.max_attempts.max(1);
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.try_once(phrase) {
                Attempt::Count(c) => return Some(c),
                Attempt::GiveUp(msg) => {
                    log::warn!("n-gram lookup for {phrase:?} abandoned: {msg}");
                    return None;
                }
                Attempt::Retry(msg) => {
                    log::debug!("n-gram lookup for {phrase:?} attempt {} failed: {msg}", attempt + 1);
                }
            }
        }
        log::warn!("n-gram lookup for {phrase:?} failed after {attempts} attempts");
        None
    }

    fn try_once(&self, phrase: &str) -> Attempt {
        self.throttle();
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.get(&self.config.endpoint);
        for (k, v) in &self.config.extra_params {
            req = req.query(k, v);
        }
        req = req.query(&self.config.query_param, phrase);
        match req.call() {
            Ok(resp) => match resp.into_string() {
                Ok(body) => match serde_json::from_str::<serde_json::Value>(&body) {
                    Ok(json) => Attempt::Count(find_number(&json, &self.config.count_field).unwrap_or(0.0)),
                    Err(e) => Attempt::Retry(format!("invalid JSON: {e}")),
                },
                Err(e) => Attempt::Retry(e.to_string()),
            },
            Err(ureq::Error::Status(429, _)) => Attempt::GiveUp("quota exceeded (HTTP 429)".into()),
            Err(ureq::Error::Status(code, _)) if code >= 500 => Attempt::Retry(format!("HTTP {code}")),
            Err(ureq::Error::Status(code, _)) => Attempt::GiveUp(format!("HTTP {code}")),
            Err(e) => Attempt::Retry(e.to_string()),
        }
    }
}

impl NgramCountSource for RemoteNgramClient {
    fn ngram_count(&self, phrase: &str) -> Option<f64> {
        self.lookup(phrase)
    }
}

/// Depth-first search for the first numeric value stored under `field`.
pub(crate) fn find_number(v: &serde_json::Value, field: &str) -> Option<f64> {
    match v {
        serde_json::Value::Object(map) => {
            if let Some(n) = map.get(field).and_then(|x| x.as_f64()) {
                return Some(n);
            }
            map.values().find_map(|x| find_number(x, field))
        }
        serde_json::Value::Array(items) => items.iter().find_map(|x| find_number(x, field)),
        _ => None,
    }
}

/// Depth-first search for the first string stored under `field`.
pub(crate) fn find_string(v: &serde_json::Value, field: &str) -> Option<String> {
    match v {
        serde_json::Value::Object(map) => {
            if let Some(s) = map.get(field).and_then(|x| x.as_str()) {
                return Some(s.to_string());
            }
            map.values().find_map(|x| find_string(x, field))
        }
        serde_json::Value::Array(items) => items.iter().find_map(|x| find_string(x, field)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn finds_nested_count_field() {
        let v = json!({"error": "NONE", "phrases": [{"tks": [], "mc": 42, "vc": 7}]});
        assert_eq!(find_number(&v, "mc"), Some(42.0));
        assert_eq!(find_number(&json!({"phrases": []}), "mc"), None);
    }

    #[test]
    fn offline_uncached_is_missing_and_local_table_answers() {
        let mut local = ExternalFreqTable::new(super::super::FreqSource::GoogleLocal, vec!["count".into()]);
        local.insert("a b", vec![4.0]).unwrap();
        let client = RemoteNgramClient::new(RemoteNgramConfig::default(), Some(local)).unwrap();
        assert_eq!(client.lookup("a b"), Some(4.0));
        assert_eq!(client.lookup("never seen"), None);
        assert_eq!(client.network_calls(), 0);
    }

    #[test]
    fn cache_file_is_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.tsv");
        std::fs::write(&cache, "the cat\t12\n").unwrap();
        let cfg = RemoteNgramConfig {
            cache_path: Some(cache),
            ..Default::default()
        };
        let client = RemoteNgramClient::new(cfg, None).unwrap();
        assert_eq!(client.lookup("the cat"), Some(12.0));
    }
}
