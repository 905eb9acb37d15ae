use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_index::find_string;
use crate::error::{Error, Result};

use super::{parse_bracketed, ParseTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserConfig {
    pub endpoint: String,
    /// Value of the `properties` query parameter, if any.
    pub properties: Option<String>,
    /// JSON field holding the bracketed tree; searched recursively.
    pub parse_field: String,
    pub precomputed_path: Option<PathBuf>,
    pub cache_path: Option<PathBuf>,
    pub offline: bool,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            endpoint: "http://localhost:9000/".into(),
            properties: Some(r#"{"annotators":"parse","outputFormat":"json","ssplit.isOneSentence":"true"}"#.into()),
            parse_field: "parse".into(),
            precomputed_path: None,
            cache_path: None,
            offline: true,
            max_attempts: 3,
            backoff_base_ms: 250,
            timeout_ms: 30_000,
        }
    }
}

/// Hex SHA-256 of the sentence's UTF-8 bytes; the key of cache and
/// precomputed parse files.
pub fn sentence_key(sentence: &str) -> String {
    Sha256::digest(sentence.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn read_bracket_file(path: &Path, into: &mut HashMap<String, String>) -> Result<()> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, tree) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path.display().to_string(), i + 1, "expected hash<TAB>tree"))?;
        into.insert(key.to_string(), tree.to_string());
    }
    Ok(())
}

/// Parse retrieval through precomputed file, on-disk cache, then service.
pub struct ParseClient {
    config: ParserConfig,
    agent: ureq::Agent,
    known: RwLock<HashMap<String, String>>,
    cache_writer: Mutex<Option<File>>,
    network_calls: AtomicUsize,
}

impl ParseClient {
    pub fn new(config: ParserConfig) -> Result<Self> {
        let mut known = HashMap::new();
        if let Some(p) = &config.precomputed_path {
            read_bracket_file(p, &mut known)?;
        }
        let mut writer = None;
        if let Some(p) = &config.cache_path {
            if p.exists() {
                read_bracket_file(p, &mut known)?;
            }
            writer = Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?,
            );
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(ParseClient {
            config,
            agent,
            known: RwLock::new(known),
            cache_writer: Mutex::new(writer),
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn fetch(&self, sentence: &str) -> Result<ParseTree> {
        let key = sentence_key(sentence);
        if let Some(b) = self.known.read().unwrap().get(&key) {
            return parse_bracketed(b);
        }
        if self.config.offline {
            return Err(Error::Remote(format!(
                "no cached parse for sentence {key} and parser is offline"
            )));
        }
        let bracket = self.request(sentence)?;
        let tree = parse_bracketed(&bracket)?;
        let line = tree.to_string();
        self.known.write().unwrap().insert(key.clone(), line.clone());
        if let Some(f) = self.cache_writer.lock().unwrap().as_mut() {
            if let Err(e) = writeln!(f, "{key}\t{line}") {
                log::warn!("could not persist parse cache entry: {e}");
            }
        }
        Ok(tree)
    }

    fn request(&self, sentence: &str) -> Result<String> {
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(wait));
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let mut req = self.agent.post(&self.config.endpoint);
            if let Some(p) = &self.config.properties {
                req = req.query("properties", p);
            }
            match req.send_string(sentence) {
                Ok(resp) => {
                    let body = resp.into_string().map_err(|e| Error::Remote(e.to_string()))?;
                    let json: serde_json::Value =
                        serde_json::from_str(&body).map_err(|e| Error::Remote(format!("invalid JSON: {e}")))?;
                    return find_string(&json, &self.config.parse_field)
                        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
                        .ok_or_else(|| Error::Remote(format!("response has no {:?} field", self.config.parse_field)));
                }
                Err(ureq::Error::Status(code, _)) if code < 500 => {
                    return Err(Error::Remote(format!("parser returned HTTP {code}")));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Remote(format!(
            "parser failed after {attempts} attempts: {last}"
        )))
    }
}

/// Tree for `sentence`; failures are returned so callers can degrade to
/// missing syntactic features.
pub fn fetch_parse(sentence: &str, client: &ParseClient) -> Result<ParseTree> {
    client.fetch(sentence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_sha256_hex() {
        assert_eq!(
            sentence_key("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn precomputed_file_answers_offline() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("parses.tsv");
        let s = "The cat sat.";
        std::fs::write(
            &p,
            format!("{}\t(S (NP (DT The) (NN cat)) (VP (VBD sat)))\n", sentence_key(s)),
        )
        .unwrap();
        let client = ParseClient::new(ParserConfig {
            precomputed_path: Some(p),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(client.fetch(s).unwrap().leaves().len(), 3);
        assert!(client.fetch("Another sentence.").is_err());
        assert_eq!(client.network_calls(), 0);
    }
}
