//! N-gram count and parser clients against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use lcp_core::corpus_index::{ExternalFreqTable, FreqSource, RemoteNgramClient, RemoteNgramConfig};
use lcp_core::syntax::{sentence_key, ParseClient, ParserConfig};

#[derive(Debug, Clone)]
struct Request {
    method: String,
    target: String,
    body: String,
}

/// Serves one scripted `(status, body)` response per connection, in order.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<Request>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    fn start(script: Vec<(u16, &str)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/search", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        let script: Vec<(u16, String)> = script.into_iter().map(|(s, b)| (s, b.to_string())).collect();
        let handle = std::thread::spawn(move || {
            for (status, body) in script {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let target = parts.next().unwrap_or_default().to_string();
                let mut length = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(Request {
                    method,
                    target,
                    body: String::from_utf8(buf).unwrap(),
                });
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        });
        MockServer {
            url,
            requests,
            handle: Some(handle),
        }
    }

    fn requests(&mut self) -> Vec<Request> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.requests.lock().unwrap().clone()
    }
}

fn ngram_config(url: &str, cache: Option<std::path::PathBuf>) -> RemoteNgramConfig {
    RemoteNgramConfig {
        endpoint: url.to_string(),
        cache_path: cache,
        offline: false,
        min_interval_ms: 0,
        backoff_base_ms: 1,
        timeout_ms: 5_000,
        ..RemoteNgramConfig::default()
    }
}

#[test]
fn ngram_count_is_read_from_the_response_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("ngram_cache.tsv");
    let mut server = MockServer::start(vec![(200, r#"{"status":"ok","phrases":[{"tks":[],"mc":42,"vc":3}]}"#)]);
    let client = RemoteNgramClient::new(ngram_config(&server.url, Some(cache.clone())), None).unwrap();
    assert_eq!(client.lookup("the cat"), Some(42.0));
    assert_eq!(client.lookup("the cat"), Some(42.0));
    assert_eq!(client.network_calls(), 1);
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "GET");
    assert!(reqs[0].target.contains("corpus=eng-us"), "{}", reqs[0].target);
    assert!(
        reqs[0].target.contains("query=the+cat") || reqs[0].target.contains("query=the%20cat"),
        "{}",
        reqs[0].target
    );

    let mut offline = ngram_config("http://127.0.0.1:9/unused", Some(cache));
    offline.offline = true;
    let reloaded = RemoteNgramClient::new(offline, None).unwrap();
    assert_eq!(reloaded.lookup("the cat"), Some(42.0));
    assert_eq!(reloaded.lookup("a dog"), None);
    assert_eq!(reloaded.network_calls(), 0);
}

#[test]
fn absent_count_field_means_zero() {
    let mut server = MockServer::start(vec![(200, r#"{"status":"ok","phrases":[]}"#)]);
    let client = RemoteNgramClient::new(ngram_config(&server.url, None), None).unwrap();
    assert_eq!(client.lookup("zyzzyva quux"), Some(0.0));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let mut server = MockServer::start(vec![(503, "{}"), (500, "{}"), (200, r#"{"mc":7}"#)]);
    let client = RemoteNgramClient::new(ngram_config(&server.url, None), None).unwrap();
    assert_eq!(client.lookup("red fox"), Some(7.0));
    assert_eq!(client.network_calls(), 3);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn exhausted_retries_give_none() {
    let mut server = MockServer::start(vec![(500, "{}"), (500, "{}")]);
    let mut config = ngram_config(&server.url, None);
    config.max_attempts = 2;
    let client = RemoteNgramClient::new(config, None).unwrap();
    assert_eq!(client.lookup("red fox"), None);
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn quota_response_is_not_retried_or_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.tsv");
    let mut server = MockServer::start(vec![(429, r#"{"error":"quota"}"#)]);
    let client = RemoteNgramClient::new(ngram_config(&server.url, Some(cache.clone())), None).unwrap();
    assert_eq!(client.lookup("blue whale"), None);
    assert_eq!(client.network_calls(), 1);
    assert_eq!(server.requests().len(), 1);
    assert_eq!(std::fs::read_to_string(cache).unwrap(), "");
}

#[test]
fn local_table_answers_before_the_network() {
    let mut table = ExternalFreqTable::new(FreqSource::GoogleLocal, vec!["count".into()]);
    table.insert("green tea", vec![900.0]).unwrap();
    let client = RemoteNgramClient::new(ngram_config("http://127.0.0.1:9/unused", None), Some(table)).unwrap();
    assert_eq!(client.lookup("green tea"), Some(900.0));
    assert_eq!(client.network_calls(), 0);
}

fn parser_config(url: &str, cache: Option<std::path::PathBuf>) -> ParserConfig {
    ParserConfig {
        endpoint: url.to_string(),
        cache_path: cache,
        offline: false,
        backoff_base_ms: 1,
        timeout_ms: 5_000,
        ..ParserConfig::default()
    }
}

const PARSE_RESPONSE: &str =
    r#"{"sentences":[{"index":0,"parse":"(ROOT\n  (S\n    (NP (DT The) (NN cat))\n    (VP (VBD sat))\n    (. .)))"}]}"#;

#[test]
fn parser_posts_the_sentence_and_caches_by_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("parses.tsv");
    let mut server = MockServer::start(vec![(200, PARSE_RESPONSE)]);
    let client = ParseClient::new(parser_config(&server.url, Some(cache.clone()))).unwrap();
    let sentence = "The cat sat.";
    let tree = client.fetch(sentence).unwrap();
    assert_eq!(
        tree.to_string(),
        "(ROOT (S (NP (DT The) (NN cat)) (VP (VBD sat)) (. .)))"
    );
    assert_eq!(client.fetch(sentence).unwrap(), tree);
    assert_eq!(client.network_calls(), 1);
    let reqs = server.requests();
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].body, sentence);
    assert!(reqs[0].target.contains("properties="), "{}", reqs[0].target);

    let written = std::fs::read_to_string(&cache).unwrap();
    assert!(written.starts_with(&format!("{}\t(ROOT", sentence_key(sentence))));
    let offline = ParseClient::new(ParserConfig {
        cache_path: Some(cache),
        ..ParserConfig::default()
    })
    .unwrap();
    assert_eq!(offline.fetch(sentence).unwrap(), tree);
    assert!(offline.fetch("Another sentence.").is_err());
    assert_eq!(offline.network_calls(), 0);
}

#[test]
fn parser_client_errors_fail_fast_and_server_errors_retry() {
    let mut server = MockServer::start(vec![(404, "{}")]);
    let client = ParseClient::new(parser_config(&server.url, None)).unwrap();
    assert!(client.fetch("A b.").is_err());
    assert_eq!(server.requests().len(), 1);

    let mut server = MockServer::start(vec![(502, "{}"), (200, PARSE_RESPONSE)]);
    let client = ParseClient::new(parser_config(&server.url, None)).unwrap();
    assert!(client.fetch("The cat sat.").is_ok());
    assert_eq!(server.requests().len(), 2);

    let mut server = MockServer::start(vec![(200, r#"{"sentences":[{"tokens":[]}]}"#)]);
    let client = ParseClient::new(parser_config(&server.url, None)).unwrap();
    let err = client.fetch("The cat sat.").unwrap_err().to_string();
    assert!(err.contains("parse"), "{err}");
    assert_eq!(server.requests().len(), 1);
}
