//! Client for an external sentence-embedding service.
//!
//! Wire format: `POST {"texts": [...]}` answered by `{"embeddings": [[...], ...]}`.
//! Results are cached on disk, one JSON file per (endpoint, text) key.

use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;

/// Environment variable consulted for the embedding service address.
pub const ENDPOINT_ENV: &str = "EMBEDDING_ENDPOINT";

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    pub endpoint: String,
    pub cache_dir: Option<PathBuf>,
    pub max_attempts: u32,
    /// Delay after the first failure; doubled after each further failure.
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl EmbeddingClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            cache_dir: None,
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(self.endpoint.as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        Some(dir.join(format!("{}.json", hex::encode(hasher.finalize()))))
    }

    fn cached(&self, text: &str) -> Option<Vec<f64>> {
        let path = self.cache_path(text)?;
        if !path.exists() {
            return None;
        }
        match io::read_json(&path) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut delay = self.base_delay;
        let mut last_error = String::new();
        for attempt in 1..=self.max_attempts {
            match agent.post(&self.endpoint).send_json(EmbedRequest { texts }) {
                Ok(mut resp) => {
                    let parsed: EmbedResponse = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| Error::MalformedResponse(e.to_string()))?;
                    return Ok(parsed.embeddings);
                }
                Err(ureq::Error::StatusCode(code)) if code < 500 => {
                    return Err(Error::MalformedResponse(format!("HTTP status {code}")));
                }
                Err(e) => {
                    last_error = e.to_string();
                    warn!(
                        "embedding request to {} failed (attempt {attempt}/{}): {e}",
                        self.endpoint, self.max_attempts
                    );
                }
            }
            thread::sleep(delay);
            delay *= 2;
        }
        Err(Error::ServiceUnavailable {
            attempts: self.max_attempts,
            message: last_error,
        })
    }
}

/// Raw embeddings for `descriptions`, in input order, all of one dimension.
pub fn fetch_raw_embeddings(descriptions: &[String], client: &EmbeddingClient) -> Result<Vec<Vec<f64>>> {
    if descriptions.is_empty() {
        return Err(Error::InvalidConfig("no texts to embed".into()));
    }
    let mut out: Vec<Option<Vec<f64>>> = descriptions.iter().map(|t| client.cached(t)).collect();
    let missing: Vec<usize> = (0..out.len()).filter(|&i| out[i].is_none()).collect();
    debug!(
        "embedding {} texts ({} cached)",
        descriptions.len(),
        descriptions.len() - missing.len()
    );

    if !missing.is_empty() {
        let texts: Vec<String> = missing.iter().map(|&i| descriptions[i].clone()).collect();
        let fetched = client.request(&texts)?;
        if fetched.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                fetched.len()
            )));
        }
        for (&i, v) in missing.iter().zip(fetched) {
            out[i] = Some(v);
        }
    }

    let out: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("every slot filled")).collect();
    let dim = out[0].len();
    if let Some(bad) = out.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if dim == 0 || out.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::MalformedResponse("empty or non-finite embedding".into()));
    }

    for &i in &missing {
        if let Some(path) = client.cache_path(&descriptions[i]) {
            io::write_json(&path, &out[i])?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Instant;

    use super::*;

    /// Minimal one-connection-at-a-time HTTP server answering with `reply(texts)`.
    fn serve<F>(reply: F) -> (String, Arc<AtomicUsize>)
    where
        F: Fn(Vec<String>) -> String + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let texts = req["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| t.as_str().unwrap().to_owned())
                    .collect();
                let payload = reply(texts);
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    payload.len(),
                    payload
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/embed"), hits)
    }

    fn texts(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fetches_in_order_and_caches() {
        let (endpoint, hits) = serve(|texts| {
            let embs: Vec<Vec<f64>> = texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect();
            serde_json::json!({ "embeddings": embs }).to_string()
        });
        let dir = tempfile::tempdir().unwrap();
        let client = EmbeddingClient::new(endpoint).with_cache(dir.path());

        let out = fetch_raw_embeddings(&texts(&["ab", "abcd"]), &client).unwrap();
        assert_eq!(out, vec![vec![2.0, 1.0], vec![4.0, 1.0]]);
        assert_eq!(hits.load(Ordering::SeqCst), 1);

        let again = fetch_raw_embeddings(&texts(&["abcd", "ab"]), &client).unwrap();
        assert_eq!(again, vec![vec![4.0, 1.0], vec![2.0, 1.0]]);
        assert_eq!(hits.load(Ordering::SeqCst), 1, "cache hit must not call the service");
    }

    #[test]
    fn mixed_lengths_are_rejected() {
        let (endpoint, _) = serve(|_| r#"{"embeddings": [[1.0, 2.0], [1.0]]}"#.to_owned());
        let err = fetch_raw_embeddings(&texts(&["a", "b"]), &EmbeddingClient::new(endpoint)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn malformed_payload() {
        let (endpoint, _) = serve(|_| r#"{"vectors": []}"#.to_owned());
        let err = fetch_raw_embeddings(&texts(&["a"]), &EmbeddingClient::new(endpoint)).unwrap_err();
        assert!(matches!(err, Error::MalformedResponse(_)));
    }

    #[test]
    fn unreachable_service_retries_with_backoff() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut client = EmbeddingClient::new(format!("http://127.0.0.1:{port}/embed"));
        client.base_delay = Duration::from_millis(20);
        let start = Instant::now();
        let err = fetch_raw_embeddings(&texts(&["a"]), &client).unwrap_err();
        assert!(matches!(err, Error::ServiceUnavailable { attempts: 3, .. }));
        // 20 + 40 + 80 ms of backoff.
        assert!(start.elapsed() >= Duration::from_millis(140));
    }
}
