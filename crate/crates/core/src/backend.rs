//! Pluggable listwise ranking backends behind one interface.
//!
//! Three implementations:
//! - `identity`: returns the window unchanged; the engine fixed point.
//! - `oracle`: sorts by relevance grade with optional seeded noise, for
//!   desk-scale simulation of a listwise model.
//! - `http`: POSTs a chat-completion request to a remote model and returns
//!   the assistant text.
//!
//! Backend instances are shared across per-query workers, so implementations
//! must be `Send + Sync` and must not mutate the inputs they are handed.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Qrels, Query};
use crate::error::{Error, Result};
use crate::permutation::Permutation;
use crate::prompt::{render_completion, MAX_WINDOW};
use crate::util::derive_seed;

/// One passage slot of a window, in first-stage order.
#[derive(Debug, Clone, Copy)]
pub struct WindowPassage<'a> {
    pub id: &'a str,
    pub title: &'a str,
    pub body: &'a str,
}

/// Everything a backend may look at for one window call.
#[derive(Debug, Clone, Copy)]
pub struct WindowRequest<'a> {
    pub query: &'a Query,
    /// Window passages in current (first-stage) order.
    pub passages: &'a [WindowPassage<'a>],
    /// The rendered listwise instruction prompt for this window.
    pub prompt: &'a str,
}

/// A listwise ranking backend: given a window, produce a completion text
/// such as `[4] > [5] > [2] > [3] > [1]`.
pub trait ListwiseBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Largest window this backend accepts.
    fn max_window(&self) -> usize {
        MAX_WINDOW
    }

    fn rank_window(&self, request: &WindowRequest<'_>) -> Result<String>;
}

/// Returns every window in its input order.
#[derive(Debug, Default)]
pub struct IdentityBackend;

impl ListwiseBackend for IdentityBackend {
    fn name(&self) -> &str {
        "identity"
    }

    fn rank_window(&self, request: &WindowRequest<'_>) -> Result<String> {
        Ok(render_completion(&Permutation::identity(
            request.passages.len(),
        )))
    }
}

/// Oracle noise and seeding knobs.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Swap probability p in [0,1]; the oracle applies floor(p * n) random
    /// adjacent transpositions to its grade-sorted order.
    pub noise: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Ranks windows by relevance grade (descending), ties keeping first-stage
/// order; unjudged passages count as grade 0. Noise is derived per
/// (seed, query, window) so outputs are reproducible regardless of the
/// order in which queries are processed.
pub struct OracleBackend {
    qrels: Arc<Qrels>,
    config: OracleConfig,
}

impl OracleBackend {
    pub fn new(qrels: Arc<Qrels>, config: OracleConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.noise) {
            return Err(Error::Config(format!(
                "oracle noise must be in [0,1], got {}",
                config.noise
            )));
        }
        Ok(Self { qrels, config })
    }
}

impl ListwiseBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn rank_window(&self, request: &WindowRequest<'_>) -> Result<String> {
        let n = request.passages.len();
        let query_id = &request.query.id;
        let mut slots: Vec<u32> = (1..=n as u32).collect();
        // stable sort keeps first-stage order among equal grades
        slots.sort_by_key(|&slot| {
            let id = request.passages[slot as usize - 1].id;
            std::cmp::Reverse(self.qrels.grade(query_id, id).unwrap_or(0))
        });

        let swaps = (self.config.noise * n as f64).floor() as usize;
        if swaps > 0 && n >= 2 {
            let mut parts: Vec<&str> = vec![query_id.as_str()];
            parts.extend(request.passages.iter().map(|p| p.id));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &parts));
            for _ in 0..swaps {
                let i = rng.random_range(0..n - 1);
                slots.swap(i, i + 1);
            }
        }

        Ok(render_completion(&Permutation::new(slots)?))
    }
}

/// Remote chat-completion endpoint configuration.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Decoding temperature; 0 by default for reproducibility.
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            auth_env: None,
        }
    }
}

/// Listwise backend speaking the de-facto chat-completions JSON shape:
/// request `{model, messages, temperature}`, response
/// `{choices: [{message: {content}}]}`.
pub struct HttpBackend {
    config: HttpBackendConfig,
    auth_token: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(serde::Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(serde::Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(serde::Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        if config.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                config.temperature
            )));
        }
        let auth_token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("auth environment variable {var:?} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Backend {
                name: "http".into(),
                msg: e.to_string(),
            })?;
        Ok(Self {
            config,
            auth_token,
            client,
        })
    }

    fn backend_err(&self, msg: impl Into<String>) -> Error {
        Error::Backend {
            name: self.config.model.clone(),
            msg: msg.into(),
        }
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| self.backend_err(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(self.backend_err(format!("status {status}: {}", text.trim())));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| self.backend_err(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| self.backend_err("response carried no choices"))
    }
}

impl ListwiseBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn rank_window(&self, request: &WindowRequest<'_>) -> Result<String> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.temperature,
        });
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            match self.post_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("http backend attempt {} failed: {e}", attempt + 1);
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.unwrap_or_else(|| self.backend_err("no attempts made")))
    }
}

/// A parsed CLI backend selector.
///
/// Grammar: `identity`, `oracle`, `oracle:noise=<p>,seed=<u64>`,
/// `http:<url>#<model>`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Identity,
    Oracle { noise: f64, seed: Option<u64> },
    Http { url: String, model: String },
}

impl BackendSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let invalid = |msg: &str| Error::InvalidBackendSpec(spec.to_string(), msg.to_string());
        if spec == "identity" {
            return Ok(Self::Identity);
        }
        if spec == "oracle" {
            return Ok(Self::Oracle {
                noise: 0.0,
                seed: None,
            });
        }
        if let Some(args) = spec.strip_prefix("oracle:") {
            let mut noise = 0.0;
            let mut seed = None;
            for pair in args.split(',').filter(|p| !p.is_empty()) {
                let Some((key, value)) = pair.split_once('=') else {
                    return Err(invalid(&format!("expected key=value, got {pair:?}")));
                };
                match key {
                    "noise" => {
                        noise = value
                            .parse()
                            .map_err(|_| invalid(&format!("bad noise value {value:?}")))?;
                        if !(0.0..=1.0).contains(&noise) {
                            return Err(invalid("noise must be in [0,1]"));
                        }
                    }
                    "seed" => {
                        seed = Some(
                            value
                                .parse()
                                .map_err(|_| invalid(&format!("bad seed value {value:?}")))?,
                        );
                    }
                    _ => return Err(invalid(&format!("unknown key {key:?}"))),
                }
            }
            return Ok(Self::Oracle { noise, seed });
        }
        if let Some(rest) = spec.strip_prefix("http:") {
            let Some((url, model)) = rest.rsplit_once('#') else {
                return Err(invalid("expected http:<url>#<model>"));
            };
            if url.is_empty() || model.is_empty() {
                return Err(invalid("url and model must be non-empty"));
            }
            return Ok(Self::Http {
                url: url.to_string(),
                model: model.to_string(),
            });
        }
        Err(invalid(
            "unknown backend (expected identity, oracle[:...], or http:<url>#<model>)",
        ))
    }
}


#[cfg(test)]
mod http_tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal single-threaded HTTP server: answers `responses.len()`
    /// requests in order, then stops. Returns the received request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut tmp = [0u8; 4096];
                let request_body = loop {
                    let k = stream.read(&mut tmp).unwrap();
                    if k == 0 {
                        break String::new();
                    }
                    buf.extend_from_slice(&tmp[..k]);
                    if let Some(split) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        let headers = String::from_utf8_lossy(&buf[..split]).to_string();
                        let content_length: usize = headers
                            .lines()
                            .find_map(|l| {
                                let (name, value) = l.split_once(':')?;
                                name.eq_ignore_ascii_case("content-length")
                                    .then(|| value.trim().parse().ok())?
                            })
                            .unwrap_or(0);
                        let mut body_bytes = buf[split + 4..].to_vec();
                        while body_bytes.len() < content_length {
                            let k = stream.read(&mut tmp).unwrap();
                            body_bytes.extend_from_slice(&tmp[..k]);
                        }
                        break String::from_utf8_lossy(&body_bytes).to_string();
                    }
                };
                bodies.push(request_body);
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn chat_body(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string()
    }

    fn make_request<'a>(query: &'a Query, ps: &'a [WindowPassage<'a>]) -> WindowRequest<'a> {
        WindowRequest {
            query,
            passages: ps,
            prompt: "rendered prompt text",
        }
    }

    #[test]
    fn http_backend_posts_chat_request_and_returns_assistant_text() {
        let (url, handle) = serve(vec![(200, chat_body("[2] > [1]"))]);
        let mut config = HttpBackendConfig::new(url, "test-model");
        config.max_retries = 0;
        let backend = HttpBackend::new(config).unwrap();
        let q = Query {
            id: "q".into(),
            text: "t".into(),
        };
        let ps = [
            WindowPassage {
                id: "a",
                title: "",
                body: "x",
            },
            WindowPassage {
                id: "b",
                title: "",
                body: "y",
            },
        ];
        let out = backend.rank_window(&make_request(&q, &ps)).unwrap();
        assert_eq!(out, "[2] > [1]");

        let bodies = handle.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "rendered prompt text");
    }

    #[test]
    fn http_backend_retries_after_server_error() {
        let (url, handle) = serve(vec![
            (500, "{\"error\":\"boom\"}".to_string()),
            (200, chat_body("[1] > [2]")),
        ]);
        let mut config = HttpBackendConfig::new(url, "m");
        config.max_retries = 1;
        let backend = HttpBackend::new(config).unwrap();
        let q = Query {
            id: "q".into(),
            text: "t".into(),
        };
        let ps = [
            WindowPassage {
                id: "a",
                title: "",
                body: "x",
            },
            WindowPassage {
                id: "b",
                title: "",
                body: "y",
            },
        ];
        let out = backend.rank_window(&make_request(&q, &ps)).unwrap();
        assert_eq!(out, "[1] > [2]");
        assert_eq!(handle.join().unwrap().len(), 2);
    }

    #[test]
    fn http_backend_exhausted_retries_is_error() {
        let (url, handle) = serve(vec![(503, String::new()), (503, String::new())]);
        let mut config = HttpBackendConfig::new(url, "m");
        config.max_retries = 1;
        let backend = HttpBackend::new(config).unwrap();
        let q = Query {
            id: "q".into(),
            text: "t".into(),
        };
        let ps = [WindowPassage {
            id: "a",
            title: "",
            body: "x",
        }];
        let err = backend.rank_window(&make_request(&q, &ps)).unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
        handle.join().unwrap();
    }

    #[test]
    fn http_backend_missing_auth_env_is_config_error() {
        let mut config = HttpBackendConfig::new("http://localhost:1/x", "m");
        config.auth_env = Some("LISTRANK_TEST_UNSET_TOKEN_VAR".into());
        assert!(HttpBackend::new(config).is_err());
    }

    #[test]
    fn http_backend_times_out_against_silent_server() {
        // accepts the connection but never responds
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            std::thread::sleep(std::time::Duration::from_millis(1500));
            drop(stream);
        });
        let mut config = HttpBackendConfig::new(url, "m");
        config.timeout = std::time::Duration::from_millis(200);
        config.max_retries = 0;
        let backend = HttpBackend::new(config).unwrap();
        let q = Query {
            id: "q".into(),
            text: "t".into(),
        };
        let ps = [WindowPassage {
            id: "a",
            title: "",
            body: "x",
        }];
        let err = backend.rank_window(&make_request(&q, &ps)).unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
        handle.join().unwrap();
    }
}
