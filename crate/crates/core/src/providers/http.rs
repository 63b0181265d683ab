use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ProviderConfig, ProviderError};

/// Exponential backoff with jitter. Only timeouts, HTTP 429 and HTTP 5xx
/// are retried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn from_config(cfg: &ProviderConfig) -> Self {
        Self {
            max_retries: cfg.max_retries,
            base_delay: Duration::from_millis(cfg.retry_base_delay_ms),
            max_delay: Duration::from_secs(30),
        }
    }

    /// Delay before retry number `attempt` (0-based): `base·2^attempt`,
    /// capped at `max_delay`, then scaled by a jitter factor in `[0.5, 1]`.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(2u32.saturating_pow(attempt.min(20)));
        let capped = exp.min(self.max_delay);
        capped.mul_f64(rng.random_range(0.5..=1.0))
    }

    pub fn is_retryable_status(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }
}

/// Counting semaphore bounding in-flight requests per provider.
pub(crate) struct Limiter {
    available: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(permits: usize) -> Self {
        Self { available: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fail(ProviderError),
}

pub(crate) struct JsonClient {
    name: String,
    config: ProviderConfig,
    agent: ureq::Agent,
    limiter: Limiter,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(name: impl Into<String>, config: ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: name.into(),
            limiter: Limiter::new(config.max_concurrent_requests),
            policy: RetryPolicy::from_config(&config),
            config,
            agent,
        }
    }

    pub fn malformed(&self, message: impl ToString) -> ProviderError {
        ProviderError::Malformed { provider: self.name.clone(), message: message.to_string() }
    }

    /// POSTs `body` and parses the response as JSON, retrying transient
    /// failures per the configured policy.
    pub fn post(&self, body: &Value) -> Result<Value, ProviderError> {
        let token = match &self.config.auth_env_var {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ProviderError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let _permit = self.limiter.acquire();
        let mut rng = rand::rng();
        let mut attempt = 0u32;
        loop {
            match self.attempt(body, token.as_deref()) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(ProviderError::Transport { provider, message, .. }) => {
                    return Err(ProviderError::Transport { provider, attempts: attempt + 1, message })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempt >= self.policy.max_retries {
                        return Err(ProviderError::Transport {
                            provider: self.name.clone(),
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let wait = self.policy.delay(attempt, &mut rng);
                    log::warn!("{}: {message}; retrying in {wait:?}", self.name);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }

    fn attempt(&self, body: &Value, token: Option<&str>) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint_url);
        if let Some(t) = token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Attempt::Retry(format!("timeout ({t})")),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                return Attempt::Retry(format!("timeout ({e})"))
            }
            Err(e) => {
                return Attempt::Fail(ProviderError::Transport {
                    provider: self.name.clone(),
                    attempts: 1,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(t)) => return Attempt::Retry(format!("timeout ({t})")),
            Err(e) => return Attempt::Fail(self.malformed(e)),
        };
        if RetryPolicy::is_retryable_status(status) {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fail(ProviderError::Status {
                provider: self.name.clone(),
                status,
                body: text.chars().take(300).collect(),
            });
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(self.malformed(format!("invalid JSON: {e}"))),
        }
    }
}

/// Merges the keys of `extra` into `body` when both are objects.
pub(crate) fn merge_object(body: &mut Value, extra: &Value) {
    if let (Some(b), Some(e)) = (body.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
}

#[cfg(test)]
pub(crate) mod test_server {
    //! Minimal single-purpose HTTP server for exercising the clients.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    pub struct Canned {
        pub status: u16,
        pub body: String,
    }

    pub struct Server {
        pub url: String,
        /// Request bodies parsed as JSON, plus the raw header block.
        pub requests: Arc<Mutex<Vec<(String, serde_json::Value)>>>,
    }

    /// Serves `responses` in order, one per connection, recording request bodies.
    pub fn serve(responses: Vec<Canned>) -> Server {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        thread::spawn(move || {
            for canned in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    if line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    headers.push_str(&line);
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).ok();
                let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                seen.lock().unwrap().push((headers, json));
                let resp = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    canned.status,
                    canned.body.len(),
                    canned.body
                );
                stream.write_all(resp.as_bytes()).ok();
                stream.flush().ok();
            }
        });
        Server { url, requests }
    }
}
