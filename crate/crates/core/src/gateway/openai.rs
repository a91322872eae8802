//! Blocking client for OpenAI-compatible servers (`/v1/chat/completions`,
//! `/v1/embeddings`), e.g. a local Llama server.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, ChatRequest, EmbeddingBackend, GatewayError};

pub struct OpenAiClient {
    base_url: String,
    api_key: Option<String>,
    max_retries: u32,
    agent: ureq::Agent,
    in_flight: Limiter,
}

impl OpenAiClient {
    pub fn new(base_url: &str, timeout: Duration, max_retries: u32, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var("LANGRID_LLM_API_KEY").ok(),
            max_retries,
            agent,
            in_flight: Limiter::new(max_in_flight.max(1)),
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<T, GatewayError> {
        let url = format!("{}{path}", self.base_url);
        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let result = req
                .send_json(body)
                .and_then(|mut resp| resp.body_mut().read_json::<T>());
            match result {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let err = match e {
                        ureq::Error::Timeout(_) => GatewayError::Timeout,
                        ureq::Error::StatusCode(status) => GatewayError::Http { status },
                        other => GatewayError::Network(other.to_string()),
                    };
                    // client errors are not worth retrying
                    let retryable = !matches!(err, GatewayError::Http { status } if (400..500).contains(&status) && status != 429);
                    if !retryable || attempt >= self.max_retries {
                        return Err(err);
                    }
                    attempt += 1;
                    log::warn!("{url}: {err}; retry {attempt}/{}", self.max_retries);
                    std::thread::sleep(Duration::from_millis(200 * 2u64.pow(attempt.min(5))));
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl ChatBackend for OpenAiClient {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "stream": false,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let resp: ChatResponse = self.post("/v1/chat/completions", &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Network("response has no message content".into()))
    }
}

impl EmbeddingBackend for OpenAiClient {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = json!({ "model": model, "input": inputs });
        let mut resp: EmbeddingResponse = self.post("/v1/embeddings", &body)?;
        if resp.data.len() != inputs.len() {
            return Err(GatewayError::Network(format!(
                "embeddings response has {} vectors for {} inputs",
                resp.data.len(),
                inputs.len()
            )));
        }
        resp.data.sort_by_key(|d| d.index);
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

/// Counting semaphore capping concurrent requests to one endpoint.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}
