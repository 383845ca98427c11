use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    ChatBackend, ChatRequest, ChatResponse, LlmError, Usage, DEFAULT_MODEL, ENV_API_BASE,
    ENV_API_KEY, ENV_MODEL,
};

pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        self.initial_delay
            .saturating_mul(1 << retry.min(16))
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: String,
    pub model_id: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(api_base: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            api_key: api_key.into(),
            model_id: DEFAULT_MODEL.into(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads the key, base URL and model from the environment. Only the key
    /// is required.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Config(format!("{ENV_API_KEY} is not set")))?;
        let base = std::env::var(ENV_API_BASE)
            .ok()
            .filter(|b| !b.is_empty())
            .unwrap_or_else(|| DEFAULT_API_BASE.into());
        let mut config = Self::new(base, key);
        if let Some(model) = std::env::var(ENV_MODEL).ok().filter(|m| !m.is_empty()) {
            config.model_id = model;
        }
        Ok(config)
    }
}

/// OpenAI-compatible `POST {base}/chat/completions` client.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<Value, Attempt> {
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                let retry = e.is_timeout() || e.is_connect() || e.is_request();
                Attempt::fail(retry, None, e.to_string())
            })?;
        let status = response.status();
        if !status.is_success() {
            let code = status.as_u16();
            let retry = code == 429 || code == 408 || status.is_server_error();
            let text = response.text().unwrap_or_default();
            return Err(Attempt::fail(retry, Some(code), text));
        }
        response
            .json::<Value>()
            .map_err(|e| Attempt::fail(false, Some(status.as_u16()), e.to_string()))
    }
}

struct Attempt {
    retry: bool,
    status: Option<u16>,
    message: String,
}

impl Attempt {
    fn fail(retry: bool, status: Option<u16>, message: String) -> Self {
        Self {
            retry,
            status,
            message,
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            "messages": request.messages,
        });
        let started = Instant::now();
        let mut retry = 0;
        let value = loop {
            match self.attempt(&body) {
                Ok(v) => break v,
                Err(a) if a.retry && retry < self.config.retry.max_retries => {
                    let delay = self.config.retry.delay(retry);
                    tracing::warn!(status = ?a.status, ?delay, "chat request failed, retrying");
                    std::thread::sleep(delay);
                    retry += 1;
                }
                Err(a) => {
                    return Err(LlmError::Provider {
                        status: a.status,
                        message: a.message,
                    })
                }
            }
        };
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::Provider {
                status: None,
                message: "response has no choices[0].message.content".into(),
            })?
            .to_string();
        let usage = Usage {
            prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(ChatResponse {
            text,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}
