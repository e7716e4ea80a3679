use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::conversation::{Conversation, Role};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    /// Chat-completion endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    pub credentials_env: Option<String>,
    pub system_prompt: Option<String>,
    pub timeout_secs: u64,
    /// Attempts after the first failure.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub max_tokens: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            credentials_env: None,
            system_prompt: None,
            timeout_secs: 30,
            retries: 2,
            backoff_ms: 500,
            max_in_flight: 4,
            max_tokens: 128,
        }
    }
}

/// Counting semaphore capping concurrent requests.
struct Gate {
    busy: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.busy.lock().expect("gate lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Partner backed by a remote chat-completion service. The partner speaks
/// as `assistant`; target turns are sent as `user` messages.
pub struct ExternalPartner {
    config: ExternalConfig,
    token: Option<String>,
    agent: ureq::Agent,
    gate: Arc<Gate>,
}

impl ExternalPartner {
    pub fn new(config: ExternalConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Invalid("external partner needs an endpoint".into()));
        }
        if config.max_in_flight == 0 {
            return Err(Error::Invalid("max_in_flight must be at least 1".into()));
        }
        let token = match &config.credentials_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| Error::Invalid(format!("credentials variable `{var}` is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build();
        let gate = Arc::new(Gate {
            busy: Mutex::new(0),
            freed: Condvar::new(),
            cap: config.max_in_flight,
        });
        Ok(Self {
            config,
            token,
            agent,
            gate,
        })
    }

    pub fn request_body(&self, conv: &Conversation) -> Value {
        let mut messages = Vec::new();
        if let Some(p) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": p}));
        }
        for t in &conv.turns {
            let role = match t.role {
                Role::Partner => "assistant",
                Role::Target => "user",
            };
            messages.push(json!({"role": role, "content": t.text}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let resp = req.send_json(body.clone()).map_err(|e| e.to_string())?;
        let v: Value = resp.into_json().map_err(|e| format!("unreadable response: {e}"))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }

    pub fn respond(&self, conv: &Conversation) -> Result<String> {
        let body = self.request_body(conv);
        let _slot = self.gate.acquire();
        let mut last = String::new();
        for i in 0..=self.config.retries {
            if i > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (i - 1).min(6)));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(Error::Partner(format!(
            "{} failed after {} attempts: {last}",
            self.config.endpoint,
            self.config.retries + 1
        )))
    }
}
