//! Completions-style HTTP transport.

use std::time::Duration;

use serde_json::{json, Value};

use crate::{AttemptError, BackendConfig, BackendError, CompletionRequest, RawCompletion, Usage};

pub(crate) struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_env: String,
}

impl HttpTransport {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .pool_max_idle_per_host(cfg.max_concurrent)
            .build()
            .map_err(|e| BackendError::InvalidConfig(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            auth_env: cfg.auth_env.clone().unwrap_or_default(),
        })
    }

    pub fn attempt(
        &self,
        req: &CompletionRequest,
        request_id: &str,
        cfg: &BackendConfig,
    ) -> Result<RawCompletion, AttemptError> {
        let key = std::env::var(&self.auth_env).map_err(|_| {
            AttemptError::Fatal(BackendError::AuthMissing {
                request_id: request_id.to_string(),
                var: self.auth_env.clone(),
            })
        })?;
        let mut body = json!({
            "model": cfg.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stop": req.stop,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .header("x-request-id", request_id)
            .json(&body)
            .send()
            .map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(BackendError::BackendUnavailable {
                request_id: request_id.to_string(),
                attempts: 1,
                reason: format!("status {status}: {}", text.chars().take(200).collect::<String>()),
            }));
        }
        Ok(parse_body(&text))
    }
}

fn classify(e: reqwest::Error) -> AttemptError {
    if e.is_timeout() {
        AttemptError::Timeout
    } else {
        AttemptError::Retryable(e.to_string())
    }
}

/// Accepts completions (`choices[0].text`), chat (`choices[0].message.content`)
/// or `{"text": ...}` bodies; anything else is taken verbatim.
pub(crate) fn parse_body(body: &str) -> RawCompletion {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return RawCompletion {
            text: body.to_string(),
            usage: Usage::default(),
        };
    };
    let text = v
        .pointer("/choices/0/text")
        .or_else(|| v.pointer("/choices/0/message/content"))
        .or_else(|| v.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| body.to_string());
    let usage = Usage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    RawCompletion { text, usage }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shapes() {
        assert_eq!(parse_body(r#"{"choices":[{"text":"a"}]}"#).text, "a");
        assert_eq!(parse_body(r#"{"choices":[{"message":{"content":"b"}}]}"#).text, "b");
        assert_eq!(parse_body(r#"{"text":"c"}"#).text, "c");
        assert_eq!(parse_body("plain words").text, "plain words");
        let r = parse_body(r#"{"text":"c","usage":{"prompt_tokens":3,"completion_tokens":1}}"#);
        assert_eq!(r.usage.prompt_tokens, 3);
    }
}
