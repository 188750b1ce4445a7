//! LLM client abstraction shared by the judge and the rubric-learner
//! backends: one prompt in, one text completion out.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::{RewardError, RubricSet};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: String },
    #[error("missing configuration: {0}")]
    MissingConfig(&'static str),
}

/// A completion backend. Implementations must be safe for bounded
/// concurrent use.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

/// Counting semaphore bounding concurrent in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

/// Blocking HTTP client: one POST per completion, bearer auth,
/// per-request timeout, exponential-backoff retries, and a bound on
/// concurrent in-flight requests.
pub struct HttpLlmClient {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    max_retries: u32,
    backoff: Duration,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            max_retries: 3,
            backoff: Duration::from_millis(250),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("reqwest client"),
            gate: Gate::new(4),
        }
    }

    /// Reads JUDGE_ENDPOINT, JUDGE_API_KEY, and JUDGE_MODEL.
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var("JUDGE_ENDPOINT")
            .map_err(|_| ClientError::MissingConfig("JUDGE_ENDPOINT"))?;
        let model =
            std::env::var("JUDGE_MODEL").map_err(|_| ClientError::MissingConfig("JUDGE_MODEL"))?;
        let mut client = Self::new(endpoint, model);
        if let Ok(key) = std::env::var("JUDGE_API_KEY") {
            client.api_key = Some(key);
        }
        Ok(client)
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client");
        self
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.gate = Gate::new(n.max(1));
        self
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let _permit = self.gate.acquire();
        let mut last = String::new();
        let attempts = self.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut request = self
                .client
                .post(&self.endpoint)
                .json(&serde_json::json!({ "model": self.model, "prompt": prompt }));
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.text().map_err(|e| ClientError::Unreachable {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    });
                }
                Ok(resp) => last = format!("status {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(ClientError::Unreachable { attempts, last })
    }
}

/// Canned client for tests and offline runs: pops scripted responses,
/// then fails as unreachable.
pub struct ScriptedClient {
    responses: Mutex<VecDeque<String>>,
    repeat_last: bool,
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>) -> Self {
        Self {
            responses: Mutex::new(responses.into()),
            repeat_last: false,
        }
    }

    /// Always answers with `response`.
    pub fn repeating(response: impl Into<String>) -> Self {
        Self {
            responses: Mutex::new(VecDeque::from([response.into()])),
            repeat_last: true,
        }
    }

    /// A client whose every call fails; models a dead endpoint.
    pub fn unreachable() -> Self {
        Self::new(Vec::new())
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, _prompt: &str) -> Result<String, ClientError> {
        let mut q = self.responses.lock().unwrap();
        if self.repeat_last {
            return q.front().cloned().ok_or(ClientError::Unreachable {
                attempts: 1,
                last: "script empty".to_string(),
            });
        }
        q.pop_front().ok_or(ClientError::Unreachable {
            attempts: 1,
            last: "script exhausted".to_string(),
        })
    }
}

/// Renders the full rubric prompt for one plan.
pub fn render_judge_prompt(rubrics: &RubricSet, query_text: &str, plan: &str) -> String {
    let mut out = String::from(
        "Score the plan below on each dimension with an integer from 0 to its maximum. \
         Respond with JSON only: one object per dimension name holding {\"score\", \"comment\"}, \
         plus \"total_score\" and \"overall_comment\".\n",
    );
    for d in &rubrics.dimensions {
        out.push_str(&format!("\nDimension: {} (0..={})\n", d.name, d.max_score));
        for c in &d.criteria {
            out.push_str(&format!("- {c}\n"));
        }
    }
    out.push_str(&format!("\nQuery: {query_text}\nPlan: {plan}\n"));
    out
}

/// Calls the remote judge once for the whole rubric set and parses the
/// per-dimension integer scores. The remote total is checked against
/// the local sum; mismatches are recorded as warnings, never trusted.
pub(super) fn judge_remote(
    client: &dyn LlmClient,
    rubrics: &RubricSet,
    query_text: &str,
    plan: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<(i64, String)>, RewardError> {
    let prompt = render_judge_prompt(rubrics, query_text, plan);
    let text = client
        .complete(&prompt)
        .map_err(|e| RewardError::JudgeUnavailable(e.to_string()))?;
    let start = text.find('{').ok_or_else(|| RewardError::BadPayload {
        detail: "no JSON object in response".to_string(),
        raw: text.clone(),
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text[start..]).map_err(|e| RewardError::BadPayload {
            detail: e.to_string(),
            raw: text.clone(),
        })?;

    let mut scores = Vec::with_capacity(rubrics.dimensions.len());
    for d in &rubrics.dimensions {
        let entry = value.get(&d.name).ok_or_else(|| RewardError::BadPayload {
            detail: format!("dimension {} missing from response", d.name),
            raw: text.clone(),
        })?;
        let raw_score = entry.get("score").ok_or_else(|| RewardError::BadPayload {
            detail: format!("dimension {} has no score", d.name),
            raw: text.clone(),
        })?;
        let score = match raw_score {
            v if v.is_i64() => v.as_i64().unwrap(),
            v if v.is_f64() => {
                let f = v.as_f64().unwrap();
                if f.fract() != 0.0 {
                    return Err(RewardError::FractionalScore {
                        dimension: d.name.clone(),
                        raw: v.to_string(),
                    });
                }
                f as i64
            }
            v => {
                return Err(RewardError::BadPayload {
                    detail: format!("dimension {} score is not a number", d.name),
                    raw: v.to_string(),
                })
            }
        };
        let comment = entry
            .get("comment")
            .and_then(|c| c.as_str())
            .unwrap_or("")
            .to_string();
        scores.push((score, comment));
    }
    if let Some(remote_total) = value.get("total_score").and_then(|t| t.as_i64()) {
        let local: i64 = scores.iter().map(|(s, _)| *s).sum();
        if remote_total != local {
            warnings.push(format!(
                "remote total_score {remote_total} disagrees with local sum {local}"
            ));
        }
    }
    Ok(scores)
}
