//! Prompt templates and the schema-validated LLM call used by every agent.

use serde_json::{json, Value};

use crate::canon;
use crate::gateway::{Gateway, GatewayError, Service, ServiceRequest};

/// Bumped whenever a template's wording changes; part of the request
/// payload, so recorded fixtures for older wording stop matching.
pub const TEMPLATE_VERSION: &str = "v1";

const TEMPLATES: &[(&str, &str)] = &[
    (
        "composer/skeletonize",
        include_str!("../assets/prompts/composer/skeletonize.txt"),
    ),
    (
        "composer/expand",
        include_str!("../assets/prompts/composer/expand.txt"),
    ),
    (
        "composer/refine",
        include_str!("../assets/prompts/composer/refine.txt"),
    ),
    (
        "paginator/paginate",
        include_str!("../assets/prompts/paginator/paginate.txt"),
    ),
    (
        "codegen/scene",
        include_str!("../assets/prompts/codegen/scene.txt"),
    ),
    (
        "narrator/narrate",
        include_str!("../assets/prompts/narrator/narrate.txt"),
    ),
    (
        "debugger/repair",
        include_str!("../assets/prompts/debugger/repair.txt"),
    ),
];

pub fn template(name: &str) -> Option<&'static str> {
    TEMPLATES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Substitutes `{{key}}` placeholders. Unknown placeholders are left as-is.
pub fn render(name: &str, vars: &[(&str, String)]) -> String {
    let mut out = template(name)
        .unwrap_or_else(|| panic!("unknown prompt template {name}"))
        .to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

/// A rendered prompt plus the structured input it was built from. Offline
/// backends answer from `input`; real models only see `text`.
#[derive(Debug, Clone)]
pub struct Prompt {
    pub purpose: String,
    pub template: &'static str,
    pub text: String,
    pub input: Value,
}

impl Prompt {
    pub fn new(
        purpose: impl Into<String>,
        template: &'static str,
        vars: &[(&str, String)],
        input: Value,
    ) -> Self {
        Prompt {
            purpose: purpose.into(),
            template,
            text: render(template, vars),
            input,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AskError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("response failed validation after {attempts} attempt(s): {reason}")]
    Schema {
        attempts: u32,
        reason: String,
        raw: String,
    },
}

/// Sends `prompt`, validating the answer with `parse`. A rejected answer is
/// retried with the validation message appended, up to the gateway's
/// attempt budget.
pub fn ask<T>(
    gw: &Gateway,
    prompt: &Prompt,
    parse: impl Fn(&Value) -> Result<T, String>,
) -> Result<T, AskError> {
    let attempts = gw.policy.max_attempts.max(1);
    let mut feedback: Option<String> = None;
    let mut raw = String::new();
    for attempt in 1..=attempts {
        let mut text = prompt.text.clone();
        if let Some(f) = &feedback {
            text.push_str("\n\nYour previous answer was rejected: ");
            text.push_str(f);
            text.push_str("\nAnswer again with corrected JSON only.\n");
        }
        let payload = json!({
            "attempt": attempt,
            "feedback": feedback,
            "input": prompt.input,
            "prompt": text,
            "template": format!("{}@{}", prompt.template, TEMPLATE_VERSION),
        });
        let req = ServiceRequest {
            service: Service::Llm,
            payload: canon::to_compact(&payload).expect("prompt payload is finite JSON"),
            purpose: prompt.purpose.clone(),
        };
        let resp = gw.call(&req)?;
        raw = String::from_utf8_lossy(&resp.payload).into_owned();
        let outcome = serde_json::from_str::<Value>(&raw)
            .map_err(|e| format!("not JSON: {e}"))
            .and_then(|v| parse(&v));
        match outcome {
            Ok(v) => return Ok(v),
            Err(reason) => {
                log::warn!("{}: attempt {attempt} rejected: {reason}", prompt.purpose);
                feedback = Some(reason);
            }
        }
    }
    Err(AskError::Schema {
        attempts,
        reason: feedback.unwrap_or_default(),
        raw,
    })
}

/// Deserializes a JSON value into `T`, mapping the error to a message.
pub fn decode<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}
