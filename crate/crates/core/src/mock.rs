//! Deterministic stand-in for the LLM service. Answers are a pure function
//! of the request's structured input, so recorded fixtures are stable.

use serde_json::{json, Value};

use crate::gateway::{ServiceRequest, Transport, TransportError};
use crate::model::{IntentKind, PageBlueprint};
use crate::words::{count_words, sentences};

const FILLER: &[&str] = &[
    "students",
    "often",
    "see",
    "how",
    "the",
    "idea",
    "connects",
    "to",
    "earlier",
    "material",
    "and",
    "a",
    "small",
    "example",
    "makes",
    "each",
    "step",
    "concrete",
    "before",
    "we",
    "move",
    "on",
    "carefully",
    "together",
];

const BULLET_WORDS: usize = 9;
const BULLETS_PER_PAGE: usize = 3;

#[derive(Debug, Default, Clone, Copy)]
pub struct MockLlm;

impl Transport for MockLlm {
    fn send(&self, req: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        let payload: Value = serde_json::from_slice(&req.payload)
            .map_err(|e| TransportError::fatal(format!("mock: bad payload: {e}")))?;
        let input = &payload["input"];
        let p = req.purpose.as_str();
        let answer = if p == "composer.skeletonize" {
            skeleton(input)
        } else if p.starts_with("composer.expand.") {
            expand(input)
        } else if p.starts_with("composer.refine.") {
            refine(input)
        } else if p.starts_with("paginator.segment.") {
            paginate(input)
        } else if p.starts_with("codegen.page.") {
            scene(input)
        } else if p.starts_with("narrator.page.") {
            narrate(input)
        } else if p.starts_with("debugger.page.") {
            repair(input)
        } else {
            return Err(TransportError::fatal(format!(
                "mock: no answer for purpose {p:?}"
            )));
        };
        Ok(serde_json::to_vec(&answer).expect("mock answer encodes"))
    }
}

fn seed_of(s: &str) -> usize {
    s.bytes()
        .fold(7usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// `n` words drawn from the filler list, starting at an offset derived from
/// `topic`, grouped into sentences of at most 12 words.
fn prose(topic: &str, n: usize) -> String {
    let start = seed_of(topic);
    let topic_word = topic
        .split_whitespace()
        .next()
        .unwrap_or("topic")
        .to_lowercase();
    let words: Vec<String> = (0..n)
        .map(|i| {
            if i % 12 == 3 {
                topic_word.clone()
            } else {
                FILLER[(start + i * 5) % FILLER.len()].to_string()
            }
        })
        .collect();
    words
        .chunks(12)
        .map(|c| capitalize(&c.join(" ")) + ".")
        .collect::<Vec<_>>()
        .join(" ")
}

fn skeleton(input: &Value) -> Value {
    let keywords: Vec<&str> = input["keywords"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(Value::as_str)
                .filter(|k| !k.trim().is_empty())
                .collect()
        })
        .unwrap_or_default();
    let concepts: Vec<Value> = keywords
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let deps: Vec<String> = if i == 0 {
                vec![]
            } else {
                vec![format!("c{i}")]
            };
            json!({
                "id": format!("c{}", i + 1),
                "title": capitalize(k.trim()),
                "one_line_gist": format!("What {} means and where it shows up.", k.trim()),
                "depends_on": deps,
            })
        })
        .collect();
    json!({ "concepts": concepts })
}

fn expand(input: &Value) -> Value {
    let title = input["title"].as_str().unwrap_or("Topic");
    let index = input["index"].as_u64().unwrap_or(0);
    let mut body = format!("{title} is the subject of this part. ");
    body.push_str(&prose(title, 96));
    let formal: Vec<String> = if index.is_multiple_of(2) {
        vec![format!(
            "{}(x) = x^{}",
            title.chars().next().unwrap_or('f').to_ascii_lowercase(),
            index + 2
        )]
    } else {
        vec![]
    };
    json!({
        "heading": title,
        "body": body,
        "formal_expressions": formal,
        "examples": [format!("A worked case of {}.", title.to_lowercase())],
    })
}

fn refine(input: &Value) -> Value {
    let heading = input["heading"].as_str().unwrap_or("Topic");
    let target = input["target_words"].as_u64().unwrap_or(1).max(1) as usize;
    let body = input["body"].as_str().unwrap_or("");
    let words: Vec<&str> = body
        .split_whitespace()
        .map(|w| w.trim_end_matches(['.', '!', '?']))
        .filter(|w| !w.is_empty())
        .collect();
    let text = if words.is_empty() {
        prose(heading, target)
    } else {
        let picked: Vec<String> = (0..target)
            .map(|i| words[i % words.len()].to_string())
            .collect();
        picked
            .chunks(12)
            .map(|c| capitalize(&c.join(" ")) + ".")
            .collect::<Vec<_>>()
            .join(" ")
    };
    json!({ "body": text })
}

fn shorten(sentence: &str) -> String {
    let words: Vec<&str> = sentence
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .collect();
    words[..words.len().min(BULLET_WORDS)].join(" ")
}

fn paginate(input: &Value) -> Value {
    let density_max = input["density_max"].as_u64().unwrap_or(8).max(2) as usize;
    let per_page = BULLETS_PER_PAGE.min(density_max - 1);
    let mut pages = Vec::new();
    for s in input["sections"].as_array().into_iter().flatten() {
        let idx = s["index"].as_u64().unwrap_or(0);
        let heading = s["heading"].as_str().unwrap_or("Untitled");
        let body = s["body"].as_str().unwrap_or("");
        let bullets: Vec<String> = sentences(body)
            .iter()
            .map(|x| shorten(x))
            .filter(|b| count_words(b) > 0)
            .collect();
        let formulas: Vec<&str> = s["formal_expressions"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .collect();
        let chunks: Vec<&[String]> = if bullets.is_empty() {
            vec![&[][..]]
        } else {
            bullets.chunks(per_page).collect()
        };
        for (k, chunk) in chunks.iter().enumerate() {
            let intents: Vec<Value> = if k == 0 {
                formulas
                    .iter()
                    .take(density_max - chunk.len())
                    .map(|f| json!({"kind": IntentKind::Formula, "payload": f}))
                    .collect()
            } else {
                vec![]
            };
            let (chunk, intents) = if chunk.is_empty() && intents.is_empty() {
                (vec![heading.to_string()], intents)
            } else {
                (chunk.to_vec(), intents)
            };
            pages.push(json!({
                "title": heading,
                "bullet_points": chunk,
                "visual_intents": intents,
                "source_span": {"start": idx, "end": idx + 1},
                "est_density": chunk.len() + intents.len(),
            }));
        }
    }
    json!({ "pages": pages })
}

fn element_kind(kind: IntentKind) -> &'static str {
    match kind {
        IntentKind::Formula => "formula",
        IntentKind::Diagram | IntentKind::Table => "shape",
        IntentKind::ImagePlaceholder => "image_placeholder",
        IntentKind::PlainText => "text",
    }
}

fn scene(input: &Value) -> Value {
    let page: PageBlueprint = match serde_json::from_value(input["blueprint"].clone()) {
        Ok(p) => p,
        Err(_) => return json!({"elements": [], "events": []}),
    };
    let mut elements = vec![json!({
        "id": "title", "kind": "text", "content": page.title,
        "bbox": {"cx": 0.0, "cy": 3.75, "w": 10.0, "h": 1.0},
    })];
    let mut y = 2.25;
    for (k, b) in page.bullet_points.iter().enumerate() {
        let w = (count_words(b) as f64 * 0.75).clamp(2.0, 12.0);
        elements.push(json!({
            "id": format!("bullet_{}", k + 1), "kind": "text", "content": b,
            "bbox": {"cx": -1.0, "cy": y, "w": w, "h": 0.75},
        }));
        y -= 1.25;
    }
    for (k, v) in page.visual_intents.iter().enumerate() {
        // drawn where the last bullet sits; the layout pass moves it
        let cy = y + 1.25 - 0.25;
        elements.push(json!({
            "id": format!("visual_{}", k + 1), "kind": element_kind(v.kind), "content": v.payload,
            "bbox": {"cx": 1.0, "cy": cy - k as f64 * 1.5, "w": 4.0, "h": 1.5},
            "style": {"intent": k.to_string()},
        }));
    }
    let events: Vec<Value> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| json!({"anchor_id": format!("a{}", i + 1), "verb": "appear", "target_ids": [e["id"]], "duration_s": 1.0}))
        .collect();
    json!({ "elements": elements, "events": events })
}

fn narrate(input: &Value) -> Value {
    let title = input["blueprint"]["title"].as_str().unwrap_or("this slide");
    let first_page = input["lookback"].as_array().is_none_or(|a| a.is_empty());
    let anchors: Vec<&Value> = input["anchors"]
        .as_array()
        .map(|a| a.iter().collect())
        .unwrap_or_default();
    let mut units = Vec::new();
    let intro = if first_page {
        format!("We begin with {title}.")
    } else {
        format!("Next, {title}.")
    };
    units.push(json!({"unit_id": "u1", "text": intro, "anchor_ref": anchors.first().map(|a| &a["anchor_id"])}));
    for a in anchors.iter().skip(1) {
        let content = a["content"]
            .as_array()
            .and_then(|c| c.first())
            .and_then(Value::as_str)
            .unwrap_or("this");
        let text = format!("{}.", capitalize(content.trim_end_matches('.')));
        units.push(json!({"unit_id": format!("u{}", units.len() + 1), "text": text, "anchor_ref": a["anchor_id"]}));
    }
    json!({ "units": units })
}

fn repair(input: &Value) -> Value {
    let mut els = input["fragment"].as_array().cloned().unwrap_or_default();
    for e in &mut els {
        if let Some(style) = e.get_mut("style").and_then(Value::as_object_mut) {
            style.insert("repaired".into(), json!("1"));
        } else {
            e["style"] = json!({"repaired": "1"});
        }
    }
    json!({ "elements": els })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prose_has_requested_length_and_sentences() {
        let p = prose("Entropy", 30);
        assert_eq!(count_words(&p), 30);
        assert_eq!(sentences(&p).len(), 3);
        assert_eq!(p, prose("Entropy", 30));
    }

    #[test]
    fn refine_hits_target_words() {
        let out = refine(
            &json!({"heading": "H", "body": "One two three. Four five.", "target_words": 17}),
        );
        assert_eq!(count_words(out["body"].as_str().unwrap()), 17);
    }
}
