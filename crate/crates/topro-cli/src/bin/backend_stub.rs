//! Reference implementation of the external scoring protocol, for tests and
//! as documentation of the wire format.
//!
//! Reads one JSON request per line on stdin and answers one JSON response
//! per line on stdout:
//!
//! - `{"prompts": [...], "candidates": [...]}` -> `{"log_probs": [[...]]}`
//! - `{"probe": "word"}` -> `{"pieces": N}`
//! - `{"generate": {"input": ..., ...}}` -> `{"text": "..."}`
//!
//! Behavior is controlled by flags so tests can pin exact outputs:
//!
//! - `--log-probs -1,-2` scores every prompt with the given row, cycled to
//!   the candidate count (default: all zeros, a uniform distribution).
//! - `--prefer-contained` instead gives log-prob 0 to candidates contained
//!   in the prompt text and -10 to the rest.
//! - `--pieces word=3,foo=2` overrides probe answers (default 1).
//! - `--generate-text TEXT` fixes the generation output (default empty).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde_json::{json, Value};

struct Options {
    log_probs: Option<Vec<f64>>,
    prefer_contained: bool,
    pieces: HashMap<String, usize>,
    generate_text: String,
}

fn parse_options() -> Options {
    let mut options = Options {
        log_probs: None,
        prefer_contained: false,
        pieces: HashMap::new(),
        generate_text: String::new(),
    };
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--log-probs" => {
                let csv = args.next().unwrap_or_default();
                options.log_probs = Some(
                    csv.split(',')
                        .filter_map(|s| s.trim().parse::<f64>().ok())
                        .collect(),
                );
            }
            "--prefer-contained" => options.prefer_contained = true,
            "--pieces" => {
                let csv = args.next().unwrap_or_default();
                for pair in csv.split(',') {
                    if let Some((word, count)) = pair.split_once('=') {
                        if let Ok(count) = count.trim().parse::<usize>() {
                            options.pieces.insert(word.trim().to_string(), count);
                        }
                    }
                }
            }
            "--generate-text" => {
                options.generate_text = args.next().unwrap_or_default();
            }
            _ => {}
        }
    }
    options
}

fn score_row(options: &Options, prompt: &str, candidates: &[String]) -> Vec<f64> {
    if options.prefer_contained {
        return candidates
            .iter()
            .map(|c| if prompt.contains(c.as_str()) { 0.0 } else { -10.0 })
            .collect();
    }
    match &options.log_probs {
        Some(row) if !row.is_empty() => (0..candidates.len())
            .map(|i| row[i % row.len()])
            .collect(),
        _ => vec![0.0; candidates.len()],
    }
}

fn handle(options: &Options, request: &Value) -> Value {
    if let (Some(prompts), Some(candidates)) = (
        request.get("prompts").and_then(|p| p.as_array()),
        request.get("candidates").and_then(|c| c.as_array()),
    ) {
        let candidates: Vec<String> = candidates
            .iter()
            .filter_map(|c| c.as_str().map(String::from))
            .collect();
        let rows: Vec<Vec<f64>> = prompts
            .iter()
            .map(|p| score_row(options, p.as_str().unwrap_or(""), &candidates))
            .collect();
        return json!({ "log_probs": rows });
    }
    if let Some(word) = request.get("probe").and_then(|w| w.as_str()) {
        let pieces = options.pieces.get(word).copied().unwrap_or(1);
        return json!({ "pieces": pieces });
    }
    if request.get("generate").is_some() {
        return json!({ "text": options.generate_text });
    }
    json!({ "error": "unrecognized request" })
}

fn main() {
    let options = parse_options();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Value>(&line) {
            Ok(request) => handle(&options, &request),
            Err(e) => json!({ "error": format!("bad request: {e}") }),
        };
        if writeln!(out, "{response}").is_err() || out.flush().is_err() {
            break;
        }
    }
}
