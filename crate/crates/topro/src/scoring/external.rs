//! Adapter for out-of-process scoring backends.
//!
//! The wire protocol is line-delimited JSON over a subprocess's standard
//! streams or a local TCP socket. One request per line, one response per
//! line:
//!
//! ```text
//! -> {"prompts": ["...", ...], "candidates": ["...", ...]}
//! <- {"log_probs": [[...], ...]}          # one row per prompt, request order
//! -> {"probe": "word"}
//! <- {"pieces": 3}
//! -> {"generate": {"input": "...", "max_target_length": 150, "beam_width": 3}}
//! <- {"text": "..."}
//! ```
//!
//! Any response may instead be `{"error": "..."}`. Candidate order is
//! preserved; bit-exactness is not required. Log-probabilities are
//! renormalized over the candidates (a softmax over the returned row).
//!
//! The backend's mask symbol is declared in the endpoint spec; the adapter
//! substitutes it for the neutral `[MASK]` literal before sending prompts.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Generator, MaskDistribution, MaskScorer, ScoringError};
use crate::pvp::{PromptInstance, MASK_PLACEHOLDER};

/// How to reach the backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Spawn a subprocess and speak over its standard streams. The command
    /// is split on whitespace; a relative program path is also resolved
    /// against `TOPRO_CACHE_DIR` when that variable is set.
    Stdio(String),
    /// Connect to `host:port`.
    Tcp(String),
}

/// Parsed endpoint description: `[mask=SYMBOL,]stdio:COMMAND` or
/// `[mask=SYMBOL,]tcp:ADDR`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointSpec {
    pub transport: Transport,
    pub mask_symbol: Option<String>,
}

impl FromStr for EndpointSpec {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = |reason: &str| ScoringError::InvalidEndpoint {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (mask_symbol, rest) = match s.strip_prefix("mask=") {
            Some(tail) => {
                let (symbol, rest) = tail
                    .split_once(',')
                    .ok_or_else(|| invalid("expected `,` after mask symbol"))?;
                if symbol.is_empty() {
                    return Err(invalid("empty mask symbol"));
                }
                (Some(symbol.to_string()), rest)
            }
            None => (None, s),
        };
        let transport = if let Some(cmd) = rest.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(invalid("empty command"));
            }
            Transport::Stdio(cmd.to_string())
        } else if let Some(addr) = rest.strip_prefix("tcp:") {
            if addr.trim().is_empty() {
                return Err(invalid("empty address"));
            }
            Transport::Tcp(addr.to_string())
        } else {
            return Err(invalid("expected `stdio:` or `tcp:` transport"));
        };
        Ok(EndpointSpec { transport, mask_symbol })
    }
}

enum Connection {
    Stdio {
        child: Child,
        stdin: ChildStdin,
        stdout: BufReader<ChildStdout>,
    },
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Stdio { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompts: &'a [String],
    candidates: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    log_probs: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ProbeRequest<'a> {
    probe: &'a str,
}

#[derive(Deserialize)]
struct ProbeResponse {
    pieces: usize,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    generate: GenerateBody<'a>,
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    input: &'a str,
    max_target_length: usize,
    beam_width: usize,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Synchronous adapter from the scorer contract to the wire protocol.
/// Requests are serialized through an internal lock, so concurrent scoring
/// calls are safe but not pipelined.
pub struct ExternalScorerAdapter {
    mask_symbol: Option<String>,
    connection: Mutex<Connection>,
}

impl ExternalScorerAdapter {
    /// Spawn or connect to the backend. Failure to reach it is
    /// [`ScoringError::BackendUnavailable`].
    pub fn connect(spec: &EndpointSpec) -> Result<Self, ScoringError> {
        let connection = match &spec.transport {
            Transport::Stdio(command) => {
                let mut parts = command.split_whitespace();
                let program = parts.next().ok_or_else(|| ScoringError::InvalidEndpoint {
                    spec: command.clone(),
                    reason: "empty command".into(),
                })?;
                let program = resolve_program(program);
                let mut child = Command::new(program)
                    .args(parts)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::null())
                    .spawn()
                    .map_err(|e| ScoringError::BackendUnavailable {
                        reason: format!("failed to spawn `{command}`: {e}"),
                    })?;
                let stdin = child.stdin.take().expect("stdin is piped");
                let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
                Connection::Stdio { child, stdin, stdout }
            }
            Transport::Tcp(addr) => {
                let writer = TcpStream::connect(addr).map_err(|e| ScoringError::BackendUnavailable {
                    reason: format!("failed to connect to `{addr}`: {e}"),
                })?;
                let reader = writer.try_clone().map_err(|e| ScoringError::BackendUnavailable {
                    reason: format!("failed to clone stream for `{addr}`: {e}"),
                })?;
                Connection::Tcp {
                    writer,
                    reader: BufReader::new(reader),
                }
            }
        };
        Ok(Self {
            mask_symbol: spec.mask_symbol.clone(),
            connection: Mutex::new(connection),
        })
    }

    fn call(&self, request: &impl Serialize) -> Result<serde_json::Value, ScoringError> {
        let line = serde_json::to_string(request).map_err(|e| ScoringError::Protocol {
            reason: format!("failed to encode request: {e}"),
        })?;
        let mut conn = self.connection.lock().unwrap_or_else(|e| e.into_inner());
        let unavailable = |e: std::io::Error| ScoringError::BackendUnavailable {
            reason: e.to_string(),
        };
        let mut response = String::new();
        match &mut *conn {
            Connection::Stdio { stdin, stdout, .. } => {
                stdin.write_all(line.as_bytes()).map_err(unavailable)?;
                stdin.write_all(b"\n").map_err(unavailable)?;
                stdin.flush().map_err(unavailable)?;
                stdout.read_line(&mut response).map_err(unavailable)?;
            }
            Connection::Tcp { writer, reader } => {
                writer.write_all(line.as_bytes()).map_err(unavailable)?;
                writer.write_all(b"\n").map_err(unavailable)?;
                writer.flush().map_err(unavailable)?;
                reader.read_line(&mut response).map_err(unavailable)?;
            }
        }
        if response.is_empty() {
            return Err(ScoringError::BackendUnavailable {
                reason: "backend closed the stream".into(),
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&response).map_err(|e| ScoringError::Protocol {
                reason: format!("malformed response line: {e}"),
            })?;
        if let Some(message) = value.get("error").and_then(|e| e.as_str()) {
            return Err(ScoringError::Protocol {
                reason: format!("backend error: {message}"),
            });
        }
        Ok(value)
    }

    fn substituted(&self, text: &str) -> Result<String, ScoringError> {
        if !text.contains(MASK_PLACEHOLDER) {
            return Ok(text.to_string());
        }
        match &self.mask_symbol {
            Some(symbol) => Ok(text.replace(MASK_PLACEHOLDER, symbol)),
            None => Err(ScoringError::MaskSymbolMissing),
        }
    }
}

fn resolve_program(program: &str) -> PathBuf {
    let path = PathBuf::from(program);
    if path.is_relative() {
        if let Ok(cache) = std::env::var(crate::CACHE_DIR_ENV) {
            let candidate = PathBuf::from(cache).join(&path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path
}

impl MaskScorer for ExternalScorerAdapter {
    fn score_batch(
        &self,
        prompts: &[PromptInstance],
        candidates: &[String],
    ) -> Result<Vec<MaskDistribution>, ScoringError> {
        if prompts.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = prompts
            .iter()
            .map(|p| self.substituted(&p.text))
            .collect::<Result<_, _>>()?;
        let value = self.call(&ScoreRequest {
            prompts: &texts,
            candidates,
        })?;
        let response: ScoreResponse =
            serde_json::from_value(value).map_err(|e| ScoringError::Protocol {
                reason: format!("malformed score response: {e}"),
            })?;
        if response.log_probs.len() != prompts.len() {
            return Err(ScoringError::Protocol {
                reason: format!(
                    "expected {} rows of log-probabilities, got {}",
                    prompts.len(),
                    response.log_probs.len()
                ),
            });
        }
        response
            .log_probs
            .into_iter()
            .map(|row| {
                if row.len() != candidates.len() {
                    return Err(ScoringError::Protocol {
                        reason: format!(
                            "expected {} columns of log-probabilities, got {}",
                            candidates.len(),
                            row.len()
                        ),
                    });
                }
                MaskDistribution::from_log_probs(
                    candidates.iter().cloned().zip(row),
                )
            })
            .collect()
    }

    fn vocabulary_probe(&self, word: &str) -> Option<usize> {
        let value = self.call(&ProbeRequest { probe: word }).ok()?;
        let response: ProbeResponse = serde_json::from_value(value).ok()?;
        Some(response.pieces)
    }
}

impl Generator for ExternalScorerAdapter {
    fn generate(
        &self,
        input: &str,
        max_target_length: usize,
        beam_width: usize,
    ) -> Result<String, ScoringError> {
        let value = self.call(&GenerateRequest {
            generate: GenerateBody {
                input,
                max_target_length,
                beam_width,
            },
        })?;
        let response: GenerateResponse =
            serde_json::from_value(value).map_err(|e| ScoringError::Protocol {
                reason: format!("malformed generate response: {e}"),
            })?;
        Ok(response.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_specs_parse() {
        let spec: EndpointSpec = "stdio:python3 backend.py --fast".parse().unwrap();
        assert_eq!(
            spec.transport,
            Transport::Stdio("python3 backend.py --fast".into())
        );
        assert_eq!(spec.mask_symbol, None);

        let spec: EndpointSpec = "mask=<mask>,tcp:127.0.0.1:9000".parse().unwrap();
        assert_eq!(spec.transport, Transport::Tcp("127.0.0.1:9000".into()));
        assert_eq!(spec.mask_symbol.as_deref(), Some("<mask>"));

        assert!("http://nope".parse::<EndpointSpec>().is_err());
        assert!("mask=,stdio:x".parse::<EndpointSpec>().is_err());
        assert!("stdio:".parse::<EndpointSpec>().is_err());
    }

    #[test]
    fn unreachable_endpoints_are_backend_unavailable() {
        let spec: EndpointSpec = "stdio:/nonexistent/backend-binary".parse().unwrap();
        assert!(matches!(
            ExternalScorerAdapter::connect(&spec),
            Err(ScoringError::BackendUnavailable { .. })
        ));

        let spec: EndpointSpec = "tcp:127.0.0.1:1".parse().unwrap();
        assert!(matches!(
            ExternalScorerAdapter::connect(&spec),
            Err(ScoringError::BackendUnavailable { .. })
        ));
    }

    #[test]
    fn masked_prompts_require_a_mask_symbol() {
        // `cat` is a degenerate but spawnable backend; the mask check fires
        // before any request is written.
        let spec: EndpointSpec = "stdio:cat".parse().unwrap();
        let adapter = ExternalScorerAdapter::connect(&spec).unwrap();
        let prompt = PromptInstance {
            sentence_id: "s".into(),
            token_index: 0,
            text: format!("x {MASK_PLACEHOLDER}"),
            gold_tag: None,
        };
        let err = adapter.score_batch(std::slice::from_ref(&prompt), &["a".into()]);
        assert!(matches!(err, Err(ScoringError::MaskSymbolMissing)));
    }
}
