//! Explanation backends: a deterministic stub, an external command, and an HTTP endpoint.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};

/// What a backend receives for one explanation.
#[derive(Debug, Clone, Copy)]
pub struct ExplainRequest<'a> {
    /// Fully rendered prompt.
    pub prompt: &'a str,
    /// The raw input sentence the prompt was built from.
    pub text: &'a str,
}

pub trait ExplanationBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// One attempt. Errors are plain messages; the caller attaches the example id.
    fn explain(&self, request: &ExplainRequest<'_>) -> std::result::Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueRule {
    pub keyword: String,
    pub clause: String,
}

impl CueRule {
    pub fn new(keyword: impl Into<String>, clause: impl Into<String>) -> Self {
        CueRule {
            keyword: keyword.into(),
            clause: clause.into(),
        }
    }
}

pub const STUB_DEFAULT_EXPLANATION: &str = "The speaker describes a situation.";

/// Rule-based explanation: `The speaker ` followed by the clause of every cue
/// whose keyword occurs (case-insensitively) in `text`, joined by ` and `.
pub fn stub_explain(text: &str, cue_map: &[CueRule]) -> String {
    let haystack = text.to_lowercase();
    let clauses: Vec<&str> = cue_map
        .iter()
        .filter(|cue| !cue.keyword.is_empty() && haystack.contains(&cue.keyword.to_lowercase()))
        .map(|cue| cue.clause.as_str())
        .collect();
    if clauses.is_empty() {
        STUB_DEFAULT_EXPLANATION.to_string()
    } else {
        format!("The speaker {}.", clauses.join(" and "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    ExternalHttp {
        endpoint: String,
    },
    ExternalCommand {
        command: Vec<String>,
    },
    Stub {
        cue_map: Vec<CueRule>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    /// Decoding settings forwarded to HTTP backends as `options`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<serde_json::Value>,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_parallel() -> usize {
    1
}

impl BackendDescriptor {
    pub fn stub(backend_id: impl Into<String>, cue_map: Vec<CueRule>) -> Self {
        BackendDescriptor {
            backend_id: backend_id.into(),
            kind: BackendKind::Stub { cue_map },
            timeout_secs: default_timeout(),
            max_parallel: default_parallel(),
            options: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Config(format!("backend `{}`: {m}", self.backend_id));
        if self.backend_id.trim().is_empty() {
            return Err(Error::Config("backend_id must be non-empty".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(bad(format!("timeout_secs must be positive, got {}", self.timeout_secs)));
        }
        if self.max_parallel == 0 {
            return Err(bad("max_parallel must be at least 1".into()));
        }
        match &self.kind {
            BackendKind::ExternalHttp { endpoint } if endpoint.is_empty() => {
                Err(bad("endpoint must be non-empty".into()))
            }
            BackendKind::ExternalCommand { command } if command.is_empty() => {
                Err(bad("command must be non-empty".into()))
            }
            BackendKind::Stub { cue_map } if cue_map.is_empty() => {
                Err(bad("stub cue_map must be non-empty".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn build(&self) -> Result<Box<dyn ExplanationBackend>> {
        self.validate()?;
        let id = self.backend_id.clone();
        Ok(match &self.kind {
            BackendKind::Stub { cue_map } => Box::new(StubBackend {
                id,
                cue_map: cue_map.clone(),
            }),
            BackendKind::ExternalCommand { command } => Box::new(CommandBackend {
                id,
                argv: command.clone(),
                timeout: self.timeout(),
            }),
            BackendKind::ExternalHttp { endpoint } => Box::new(HttpBackend {
                id,
                endpoint: endpoint.clone(),
                agent: ureq::AgentBuilder::new().timeout(self.timeout()).build(),
                options: self.options.clone(),
            }),
        })
    }
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    pub id: String,
    pub cue_map: Vec<CueRule>,
}

impl ExplanationBackend for StubBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn explain(&self, request: &ExplainRequest<'_>) -> std::result::Result<String, String> {
        Ok(stub_explain(request.text, &self.cue_map))
    }
}

/// Prompt on stdin, explanation on stdout, exit status 0 on success.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    pub id: String,
    pub argv: Vec<String>,
    pub timeout: Duration,
}

impl ExplanationBackend for CommandBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn explain(&self, request: &ExplainRequest<'_>) -> std::result::Result<String, String> {
        let (program, args) = self.argv.split_first().ok_or("empty command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("spawn `{program}`: {e}"))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let prompt = request.prompt.as_bytes().to_vec();
        let writer = std::thread::spawn(move || {
            // A child that exits without reading stdin yields EPIPE; its exit status decides.
            let _ = stdin.write_all(&prompt);
        });
        let stdout = drain(child.stdout.take().expect("piped stdout"));
        let stderr = drain(child.stderr.take().expect("piped stderr"));

        let status = match child.wait_timeout(self.timeout).map_err(|e| e.to_string())? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("timed out after {:?}", self.timeout));
            }
        };
        let _ = writer.join();
        let out = stdout.join().unwrap_or_default();
        let err = stderr.join().unwrap_or_default();
        if !status.success() {
            let err = String::from_utf8_lossy(&err);
            return Err(format!("exited with {status}: {}", err.trim()));
        }
        String::from_utf8(out).map_err(|_| "stdout is not valid UTF-8".to_string())
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    })
}

/// POST `{"prompt": ...}` and read `{"explanation": ...}`.
pub struct HttpBackend {
    pub id: String,
    pub endpoint: String,
    agent: ureq::Agent,
    options: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct HttpReply {
    explanation: String,
}

impl ExplanationBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn explain(&self, request: &ExplainRequest<'_>) -> std::result::Result<String, String> {
        let mut body = serde_json::json!({ "prompt": request.prompt });
        if let Some(options) = &self.options {
            body["options"] = options.clone();
        }
        let reply: HttpReply = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| format!("bad response body: {e}"))?;
        Ok(reply.explanation)
    }
}
