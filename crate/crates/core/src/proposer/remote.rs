use std::io::ErrorKind;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{ProposeRequest, ProposeResponse, PROPOSE_PATH};
use super::{check_proposal, Proposal, Proposer, ProposerContext, ProposerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Extra attempts after the first on timeouts, 5xx and connection errors.
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> usize {
    2
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.endpoint.trim_end_matches('/'), PROPOSE_PATH)
    }
}

enum Attempt {
    Done(Result<Proposal, ProposerError>),
    Retry(ProposerError),
}

/// Proposer backed by an HTTP service speaking the [`wire`](super::wire)
/// protocol.
pub struct RemoteProposer {
    config: RemoteConfig,
    agent: ureq::Agent,
    attempts: usize,
}

impl RemoteProposer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            attempts: 0,
        }
    }

    /// HTTP requests sent so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts
    }

    fn attempt(&mut self, body: &str, ctx: &ProposerContext, n: usize) -> Attempt {
        self.attempts += 1;
        let sent = self
            .agent
            .post(&self.config.url())
            .header("content-type", "application/json")
            .send(body);
        let mut response = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(ProposerError::Timeout { attempts: n }),
            Err(ureq::Error::Io(e)) if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
                return Attempt::Retry(ProposerError::Timeout { attempts: n })
            }
            Err(e) => {
                return Attempt::Retry(ProposerError::Transport {
                    message: e.to_string(),
                    attempts: n,
                })
            }
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(ProposerError::Timeout { attempts: n }),
            Err(e) => {
                return Attempt::Retry(ProposerError::Transport {
                    message: e.to_string(),
                    attempts: n,
                })
            }
        };
        if status >= 500 {
            return Attempt::Retry(ProposerError::Status { status, attempts: n });
        }
        if status >= 300 {
            return Attempt::Done(Err(ProposerError::Status { status, attempts: n }));
        }
        Attempt::Done(parse_reply(&text, ctx))
    }
}

fn parse_reply(text: &str, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
    let reply: ProposeResponse = serde_json::from_str(text).map_err(|e| ProposerError::Malformed {
        reason: e.to_string(),
        body: text.to_string(),
    })?;
    let theta = reply.theta();
    check_proposal(&theta, &ctx.bounds).map_err(|e| ProposerError::Malformed {
        reason: e.to_string(),
        body: text.to_string(),
    })?;
    Ok(Proposal {
        theta,
        rationale: reply.rationale,
        proposer: "remote".into(),
    })
}

impl Proposer for RemoteProposer {
    fn name(&self) -> &str {
        "remote"
    }

    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        let body = serde_json::to_string(&ProposeRequest::from(ctx)).expect("request serializes");
        let mut last = None;
        for n in 1..=self.config.retries + 1 {
            match self.attempt(&body, ctx, n) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::EvalResult;
    use crate::params::ParamBounds;

    fn ctx() -> ProposerContext {
        let b = ParamBounds::swimmer();
        ProposerContext::new(0, 5, b.midpoint(), &EvalResult::scalar(0.3), b, vec![], vec![])
    }

    #[test]
    fn short_reply_is_malformed() {
        let body = serde_json::json!({"theta_proposed": vec![1.0; 15], "rationale": "x"}).to_string();
        match parse_reply(&body, &ctx()) {
            Err(ProposerError::Malformed { body: b, .. }) => assert_eq!(b, body),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_json_reply_is_malformed() {
        assert!(matches!(parse_reply("nope", &ctx()), Err(ProposerError::Malformed { .. })));
    }

    #[test]
    fn valid_reply_parses() {
        let body = serde_json::json!({"theta_proposed": vec![1.0; 16], "rationale": "because"}).to_string();
        let p = parse_reply(&body, &ctx()).unwrap();
        assert_eq!(p.theta.len(), 16);
        assert_eq!(p.rationale, "because");
    }

    #[test]
    fn url_joins_path() {
        assert_eq!(RemoteConfig::new("http://h:1/").url(), "http://h:1/propose");
    }
}
