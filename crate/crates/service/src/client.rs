//! Blocking HTTP client for the experiment API.

use adlift_core::engine::{Command, ExperimentConfig, Report};
use reqwest::blocking::{Client as Http, RequestBuilder};
use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::wire::{CommandReply, ErrorReply, HistoryReply, ListReply, ReportQuery, Summary, WinnerReply};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{} {}: {}", .status, .reply.error.code, .reply.error.message)]
    Api { status: u16, reply: Box<ErrorReply> },
    #[error("unexpected {status} response: {body}")]
    Unexpected { status: u16, body: String },
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn http_status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } | ClientError::Unexpected { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status().map(|s| s.as_u16()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: Http,
}

impl Client {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_owned(),
            http: Http::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send_raw(&self, req: RequestBuilder) -> Result<String, ClientError> {
        let resp = req.send()?;
        let status = resp.status().as_u16();
        let body = resp.text()?;
        if (200..300).contains(&status) {
            return Ok(body);
        }
        match serde_json::from_str::<ErrorReply>(&body) {
            Ok(reply) => Err(ClientError::Api { status, reply: Box::new(reply) }),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        let body = self.send_raw(req)?;
        serde_json::from_str(&body).map_err(|e| ClientError::Unexpected {
            status: 200,
            body: format!("{e}: {body}"),
        })
    }

    pub fn create(&self, config: &ExperimentConfig) -> Result<Summary, ClientError> {
        self.send(self.http.post(self.url("/experiments")).json(config))
    }

    pub fn command(&self, id: &str, command: Command) -> Result<CommandReply, ClientError> {
        self.send(self.http.post(self.url(&format!("/experiments/{id}/{command}"))))
    }

    pub fn apply_winner(&self, id: &str) -> Result<WinnerReply, ClientError> {
        self.send(self.http.post(self.url(&format!("/experiments/{id}/apply-winner"))))
    }

    pub fn status(&self, id: &str) -> Result<Summary, ClientError> {
        self.send(self.http.get(self.url(&format!("/experiments/{id}"))))
    }

    pub fn list(&self) -> Result<ListReply, ClientError> {
        self.send(self.http.get(self.url("/experiments")))
    }

    pub fn history(&self, id: &str) -> Result<HistoryReply, ClientError> {
        self.send(self.http.get(self.url(&format!("/experiments/{id}/history"))))
    }

    pub fn report(&self, id: &str, query: &ReportQuery) -> Result<Report, ClientError> {
        self.send(self.report_request(id, query))
    }

    /// The report as the server sent it, for verbatim output.
    pub fn report_value(&self, id: &str, query: &ReportQuery) -> Result<Value, ClientError> {
        self.send(self.report_request(id, query))
    }

    fn report_request(&self, id: &str, query: &ReportQuery) -> RequestBuilder {
        let mut params = Vec::new();
        if let Some(level) = query.level {
            params.push(("level", level.to_string()));
        }
        if let Some(draws) = query.draws {
            params.push(("draws", draws.to_string()));
        }
        if let Some(seed) = query.seed {
            params.push(("seed", seed.to_string()));
        }
        self.http.get(self.url(&format!("/experiments/{id}/report"))).query(&params)
    }
}
