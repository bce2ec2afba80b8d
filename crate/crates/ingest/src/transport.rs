//! Blocking HTTP behind a trait so adapters and the token cache can be driven by fakes.

use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    /// Content type and body.
    pub body: Option<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest { method: Method::Get, url: url.into(), headers: Vec::new(), body: None }
    }

    pub fn post_form(url: impl Into<String>, fields: &[(&str, &str)]) -> Self {
        let body = fields.iter().map(|(k, v)| format!("{}={}", form_encode(k), form_encode(v))).collect::<Vec<_>>().join("&");
        HttpRequest {
            method: Method::Post,
            url: url.into(),
            headers: Vec::new(),
            body: Some(("application/x-www-form-urlencoded".into(), body)),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// `application/x-www-form-urlencoded` escaping.
pub fn form_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    /// Non-2xx statuses are responses, not errors; `Err` means the exchange itself failed.
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

/// Real network transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let result = match (request.method, &request.body) {
            (Method::Get, _) => {
                let mut req = self.agent.get(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                req.call()
            }
            (Method::Post, body) => {
                let mut req = self.agent.post(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                match body {
                    Some((content_type, text)) => req.header("Content-Type", content_type).send(text.as_str()),
                    None => req.send_empty(),
                }
            }
        };
        let mut resp = result.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Scripted transport: answers from a handler and records every request.
pub struct FakeTransport<F> {
    handler: F,
    log: Mutex<Vec<HttpRequest>>,
}

impl<F> FakeTransport<F>
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, String> + Send + Sync,
{
    pub fn new(handler: F) -> Self {
        FakeTransport { handler, log: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.log.lock().expect("fake transport log").clone()
    }

    pub fn count(&self) -> usize {
        self.log.lock().expect("fake transport log").len()
    }
}

impl<F> Transport for FakeTransport<F>
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, String> + Send + Sync,
{
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        self.log.lock().expect("fake transport log").push(request.clone());
        (self.handler)(request)
    }
}
