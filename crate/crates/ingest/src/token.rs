//! Access-token acquisition and caching for the authenticated pollers.
//!
//! Times are whole seconds since the Unix epoch. A cached token is reused until
//! 60 s before it expires.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::config::{SourceConfig, SourceKind};
use crate::transport::{HttpRequest, HttpResponse, Transport};
use crate::IngestError;

/// Seconds before expiry at which a cached token is replaced.
pub const REFRESH_MARGIN_S: i64 = 60;
/// Lifetime requested for a JWT assertion.
pub const ASSERTION_LIFETIME_S: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenState {
    pub access_token: String,
    /// Unix seconds.
    pub expires_at: i64,
    pub refresh_token: Option<String>,
}

impl TokenState {
    pub fn usable_at(&self, now_s: i64) -> bool {
        !self.access_token.is_empty() && now_s < self.expires_at.saturating_sub(REFRESH_MARGIN_S)
    }
}

/// Signs a JWT signing input. Real HS256 is outside this crate; deployments plug in their own.
pub trait AssertionSigner: Send + Sync {
    fn sign(&self, signing_input: &[u8], secret: &str) -> Vec<u8>;
}

/// Produces an empty signature.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnsignedStub;

impl AssertionSigner for UnsignedStub {
    fn sign(&self, _signing_input: &[u8], _secret: &str) -> Vec<u8> {
        Vec::new()
    }
}

/// `header.claims.signature` for the jwt-assertion flow.
pub fn build_assertion(config: &SourceConfig, now_s: i64, signer: &dyn AssertionSigner) -> Result<String, IngestError> {
    let header = serde_json::json!({ "alg": "HS256", "kid": config.credential("key_id")?, "typ": "JWT" });
    let claims = serde_json::json!({
        "iat": now_s,
        "exp": now_s + ASSERTION_LIFETIME_S,
        "aud": config.token_url("/oauth2/token"),
        "iss": config.credential("email")?,
    });
    let input = format!("{}.{}", URL_SAFE_NO_PAD.encode(header.to_string()), URL_SAFE_NO_PAD.encode(claims.to_string()));
    let sig = signer.sign(input.as_bytes(), config.credential("secret")?);
    Ok(format!("{input}.{}", URL_SAFE_NO_PAD.encode(sig)))
}

#[derive(Deserialize)]
struct TokenResponse {
    access_token: String,
    expires_in: i64,
    #[serde(default)]
    refresh_token: Option<String>,
}

/// One source's token, refreshed on demand.
pub struct TokenCache {
    state: Option<TokenState>,
    signer: Box<dyn AssertionSigner>,
    requests: usize,
}

impl Default for TokenCache {
    fn default() -> Self {
        TokenCache::new(Box::new(UnsignedStub))
    }
}

impl TokenCache {
    pub fn new(signer: Box<dyn AssertionSigner>) -> Self {
        TokenCache { state: None, signer, requests: 0 }
    }

    pub fn current(&self) -> Option<&TokenState> {
        self.state.as_ref()
    }

    /// Token endpoint calls made so far.
    pub fn requests(&self) -> usize {
        self.requests
    }

    /// Forgets the cached token, e.g. after a 401. A refresh token is kept.
    pub fn invalidate(&mut self) {
        if let Some(s) = &mut self.state {
            s.access_token.clear();
            s.expires_at = i64::MIN;
        }
    }

    pub fn acquire(&mut self, config: &SourceConfig, transport: &dyn Transport, now_s: i64) -> Result<TokenState, IngestError> {
        if let Some(s) = self.state.as_ref().filter(|s| s.usable_at(now_s)) {
            return Ok(s.clone());
        }
        let fresh = match config.kind {
            SourceKind::PollBearer => {
                TokenState { access_token: config.credential("token")?.to_string(), expires_at: i64::MAX, refresh_token: None }
            }
            SourceKind::PollOauthPassword => self.oauth_password(config, transport, now_s)?,
            SourceKind::PollJwtAssertion => {
                let assertion = build_assertion(config, now_s, self.signer.as_ref())?;
                let req = HttpRequest::post_form(
                    config.token_url("/oauth2/token"),
                    &[("grant_type", "urn:ietf:params:oauth:grant-type:jwt-bearer"), ("assertion", &assertion)],
                );
                self.exchange(config, transport, req, now_s, None)?
            }
            kind => {
                return Err(IngestError::Config { source_id: config.source_id.clone(), message: format!("{kind} sources do not use tokens") })
            }
        };
        self.state = Some(fresh.clone());
        Ok(fresh)
    }

    fn oauth_password(&mut self, config: &SourceConfig, transport: &dyn Transport, now_s: i64) -> Result<TokenState, IngestError> {
        let url = config.token_url("/oauth2/token");
        let (id, secret) = (config.credential("client_id")?, config.credential("client_secret")?);
        let previous_refresh = self.state.as_ref().and_then(|s| s.refresh_token.clone());
        if let Some(refresh) = &previous_refresh {
            let req = HttpRequest::post_form(
                &url,
                &[("grant_type", "refresh_token"), ("refresh_token", refresh), ("client_id", id), ("client_secret", secret)],
            );
            if let Ok(t) = self.exchange(config, transport, req, now_s, previous_refresh.clone()) {
                return Ok(t);
            }
        }
        let req = HttpRequest::post_form(
            &url,
            &[
                ("grant_type", "password"),
                ("client_id", id),
                ("client_secret", secret),
                ("username", config.credential("username")?),
                ("password", config.credential("password")?),
            ],
        );
        self.exchange(config, transport, req, now_s, None)
    }

    fn exchange(
        &mut self,
        config: &SourceConfig,
        transport: &dyn Transport,
        mut req: HttpRequest,
        now_s: i64,
        keep_refresh: Option<String>,
    ) -> Result<TokenState, IngestError> {
        if let Some(agent) = config.optional("user_agent") {
            req = req.header("User-Agent", agent);
        }
        self.requests += 1;
        let source_error = |message: String| IngestError::Source { source_id: config.source_id.clone(), retryable: true, message };
        let HttpResponse { status, body } = transport.send(&req).map_err(source_error)?;
        if !(200..300).contains(&status) {
            return Err(source_error(format!("token endpoint answered {status}")));
        }
        let parsed: TokenResponse = serde_json::from_str(&body).map_err(|e| source_error(format!("token response: {e}")))?;
        if parsed.access_token.is_empty() || parsed.expires_in <= 0 {
            return Err(source_error("token response without a usable token".into()));
        }
        Ok(TokenState {
            access_token: parsed.access_token,
            expires_at: now_s + parsed.expires_in,
            refresh_token: parsed.refresh_token.or(keep_refresh),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::FakeTransport;

    fn oauth() -> SourceConfig {
        SourceConfig::new("netatmo", SourceKind::PollOauthPassword)
            .with_endpoint("https://api.example.test")
            .with_credential("client_id", "id")
            .with_credential("client_secret", "s")
            .with_credential("username", "u")
            .with_credential("password", "p")
    }

    fn server(expires_in: i64) -> FakeTransport<impl Fn(&HttpRequest) -> Result<HttpResponse, String> + Send + Sync> {
        let n = std::sync::atomic::AtomicUsize::new(0);
        FakeTransport::new(move |_| {
            let k = n.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(HttpResponse {
                status: 200,
                body: format!(r#"{{"access_token":"tok{k}","expires_in":{expires_in},"refresh_token":"r{k}"}}"#),
            })
        })
    }

    #[test]
    fn caches_then_refreshes_inside_the_margin() {
        let t = server(3600);
        let mut cache = TokenCache::default();
        let first = cache.acquire(&oauth(), &t, 0).unwrap();
        assert_eq!(first.expires_at, 3600);
        assert_eq!(cache.acquire(&oauth(), &t, 10).unwrap(), first);
        assert_eq!(t.count(), 1);
        assert_eq!(cache.acquire(&oauth(), &t, 3539).unwrap(), first);
        assert_eq!(t.count(), 1);
        let second = cache.acquire(&oauth(), &t, 3540).unwrap();
        assert_ne!(second.access_token, first.access_token);
        let body = &t.requests()[1].body.clone().unwrap().1;
        assert!(body.starts_with("grant_type=refresh_token&refresh_token=r0"), "{body}");
    }

    #[test]
    fn refresh_at_3595_seconds() {
        let t = server(3600);
        let mut cache = TokenCache::default();
        cache.acquire(&oauth(), &t, 0).unwrap();
        cache.acquire(&oauth(), &t, 3595).unwrap();
        assert_eq!(t.count(), 2);
    }

    #[test]
    fn missing_field_is_a_config_error() {
        let mut c = oauth();
        c.credentials.remove("password");
        let t = server(3600);
        let err = TokenCache::default().acquire(&c, &t, 0).unwrap_err();
        assert!(matches!(err, IngestError::MissingCredential { ref field, .. } if field == "password"));
        assert_eq!(t.count(), 0);
    }

    #[test]
    fn http_failure_is_retryable() {
        let t = FakeTransport::new(|_| Ok(HttpResponse { status: 503, body: String::new() }));
        let err = TokenCache::default().acquire(&oauth(), &t, 0).unwrap_err();
        assert!(matches!(err, IngestError::Source { retryable: true, .. }));
        let down = FakeTransport::new(|_| Err("connection refused".to_string()));
        assert!(matches!(TokenCache::default().acquire(&oauth(), &down, 0), Err(IngestError::Source { retryable: true, .. })));
    }

    #[test]
    fn bearer_needs_no_network_and_jwt_posts_an_assertion() {
        let t = server(3600);
        let bearer = SourceConfig::new("hue", SourceKind::PollBearer).with_endpoint("https://x.test").with_credential("token", "abc");
        assert_eq!(TokenCache::default().acquire(&bearer, &t, 0).unwrap().access_token, "abc");
        assert_eq!(t.count(), 0);

        let jwt = SourceConfig::new("dt", SourceKind::PollJwtAssertion)
            .with_endpoint("https://dt.test")
            .with_credential("key_id", "k")
            .with_credential("secret", "s")
            .with_credential("email", "svc@dt.test")
            .with_credential("user_agent", "twin/0.1");
        TokenCache::default().acquire(&jwt, &t, 100).unwrap();
        let req = &t.requests()[0];
        assert_eq!(req.url, "https://dt.test/oauth2/token");
        assert_eq!(req.header_value("user-agent"), Some("twin/0.1"));
        let assertion = build_assertion(&jwt, 100, &UnsignedStub).unwrap();
        let claims = URL_SAFE_NO_PAD.decode(assertion.split('.').nth(1).unwrap()).unwrap();
        let claims: serde_json::Value = serde_json::from_slice(&claims).unwrap();
        assert_eq!(claims["exp"], 3700);
        assert_eq!(claims["iss"], "svc@dt.test");
    }

    #[test]
    fn invalidate_forces_a_new_request() {
        let t = server(3600);
        let mut cache = TokenCache::default();
        cache.acquire(&oauth(), &t, 0).unwrap();
        cache.invalidate();
        cache.acquire(&oauth(), &t, 5).unwrap();
        assert_eq!(t.count(), 2);
    }
}
