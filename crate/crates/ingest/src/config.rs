//! Source declarations.
//!
//! Required credential fields per kind:
//!
//! | kind                  | required                                          | optional                     |
//! |-----------------------|---------------------------------------------------|------------------------------|
//! | `replay`              | `path`                                            | `speed` (`instant` or factor) |
//! | `simulator`           |                                                   | `seed`, `days`, `start`, `significant_change_c` |
//! | `poll-bearer`         | `token`                                           | `user_agent`                 |
//! | `poll-oauth-password` | `client_id`, `client_secret`, `username`, `password` | `token_url`, `user_agent` |
//! | `poll-jwt-assertion`  | `key_id`, `secret`, `email`                       | `token_url`, `user_agent`    |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Replay,
    Simulator,
    PollBearer,
    PollOauthPassword,
    PollJwtAssertion,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] =
        [SourceKind::Replay, SourceKind::Simulator, SourceKind::PollBearer, SourceKind::PollOauthPassword, SourceKind::PollJwtAssertion];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Replay => "replay",
            SourceKind::Simulator => "simulator",
            SourceKind::PollBearer => "poll-bearer",
            SourceKind::PollOauthPassword => "poll-oauth-password",
            SourceKind::PollJwtAssertion => "poll-jwt-assertion",
        }
    }

    pub fn is_polling(self) -> bool {
        matches!(self, SourceKind::PollBearer | SourceKind::PollOauthPassword | SourceKind::PollJwtAssertion)
    }

    pub fn required_credentials(self) -> &'static [&'static str] {
        match self {
            SourceKind::Replay => &["path"],
            SourceKind::Simulator => &[],
            SourceKind::PollBearer => &["token"],
            SourceKind::PollOauthPassword => &["client_id", "client_secret", "username", "password"],
            SourceKind::PollJwtAssertion => &["key_id", "secret", "email"],
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| IngestError::Config { source_id: String::new(), message: format!("unknown source kind `{s}`") })
    }
}

fn default_poll_interval() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub source_id: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_s: u64,
    #[serde(default)]
    pub credentials: BTreeMap<String, String>,
}

impl SourceConfig {
    pub fn new(source_id: impl Into<String>, kind: SourceKind) -> Self {
        SourceConfig {
            source_id: source_id.into(),
            kind,
            endpoint: String::new(),
            poll_interval_s: default_poll_interval(),
            credentials: BTreeMap::new(),
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    pub fn with_credential(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.credentials.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let err = |message: String| Err(IngestError::Config { source_id: self.source_id.clone(), message });
        if self.source_id.trim().is_empty() {
            return err("source_id must not be empty".into());
        }
        if self.kind.is_polling() {
            if self.poll_interval_s < 1 {
                return err("poll_interval_s must be at least 1".into());
            }
            if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
                return err(format!("endpoint `{}` must be an http(s) URL", self.endpoint));
            }
        }
        for field in self.kind.required_credentials() {
            self.credential(field)?;
        }
        Ok(())
    }

    /// A required, non-empty credential field.
    pub fn credential(&self, field: &str) -> Result<&str, IngestError> {
        match self.credentials.get(field).map(|s| s.as_str()) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(IngestError::MissingCredential { source_id: self.source_id.clone(), field: field.to_string() }),
        }
    }

    pub fn optional(&self, field: &str) -> Option<&str> {
        self.credentials.get(field).map(|s| s.as_str()).filter(|s| !s.is_empty())
    }

    pub(crate) fn token_url(&self, default_path: &str) -> String {
        self.optional("token_url").map(str::to_string).unwrap_or_else(|| format!("{}{default_path}", self.endpoint.trim_end_matches('/')))
    }
}

/// Standalone document listing sources, as `[[sources]]` tables.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesFile {
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
}

impl SourcesFile {
    /// Parses and validates; parse errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let file: SourcesFile = toml::from_str(text).map_err(|e| IngestError::Config { source_id: String::new(), message: e.to_string() })?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &file.sources {
            s.validate()?;
            if !seen.insert(s.source_id.as_str()) {
                return Err(IngestError::Config { source_id: s.source_id.clone(), message: "duplicate source_id".into() });
            }
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_names() {
        for k in SourceKind::ALL {
            assert_eq!(k.name().parse::<SourceKind>().unwrap(), k);
        }
        assert!("poll".parse::<SourceKind>().is_err());
    }

    #[test]
    fn parses_documented_layout() {
        let text = r#"
[[sources]]
source_id = "house-replay"
kind = "replay"
credentials = { path = "fixtures/house.csv" }

[[sources]]
source_id = "weather"
kind = "poll-oauth-password"
endpoint = "https://api.example.test"
poll_interval_s = 600
credentials = { client_id = "a", client_secret = "b", username = "c", password = "d" }
"#;
        let f = SourcesFile::parse(text).unwrap();
        assert_eq!(f.sources.len(), 2);
        assert_eq!(f.sources[1].poll_interval_s, 600);
        assert_eq!(f.sources[1].token_url("/oauth2/token"), "https://api.example.test/oauth2/token");
    }

    #[test]
    fn rejects_bad_sources() {
        let replay = SourceConfig::new("r", SourceKind::Replay);
        assert!(matches!(replay.validate(), Err(IngestError::MissingCredential { field, .. }) if field == "path"));
        let mut poll = SourceConfig::new("p", SourceKind::PollBearer).with_endpoint("https://x.test").with_credential("token", "t");
        assert!(poll.validate().is_ok());
        poll.poll_interval_s = 0;
        assert!(poll.validate().is_err());
        let bad_url = SourceConfig::new("p", SourceKind::PollBearer).with_endpoint("ftp://x").with_credential("token", "t");
        assert!(bad_url.validate().is_err());
    }

    #[test]
    fn unknown_keys_name_their_line() {
        let err = SourcesFile::parse("[[sources]]\nsource_id = \"a\"\nkind = \"simulator\"\ncolour = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
