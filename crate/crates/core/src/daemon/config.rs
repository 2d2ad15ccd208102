//! Operator configuration: a sectioned `key=value` file.
//!
//! ```text
//! [SERVER]
//! url=https://canvas.example.edu
//! token=XXXX
//! [RUN]
//! precommand=
//! command=docker run -i -v SUBMISSIONS:/submissions img bash -c "cd /submissions; EVALUATE"
//! interval=300
//! parallelism=2
//! ```
//!
//! Section and key names are case-insensitive. Lines starting with `#` or
//! `;` are comments. `CODEVAL_TOKEN` in the environment replaces the token.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::lms::{ApiToken, BackendCredentials};
use crate::sandbox::{IsolationConfig, EVALUATE_PLACEHOLDER, SUBMISSIONS_PLACEHOLDER};

pub const DEFAULT_POLL_INTERVAL_S: f64 = 300.0;
pub const DEFAULT_PARALLELISM: usize = 2;
/// Environment variable that overrides `[SERVER] token`.
pub const TOKEN_ENV: &str = "CODEVAL_TOKEN";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("invalid {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub server: BackendCredentials,
    pub isolation: IsolationConfig,
    pub poll_interval_s: f64,
    pub parallelism: usize,
    /// Display name of the course to serve.
    pub course: String,
}

/// Values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub token: Option<String>,
    pub course: Option<String>,
    pub poll_interval_s: Option<f64>,
}

impl ConfigOverrides {
    /// Picks up the token from `CODEVAL_TOKEN` when it is set and non-empty.
    pub fn from_env() -> Self {
        ConfigOverrides {
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            ..Default::default()
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections = Sections::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let syntax = |reason: String| ConfigError::Syntax { line: line_no, reason };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty() && !n.contains(['[', ']']))
                .ok_or_else(|| syntax(format!("malformed section header {line:?}")))?;
            let name = name.to_ascii_uppercase();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected key=value, got {line:?}")))?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(syntax("empty key".into()));
        }
        let section = current
            .as_ref()
            .ok_or_else(|| syntax(format!("{key} appears before any section")))?;
        let entries = sections.get_mut(section).expect("section inserted on header");
        if let Some((first, _)) = entries.get(&key) {
            return Err(syntax(format!("duplicate {key} (first set on line {first})")));
        }
        entries.insert(key, (line_no, value.trim().to_string()));
    }
    Ok(sections)
}

fn known(section: &str, key: &str) -> bool {
    matches!(
        (section, key),
        ("SERVER", "url" | "token") | ("RUN", "precommand" | "command" | "interval" | "parallelism")
    )
}

/// Parses configuration text. A missing `[RUN] command` selects direct
/// (unisolated) execution and logs a warning.
pub fn parse_config(text: &str, overrides: &ConfigOverrides) -> Result<Config, ConfigError> {
    let sections = parse_sections(text)?;
    for (section, entries) in &sections {
        for (key, (line, _)) in entries {
            if !known(section, key) {
                log::warn!("config line {line}: ignoring unknown setting [{section}] {key}");
            }
        }
    }
    let get = |section: &str, key: &str| {
        sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(_, v)| v.as_str())
            .filter(|v| !v.is_empty())
    };

    let url = get("SERVER", "url").ok_or(ConfigError::Missing("[SERVER] url"))?;
    let token = overrides
        .token
        .clone()
        .or_else(|| get("SERVER", "token").map(str::to_string))
        .ok_or(ConfigError::Missing("[SERVER] token"))?;

    let mut isolation = match get("RUN", "command") {
        Some(template) => {
            let cfg = IsolationConfig {
                precommand: None,
                command_template: template.to_string(),
                direct_mode: false,
            };
            cfg.validate().map_err(|e| ConfigError::Invalid {
                key: "[RUN] command".into(),
                reason: format!("{e}; it needs {SUBMISSIONS_PLACEHOLDER} and {EVALUATE_PLACEHOLDER}"),
            })?;
            cfg
        }
        None => {
            log::warn!("no [RUN] command configured: submissions will run DIRECTLY ON THIS HOST without isolation");
            IsolationConfig::direct()
        }
    };
    isolation.precommand = get("RUN", "precommand").map(str::to_string);

    let poll_interval_s = match overrides.poll_interval_s {
        Some(v) => v,
        None => match get("RUN", "interval") {
            Some(v) => v.parse().map_err(|_| ConfigError::Invalid {
                key: "[RUN] interval".into(),
                reason: format!("{v:?} is not a number of seconds"),
            })?,
            None => DEFAULT_POLL_INTERVAL_S,
        },
    };
    if !(poll_interval_s.is_finite() && poll_interval_s > 0.0) {
        return Err(ConfigError::Invalid {
            key: "interval".into(),
            reason: format!("{poll_interval_s} must be a positive number of seconds"),
        });
    }
    let parallelism = match get("RUN", "parallelism") {
        Some(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ConfigError::Invalid {
                key: "[RUN] parallelism".into(),
                reason: format!("{v:?} is not a positive integer"),
            })?,
        None => DEFAULT_PARALLELISM,
    };

    Ok(Config {
        server: BackendCredentials {
            base_url: url.to_string(),
            token: ApiToken::new(token),
        },
        isolation,
        poll_interval_s,
        parallelism,
        course: overrides.course.clone().unwrap_or_default(),
    })
}

pub fn load_config(path: &Path, overrides: &ConfigOverrides) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text, overrides)
}

impl Config {
    /// Serializes back to the file format. The token is left out; supply
    /// it through `CODEVAL_TOKEN` when reloading.
    pub fn to_ini(&self) -> String {
        let mut out = String::from("[SERVER]\n");
        out.push_str(&format!("url={}\n", self.server.base_url));
        out.push_str(&format!("# token is not written out; set {TOKEN_ENV}\n"));
        out.push_str("[RUN]\n");
        out.push_str(&format!(
            "precommand={}\n",
            self.isolation.precommand.as_deref().unwrap_or("")
        ));
        if !self.isolation.direct_mode {
            out.push_str(&format!("command={}\n", self.isolation.command_template));
        }
        out.push_str(&format!("interval={}\n", self.poll_interval_s));
        out.push_str(&format!("parallelism={}\n", self.parallelism));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOCKER_EXAMPLE: &str = "[SERVER]\nurl=https://canvas.example.edu\ntoken=XXXX\n[RUN]\nprecommand=\ncommand=docker run -i -v SUBMISSIONS:/submissions jimg bash -c \"cd /submissions; EVALUATE\"\n";

    #[test]
    fn docker_example() {
        let cfg = parse_config(DOCKER_EXAMPLE, &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg.server.base_url, "https://canvas.example.edu");
        assert_eq!(cfg.server.token.expose(), "XXXX");
        assert_eq!(cfg.isolation.precommand, None);
        assert!(!cfg.isolation.direct_mode);
        assert!(cfg.isolation.command_template.contains("SUBMISSIONS"));
        assert!(cfg.isolation.command_template.contains("EVALUATE"));
        assert_eq!(cfg.poll_interval_s, 300.0);
        assert_eq!(cfg.parallelism, 2);
    }

    #[test]
    fn token_override_and_direct_mode() {
        let overrides = ConfigOverrides {
            token: Some("from-env".into()),
            course: Some("CS 149".into()),
            ..Default::default()
        };
        let cfg = parse_config("[SERVER]\nurl=https://x\n", &overrides).unwrap();
        assert_eq!(cfg.server.token.expose(), "from-env");
        assert!(cfg.isolation.direct_mode);
        assert_eq!(cfg.course, "CS 149");
        assert_eq!(
            parse_config("[SERVER]\nurl=https://x\n", &ConfigOverrides::default()),
            Err(ConfigError::Missing("[SERVER] token"))
        );
        assert_eq!(
            parse_config("[SERVER]\ntoken=t\n", &ConfigOverrides::default()),
            Err(ConfigError::Missing("[SERVER] url"))
        );
    }

    #[test]
    fn placeholder_required() {
        let text = "[SERVER]\nurl=u\ntoken=t\n[RUN]\ncommand=docker run SUBMISSIONS img\n";
        let err = parse_config(text, &ConfigOverrides::default()).unwrap_err();
        assert!(
            matches!(err, ConfigError::Invalid { ref key, .. } if key == "[RUN] command"),
            "{err}"
        );
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let cases = [
            ("[SERVER\nurl=u\n", 1),
            ("[SERVER]\nurl=u\ntoken t\n", 3),
            ("url=u\n", 1),
            ("# c\n\n[SERVER]\nurl=u\nurl=v\n", 5),
            ("[SERVER]\n=v\n", 2),
        ];
        for (text, line) in cases {
            match parse_config(text, &ConfigOverrides::default()) {
                Err(ConfigError::Syntax { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn optional_keys() {
        let text = "[server]\nURL=u\ntoken=t\n[run]\ninterval=2.5\nparallelism=4\nprecommand=docker pull img\n";
        let cfg = parse_config(text, &ConfigOverrides::default()).unwrap();
        assert_eq!((cfg.poll_interval_s, cfg.parallelism), (2.5, 4));
        assert_eq!(cfg.isolation.precommand.as_deref(), Some("docker pull img"));
        for bad in [
            "interval=0",
            "interval=-1",
            "interval=x",
            "parallelism=0",
            "parallelism=1.5",
        ] {
            let text = format!("[SERVER]\nurl=u\ntoken=t\n[RUN]\n{bad}\n");
            assert!(
                matches!(
                    parse_config(&text, &ConfigOverrides::default()),
                    Err(ConfigError::Invalid { .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn round_trip_without_token() {
        let cfg = parse_config(DOCKER_EXAMPLE, &ConfigOverrides::default()).unwrap();
        let text = cfg.to_ini();
        assert!(!text.contains("XXXX"));
        let overrides = ConfigOverrides {
            token: Some("XXXX".into()),
            ..Default::default()
        };
        assert_eq!(parse_config(&text, &overrides).unwrap(), cfg);
    }
}
