use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cardauth_core::scheme::DEFAULT_FRESHNESS_WINDOW;
use cardauth_core::HashAlgorithm;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    pub pw: String,
}

/// Scenario file. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub hash_algorithm: HashAlgorithm,
    #[serde(default = "default_window")]
    pub freshness_window: u64,
    pub users: Vec<Principal>,
    #[serde(default)]
    pub adversary: Option<Principal>,
    #[serde(default)]
    pub dictionary_path: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    #[serde(default = "default_start_tick")]
    pub start_tick: u64,
}

fn default_window() -> u64 {
    DEFAULT_FRESHNESS_WINDOW
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_start_tick() -> u64 {
    1
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_path = base.join(&cfg.output_path);
        if let Some(d) = &cfg.dictionary_path {
            cfg.dictionary_path = Some(base.join(d));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            bail!("config lists no users");
        }
        for p in self.users.iter().chain(self.adversary.iter()) {
            cardauth_core::primitives::encode_id(&p.id).with_context(|| format!("identity `{}`", p.id))?;
            if p.pw.is_empty() {
                bail!("empty password for `{}`", p.id);
            }
        }
        Ok(())
    }

    pub fn user(&self, id: &str) -> Result<&Principal> {
        self.users
            .iter()
            .chain(self.adversary.iter())
            .find(|p| p.id == id)
            .with_context(|| format!("unknown user `{id}`"))
    }

    pub fn adversary(&self) -> Result<&Principal> {
        self.adversary.as_ref().context("config has no adversary")
    }
}

/// Where each command reads and writes inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Layout { root }
    }

    pub fn server(&self) -> PathBuf {
        self.root.join("server.json")
    }

    pub fn card(&self, id: &str) -> PathBuf {
        self.root.join("cards").join(format!("{}.json", file_stem(id)))
    }

    pub fn trace(&self) -> PathBuf {
        self.root.join("trace.jsonl")
    }

    pub fn verdict(&self, kind: &str) -> PathBuf {
        self.root.join(format!("verdict-{kind}.json"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Identities made of filename-safe characters are used as is; anything
/// else is hex-encoded.
pub fn file_stem(id: &str) -> String {
    let safe = !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '@'));
    if safe {
        id.to_owned()
    } else {
        format!("id-{}", hex::encode(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("alice"), "alice");
        assert_eq!(file_stem("a.b@c-d_e"), "a.b@c-d_e");
        assert_eq!(file_stem("../x"), "id-2e2e2f78");
        assert_eq!(file_stem("Ω"), "id-cea9");
    }

    #[test]
    fn defaults_and_validation() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"seed":1,"users":[{"id":"a","pw":"b"}]}"#).unwrap();
        assert_eq!(cfg.freshness_window, 60);
        assert_eq!(cfg.hash_algorithm, HashAlgorithm::Sha256);
        assert_eq!(cfg.output_path, PathBuf::from("out"));
        assert!(cfg.validate().is_ok());

        let cfg: ScenarioConfig = serde_json::from_str(r#"{"seed":1,"users":[]}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"seed":1,"users":[{"id":"","pw":"b"}]}"#).unwrap();
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"seed":1,"users":[],"bogus":1}"#).is_err());
    }
}
