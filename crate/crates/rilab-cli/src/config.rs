//! Parameter resolution and experiment manifests.
//!
//! Every subcommand resolves its parameters through a [`Resolver`]: a value
//! given on the command line wins, otherwise a flat key-value configuration
//! file supplies it, otherwise a documented default applies (or the
//! parameter is reported missing as a usage error). The fully resolved
//! parameter map — not the raw invocation — is what gets digested, so two
//! invocations that resolve to the same experiment share a digest no matter
//! how the values were spelled.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fail::{CliFail, CliResult};

/// Tool version embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Flat key-value configuration backing a single invocation.
pub struct Resolver {
    table: toml::Table,
}

impl Resolver {
    /// Loads the configuration file when one was given; an empty table
    /// otherwise.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliFail::usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliFail::usage(format!("config {}: {e}", p.display())))?
            }
        };
        Ok(Resolver { table })
    }

    /// The config-file value for `key`, flattened to its string spelling.
    fn file_value(&self, key: &str) -> CliResult<Option<String>> {
        let Some(value) = self.table.get(key) else {
            return Ok(None);
        };
        scalar_string(value)
            .map(Some)
            .ok_or_else(|| CliFail::usage(format!("config key `{key}` has an unsupported shape")))
    }

    /// Command-line value if present, else config-file value parsed as `T`.
    pub fn merge<T>(&self, cli: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.file_value(key)? {
            None => Ok(None),
            Some(text) => text
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliFail::usage(format!("config key `{key}` = `{text}`: {e}"))),
        }
    }
}

/// Renders scalar and scalar-array TOML values the way they would be typed
/// on the command line.
fn scalar_string(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(format!("{f}")),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(scalar_string).collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

/// Fully resolved experiment description: the digest of this structure is
/// stamped into every artifact the invocation emits.
///
/// The worker-thread width is deliberately excluded: results are defined to
/// be independent of it, and stamping it would make otherwise identical
/// runs look different.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    subcommand: String,
    params: BTreeMap<String, String>,
    seed: u64,
}

impl ExperimentConfig {
    pub fn new(subcommand: &str) -> Self {
        ExperimentConfig {
            subcommand: subcommand.to_string(),
            params: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.record("seed", seed);
    }

    /// Records a resolved parameter under its flag name.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.params.insert(key.to_string(), format!("{value}"));
    }

    /// Canonical line-per-entry serialization; the digest input.
    fn canonical(&self) -> String {
        let mut text = format!("subcommand={}\nseed={}\n", self.subcommand, self.seed);
        for (k, v) in &self.params {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        text
    }

    /// Hex SHA-256 of the canonical resolved configuration.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in hash {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            digest: self.digest(),
            version: VERSION.to_string(),
            seed: self.seed,
        }
    }
}

/// Provenance block embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub digest: String,
    pub version: String,
    pub seed: u64,
}

/// Resolution helpers shared by the subcommands: merge command line over
/// config file, record the result, complain with the flag name otherwise.
pub struct Ctx {
    pub resolver: Resolver,
    pub config: ExperimentConfig,
}

impl Ctx {
    pub fn new(subcommand: &str, resolver: Resolver) -> Self {
        Ctx {
            config: ExperimentConfig::new(subcommand),
            resolver,
        }
    }

    /// Required parameter: command line, else config file, else usage error.
    pub fn need<T>(&mut self, cli: Option<T>, key: &str) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self
            .resolver
            .merge(cli, key)?
            .ok_or_else(|| CliFail::usage(format!("missing required parameter --{key}")))?;
        self.config.record(key, &value);
        Ok(value)
    }

    /// Required parameter that is resolved but kept out of the digest.
    /// Used for file paths whose *content* is digested instead, so that
    /// moving an input file does not change the experiment identity.
    pub fn need_unrecorded<T>(&mut self, cli: Option<T>, key: &str) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.resolver
            .merge(cli, key)?
            .ok_or_else(|| CliFail::usage(format!("missing required parameter --{key}")))
    }

    /// Optional parameter with a default.
    pub fn with_default<T>(&mut self, cli: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self.resolver.merge(cli, key)?.unwrap_or(default);
        self.config.record(key, &value);
        Ok(value)
    }

    /// Optional parameter without a default; recorded only when present.
    pub fn optional<T>(&mut self, cli: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self.resolver.merge(cli, key)?;
        if let Some(v) = &value {
            self.config.record(key, v);
        }
        Ok(value)
    }

    /// Boolean switch: a bare flag wins, else the config file.
    pub fn switch(&mut self, cli: bool, key: &str) -> CliResult<bool> {
        let value = if cli {
            true
        } else {
            self.resolver.merge(None::<bool>, key)?.unwrap_or(false)
        };
        self.config.record(key, value);
        Ok(value)
    }

    pub fn set_seed(&mut self, cli: Option<u64>, key: &str) -> CliResult<u64> {
        let seed = self.resolver.merge(cli, key)?.unwrap_or(0);
        self.config.set_seed(seed);
        Ok(seed)
    }
}

/// Parses a comma-separated list with a uniform error message.
pub fn parse_list<T>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if text.trim().is_empty() {
        return Err(CliFail::usage(format!("{what} list is empty")));
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|e| CliFail::usage(format!("{what} entry `{part}`: {e}")))
        })
        .collect()
}
