//! Merging of `--config` files with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "OTMLAB_SEED";

/// Keys handled globally rather than by a command.
const GLOBAL_KEYS: [&str; 2] = ["seed", "out"];

pub struct Resolved<T> {
    pub params: T,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Effective configuration, echoed in every output.
    pub echo: Value,
}

pub fn read_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config {} must hold a JSON object", path.display()),
    }
}

/// Seed precedence: `--seed`, then the config file, then `OTMLAB_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, file: &Map<String, Value>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(v) = file.get("seed") {
        return v.as_u64().context("config seed must be a non-negative integer");
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={s} is not a 64-bit unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Overlays the non-null fields of `flags` on the config file and parses the
/// result as `T`.
pub fn resolve<T, F>(
    file: &Map<String, Value>,
    flags: &F,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Resolved<T>>
where
    T: DeserializeOwned + Serialize,
    F: Serialize,
{
    let mut merged = file.clone();
    for key in GLOBAL_KEYS {
        merged.remove(key);
    }
    if let Value::Object(flags) = serde_json::to_value(flags)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    let params: T = serde_json::from_value(Value::Object(merged)).context("invalid configuration")?;
    let seed = resolve_seed(seed, file)?;
    let out = match out {
        Some(p) => Some(p),
        None => match file.get("out") {
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => bail!("config out must be a path string"),
            None => None,
        },
    };
    let echo = serde_json::to_value(&params)?;
    Ok(Resolved {
        params,
        seed,
        out,
        echo,
    })
}
