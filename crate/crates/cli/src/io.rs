use std::fs;
use std::path::Path;

use anyhow::Context;
use ctecs::{Circuit, CtEcsDecomposition};
use serde::Serialize;
use serde_json::Value;

use crate::fail::{usage, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().ok_or_else(|| usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

/// Writes JSON to `out`, or to stdout when `out` is absent.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = to_json(value)?;
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// A circuit file: family JSON when it names a family, else plain circuit JSON.
pub enum Loaded {
    Family(Box<CtEcsDecomposition>),
    Plain(Circuit),
}

impl Loaded {
    pub fn circuit(&self) -> Circuit {
        match self {
            Loaded::Family(d) => d.defining_circuit(),
            Loaded::Plain(c) => c.clone(),
        }
    }

    pub fn decomposition(self) -> CliResult<CtEcsDecomposition> {
        match self {
            Loaded::Family(d) => Ok(*d),
            Loaded::Plain(_) => Err(usage("this command needs family JSON (with \"family\" and its parameters)")),
        }
    }
}

pub fn load_circuit(path: &Path) -> CliResult<Loaded> {
    let value = read_json(path)?;
    let bad = |e: serde_json::Error| usage(format!("{}: {e}", path.display()));
    if value.get("family").is_some() {
        Ok(Loaded::Family(Box::new(serde_json::from_value(value).map_err(bad)?)))
    } else {
        Ok(Loaded::Plain(serde_json::from_value(value).map_err(bad)?))
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| usage(format!("bad {what} entry {t:?}"))))
        .collect()
}
