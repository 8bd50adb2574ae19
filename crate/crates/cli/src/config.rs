//! Layered configuration: defaults, then a TOML or JSON file, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Recursively overlays `top` onto `base`; objects merge key by key, everything else replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().and_then(|e| e.to_str()) == Some("toml");
    if is_toml {
        let v: toml::Value = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flag overrides as nested JSON, built from dotted keys; `None` values are skipped.
#[derive(Default)]
pub struct Overrides(Value);

impl Overrides {
    pub fn new() -> Self {
        Self(Value::Object(Map::new()))
    }

    pub fn set<T: Serialize>(&mut self, dotted: &str, value: Option<T>) -> &mut Self {
        let Some(value) = value else { return self };
        let mut node = &mut self.0;
        let parts: Vec<&str> = dotted.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node.as_object_mut().expect("override tree holds objects");
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), serde_json::to_value(value).expect("serializable flag"));
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        }
        self
    }
}

/// Resolves `defaults < file < flags` into `T`.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&Path>, flags: Overrides) -> Result<T, CliError> {
    let mut value = serde_json::to_value(defaults).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(path) = file {
        merge(&mut value, read_file(path)?);
    }
    merge(&mut value, flags.0);
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("configuration: {e}")))
}

/// Where the snapshot of a run goes: inside an output directory, or beside an output file.
pub fn snapshot_path(out: &Path, is_dir: bool) -> std::path::PathBuf {
    if is_dir {
        out.join("resolved_config.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".resolved_config.json");
        s.into()
    }
}

/// Writes the command, its resolved settings and the thread cap to `path`.
pub fn snapshot<T: Serialize>(path: &Path, command: &str, threads: usize, resolved: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    let body = serde_json::json!({
        "command": command,
        "threads": threads,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
    });
    std::fs::write(path, serde_json::to_string_pretty(&body).expect("json"))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Inner {
        a: u32,
        b: f64,
    }

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Outer {
        inner: Inner,
        name: String,
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "name = \"file\"\n[inner]\na = 5\nb = 0.5\n").unwrap();
        let defaults = Outer { inner: Inner { a: 1, b: 1.0 }, name: "default".into() };
        let mut flags = Overrides::new();
        flags.set("inner.a", Some(9u32)).set("name", None::<String>);
        let got = resolve(&defaults, Some(&path), flags).unwrap();
        assert_eq!(got, Outer { inner: Inner { a: 9, b: 0.5 }, name: "file".into() });

        let json = dir.path().join("c.json");
        std::fs::write(&json, r#"{"inner": {"b": 2.0}}"#).unwrap();
        let got = resolve(&defaults, Some(&json), Overrides::new()).unwrap();
        assert_eq!(got, Outer { inner: Inner { a: 1, b: 2.0 }, name: "default".into() });
    }
}
