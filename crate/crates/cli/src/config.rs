//! JSON config files with command-line overrides.
//!
//! Every subcommand's arguments deserialize from a JSON object with the
//! same (snake_case) field names. Flags given on the command line replace
//! the config's values field by field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use synthvox::{Error, Result};

/// `flags` over the contents of `config` (if any).
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let mut base = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Error::Config(format!("{}: expected a JSON object", p.display()))),
                Err(e) => return Err(Error::Config(format!("{}: {e}", p.display()))),
            }
        }
        None => Map::new(),
    };
    let Value::Object(over) = serde_json::to_value(flags).map_err(|e| Error::Config(e.to_string()))? else {
        return Err(Error::Config("arguments are not an object".into()));
    };
    for (k, v) in over {
        let unset = v.is_null() || v.as_array().is_some_and(|a| a.is_empty());
        if !unset {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(format!("config: {e}")))
}

pub fn required<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("missing required setting '{name}' (flag --{})", name.replace('_', "-"))))
}
