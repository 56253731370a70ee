//! JSON config loading with key-path error reporting.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parses `text`, reporting the key path of the first failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path, message: e.into_inner().to_string() }
    })
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    parse_json(&std::fs::read_to_string(path)?)
}

/// Fails unless `found` equals the `expected` schema tag.
pub fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Config {
            path: "schema".into(),
            message: format!("expected schema {expected:?}, found {found:?}"),
        })
    }
}
