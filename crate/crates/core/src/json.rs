//! JSON read/write helpers shared by every artifact loader.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Deserializes `text`, reporting the failing field path and line/column.
pub fn from_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        Error::Parse {
            path: origin.to_string(),
            location: format!("{path} (line {}, column {})", inner.line(), inner.column()),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|err| Error::Parse {
        path: origin.to_string(),
        location: format!("line {}, column {}", err.line(), err.column()),
        message: err.to_string(),
    })?;
    Ok(value)
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text, &path.display().to_string())
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize infallibly");
    text.push('\n');
    text
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, to_string(value)).map_err(|e| Error::io(path, e))
}
