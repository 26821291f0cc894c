//! Fixed 17-significant-digit formatting, so reruns are byte-identical.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::CliError;

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// A JSON number in [`fmt`] form; non-finite values become `null`.
pub fn num(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() {
        fmt(x)
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn nums(xs: &[f64]) -> Vec<Box<RawValue>> {
    xs.iter().map(|&x| num(x)).collect()
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_text(dir, name, &text)
}
