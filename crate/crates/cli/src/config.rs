//! TOML config files. Each subcommand reads the table of the same name;
//! keys are the long flag names. Flags given on the command line win.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

pub const SECTIONS: [&str; 6] = ["gen", "train", "eval", "encode", "stream", "serve"];

pub fn load(path: &Path) -> Result<toml::Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    for key in table.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "{}: unknown section [{key}] (expected one of {})",
                path.display(),
                SECTIONS.join(", ")
            )));
        }
    }
    Ok(table)
}

/// Overlay the flags that were given onto the file's section.
pub fn merge<T: Serialize + DeserializeOwned>(section: &str, flags: &T, file: Option<&toml::Table>) -> Result<T, CliError> {
    let mut table = match file.and_then(|f| f.get(section)) {
        None => toml::Table::new(),
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(CliError::usage(format!("config: [{section}] must be a table"))),
    };
    match toml::Value::try_from(flags) {
        Ok(toml::Value::Table(given)) => table.extend(given),
        other => return Err(CliError::runtime(format!("cannot serialize flags: {other:?}"))),
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("config [{section}]: {e}")))
}

/// Print the effective settings of a run to stderr as a TOML section.
pub fn echo<T: Serialize>(section: &str, settings: &T) {
    let mut root = toml::Table::new();
    root.insert(
        section.to_string(),
        toml::Value::try_from(settings).expect("settings serialize"),
    );
    eprintln!("# resolved config\n{}", toml::to_string(&root).expect("settings serialize"));
}
