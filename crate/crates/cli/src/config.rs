//! Flat `key=value` config files merged under command-line flags.
//!
//! Keys are long flag names (`k`, `test-size`, `seed`, ...). A key only takes
//! effect when the flag was not given on the command line.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

use crate::Invalid;

pub fn parse_config(raw: &str) -> Result<Vec<(String, String)>, Invalid> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Invalid(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Invalid(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
    Ok(parse_config(&raw)?)
}

/// Extra argv entries for config keys the command line did not set.
pub fn config_args(
    command: &Command,
    matches: &ArgMatches,
    entries: &[(String, String)],
) -> Result<Vec<OsString>, Invalid> {
    let (sub_name, sub_matches) = matches
        .subcommand()
        .ok_or_else(|| Invalid("a subcommand is required".into()))?;
    let sub_cmd = command
        .find_subcommand(sub_name)
        .ok_or_else(|| Invalid(format!("unknown subcommand {sub_name}")))?;
    let mut extra = Vec::new();
    for (key, value) in entries {
        let found = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .map(|a| (a, sub_matches))
            .or_else(|| {
                command
                    .get_arguments()
                    .find(|a| a.get_long() == Some(key.as_str()))
                    .map(|a| (a, matches))
            });
        let Some((arg, m)) = found else {
            return Err(Invalid(format!("config key `{key}` is not a flag of `{sub_name}`")));
        };
        if m.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => extra.push(format!("--{key}").into()),
                "false" => {}
                _ => return Err(Invalid(format!("config key `{key}` expects true or false"))),
            },
            _ => extra.push(format!("--{key}={value}").into()),
        }
    }
    Ok(extra)
}
