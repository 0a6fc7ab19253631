//! `--config FILE`: flat `key=value` lines whose keys are long flag names (`-` or `_`).
//! Entries are spliced into the argument list right after the subcommand unless the flag is
//! already given there, so flags always win.

use std::fs;

use clap::CommandFactory;

use crate::args::Cli;

const GLOBAL_VALUED: [&str; 2] = ["--threads", "--config"];

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Index of the subcommand token, skipping values of global options.
fn subcommand_index(argv: &[String], names: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if GLOBAL_VALUED.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if names.contains(a) {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn flag_name(token: &str) -> Option<&str> {
    token
        .strip_prefix("--")
        .map(|t| t.split_once('=').map_or(t, |(k, _)| k))
}

pub fn merge(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("config: cannot read {path}: {e}"))?;
    let command = Cli::command();
    let names: Vec<String> = command
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    let Some(sub_at) = subcommand_index(&argv, &names) else {
        // no subcommand: let clap report it
        return Ok(argv);
    };
    let sub = command
        .find_subcommand(&argv[sub_at])
        .expect("subcommand name comes from the command");
    let given: Vec<&str> = argv.iter().filter_map(|a| flag_name(a)).collect();

    let mut injected = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config: line {}: expected key=value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || key == "threads" && given.contains(&"threads") {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(command.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| format!("config: unknown key {key} for {}", argv[sub_at]))?;
        if given.contains(&key.as_str()) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value {
                "true" | "yes" | "1" => injected.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => return Err(format!("config: {key}: expected true or false, got {value}")),
            }
        }
    }
    let mut out = argv[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[sub_at + 1..]);
    Ok(out)
}
