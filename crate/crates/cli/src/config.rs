//! Flat `key = value` configuration files. Each key names a long flag of the
//! subcommand; values are spliced in ahead of the command-line flags, which
//! therefore win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a config file into flag arguments. `true`/`false` toggle
/// boolean flags; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// Expands `--config FILE` (anywhere after the subcommand) into the file's
/// flags, placed right after the subcommand name.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        if let Some(pos) = argv.iter().position(|a| a.to_string_lossy().starts_with("--config=")) {
            let path = argv[pos].to_string_lossy()["--config=".len()..].to_owned();
            let mut rest = argv;
            rest.remove(pos);
            return splice(rest, Path::new(&path));
        }
        return Ok(argv);
    };
    let Some(path) = argv.get(pos + 1).cloned() else {
        bail!("--config needs a file");
    };
    let mut rest = argv;
    rest.drain(pos..pos + 2);
    splice(rest, Path::new(&path))
}

fn splice(mut argv: Vec<OsString>, path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let extra = parse_config(&text)?;
    // argv[0] is the program, argv[1] the subcommand
    let at = argv.len().min(2);
    argv.splice(at..at, extra);
    Ok(argv)
}
