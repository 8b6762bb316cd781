//! `--config` files: flat `key = value` lines whose keys are long flag
//! names. The pairs are spliced in right after the subcommand, so flags
//! given on the command line win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), n + 1);
        };
        let key = key.trim();
        if key.is_empty()
            || key == "config"
            || !key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
        {
            bail!("{}:{}: bad key {key:?}", path.display(), n + 1);
        }
        out.push((key.replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

/// Returns `argv` with the config pairs inserted as flags.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    if argv.len() < 2 || argv[1].to_string_lossy().starts_with('-') {
        return Ok(argv);
    }
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut out: Vec<OsString> = argv[..2].to_vec();
    for (k, v) in parse(&text, path)? {
        out.push(format!("--{k}").into());
        out.push(v.into());
    }
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let p = parse("# c\nseed = 4\n\nmax_rounds=2\n", Path::new("x")).unwrap();
        assert_eq!(
            p,
            vec![
                ("seed".to_string(), "4".to_string()),
                ("max-rounds".to_string(), "2".to_string())
            ]
        );
        assert!(parse("seed 4", Path::new("x")).is_err());
        assert!(parse("config = y", Path::new("x")).is_err());
    }
}
