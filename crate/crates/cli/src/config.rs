//! Grid specs and `key = value` config files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use crate::Cli;

/// Parse `start:stop:step` into the inclusive list of grid points.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(format!("grid `{s}` is not of the form start:stop:step"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad number `{x}` in grid: {e}"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(format!("grid `{s}` has a non-finite entry"));
    }
    if step <= 0.0 || stop < start {
        return Err(format!("grid `{s}` needs step > 0 and stop >= start"));
    }
    let span = (stop - start) / step;
    // tolerate rounding in decimal steps such as 0:0.1:0.01
    let count = (span + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(format!("grid `{s}` has more than 10^6 points"));
    }
    Ok((0..count).map(|i| if i + 1 == count && (span - (count - 1) as f64).abs() < 1e-9 { stop } else { start + i as f64 * step }).collect())
}

/// Parse a comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number `{x}`: {e}"))).collect()
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        map.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(map)
}

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

/// Insert config defaults right after the subcommand name, so that flags
/// given on the command line come later and win. Keys the subcommand does
/// not know are skipped, letting one file serve several subcommands.
pub fn with_config_defaults(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else { return Ok(argv) };
    let values = read_config(Path::new(&path))?;
    let cmd = Cli::command();
    let Some(pos) = argv.iter().position(|a| cmd.find_subcommand(a).is_some()) else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&argv[pos]).unwrap();
    let mut out: Vec<OsString> = argv[..=pos].to_vec();
    for (key, value) in &values {
        if key == "config" {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else { continue };
        if arg.get_num_args().is_some_and(|n| n.max_values() == 0) {
            if matches!(value.as_str(), "true" | "yes" | "1") {
                out.push(format!("--{key}").into());
            }
        } else {
            out.push(format!("--{key}={value}").into());
        }
    }
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_both_ends() {
        let g = parse_grid("0:0.1:0.01").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 0.1);
        assert_eq!(parse_grid("1:1:0.5").unwrap(), vec![1.0]);
        assert_eq!(parse_grid("0:1:0.3").unwrap().len(), 4);
    }

    #[test]
    fn bad_grids_are_rejected() {
        for s in ["0:1", "0:1:0", "1:0:0.1", "a:1:0.1", "0:inf:1"] {
            assert!(parse_grid(s).is_err(), "{s}");
        }
    }

    #[test]
    fn config_values_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# defaults\nm = 3\ndelta=2\nreplicates = 5 # inline\nnot-a-flag = 1\n").unwrap();
        let argv: Vec<OsString> =
            ["ppt-ising", "--config", path.to_str().unwrap(), "critical-temp", "--m", "2"].iter().map(Into::into).collect();
        let out = with_config_defaults(argv).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(&s[3..], ["critical-temp", "--delta=2", "--m=3", "--replicates=5", "--m", "2"]);
    }
}
