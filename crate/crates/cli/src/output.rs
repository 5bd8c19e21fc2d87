//! Output files, JSON formatting and run manifests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use ppt_ising::fmt_f64;
use serde::Serialize;
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

static STARTED: OnceLock<Instant> = OnceLock::new();

/// Mark the start of the run for the manifest's wall-clock time.
pub fn mark_start() {
    STARTED.get_or_init(Instant::now);
}

/// Compact JSON with every float printed to 17 significant digits.
struct Digits17;

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser).expect("serialising plain data cannot fail");
    buf.push(b'\n');
    buf
}

#[derive(Debug, Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, P: Serialize> {
    subcommand: &'a str,
    parameters: &'a P,
    seed: Option<u64>,
    version: &'static str,
    wall_clock_seconds: f64,
    outputs: Vec<OutputDigest>,
}

/// Collects output files of one run and writes the manifest beside the first.
pub struct Run<'a, P: Serialize> {
    subcommand: &'a str,
    parameters: &'a P,
    seed: Option<u64>,
    outputs: Vec<(PathBuf, String)>,
}

impl<'a, P: Serialize> Run<'a, P> {
    pub fn new(subcommand: &'a str, parameters: &'a P, seed: Option<u64>) -> Self {
        Self { subcommand, parameters, seed, outputs: Vec::new() }
    }

    /// Write `bytes` to `path`, or to stdout when there is no path.
    pub fn emit(&mut self, path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
        match path {
            Some(p) => {
                fs::write(p, bytes)?;
                let digest = Sha256::digest(bytes);
                let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
                self.outputs.push((p.to_path_buf(), hex));
            }
            None => io::stdout().write_all(bytes)?,
        }
        Ok(())
    }

    /// Write `<first output>.manifest.json` if any file was produced.
    pub fn finish(self) -> io::Result<()> {
        let Some((first, _)) = self.outputs.first() else { return Ok(()) };
        let mut name = first.clone().into_os_string();
        name.push(".manifest.json");
        let manifest = RunManifest {
            subcommand: self.subcommand,
            parameters: self.parameters,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: STARTED.get_or_init(Instant::now).elapsed().as_secs_f64(),
            outputs: self.outputs.iter().map(|(p, h)| OutputDigest { path: p.display().to_string(), sha256: h.clone() }).collect(),
        };
        fs::write(PathBuf::from(name), to_json(&manifest))
    }
}
