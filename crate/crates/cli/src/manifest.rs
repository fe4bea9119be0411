//! Run manifests: what ran, on which bytes, with which settings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, P: Serialize> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub parameters: &'a P,
    /// sha256 of every input file, keyed by path as given.
    pub input_digests: &'a BTreeMap<String, String>,
    pub outputs: &'a [String],
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub wall_time_s: f64,
}

pub struct RunContext {
    argv: Vec<String>,
    manifest_path: Option<PathBuf>,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    seed: Option<u64>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunContext {
    pub fn new(argv: Vec<String>, manifest_path: Option<PathBuf>) -> Self {
        RunContext {
            argv,
            manifest_path,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed: None,
        }
    }

    /// Hashes an input file into the manifest.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Writes the manifest to `--manifest` or to `default_path`.
    pub fn finish<P: Serialize>(
        &self,
        command: &str,
        parameters: &P,
        default_path: PathBuf,
    ) -> anyhow::Result<()> {
        let path = self.manifest_path.clone().unwrap_or(default_path);
        let m = RunManifest {
            command,
            argv: &self.argv,
            parameters,
            input_digests: &self.inputs,
            outputs: &self.outputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let f = File::create(&path)
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        serde_json::to_writer_pretty(f, &m)?;
        Ok(())
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `run-manifest.json` inside a directory output.
pub fn inside(dir: &Path) -> PathBuf {
    dir.join("run-manifest.json")
}
