//! Output files are written with a `.partial` suffix and renamed only after
//! the whole subcommand succeeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::Failure;
use qmemsim::config::Config;

pub struct OutputSet {
    dir: PathBuf,
    names: Vec<String>,
    started: Instant,
}

/// Everything needed to rerun a subcommand.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    code_version: &'a str,
    seed: Option<u64>,
    config: &'a Config,
    outputs: &'a [String],
    timing_file: &'a str,
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    subcommand: &'a str,
    wall_clock_s: f64,
}

const MANIFEST: &str = "manifest.json";
const TIMING: &str = "timing.json";

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn partial(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = partial(&self.dir.join(name));
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.names.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes the manifest, renames every file into place and records the
    /// wall-clock time separately so the manifest stays reproducible.
    pub fn commit(mut self, subcommand: &str, cfg: &Config, seed: Option<u64>) -> Result<(), Failure> {
        let outputs = self.names.clone();
        let manifest = RunManifest {
            subcommand,
            code_version: env!("CARGO_PKG_VERSION"),
            seed,
            config: cfg,
            outputs: &outputs,
            timing_file: TIMING,
        };
        self.write_json(MANIFEST, &manifest)?;
        for name in &self.names {
            let target = self.dir.join(name);
            fs::rename(partial(&target), &target).map_err(|e| io_error(&target, e))?;
        }
        let timing = Timing {
            subcommand,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(TIMING);
        let text = serde_json::to_string_pretty(&timing).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        Ok(())
    }
}
