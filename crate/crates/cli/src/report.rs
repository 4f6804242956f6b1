use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA: u32 = 1;

/// Envelope shared by every command's JSON output.
#[derive(Debug, Serialize)]
pub struct RunReport<P: Serialize, R: Serialize> {
    pub schema: u32,
    pub command: &'static str,
    /// Fully resolved parameters (defaults, config file and flags merged).
    pub parameters: P,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<&'static str, f64>>,
    /// Files written by the command, as given on the command line.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub result: R,
}

/// Per-stage wall-clock milliseconds, kept only when requested.
pub struct Stopwatch {
    enabled: bool,
    stages: BTreeMap<&'static str, f64>,
}

impl Stopwatch {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, stages: BTreeMap::new() }
    }

    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record(stage, t.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn record(&mut self, stage: &'static str, ms: f64) {
        log::info!("{stage}: {ms:.1} ms");
        *self.stages.entry(stage).or_default() += ms;
    }

    pub fn finish(self) -> Option<BTreeMap<&'static str, f64>> {
        self.enabled.then_some(self.stages)
    }
}

/// Writes pretty JSON to `dest`, or to standard output for `-`.
pub fn emit(value: &impl Serialize, dest: &str) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    if dest == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io("<stdout>", e))
    } else {
        let path = Path::new(dest);
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

pub fn path_string(p: &Path) -> String {
    p.display().to_string()
}
