//! Run manifest written next to every output set. It holds no timestamps,
//! so identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::{io_err, CliResult};

#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    scenario: Option<PathBuf>,
    flags: BTreeMap<String, Value>,
    master_seed: u64,
    threads: Option<usize>,
    outputs: Vec<PathBuf>,
    version: String,
}

impl Manifest {
    pub fn new(command: &str, scenario: Option<&Path>, master_seed: u64, threads: Option<usize>) -> Self {
        Manifest {
            command: command.to_string(),
            scenario: scenario.map(Path::to_path_buf),
            flags: BTreeMap::new(),
            master_seed,
            threads,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn flag(&mut self, name: &str, value: Value) -> &mut Self {
        self.flags.insert(name.to_string(), value);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(io_err(format!("cannot write {}", path.display())))
    }
}
