use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Files written by the current run, removed again if the run fails.
#[derive(Default)]
pub struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>, CliError> {
        let file = File::create(path)
            .map_err(|e| CliError::User(format!("cannot create {}: {e}", path.display())))?;
        self.created.push(path.to_path_buf());
        Ok(BufWriter::new(file))
    }

    /// Write a whole file through `body`.
    pub fn write_with(
        &mut self,
        path: &Path,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut w = self.create(path)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn paths(&self) -> Vec<String> {
        self.created
            .iter()
            .map(|p| p.display().to_string())
            .collect()
    }

    pub fn discard(&mut self) {
        for p in self.created.drain(..) {
            let _ = std::fs::remove_file(p);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest next to `primary`: the hashed payload (tool, version, command,
/// seed, config, input digest) plus the artifact list and a timestamp.
pub fn write_manifest<C: Serialize>(
    outputs: &mut Outputs,
    primary: &Path,
    command: &str,
    seed: u64,
    config: &C,
    input_sha256: Option<&str>,
    extra: Value,
) -> Result<(), CliError> {
    let payload = json!({
        "tool": "seqclus",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "input_sha256": input_sha256,
    });
    let hash = sha256_hex(&serde_json::to_vec(&payload)?);
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut manifest = payload;
    manifest["config_hash"] = json!(hash);
    manifest["outputs"] = json!(outputs.paths());
    manifest["created_unix"] = json!(created);
    if !extra.is_null() {
        manifest["details"] = extra;
    }
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    let path = PathBuf::from(name);
    outputs.write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })
}
