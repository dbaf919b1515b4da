use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tickvol_core::Result;

/// Writes `path` by filling a temporary file next to it and renaming.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)
            .map_err(|e| tickvol_core::Error::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

/// Everything needed to rerun a command and get the same bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, config: &impl Serialize, started: Instant) -> Self {
        RunManifest {
            tool: "tickvol",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            threads: rayon::current_num_threads(),
            wall_seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// `<file>.manifest.json` next to a single output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
