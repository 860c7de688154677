pub mod artifacts;
pub mod config;
mod run;

pub use artifacts::{correspondence_text, parse_correspondence, read_correspondence, MatchRecord};
pub use config::PipelineConfig;
pub use run::{
    compute_store, directed_energies, load_collection, load_shape, pair_name, position_colors,
    run_pipeline, transfer_colors, write_pair_artifacts, CacheStatus, LoadedShape, MultiMatchEntry,
    RunOptions, RunSummary, StageReport, Workspace,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to a temporary file next to `path` and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
