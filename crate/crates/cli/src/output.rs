//! Output files that disappear again if the command fails.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` (and records it for removal) unless it already exists.
    pub fn dir(&mut self, dir: &Path) -> Result<(), CliError> {
        if !dir.exists() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>, CliError> {
        let f = File::create(path)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path.to_path_buf());
        Ok(BufWriter::new(f))
    }

    /// CSV file whose first line echoes the configuration hash.
    pub fn csv(&mut self, path: &Path, hash: &str, columns: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = self.create(path)?;
        writeln!(w, "# config_hash={hash}")?;
        writeln!(w, "{columns}")?;
        Ok(w)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}
