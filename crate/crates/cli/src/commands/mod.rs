pub mod bench;
pub mod hwcheck;
pub mod keyrate;
pub mod simulate;
pub mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

/// Everything a subcommand needs besides its own flags.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let file =
            File::create(&path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }
}

/// A finished subcommand: its `RESULT` summary and, for a completed run that
/// still must signal failure, the error deciding the exit code.
pub struct Report {
    pub summary: String,
    pub failure: Option<CliError>,
}

impl Report {
    pub fn ok(summary: String) -> Self {
        Self { summary, failure: None }
    }
}

pub fn flush(mut w: BufWriter<File>) -> Result<(), CliError> {
    use std::io::Write;
    w.flush()?;
    Ok(())
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
