//! Subcommand implementations sharing one resolved context.

pub mod compare;
pub mod density;
pub mod roots;
pub mod scan;
pub mod simulate;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::output::Format;
use crate::AppError;

pub struct Ctx {
    pub cfg: RunConfig,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Ctx {
        Ctx {
            format: cfg.format,
            out: cfg.out.clone(),
            plot: cfg.plot.clone(),
            cfg,
        }
    }

    /// Commands without a chart reject --plot instead of ignoring it.
    pub fn reject_plot(&self, command: &str) -> Result<(), AppError> {
        if self.plot.is_some() {
            return Err(AppError::usage(format!(
                "--plot is not supported for `{command}` (only density and scan)"
            )));
        }
        Ok(())
    }
}

/// `foo.csv` -> `foo`, used to derive sibling output files.
pub fn stem_of(path: &Path) -> PathBuf {
    path.with_extension("")
}
