pub mod cohort_gen;
pub mod eval;
pub mod segment;
pub mod stats;
pub mod train;

use crate::config::RunConfig;
use crate::CliError;
use muscleseg_core::phantom::{read_cohort_csv, SubjectRecord};

/// Cohort rows in file order.
pub fn load_cohort(cfg: &RunConfig) -> Result<Vec<SubjectRecord>, CliError> {
    let path = crate::paths::cohort_csv(&cfg.workdir);
    crate::paths::require(&path, "muscleseg cohort-gen")?;
    Ok(read_cohort_csv(&path)?)
}

/// The train/eval split boundaries for the loaded cohort.
pub fn split_indices(cfg: &RunConfig, cohort_len: usize) -> Result<(usize, usize), CliError> {
    if cfg.train_count == 0 || cfg.train_count > cohort_len {
        return Err(CliError::Usage(format!(
            "train_count {} incompatible with cohort of {cohort_len}",
            cfg.train_count
        )));
    }
    let remaining = cohort_len - cfg.train_count;
    let eval_len = if cfg.eval_count == 0 {
        remaining
    } else {
        cfg.eval_count.min(remaining)
    };
    Ok((cfg.train_count, eval_len))
}
