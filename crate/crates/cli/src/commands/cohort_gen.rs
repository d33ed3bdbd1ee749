//! `cohort-gen`: sample the cohort, write its CSV, and (unless disabled)
//! render every subject's image/mask volumes plus the landmark table.

use crate::config::RunConfig;
use crate::{paths, CliError};
use muscleseg_core::phantom::{sample_cohort, synthesis_seed, synthesize_subject, write_cohort_csv};
use muscleseg_core::voxgrid::{write_mvol, Mvol};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.n == 0 {
        return Err(CliError::Usage("cohort size n must be at least 1".into()));
    }
    std::fs::create_dir_all(&cfg.workdir)?;
    let cohort = sample_cohort(&cfg.cohort_spec())?;
    write_cohort_csv(&paths::cohort_csv(&cfg.workdir), &cohort)?;

    if cfg.images {
        std::fs::create_dir_all(cfg.workdir.join("images"))?;
        std::fs::create_dir_all(cfg.workdir.join("masks"))?;
        let geometry = cfg.geometry();
        let mut landmark_rows = Vec::with_capacity(cohort.len());
        for (i, subject) in cohort.iter().enumerate() {
            let (image, mask, landmarks) =
                synthesize_subject(subject, &geometry, synthesis_seed(cfg.seed, i))?;
            write_mvol(&Mvol::Image(image), &paths::image_mvol(&cfg.workdir, &subject.id))?;
            write_mvol(&Mvol::Mask(mask), &paths::mask_mvol(&cfg.workdir, &subject.id))?;
            landmark_rows.push((subject.id.clone(), landmarks));
        }
        paths::write_landmarks_csv(&paths::landmarks_csv(&cfg.workdir), &landmark_rows)?;
    }

    println!(
        "cohort-gen: wrote {} subjects to {:?}{}",
        cohort.len(),
        cfg.workdir,
        if cfg.images { " (with volumes)" } else { "" }
    );
    Ok(())
}
