//! `segment`: run whole-subject inference over the cohort, writing the
//! predicted label masks and the cohort CSV extended with predicted
//! volumes.

use crate::commands::load_cohort;
use crate::config::RunConfig;
use crate::{paths, CliError};
use muscleseg_core::phantom::COHORT_HEADER;
use muscleseg_core::trainer::segment_subject;
use muscleseg_core::vnet::load_checkpoint;
use muscleseg_core::voxgrid::{write_mvol, Mvol};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let cohort = load_cohort(cfg)?;
    let ckpt = paths::checkpoint_path(&cfg.workdir);
    paths::require(&ckpt, "muscleseg train")?;
    let model = load_checkpoint::<f32>(&ckpt)?;
    let crop = cfg.crop();
    if model.spec().input_dims != crop.dims {
        return Err(CliError::Usage(format!(
            "checkpoint input dims {:?} do not match the configured crop {:?}; \
             check the --scale flag",
            model.spec().input_dims,
            crop.dims
        )));
    }

    std::fs::create_dir_all(cfg.workdir.join("predictions"))?;
    let data = paths::load_subject_data(&cfg.workdir, &cohort)?;

    let mut w = csv::Writer::from_path(paths::segmented_csv(&cfg.workdir))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut header: Vec<&str> = COHORT_HEADER.to_vec();
    header.push("predicted_left_ml");
    header.push("predicted_right_ml");
    w.write_record(&header)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    for (subject, sd) in cohort.iter().zip(&data) {
        let (pred, left_ml, right_ml) = segment_subject(
            &model,
            &sd.image,
            &sd.landmarks,
            &crop,
            cfg.cleanup_components,
        )?;
        write_mvol(
            &Mvol::Mask(pred),
            &paths::prediction_mvol(&cfg.workdir, &subject.id),
        )?;
        w.write_record([
            subject.id.as_str(),
            subject.sex.as_str(),
            &subject.age.to_string(),
            &subject.height_cm.to_string(),
            &subject.weight_kg.to_string(),
            &subject.bmi.to_string(),
            subject.handedness.as_str(),
            &subject.true_left_ml.to_string(),
            &subject.true_right_ml.to_string(),
            &left_ml.to_string(),
            &right_ml.to_string(),
        ])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "segment: {} subjects -> {:?}",
        cohort.len(),
        paths::segmented_csv(&cfg.workdir)
    );
    Ok(())
}
