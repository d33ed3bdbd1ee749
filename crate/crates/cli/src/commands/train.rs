//! `train`: assemble the augmented training set from the leading subjects,
//! run the training loop, and write the checkpoint plus the loss history.

use crate::commands::{load_cohort, split_indices};
use crate::config::RunConfig;
use crate::{paths, CliError};
use muscleseg_core::prep::build_training_set;
use muscleseg_core::trainer::train;
use muscleseg_core::vnet::save_checkpoint;
use std::io::Write;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let cohort = load_cohort(cfg)?;
    let (train_len, eval_len) = split_indices(cfg, cohort.len())?;
    paths::require(&paths::landmarks_csv(&cfg.workdir), "muscleseg cohort-gen")?;

    let train_subjects = &cohort[..train_len];
    let data = paths::load_subject_data(&cfg.workdir, train_subjects)?;
    let samples = build_training_set(&data, &cfg.crop(), cfg.aug_count, cfg.seed)?;
    println!(
        "train: {} samples from {} subjects (aug_count {})",
        samples.len(),
        train_subjects.len(),
        cfg.aug_count
    );

    let mut train_cfg = cfg.train_config();
    train_cfg.train_subjects = train_subjects.iter().map(|s| s.id.clone()).collect();
    let val_len = cfg.val_count.min(eval_len);
    let val_slice = &cohort[train_len..train_len + val_len];
    train_cfg.val_subjects = val_slice.iter().map(|s| s.id.clone()).collect();
    let val_data = if val_len > 0 {
        Some(paths::load_subject_data(&cfg.workdir, val_slice)?)
    } else {
        None
    };

    let (mut model, history) = train(&train_cfg, &samples, val_data.as_deref())?;
    model.set_config_digest(train_cfg.digest());
    save_checkpoint(&model, &paths::checkpoint_path(&cfg.workdir))?;

    let mut out = String::from("epoch,loss,val_dsc\n");
    for e in &history.epochs {
        let val = e.val_dsc.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, val));
    }
    let mut f = std::fs::File::create(paths::history_csv(&cfg.workdir))?;
    f.write_all(out.as_bytes())?;

    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "train: {} epochs, final loss {:.4}, checkpoint {:?}",
        history.epochs.len(),
        last.mean_loss,
        paths::checkpoint_path(&cfg.workdir)
    );
    Ok(())
}
