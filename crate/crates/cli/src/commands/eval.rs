//! `eval`: per-subject DSC of the trained model on the held-out split,
//! with a mean/SD/range footer.

use crate::commands::{load_cohort, split_indices};
use crate::config::RunConfig;
use crate::{paths, CliError};
use muscleseg_core::trainer::evaluate_dsc;
use muscleseg_core::vnet::load_checkpoint;
use std::io::Write;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let cohort = load_cohort(cfg)?;
    let ckpt = paths::checkpoint_path(&cfg.workdir);
    paths::require(&ckpt, "muscleseg train")?;
    let model = load_checkpoint::<f32>(&ckpt)?;

    let (train_len, eval_len) = split_indices(cfg, cohort.len())?;
    if eval_len == 0 {
        return Err(CliError::Usage(format!(
            "no held-out subjects: cohort has {} and train_count is {train_len}",
            cohort.len()
        )));
    }
    let held_out = &cohort[train_len..train_len + eval_len];
    // ground truth masks are required for scoring
    for s in held_out {
        paths::require(&paths::mask_mvol(&cfg.workdir, &s.id), "muscleseg cohort-gen")?;
    }
    let data = paths::load_subject_data(&cfg.workdir, held_out)?;
    let scores = evaluate_dsc(&model, &data, &cfg.crop())?;

    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = if scores.len() >= 2 {
        Some(
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
        )
    } else {
        None
    };
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut out = String::from("id,dsc\n");
    for (s, score) in held_out.iter().zip(&scores) {
        out.push_str(&format!("{},{}\n", s.id, score));
    }
    out.push_str(&format!("mean,{mean}\n"));
    out.push_str(&format!(
        "sd,{}\n",
        sd.map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
    ));
    out.push_str(&format!("min,{min}\n"));
    out.push_str(&format!("max,{max}\n"));
    let mut f = std::fs::File::create(paths::dsc_csv(&cfg.workdir))?;
    f.write_all(out.as_bytes())?;

    println!(
        "eval: {} held-out subjects, mean DSC {:.4} (range {:.4} to {:.4})",
        scores.len(),
        mean,
        min,
        max
    );
    Ok(())
}
