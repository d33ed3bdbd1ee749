//! Work-directory layout and shared file I/O for the subcommands.

use crate::CliError;
use muscleseg_core::phantom::SubjectRecord;
use muscleseg_core::prep::SubjectData;
use muscleseg_core::voxgrid::{read_mvol, Dims, Landmark, LandmarkPair};
use std::path::{Path, PathBuf};

pub fn cohort_csv(workdir: &Path) -> PathBuf {
    workdir.join("cohort.csv")
}

pub fn landmarks_csv(workdir: &Path) -> PathBuf {
    workdir.join("landmarks.csv")
}

pub fn image_mvol(workdir: &Path, id: &str) -> PathBuf {
    workdir.join("images").join(format!("{id}.mvol"))
}

pub fn mask_mvol(workdir: &Path, id: &str) -> PathBuf {
    workdir.join("masks").join(format!("{id}.mvol"))
}

pub fn prediction_mvol(workdir: &Path, id: &str) -> PathBuf {
    workdir.join("predictions").join(format!("{id}.mvol"))
}

pub fn checkpoint_path(workdir: &Path) -> PathBuf {
    workdir.join("checkpoint.ckpt")
}

pub fn history_csv(workdir: &Path) -> PathBuf {
    workdir.join("history.csv")
}

pub fn segmented_csv(workdir: &Path) -> PathBuf {
    workdir.join("segmented.csv")
}

pub fn dsc_csv(workdir: &Path) -> PathBuf {
    workdir.join("dsc.csv")
}

pub fn stats_dir(workdir: &Path) -> PathBuf {
    workdir.join("stats")
}

pub fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "missing {path:?}; run `{hint}` first"
        )));
    }
    Ok(())
}

pub fn write_landmarks_csv(
    path: &Path,
    entries: &[(String, LandmarkPair)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot write {path:?}: {e}")))?;
    w.write_record([
        "id", "right_x", "right_y", "right_z", "left_x", "left_y", "left_z",
    ])
    .map_err(|e| CliError::Usage(e.to_string()))?;
    for (id, lm) in entries {
        w.write_record([
            id.as_str(),
            &lm.right.x.to_string(),
            &lm.right.y.to_string(),
            &lm.right.z.to_string(),
            &lm.left.x.to_string(),
            &lm.left.y.to_string(),
            &lm.left.z.to_string(),
        ])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

pub fn read_landmarks_csv(path: &Path) -> Result<Vec<(String, LandmarkPair)>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {path:?}: {e}")))?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| CliError::Usage(e.to_string()))?;
        let field = |i: usize| -> Result<usize, CliError> {
            record
                .get(i)
                .ok_or_else(|| CliError::Usage("short landmark row".into()))?
                .parse::<usize>()
                .map_err(|e| CliError::Usage(format!("landmark parse error: {e}")))
        };
        let id = record
            .get(0)
            .ok_or_else(|| CliError::Usage("short landmark row".into()))?
            .to_string();
        let right = Landmark {
            x: field(1)?,
            y: field(2)?,
            z: field(3)?,
        };
        let left = Landmark {
            x: field(4)?,
            y: field(5)?,
            z: field(6)?,
        };
        // dims revalidated against the actual volume on load
        let pair = LandmarkPair::new(
            right,
            left,
            Dims::new(usize::MAX - 1, usize::MAX - 1, usize::MAX - 1).expect("sentinel dims"),
        )
        .map_err(|e| CliError::Usage(format!("landmarks for {id}: {e}")))?;
        out.push((id, pair));
    }
    Ok(out)
}

/// Load rendered volumes, masks, and landmarks for the given subjects.
pub fn load_subject_data(
    workdir: &Path,
    subjects: &[SubjectRecord],
) -> Result<Vec<SubjectData>, CliError> {
    let landmarks = read_landmarks_csv(&landmarks_csv(workdir))?;
    subjects
        .iter()
        .map(|s| {
            let image = read_mvol(&image_mvol(workdir, &s.id))
                .and_then(|m| m.into_image())
                .map_err(|e| CliError::Usage(format!("image for {}: {e}", s.id)))?;
            let mask = read_mvol(&mask_mvol(workdir, &s.id))
                .and_then(|m| m.into_mask())
                .map_err(|e| CliError::Usage(format!("mask for {}: {e}", s.id)))?;
            let lm = landmarks
                .iter()
                .find(|(id, _)| *id == s.id)
                .map(|(_, lm)| *lm)
                .ok_or_else(|| CliError::Usage(format!("no landmarks for {}", s.id)))?;
            let pair = LandmarkPair::new(lm.right, lm.left, image.dims())
                .map_err(|e| CliError::Usage(format!("landmarks for {}: {e}", s.id)))?;
            Ok(SubjectData {
                id: s.id.clone(),
                image,
                mask,
                landmarks: pair,
            })
        })
        .collect()
}
