//! Training loop, out-of-sample evaluation, and whole-subject inference.

use crate::autograd::{adam_step, AdamState, AutogradError, Shape, Tape, Tensor};
use crate::prep::{
    crop_image_about_landmark, normalize_zscore, CropSpec, PrepError, Side, SubjectData,
    TrainingSample,
};
use crate::vnet::{build_model, ArchitectureSpec, Model, VnetError};
use crate::voxgrid::{dsc, largest_component, mask_volume_ml, LandmarkPair, Mask3D, Volume3D, VoxError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error(transparent)]
    Vnet(#[from] VnetError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Vox(#[from] VoxError),
}

/// Training hyperparameters and the subject split. The reference regimen is
/// 100 epochs, batch size 3, learning rate 1e-4; desk-scale runs override
/// the architecture and crop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub arch: ArchitectureSpec,
    pub crop: CropSpec,
    pub train_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    /// stop after any epoch whose mean loss drops below this
    pub loss_goal: Option<f64>,
}

impl TrainConfig {
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            epochs: 100,
            batch_size: 3,
            learning_rate: 1e-4,
            seed,
            arch: ArchitectureSpec::desk_scale(),
            crop: CropSpec::desk_scale(),
            train_subjects: Vec::new(),
            val_subjects: Vec::new(),
            loss_goal: None,
        }
    }

    pub fn paper_scale(seed: u64) -> Self {
        Self {
            epochs: 100,
            batch_size: 3,
            learning_rate: 1e-4,
            seed,
            arch: ArchitectureSpec::paper_scale(),
            crop: CropSpec::paper_scale(),
            train_subjects: Vec::new(),
            val_subjects: Vec::new(),
            loss_goal: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainerError::InvalidArgument(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainerError::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.arch.input_dims != self.crop.dims {
            return Err(TrainerError::InvalidArgument(format!(
                "architecture input dims {:?} differ from crop dims {:?}",
                self.arch.input_dims, self.crop.dims
            )));
        }
        for t in &self.train_subjects {
            if self.val_subjects.contains(t) {
                return Err(TrainerError::InvalidArgument(format!(
                    "subject {t:?} appears in both the train and validation splits"
                )));
            }
        }
        Ok(())
    }

    /// Stable digest of the fields that determine a training run, stored in
    /// checkpoints.
    pub fn digest(&self) -> String {
        format!(
            "epochs={};batch={};lr={};seed={};arch={}x{}x{}w{};crop={}x{}x{}a{}",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.seed,
            self.arch.input_dims.0,
            self.arch.input_dims.1,
            self.arch.input_dims.2,
            self.arch.base_filters,
            self.crop.dims.0,
            self.crop.dims.1,
            self.crop.dims.2,
            self.crop.z_anchor,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_dsc: Option<f64>,
}

/// Per-epoch mean training loss and (when a validation set is given)
/// validation DSC.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

fn batch_tensors(samples: &[&TrainingSample], dims: (usize, usize, usize)) -> (Tensor<f32>, Tensor<f32>) {
    let (cx, cy, cz) = dims;
    let shape = Shape::new(samples.len(), 1, cx, cy, cz);
    let mut images = Vec::with_capacity(shape.len());
    let mut targets = Vec::with_capacity(shape.len());
    for s in samples {
        images.extend_from_slice(s.image.voxels());
        targets.extend(s.target.labels().iter().map(|&l| l as f32));
    }
    (
        Tensor::new(shape, images).expect("sample dims checked"),
        Tensor::new(shape, targets).expect("sample dims checked"),
    )
}

/// Train a fresh model on the sample list. Deterministic given the config
/// seed: the per-epoch shuffle, initialization, and every kernel are seeded
/// or serial-equivalent. A non-finite loss aborts with the epoch and step.
pub fn train(
    config: &TrainConfig,
    samples: &[TrainingSample],
    validation: Option<&[SubjectData]>,
) -> Result<(Model<f32>, TrainHistory), TrainerError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainerError::InvalidArgument(
            "training set is empty".into(),
        ));
    }
    for s in samples {
        let d = s.image.dims();
        if (d.nx, d.ny, d.nz) != config.crop.dims {
            return Err(TrainerError::InvalidArgument(format!(
                "sample dims ({}, {}, {}) do not match crop {:?}",
                d.nx, d.ny, d.nz, config.crop.dims
            )));
        }
    }

    let mut model = build_model::<f32>(config.arch, config.seed);
    model.set_config_digest(config.digest());
    let mut params = model.param_tensors();
    let mut adam = AdamState::with_lr(config.learning_rate);
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(crate::seed::mix(config.seed, 0xE70C + epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (images, targets) = batch_tensors(&batch, config.crop.dims);

            let mut tape = Tape::new();
            let x = tape.leaf(images);
            let param_vars: Vec<_> = params.iter().map(|p| tape.leaf(p.clone())).collect();
            let probs = model.forward_with_params(&mut tape, x, &param_vars)?;
            let tgt = tape.leaf(targets);
            let loss_var = tape.soft_dice_loss(probs, tgt)?;
            let loss = tape.value(loss_var).item() as f64;
            if !loss.is_finite() {
                return Err(TrainerError::NonFiniteLoss { epoch, step });
            }
            tape.backward(loss_var)?;
            let grads: Vec<Tensor<f32>> = param_vars
                .iter()
                .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| {
                    Tensor::zeros(tape.shape(v))
                }))
                .collect();
            adam_step(&mut params, &grads, &mut adam)?;

            loss_sum += loss;
            steps += 1;
        }

        model.set_param_tensors(params.clone());
        let mean_loss = loss_sum / steps as f64;
        let val_dsc = match validation {
            Some(subjects) if !subjects.is_empty() => {
                let scores = evaluate_dsc(&model, subjects, &config.crop)?;
                Some(scores.iter().sum::<f64>() / scores.len() as f64)
            }
            _ => None,
        };
        history.epochs.push(EpochStats {
            epoch,
            mean_loss,
            val_dsc,
        });
        if let Some(goal) = config.loss_goal {
            if mean_loss < goal {
                break;
            }
        }
    }
    Ok((model, history))
}

/// Segment both muscles of a whole volume: per side, crop about the
/// landmark, canonicalize, normalize, run the network, threshold at 0.5,
/// and paste back into the full grid (1 = right, 2 = left). A voxel claimed
/// by both sides goes to the higher probability. Volumes in ml accompany
/// the mask.
pub fn segment_subject(
    model: &Model<f32>,
    volume: &Volume3D,
    landmarks: &LandmarkPair,
    crop_spec: &CropSpec,
    cleanup_components: bool,
) -> Result<(Mask3D, f64, f64), TrainerError> {
    if crop_spec.dims != model.spec().input_dims {
        return Err(TrainerError::InvalidArgument(format!(
            "crop dims {:?} incompatible with model input {:?}",
            crop_spec.dims,
            model.spec().input_dims
        )));
    }
    let dims = volume.dims();
    let mut labels = vec![0u8; dims.len()];
    let mut best_prob = vec![0.0f32; dims.len()];

    for side in [Side::Right, Side::Left] {
        let landmark = match side {
            Side::Right => landmarks.right,
            Side::Left => landmarks.left,
        };
        let crop = crop_image_about_landmark(volume, landmark, side, crop_spec)?;
        let canonical = match side {
            Side::Right => crop,
            Side::Left => crop.flip_x(),
        };
        let normalized = normalize_zscore(&canonical);
        let (cx, cy, cz) = crop_spec.dims;
        let input = Tensor::new(
            Shape::new(1, 1, cx, cy, cz),
            normalized.voxels().to_vec(),
        )
        .map_err(TrainerError::Autograd)?;
        let probs = model.forward(&input)?;
        // back to this side's crop orientation
        let probs_crop = Volume3D::new(
            crate::voxgrid::Dims::new(cx, cy, cz).expect("crop dims"),
            volume.spacing(),
            probs.into_data(),
        )?;
        let oriented = match side {
            Side::Right => probs_crop,
            Side::Left => probs_crop.flip_x(),
        };

        let (ox, oy, oz) = crop_spec.origin(landmark, side);
        let label = side.label();
        for w in 0..cz {
            let sz = oz + w as i64;
            if sz < 0 || sz >= dims.nz as i64 {
                continue;
            }
            for v in 0..cy {
                let sy = oy + v as i64;
                if sy < 0 || sy >= dims.ny as i64 {
                    continue;
                }
                for u in 0..cx {
                    let sx = ox + u as i64;
                    if sx < 0 || sx >= dims.nx as i64 {
                        continue;
                    }
                    let p = oriented.get(u, v, w);
                    if p <= 0.5 {
                        continue;
                    }
                    let idx = dims.index(sx as usize, sy as usize, sz as usize);
                    if labels[idx] == 0 || p > best_prob[idx] {
                        labels[idx] = label;
                        best_prob[idx] = p;
                    }
                }
            }
        }
    }

    let mut mask = Mask3D::new(dims, volume.spacing(), labels)?;
    if cleanup_components {
        mask = largest_component(&mask, Side::Right.label());
        mask = largest_component(&mask, Side::Left.label());
    }
    let right_ml = mask_volume_ml(&mask, Side::Right.label())?;
    let left_ml = mask_volume_ml(&mask, Side::Left.label())?;
    Ok((mask, left_ml, right_ml))
}

/// Out-of-sample evaluation: per subject, segment both sides and report the
/// mean of the two per-side DSC values against the ground-truth mask.
/// Subjects evaluate in parallel; scores keep input order.
pub fn evaluate_dsc(
    model: &Model<f32>,
    subjects: &[SubjectData],
    crop_spec: &CropSpec,
) -> Result<Vec<f64>, TrainerError> {
    subjects
        .par_iter()
        .map(|s| {
            let (pred, _, _) = segment_subject(model, &s.image, &s.landmarks, crop_spec, false)?;
            let right = dsc(&pred, &s.mask, Side::Right.label())?;
            let left = dsc(&pred, &s.mask, Side::Left.label())?;
            Ok((right + left) / 2.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{sample_cohort, synthesize_subject, CohortSpec, PhantomGeometry};
    use crate::prep::build_training_set;

    fn tiny_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 1e-4,
            seed,
            arch: ArchitectureSpec::new((16, 16, 16), 1).unwrap(),
            crop: CropSpec::new((16, 16, 16)).unwrap(),
            train_subjects: Vec::new(),
            val_subjects: Vec::new(),
            loss_goal: None,
        }
    }

    fn tiny_geometry() -> PhantomGeometry {
        // grid sized so the 16^3 crop captures the tube
        PhantomGeometry {
            dims: crate::voxgrid::Dims::new(32, 32, 24).unwrap(),
            spacing: crate::voxgrid::Spacing::new(8.0, 8.0, 16.0).unwrap(),
            noise_sd: 0.1,
            contrast: 1.0,
            taper: 0.55,
            length_frac: 0.55,
            start_z_frac: 0.1,
            lateral_offset_frac: 0.22,
            bend_mm: 8.0,
            jitter_mm: 2.0,
            symmetric: false,
        }
    }

    fn tiny_subjects(n: usize) -> Vec<SubjectData> {
        let cohort = sample_cohort(&CohortSpec::new(n, 55)).unwrap();
        let geo = tiny_geometry();
        cohort
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (image, mask, landmarks) =
                    synthesize_subject(s, &geo, 900 + i as u64).unwrap();
                SubjectData {
                    id: s.id.clone(),
                    image,
                    mask,
                    landmarks,
                }
            })
            .collect()
    }

    #[test]
    fn config_validation_catches_split_overlap_and_dim_mismatch() {
        let mut c = tiny_config(1);
        c.train_subjects = vec!["a".into(), "b".into()];
        c.val_subjects = vec!["b".into()];
        assert!(c.validate().is_err());
        let mut c2 = tiny_config(1);
        c2.crop = CropSpec::new((32, 32, 32)).unwrap();
        assert!(c2.validate().is_err());
    }

    #[test]
    fn history_has_one_entry_per_epoch() {
        let subs = tiny_subjects(1);
        let samples =
            build_training_set(&subs, &CropSpec::new((16, 16, 16)).unwrap(), 0, 3).unwrap();
        let cfg = tiny_config(5);
        let (_, history) = train(&cfg, &samples, None).unwrap();
        assert_eq!(history.epochs.len(), cfg.epochs);
        for (i, e) in history.epochs.iter().enumerate() {
            assert_eq!(e.epoch, i);
            assert!(e.mean_loss.is_finite());
            assert!(e.val_dsc.is_none());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let subs = tiny_subjects(1);
        let samples =
            build_training_set(&subs, &CropSpec::new((16, 16, 16)).unwrap(), 0, 3).unwrap();
        let cfg = tiny_config(7);
        let (m1, h1) = train(&cfg, &samples, None).unwrap();
        let (m2, h2) = train(&cfg, &samples, None).unwrap();
        assert_eq!(h1, h2);
        for (a, b) in m1.params().iter().zip(m2.params()) {
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
    }

    #[test]
    fn empty_training_set_rejected() {
        let cfg = tiny_config(1);
        assert!(train(&cfg, &[], None).is_err());
    }

    #[test]
    fn loss_descends_on_tiny_run() {
        let subs = tiny_subjects(2);
        let samples =
            build_training_set(&subs, &CropSpec::new((16, 16, 16)).unwrap(), 0, 3).unwrap();
        let mut cfg = tiny_config(9);
        cfg.epochs = 12;
        let (_, history) = train(&cfg, &samples, None).unwrap();
        let first: f64 = history.epochs[..3].iter().map(|e| e.mean_loss).sum::<f64>() / 3.0;
        let last: f64 = history.epochs[9..].iter().map(|e| e.mean_loss).sum::<f64>() / 3.0;
        assert!(
            last < first,
            "loss did not descend: first {first}, last {last}"
        );
    }

    #[test]
    fn overfit_two_desk_samples_within_500_steps() {
        // capacity sanity: the desk-scale network drives the training
        // soft-Dice loss below 0.05 on a 2-sample set within 500 steps
        let cohort = sample_cohort(&CohortSpec::new(1, 21)).unwrap();
        let geo = PhantomGeometry::desk_scale();
        let subs: Vec<SubjectData> = cohort
            .iter()
            .map(|s| {
                let (image, mask, landmarks) = synthesize_subject(s, &geo, 700).unwrap();
                SubjectData {
                    id: s.id.clone(),
                    image,
                    mask,
                    landmarks,
                }
            })
            .collect();
        let samples: Vec<TrainingSample> =
            build_training_set(&subs, &CropSpec::desk_scale(), 0, 11)
                .unwrap()
                .into_iter()
                .filter(|s| !s.mirrored && s.transform_index == 0)
                .collect();
        assert_eq!(samples.len(), 2);

        let mut cfg = TrainConfig::desk_scale(3);
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 2;
        cfg.epochs = 500; // one step per epoch at this batch size
        cfg.loss_goal = Some(0.05);
        let (_, history) = train(&cfg, &samples, None).unwrap();
        assert!(history.epochs.len() <= 500);
        let final_loss = history.epochs.last().unwrap().mean_loss;
        assert!(final_loss < 0.05, "final loss {final_loss}");
    }

    #[test]
    fn evaluate_dsc_untrained_model_is_chance_level() {
        let subs = tiny_subjects(3);
        let model = build_model::<f32>(ArchitectureSpec::new((16, 16, 16), 1).unwrap(), 31);
        let scores = evaluate_dsc(&model, &subs, &CropSpec::new((16, 16, 16)).unwrap()).unwrap();
        assert_eq!(scores.len(), 3);
        for s in &scores {
            assert!((0.0..=1.0).contains(s));
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert!(mean < 0.5, "untrained model DSC {mean}");
    }

    #[test]
    fn segment_output_labels_and_volume_bounds() {
        let subs = tiny_subjects(1);
        let model = build_model::<f32>(ArchitectureSpec::new((16, 16, 16), 1).unwrap(), 37);
        let crop = CropSpec::new((16, 16, 16)).unwrap();
        let (mask, left_ml, right_ml) =
            segment_subject(&model, &subs[0].image, &subs[0].landmarks, &crop, false).unwrap();
        assert!(mask.labels().iter().all(|&l| l <= 2));
        let crop_ml =
            (16 * 16 * 16) as f64 * subs[0].image.spacing().voxel_mm3() / 1000.0;
        assert!(left_ml >= 0.0 && left_ml <= crop_ml);
        assert!(right_ml >= 0.0 && right_ml <= crop_ml);
    }

    #[test]
    fn segment_rejects_mismatched_crop() {
        let subs = tiny_subjects(1);
        let model = build_model::<f32>(ArchitectureSpec::new((16, 16, 16), 1).unwrap(), 41);
        let crop = CropSpec::new((32, 32, 32)).unwrap();
        assert!(
            segment_subject(&model, &subs[0].image, &subs[0].landmarks, &crop, false).is_err()
        );
    }

    #[test]
    fn mirror_consistency_on_symmetric_volume() {
        // a perfectly x-symmetric input: segmentation of the flipped volume
        // equals the flipped segmentation with side labels swapped
        let mut geo = tiny_geometry();
        geo.symmetric = true;
        geo.noise_sd = 0.0;
        let subject = crate::phantom::SubjectRecord {
            id: "sym".into(),
            sex: crate::phantom::Sex::Female,
            age: 50,
            height_cm: 163.0,
            weight_kg: 63.0,
            bmi: 23.7,
            handedness: crate::phantom::Handedness::Right,
            true_left_ml: 260.0,
            true_right_ml: 260.0,
        };
        let (vol, _, lms) = synthesize_subject(&subject, &geo, 13).unwrap();
        let model = build_model::<f32>(ArchitectureSpec::new((16, 16, 16), 1).unwrap(), 43);
        let crop = CropSpec::new((16, 16, 16)).unwrap();

        let (pred, left_ml, right_ml) =
            segment_subject(&model, &vol, &lms, &crop, false).unwrap();

        let flipped_vol = vol.flip_x();
        let nx = vol.dims().nx;
        let flipped_lms = LandmarkPair::new(
            crate::voxgrid::Landmark {
                x: nx - 1 - lms.left.x,
                y: lms.left.y,
                z: lms.left.z,
            },
            crate::voxgrid::Landmark {
                x: nx - 1 - lms.right.x,
                y: lms.right.y,
                z: lms.right.z,
            },
            vol.dims(),
        )
        .unwrap();
        let (pred_f, left_f, right_f) =
            segment_subject(&model, &flipped_vol, &flipped_lms, &crop, false).unwrap();

        // expected: flip(pred) with labels swapped
        let expected: Vec<u8> = pred
            .flip_x()
            .labels()
            .iter()
            .map(|&l| match l {
                1 => 2,
                2 => 1,
                other => other,
            })
            .collect();
        assert_eq!(pred_f.labels(), &expected[..]);
        assert!((left_f - right_ml).abs() < 1e-12);
        assert!((right_f - left_ml).abs() < 1e-12);
    }
}
